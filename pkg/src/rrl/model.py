"""The full model: binarization layer, logical layer stack, linear head."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .binarization import BinarizationBounds, binarize, sample_bounds
from .data import DatasetSchema
from .logic import (EPS, LayerActivations, LogicalLayerParams, layer_backward,
                    layer_forward_continuous, layer_forward_discrete)

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class GradientError(FloatingPointError):
    pass


@dataclass
class RRLConfig:
    structure: list[int] = field(default_factory=lambda: [32])
    k: int = 5
    eps: float = EPS
    lam: float = 0.0
    derivative_trick: bool = False
    seed: int = 0
    init_range: float = 0.5  # logical weights start uniform on [0, init_range]

    def validate(self) -> None:
        if not self.structure:
            raise ValueError("need at least one logical layer")
        for n in self.structure:
            if n < 2 or n % 2:
                raise ValueError(f"logical layer widths must be even and >= 2, got {n}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.eps < 0 or self.lam < 0:
            raise ValueError("eps and lam must be non-negative")
        if not 0.0 < self.init_range <= 0.5:
            raise ValueError("init_range must be in (0, 0.5] so the initial discrete model is empty")


@dataclass
class RRLModel:
    config: RRLConfig
    bounds: BinarizationBounds
    n_binary: int
    layers: list[LogicalLayerParams]
    W: np.ndarray  # M x D linear weights
    b: np.ndarray  # length-M bias
    schema: DatasetSchema | None = None

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def input_width(self) -> int:
        return self.bounds.width + self.n_binary

    @property
    def head_width(self) -> int:
        return sum(layer.n_out for layer in self.layers)

    def parameters(self) -> dict[str, np.ndarray]:
        """Trainable arrays by name; entries alias the model's own storage."""
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"layer{i}.W0"] = layer.W0
            params[f"layer{i}.W1"] = layer.W1
        params["linear.W"] = self.W
        params["linear.b"] = self.b
        return params

    def head_slices(self) -> list[slice]:
        out, start = [], 0
        for layer in self.layers:
            out.append(slice(start, start + layer.n_out))
            start += layer.n_out
        return out


@dataclass
class ForwardTrace:
    u0: np.ndarray                      # B x n0 binary input to the first logical layer
    acts: list[LayerActivations]        # continuous per-layer activations
    Z_cont: np.ndarray                  # continuous features fed to the head
    Y_cont: np.ndarray                  # continuous logits
    disc: list[np.ndarray]              # discrete per-layer outputs (bool)
    Z_disc: np.ndarray                  # discrete features fed to the head (0/1 float)
    Y_disc: np.ndarray                  # discrete logits


def build(config: RRLConfig, train_C: np.ndarray, n_binary: int, n_classes: int,
          seed: int | None = None, schema: DatasetSchema | None = None) -> RRLModel:
    """Sample bounds from `train_C` and initialise weights deterministically from `seed`."""
    config.validate()
    if n_classes < 2:
        raise ValueError("need at least two classes")
    seed = config.seed if seed is None else seed
    bounds = sample_bounds(train_C, config.k, seed)
    rng = np.random.default_rng([seed, 1])
    layers, n_in = [], bounds.width + n_binary
    if n_in == 0:
        raise ValueError("model has no inputs")
    for n in config.structure:
        W0 = rng.uniform(0.0, config.init_range, size=(n // 2, n_in))
        W1 = rng.uniform(0.0, config.init_range, size=(n // 2, n_in))
        layers.append(LogicalLayerParams(W0, W1, config.eps, config.derivative_trick))
        n_in = n
    D = sum(config.structure)
    s = 1.0 / math.sqrt(D)
    W = rng.uniform(-s, s, size=(n_classes, D))
    return RRLModel(config, bounds, n_binary, layers, W, np.zeros(n_classes), schema)


def binarize_params(model: RRLModel) -> list[tuple[np.ndarray, np.ndarray]]:
    """Discrete view q(W) = W > 0.5 of every logical layer."""
    return [layer.binarized() for layer in model.layers]


def input_layer(model: RRLModel, C: np.ndarray, B: np.ndarray) -> np.ndarray:
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    B = np.asarray(B)
    if B.ndim == 1:
        B = B[None, :] if C.shape[0] == 1 else B[:, None]
    if B.shape[1] != model.n_binary:
        raise ValueError(f"expected {model.n_binary} binary features, got {B.shape[1]}")
    return np.concatenate([binarize(model.bounds, C), B.astype(np.uint8)], axis=1)


def forward(model: RRLModel, C: np.ndarray, B: np.ndarray,
            continuous: bool = True, discrete: bool = True) -> ForwardTrace:
    u0 = input_layer(model, C, B)
    acts, Z_cont, Y_cont = [], None, None
    if continuous:
        h = u0.astype(np.float64)
        for layer in model.layers:
            a = layer_forward_continuous(layer, h)
            acts.append(a)
            h = a.output
        Z_cont = np.concatenate([a.output for a in acts], axis=1)
        Y_cont = Z_cont @ model.W.T + model.b
    disc, Z_disc, Y_disc = [], None, None
    if discrete:
        h = u0
        for W0b, W1b in binarize_params(model):
            h = layer_forward_discrete(W0b, W1b, h)
            disc.append(h)
        Z_disc = np.concatenate(disc, axis=1).astype(np.float64)
        Y_disc = Z_disc @ model.W.T + model.b
    return ForwardTrace(u0, acts, Z_cont, Y_cont, disc, Z_disc, Y_disc)


def exact_head(W: np.ndarray, b: np.ndarray, fired: np.ndarray) -> np.ndarray:
    """bias + sum of weights of fired features, correctly rounded (order-independent)."""
    fired = np.atleast_2d(np.asarray(fired, dtype=bool))
    out = np.empty((fired.shape[0], W.shape[0]))
    for i, row in enumerate(fired):
        cols = np.flatnonzero(row)
        for c in range(W.shape[0]):
            out[i, c] = math.fsum([b[c], *W[c, cols]])
    return out


def discrete_logits(model: RRLModel, C: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Logits of the discrete model, summed exactly so rule-based scoring can match bit for bit."""
    trace = forward(model, C, B, continuous=False)
    return exact_head(model.W, model.b, trace.Z_disc > 0)


def predict(model: RRLModel, C: np.ndarray, B: np.ndarray) -> np.ndarray:
    return forward(model, C, B, continuous=False).Y_disc.argmax(axis=1)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def l2_penalty(model: RRLModel) -> float:
    return float(sum(np.sum(layer.W0 ** 2) + np.sum(layer.W1 ** 2) for layer in model.layers))


def loss(logits: np.ndarray, y: np.ndarray, model: RRLModel | None = None, lam: float = 0.0) -> float:
    """Mean softmax cross-entropy plus lam * sum of squared logical weights."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    ce = float(-np.mean(np.sum(y * log_softmax(logits), axis=1)))
    if lam and model is not None:
        ce += lam * l2_penalty(model)
    return ce


def backward(model: RRLModel, trace: ForwardTrace, g_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Push dLoss/dlogits through the continuous graph recorded in `trace`.

    The head gradient uses the continuous features, so feeding it the
    gradient taken at the discrete logits gives the grafted update.
    """
    grads = {"linear.W": g_logits.T @ trace.Z_cont, "linear.b": g_logits.sum(axis=0)}
    dZ = g_logits @ model.W
    slices = model.head_slices()
    carry = None
    for i in reversed(range(len(model.layers))):
        up = dZ[:, slices[i]]
        if carry is not None:
            up = up + carry
        dW0, dW1, du = layer_backward(model.layers[i], trace.acts[i], up)
        for name, g in (("W0", dW0), ("W1", dW1)):
            if not np.all(np.isfinite(g)):
                raise GradientError(f"non-finite gradient in logical layer {i} ({name})")
            grads[f"layer{i}.{name}"] = g
        carry = du
    for name in ("linear.W", "linear.b"):
        if not np.all(np.isfinite(grads[name])):
            raise GradientError(f"non-finite gradient in the linear layer ({name})")
    return grads


# -- checkpoints -----------------------------------------------------------

def _layer_dict(layer: LogicalLayerParams) -> dict:
    return {"W0": layer.W0.tolist(), "W1": layer.W1.tolist()}


def to_dict(model: RRLModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "schema_fingerprint": model.schema.fingerprint() if model.schema else None,
        "schema": model.schema.to_dict() if model.schema else None,
        "n_binary": model.n_binary,
        "bounds": model.bounds.to_dict(),
        "layers": [_layer_dict(layer) for layer in model.layers],
        "linear": {"W": model.W.tolist(), "b": model.b.tolist()},
    }


def save(model: RRLModel, path: str | Path) -> None:
    # json writes floats with repr, the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(to_dict(model)), encoding="utf-8")


def from_dict(d: dict, expected_fingerprint: str | None = None) -> RRLModel:
    if d.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {d.get('format_version')!r}")
    if expected_fingerprint is not None and d.get("schema_fingerprint") != expected_fingerprint:
        raise CheckpointError(
            f"schema fingerprint mismatch: checkpoint has {d.get('schema_fingerprint')}, "
            f"data has {expected_fingerprint}")
    try:
        config = RRLConfig(**d["config"])
        layers = []
        for ld in d["layers"]:
            W0 = np.asarray(ld["W0"], dtype=np.float64)
            W1 = np.asarray(ld["W1"], dtype=np.float64)
            layers.append(LogicalLayerParams(W0, W1, config.eps, config.derivative_trick))
        schema = DatasetSchema.from_dict(d["schema"]) if d.get("schema") else None
        model = RRLModel(config, BinarizationBounds.from_dict(d["bounds"]), int(d["n_binary"]), layers,
                         np.asarray(d["linear"]["W"], dtype=np.float64),
                         np.asarray(d["linear"]["b"], dtype=np.float64), schema)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    if schema is not None and d.get("schema_fingerprint") != schema.fingerprint():
        raise CheckpointError("corrupt checkpoint: stored schema does not match its fingerprint")
    return model


def load(path: str | Path, expected_fingerprint: str | None = None) -> RRLModel:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"cannot parse checkpoint {path}: {exc}") from exc
    return from_dict(d, expected_fingerprint)
