"""Fixed random-bound binarization of continuous features."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class BinarizationBounds:
    """k lower bounds `T` and k upper bounds `H` per continuous feature (both m x k).

    Output node order for feature j is T_j,1..T_j,k then H_j,1..H_j,k; features
    are laid out one after another, giving width 2*k*m.
    """
    T: np.ndarray
    H: np.ndarray
    k: int
    seed: int

    def __post_init__(self):
        self.T.setflags(write=False)
        self.H.setflags(write=False)

    @property
    def m(self) -> int:
        return self.T.shape[0]

    @property
    def width(self) -> int:
        return 2 * self.k * self.m

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "T": self.T.tolist(), "H": self.H.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> BinarizationBounds:
        k = int(d["k"])
        T = np.asarray(d["T"], dtype=np.float64).reshape(-1, k)
        H = np.asarray(d["H"], dtype=np.float64).reshape(-1, k)
        return cls(T, H, k, int(d["seed"]))

    def describe(self, node: int) -> tuple[int, str, float]:
        """(feature index, 'lower'|'upper', bound value) for output node `node`."""
        if not 0 <= node < self.width:
            raise IndexError(f"binarization node {node} out of range [0, {self.width})")
        j, r = divmod(node, 2 * self.k)
        if r < self.k:
            return j, "lower", float(self.T[j, r])
        return j, "upper", float(self.H[j, r - self.k])


def sample_bounds(train_C: np.ndarray, k: int, seed: int) -> BinarizationBounds:
    """Draw k lower and k upper bounds per feature, i.i.d. uniform on its observed range."""
    train_C = np.asarray(train_C, dtype=np.float64)
    if train_C.ndim != 2:
        raise ValueError("train_C must be a 2-D matrix")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    m = train_C.shape[1]
    if m and train_C.shape[0] < 1:
        raise ValueError("need at least one training row to sample bounds")
    rng = np.random.default_rng(seed)
    if m == 0:
        empty = np.zeros((0, k))
        return BinarizationBounds(empty, empty.copy(), k, seed)
    lo, hi = train_C.min(axis=0), train_C.max(axis=0)
    u = rng.random((2, m, k))
    T = lo[:, None] + u[0] * (hi - lo)[:, None]
    H = lo[:, None] + u[1] * (hi - lo)[:, None]
    # constant features collapse to the constant exactly
    return BinarizationBounds(np.clip(T, lo[:, None], hi[:, None]),
                              np.clip(H, lo[:, None], hi[:, None]), k, seed)


def binarize(bounds: BinarizationBounds, c: np.ndarray) -> np.ndarray:
    """Indicator vector(s) [c_j > T_j,*, H_j,* > c_j] per feature, as uint8.

    Accepts one vector of length m or an N x m batch.
    """
    c = np.asarray(c, dtype=np.float64)
    single = c.ndim == 1
    C = c[None, :] if single else c
    if C.shape[1] != bounds.m:
        raise ValueError(f"expected {bounds.m} continuous features, got {C.shape[1]}")
    lower = (C[:, :, None] - bounds.T[None]) > 0
    upper = (bounds.H[None] - C[:, :, None]) > 0
    out = np.concatenate([lower, upper], axis=2).reshape(C.shape[0], bounds.width).astype(np.uint8)
    return out[0] if single else out


def literal_text(bounds: BinarizationBounds, node_index: int, feature_names: Sequence[str]) -> str:
    j, side, v = bounds.describe(node_index)
    op = ">" if side == "lower" else "<"
    return f"{feature_names[j]} {op} {v:.6g}"
