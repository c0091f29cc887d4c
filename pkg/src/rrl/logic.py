"""Logical layers: conjunction/disjunction nodes in discrete and continuous form.

Continuous nodes use the log-domain product with the projection
P(v) = -1 / (-1 + ln v). Products are accumulated as sums of logs and P is
evaluated from ln v directly, so v itself is never materialized.

Backward passes are hand-derived. For a conjunction node r = P(v),
v = prod_j (F_c(h_j, W_j) + eps):

    dr/dW_j = P(v)^2 * (h_j - 1) / (F_c + eps)
    dr/dh_j = P(v)^2 * W_j       / (F_c + eps)

and for a disjunction node s = 1 - P(v), v = prod_j (1 - F_d(h_j, W_j) + eps):

    ds/dW_j = (1 - s)^2 * h_j / (1 - F_d + eps)
    ds/dh_j = (1 - s)^2 * W_j / (1 - F_d + eps)

With the derivative trick the factor P(v)^2 (i.e. v * dP/dv) becomes
P(P(v)^2), which decays much more slowly for very wide nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EPS = 1e-10


def _proj_log(logv):
    """P evaluated from ln v."""
    with np.errstate(divide="ignore"):
        return 1.0 / (1.0 - np.asarray(logv, dtype=np.float64))


def projection(v):
    """P(v) = -1 / (-1 + ln v), defined for v > 0."""
    v = np.asarray(v, dtype=np.float64)
    if np.any(v <= 0):
        raise ValueError("projection is only defined for v > 0")
    out = _proj_log(np.log(v))
    return float(out) if out.ndim == 0 else out


def _grad_factor(p: np.ndarray, trick: bool) -> np.ndarray:
    """v * dP/dv = P^2, or P(P^2) with the derivative trick."""
    p2 = p * p
    if not trick:
        return p2
    with np.errstate(divide="ignore"):
        return _proj_log(np.log(p2))


# -- single-node functions -------------------------------------------------

def conj_plus(h, W_row, eps: float = EPS) -> float:
    h, w = np.asarray(h, dtype=np.float64), np.asarray(W_row, dtype=np.float64)
    if h.shape != w.shape:
        raise ValueError("h and W_row must have the same length")
    with np.errstate(divide="ignore"):
        logv = np.sum(np.log(1.0 - w * (1.0 - h) + eps))
    return float(np.clip(_proj_log(logv), 0.0, 1.0))


def disj_plus(h, W_row, eps: float = EPS) -> float:
    h, w = np.asarray(h, dtype=np.float64), np.asarray(W_row, dtype=np.float64)
    if h.shape != w.shape:
        raise ValueError("h and W_row must have the same length")
    with np.errstate(divide="ignore"):
        logv = np.sum(np.log(1.0 - h * w + eps))
    return float(np.clip(1.0 - _proj_log(logv), 0.0, 1.0))


def conj_discrete(h_bin, W_bin) -> int:
    h, w = np.asarray(h_bin, dtype=bool), np.asarray(W_bin, dtype=bool)
    return int(not np.any(w & ~h))


def disj_discrete(h_bin, W_bin) -> int:
    h, w = np.asarray(h_bin, dtype=bool), np.asarray(W_bin, dtype=bool)
    return int(np.any(w & h))


def conj_original(h, W_row) -> float:
    h, w = np.asarray(h, dtype=np.float64), np.asarray(W_row, dtype=np.float64)
    return float(np.prod(1.0 - w * (1.0 - h)))


def disj_original(h, W_row) -> float:
    h, w = np.asarray(h, dtype=np.float64), np.asarray(W_row, dtype=np.float64)
    return float(1.0 - np.prod(1.0 - h * w))


def _prod_except(f: np.ndarray) -> np.ndarray:
    """prod_{k != j} f_k for every j, without dividing."""
    left = np.concatenate([[1.0], np.cumprod(f[:-1])])
    right = np.concatenate([np.cumprod(f[::-1][:-1])[::-1], [1.0]])
    return left * right


def conj_original_grad(h, W_row) -> tuple[np.ndarray, np.ndarray]:
    """(d/dW, d/dh) of the plain product conjunction."""
    h, w = np.asarray(h, dtype=np.float64), np.asarray(W_row, dtype=np.float64)
    rest = _prod_except(1.0 - w * (1.0 - h))
    return (h - 1.0) * rest, w * rest


def disj_original_grad(h, W_row) -> tuple[np.ndarray, np.ndarray]:
    h, w = np.asarray(h, dtype=np.float64), np.asarray(W_row, dtype=np.float64)
    rest = _prod_except(1.0 - h * w)
    return h * rest, w * rest


def conj_plus_grad(h, W_row, eps: float = EPS, trick: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """(d/dW, d/dh) of a single improved conjunction node, at its unclamped value."""
    h, w = np.asarray(h, dtype=np.float64), np.asarray(W_row, dtype=np.float64)
    denom = 1.0 - w * (1.0 - h) + eps
    factor = _grad_factor(_proj_log(np.sum(np.log(denom))), trick)
    return factor * (h - 1.0) / denom, factor * w / denom


def disj_plus_grad(h, W_row, eps: float = EPS, trick: bool = False) -> tuple[np.ndarray, np.ndarray]:
    h, w = np.asarray(h, dtype=np.float64), np.asarray(W_row, dtype=np.float64)
    denom = 1.0 - h * w + eps
    factor = _grad_factor(_proj_log(np.sum(np.log(denom))), trick)
    return factor * h / denom, factor * w / denom


# -- layers ----------------------------------------------------------------

@dataclass
class LogicalLayerParams:
    """Continuous weights of one logical layer.

    W0 (conjunction half) and W1 (disjunction half) are both n_out/2 x n_in
    with entries in [0, 1]; their discrete view is `W > 0.5`.
    """
    W0: np.ndarray
    W1: np.ndarray
    eps: float = EPS
    use_derivative_trick: bool = False

    @property
    def n_in(self) -> int:
        return self.W0.shape[1]

    @property
    def n_out(self) -> int:
        return self.W0.shape[0] + self.W1.shape[0]

    def binarized(self) -> tuple[np.ndarray, np.ndarray]:
        return self.W0 > 0.5, self.W1 > 0.5

    def clamp_(self) -> None:
        np.clip(self.W0, 0.0, 1.0, out=self.W0)
        np.clip(self.W1, 0.0, 1.0, out=self.W1)


@dataclass
class LayerActivations:
    u: np.ndarray        # B x n_in input
    r: np.ndarray        # B x K conjunction outputs, clamped
    s: np.ndarray        # B x K disjunction outputs, clamped
    p_conj: np.ndarray   # unclamped P(v) of conjunction nodes
    p_disj: np.ndarray   # unclamped P(v) of disjunction nodes, i.e. 1 - s_raw

    @property
    def output(self) -> np.ndarray:
        return np.concatenate([self.r, self.s], axis=1)


def layer_forward_continuous(params: LogicalLayerParams, u_prev: np.ndarray) -> LayerActivations:
    u = np.atleast_2d(np.asarray(u_prev, dtype=np.float64))
    if u.shape[1] != params.n_in:
        raise ValueError(f"layer expects {params.n_in} inputs, got {u.shape[1]}")
    eps = params.eps
    with np.errstate(divide="ignore"):
        logv_c = np.log(1.0 - params.W0[None] * (1.0 - u[:, None, :]) + eps).sum(axis=2)
        logv_d = np.log(1.0 - u[:, None, :] * params.W1[None] + eps).sum(axis=2)
    p_c, p_d = _proj_log(logv_c), _proj_log(logv_d)
    return LayerActivations(u, np.clip(p_c, 0.0, 1.0), np.clip(1.0 - p_d, 0.0, 1.0), p_c, p_d)


def layer_forward_discrete(W0_bin: np.ndarray, W1_bin: np.ndarray, u_prev_bin: np.ndarray) -> np.ndarray:
    """Exact Boolean evaluation; returns a bool matrix B x n_out.

    A conjunction fires iff none of its selected inputs is 0 (so an empty
    selection gives 1); a disjunction fires iff any selected input is 1.
    """
    u = np.atleast_2d(np.asarray(u_prev_bin)).astype(bool)
    w0 = np.asarray(W0_bin, dtype=np.int32)
    w1 = np.asarray(W1_bin, dtype=np.int32)
    misses = (~u).astype(np.int32) @ w0.T
    hits = u.astype(np.int32) @ w1.T
    return np.concatenate([misses == 0, hits > 0], axis=1)


def layer_backward(params: LogicalLayerParams, acts: LayerActivations, upstream: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dW0, dW1, du_prev) given dLoss/d(r ⊕ s) for a batch.

    Clamping is treated as the identity; factors use the unclamped values.
    """
    upstream = np.atleast_2d(upstream)
    K0 = params.W0.shape[0]
    g_r, g_s = upstream[:, :K0], upstream[:, K0:]
    u, eps, trick = acts.u, params.eps, params.use_derivative_trick

    denom_c = 1.0 - params.W0[None] * (1.0 - u[:, None, :]) + eps
    a_c = g_r * _grad_factor(acts.p_conj, trick)
    inv_c = a_c[:, :, None] / denom_c
    dW0 = np.einsum("bij,bj->ij", inv_c, u - 1.0)
    du = np.einsum("bij,ij->bj", inv_c, params.W0)

    denom_d = 1.0 - u[:, None, :] * params.W1[None] + eps
    a_d = g_s * _grad_factor(acts.p_disj, trick)
    inv_d = a_d[:, :, None] / denom_d
    dW1 = np.einsum("bij,bj->ij", inv_d, u)
    du += np.einsum("bij,ij->bj", inv_d, params.W1)
    return dW0, dW1, du
