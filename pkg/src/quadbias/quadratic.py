"""Mini-batch and full-batch quadratic models of the regularized loss.

A quadratic model is anchored at theta_0 and carries the loss value c_B, the
gradient g_B, and a matrix-free curvature handle. Directional slopes and
curvatures are plain projections of the model's gradient and curvature onto a
unit direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError
from .linalg import Rng, kron_matvec
from .model import Batch, KfacBlock, Mlp, ParamVector

CURVATURE_KINDS = ("hessian", "ggn", "kfac")


class CurvatureOperator:
    """Matrix-free v -> (curvature + beta * mask + delta * I) v.

    Calls are counted in ``matvec_count`` so experiments and tests can verify
    cost claims. The operator is linear and symmetric; ``kind`` records which
    curvature proxy backs it.
    """

    def __init__(
        self,
        kind: str,
        dim: int,
        raw_matvec: Callable[[np.ndarray], np.ndarray],
        beta: float = 0.0,
        delta: float = 0.0,
        mask: np.ndarray | None = None,
        batch_id=None,
    ):
        if kind not in CURVATURE_KINDS:
            raise ValidationError(f"unknown curvature kind {kind!r}")
        if beta < 0 or delta < 0:
            raise ValidationError("beta and delta must be >= 0")
        self.kind = kind
        self.dim = dim
        self.beta = beta
        self.delta = delta
        self.mask = np.ones(dim, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        self.batch_id = batch_id
        self._raw_matvec = raw_matvec
        self.matvec_count = 0

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.dim,):
            raise ValidationError(f"vector shape {v.shape} != ({self.dim},)")
        self.matvec_count += 1
        out = self._raw_matvec(v)
        if self.beta:
            out = out + self.beta * np.where(self.mask, v, 0.0)
        if self.delta:
            out = out + self.delta * v
        return out

    __call__ = matvec

    @classmethod
    def from_dense(cls, m: np.ndarray, kind: str = "hessian", beta: float = 0.0,
                   delta: float = 0.0, mask=None, batch_id=None) -> "CurvatureOperator":
        m = np.asarray(m, dtype=np.float64)
        return cls(kind, m.shape[0], lambda v: m @ v, beta, delta, mask, batch_id)


def _kfac_matvec(blocks: list, params: ParamVector) -> Callable[[np.ndarray], np.ndarray]:
    """Block-diagonal Kronecker product on the weight slices; zero on biases."""
    weight_entries = [e for e in params.layout if e.role == "weight"]
    if len(weight_entries) != len(blocks):
        raise ValidationError("K-FAC blocks do not match the layer layout")

    def mv(v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        for e, blk in zip(weight_entries, blocks):
            seg = v[e.offset : e.offset + e.size]
            out[e.offset : e.offset + e.size] = kron_matvec(
                blk.factor_a.entries, blk.factor_b.entries, seg
            )
        return out

    return mv


@dataclass
class QuadraticModel:
    """Second-order model q(theta) = 1/2 (theta-theta0)^T H (theta-theta0)
    + (theta-theta0)^T g + c."""

    theta0: ParamVector
    constant: float
    gradient: np.ndarray
    curvature: CurvatureOperator
    batch_id: object = None
    kfac_blocks: list | None = None

    @property
    def dim(self) -> int:
        return self.gradient.size


def build_quadratic(
    mlp: Mlp,
    theta0: ParamVector,
    batch: Batch,
    kind: str = "ggn",
    beta: float = 0.0,
    delta: float = 0.0,
    batch_id=None,
    fisher_mode: str = "mc_sample",
    rng: Rng | None = None,
) -> QuadraticModel:
    """Quadratic model of the regularized loss on one mini-batch.

    The curvature matvec delegates to the model module; for kind="kfac" the
    Kronecker factors are computed once here and reused by every matvec.
    """
    if kind not in CURVATURE_KINDS:
        raise ValidationError(f"unknown curvature kind {kind!r}")
    loss, grad = mlp.loss_and_grad(theta0, batch, beta)
    mask = mlp.reg_mask(theta0)
    blocks = None
    if kind == "hessian":
        raw = lambda v: mlp.hvp(theta0, batch, 0.0, v)
    elif kind == "ggn":
        raw = lambda v: mlp.ggn_vp(theta0, batch, 0.0, v)
    else:
        blocks = mlp.kfac_factors(theta0, batch, fisher_mode, rng)
        if not blocks:
            raise ValidationError("kfac curvature requires at least one dense layer")
        raw = _kfac_matvec(blocks, theta0)
    op = CurvatureOperator(kind, theta0.n_params, raw, beta, delta, mask, batch_id)
    return QuadraticModel(theta0, loss, grad, op, batch_id, kfac_blocks=blocks)


def synthetic_quadratic(
    curvature: np.ndarray | CurvatureOperator,
    gradient: np.ndarray,
    constant: float = 0.0,
    theta0: ParamVector | None = None,
    batch_id=None,
) -> QuadraticModel:
    """Quadratic from explicit pieces (tests, oracles, toy systems)."""
    g = np.asarray(gradient, dtype=np.float64)
    if isinstance(curvature, CurvatureOperator):
        op = curvature
    else:
        op = CurvatureOperator.from_dense(curvature, batch_id=batch_id)
    if theta0 is None:
        theta0 = ParamVector.from_values(np.zeros(g.size))
    return QuadraticModel(theta0, float(constant), g, op, batch_id)


def grad_at(q: QuadraticModel, theta: ParamVector | np.ndarray) -> np.ndarray:
    """grad q(theta) = H (theta - theta0) + g; one curvature matvec."""
    values = theta.values if isinstance(theta, ParamVector) else np.asarray(theta)
    disp = values - q.theta0.values
    return q.curvature.matvec(disp) + q.gradient


def value_at(q: QuadraticModel, theta: ParamVector | np.ndarray) -> float:
    """q(theta); one curvature matvec."""
    values = theta.values if isinstance(theta, ParamVector) else np.asarray(theta)
    disp = values - q.theta0.values
    h_disp = q.curvature.matvec(disp)
    return 0.5 * float(disp @ h_disp) + float(disp @ q.gradient) + q.constant


def check_direction(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise ValidationError(f"direction must be unit norm, got {np.linalg.norm(d)!r}")
    return d


def directional_slope(q: QuadraticModel, theta, d: np.ndarray) -> float:
    """d . grad q(theta) along a unit direction."""
    d = check_direction(d)
    return float(d @ grad_at(q, theta))


def directional_curvature(q: QuadraticModel, d: np.ndarray) -> float:
    """d . H d along a unit direction; independent of theta."""
    d = check_direction(d)
    return float(d @ q.curvature.matvec(d))


def subspace_eval(
    q: QuadraticModel,
    theta_star: ParamVector | np.ndarray,
    u1: np.ndarray,
    u2: np.ndarray,
    grid,
) -> np.ndarray:
    """Evaluate q(theta* + t1 u1 + t2 u2) over a grid of (t1, t2) pairs.

    Six scalars (the three curvature projections, two gradient projections and
    the constant) are precomputed; evaluating the closed form per grid point is
    then free of matvecs. Costs exactly 2 curvature matvecs when theta* is the
    anchor, 3 otherwise (one extra for the anchor shift).
    """
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    for u in (u1, u2):
        if abs(np.linalg.norm(u) - 1.0) > 1e-8:
            raise ValidationError("subspace directions must be unit norm within 1e-8")
    if abs(float(u1 @ u2)) > 1e-8:
        raise ValidationError("subspace directions must be orthogonal within 1e-8")

    star = theta_star.values if isinstance(theta_star, ParamVector) else np.asarray(theta_star)
    h_u1 = q.curvature.matvec(u1)
    h_u2 = q.curvature.matvec(u2)
    c11 = float(u1 @ h_u1)
    c12 = float(u1 @ h_u2)
    c22 = float(u2 @ h_u2)

    disp = star - q.theta0.values
    if np.any(disp):
        h_disp = q.curvature.matvec(disp)
        g_star = h_disp + q.gradient
        c_star = 0.5 * float(disp @ h_disp) + float(disp @ q.gradient) + q.constant
    else:
        g_star = q.gradient
        c_star = q.constant
    g1 = float(u1 @ g_star)
    g2 = float(u2 @ g_star)

    grid = np.asarray(grid, dtype=np.float64)
    t1 = grid[:, 0]
    t2 = grid[:, 1]
    return (
        0.5 * t1 * t1 * c11
        + t1 * t2 * c12
        + 0.5 * t2 * t2 * c22
        + t1 * g1
        + t2 * g2
        + c_star
    )


def iter_chunks(data: Batch, chunk_size: int):
    """Fixed-order slices of a batch; the last chunk may be ragged."""
    if chunk_size < 1:
        raise ValidationError(f"chunk_size must be >= 1, got {chunk_size}")
    n = data.size
    for start in range(0, n, chunk_size):
        stop = min(start + chunk_size, n)
        yield Batch(
            data.inputs[start:stop],
            data.targets[start:stop],
            data.indices[start:stop],
        )


def average_kfac_blocks(block_lists: list, weights: list) -> list:
    """Sample-count-weighted average of per-chunk Kronecker factors."""
    from .linalg import DenseSymMatrix

    n_layers = len(block_lists[0])
    out = []
    for l in range(n_layers):
        a = sum(w * bl[l].factor_a.entries for w, bl in zip(weights, block_lists))
        b = sum(w * bl[l].factor_b.entries for w, bl in zip(weights, block_lists))
        out.append(KfacBlock(layer=block_lists[0][l].layer,
                             factor_a=DenseSymMatrix(a),
                             factor_b=DenseSymMatrix(b)))
    return out


def fullbatch_quadratic(
    mlp: Mlp,
    theta0: ParamVector,
    data: Batch,
    kind: str = "ggn",
    beta: float = 0.0,
    delta: float = 0.0,
    chunk_size: int = 512,
    fisher_mode: str = "mc_sample",
    rng: Rng | None = None,
) -> QuadraticModel:
    """Quadratic model over the whole dataset, accumulated in chunks.

    c and g are sample-weighted averages over the chunks. For hessian/ggn the
    curvature matvec streams the chunks on every call; for kfac the Kronecker
    factors are averaged across chunks once (factor-level averaging; note this
    is not the K-FAC of the union batch).
    """
    if data.size == 0:
        raise ValidationError("dataset is empty")
    chunks = list(iter_chunks(data, chunk_size))
    n_total = data.size
    weights = [c.size / n_total for c in chunks]

    loss = 0.0
    grad = np.zeros(theta0.n_params)
    for w, chunk in zip(weights, chunks):
        l_c, g_c = mlp.loss_and_grad(theta0, chunk, 0.0)
        loss += w * l_c
        grad += w * g_c
    mask = mlp.reg_mask(theta0)
    loss += 0.5 * beta * float(theta0.values[mask] @ theta0.values[mask])
    grad[mask] += beta * theta0.values[mask]

    blocks = None
    if kind == "hessian":
        def raw(v, _chunks=chunks, _w=weights):
            out = np.zeros_like(v)
            for wi, ci in zip(_w, _chunks):
                out += wi * mlp.hvp(theta0, ci, 0.0, v)
            return out
    elif kind == "ggn":
        def raw(v, _chunks=chunks, _w=weights):
            out = np.zeros_like(v)
            for wi, ci in zip(_w, _chunks):
                out += wi * mlp.ggn_vp(theta0, ci, 0.0, v)
            return out
    elif kind == "kfac":
        per_chunk = [
            mlp.kfac_factors(theta0, c, fisher_mode,
                             rng.split(i) if rng is not None else None)
            for i, c in enumerate(chunks)
        ]
        blocks = average_kfac_blocks(per_chunk, weights)
        raw = _kfac_matvec(blocks, theta0)
    else:
        raise ValidationError(f"unknown curvature kind {kind!r}")

    op = CurvatureOperator(kind, theta0.n_params, raw, beta, delta, mask, batch_id="FULL")
    return QuadraticModel(theta0, loss, grad, op, batch_id="FULL", kfac_blocks=blocks)
