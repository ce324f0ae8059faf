"""Bias measurement machinery: directional scans across mini-batches,
eigenspace overlap matrices, the spectral decomposition of cross-batch
curvatures, slope-bias analysis, and relative-error summaries.

Raw scan data is stored unnormalized; the display normalization used by the
report layer (sign flips and reordering so same-batch slopes are positive
descending) never touches the stored directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .cg import CgConfig, cg_minimize
from .linalg import EigenDecomposition, Rng, top_k_eigenpairs
from .model import Batch, Mlp, ParamVector
from .quadratic import (
    QuadraticModel,
    build_quadratic,
    directional_curvature,
    fullbatch_quadratic,
    grad_at,
)

# |fullbatch| below this excludes a direction from relative-error statistics.
RELERR_FLOOR = 1e-14

# Grayscale rendering range for overlap entries (log10 scale).
OVERLAP_BLACK = 1e-8


@dataclass
class DirectionSet:
    """Unit directions from one source batch: top eigenvectors (kind="eigen")
    or CG search directions with their trajectory anchors (kind="cg")."""

    kind: str
    source_batch: object
    directions: np.ndarray  # P x k, columns are unit directions
    eigenvalues: np.ndarray | None = None
    anchors: list | None = None  # cg kind: theta_p per direction

    def __post_init__(self):
        if self.kind not in ("eigen", "cg"):
            raise ValidationError(f"unknown direction kind {self.kind!r}")
        d = np.asarray(self.directions, dtype=np.float64)
        self.directions = d
        if self.kind == "eigen":
            gram = d.T @ d
            if np.max(np.abs(gram - np.eye(d.shape[1]))) > 1e-8:
                raise ValidationError("eigen directions must be orthonormal within 1e-8")
        if self.kind == "cg" and self.anchors is None:
            raise ValidationError("cg directions require their trajectory anchors")

    @property
    def k(self) -> int:
        return self.directions.shape[1]


@dataclass
class ScanReport:
    """Directional slopes/curvatures of every batch's quadratic (columns)
    along one source batch's directions (rows), plus the full-batch row."""

    source_batch: object
    batch_ids: list
    slopes: np.ndarray  # k x M
    curvatures: np.ndarray  # k x M
    full_slopes: np.ndarray  # k
    full_curvatures: np.ndarray  # k
    magnitudes: np.ndarray | None = None  # k x M, CG scans only
    full_magnitudes: np.ndarray | None = None
    sign_flipped: np.ndarray | None = None  # display normalization flags
    direction_order: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.slopes.shape[0]

    def source_column(self) -> int:
        return self.batch_ids.index(self.source_batch)

    def display_normalized(self) -> "ScanReport":
        """Report-layer view: flip signs so same-batch slopes are positive,
        then order directions by descending same-batch slope."""
        col = self.source_column()
        flips = np.where(self.slopes[:, col] < 0.0, -1.0, 1.0)
        slopes = self.slopes * flips[:, None]
        full_slopes = self.full_slopes * flips
        order = np.argsort(slopes[:, col])[::-1]
        mags = self.magnitudes
        fmags = self.full_magnitudes
        return ScanReport(
            source_batch=self.source_batch,
            batch_ids=list(self.batch_ids),
            slopes=slopes[order],
            curvatures=self.curvatures[order],
            full_slopes=full_slopes[order],
            full_curvatures=self.full_curvatures[order],
            magnitudes=None if mags is None else (mags * flips[:, None])[order],
            full_magnitudes=None if fmags is None else (fmags * flips)[order],
            sign_flipped=flips[order] < 0,
            direction_order=order,
            meta=dict(self.meta),
        )


@dataclass
class OverlapMatrix:
    """Squared inner products between two eigenbases, entries in [0, 1]."""

    omega: np.ndarray
    source_ids: tuple = (None, None)

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=np.float64)
        if np.any(om < -1e-12) or np.any(om > 1.0 + 1e-12):
            raise ValidationError("overlap entries must lie in [0, 1]")
        self.omega = om

    def row_sums(self) -> np.ndarray:
        """Captured mass per row; equals 1 when the second basis is complete."""
        return self.omega.sum(axis=1)

    def to_grayscale(self) -> np.ndarray:
        """Grayscale rendering values: 0 (black) at omega <= 1e-8, 1 (white)
        at omega = 1, log-linear in between."""
        clipped = np.clip(self.omega, OVERLAP_BLACK, 1.0)
        return (np.log10(clipped) + 8.0) / 8.0


@dataclass
class BiasSummary:
    """Relative errors of same-batch measurements against the full-batch
    truth, with the aggregates used by the trend reports."""

    relative_errors: np.ndarray
    mean: float
    p25: float
    median: float
    p75: float
    n_excluded: int
    batch_size: int | None = None
    n_params: int | None = None
    epoch: int | None = None
    quantity: str = "curvature"
    source_batch: object = None


def eigendirection_scan(
    mlp: Mlp,
    theta_star: ParamVector,
    batches: list,
    data: Batch,
    k: int,
    kind: str = "ggn",
    beta: float = 0.0,
    delta: float = 0.0,
    rng: Rng | None = None,
    chunk_size: int = 512,
    source_indices: list | None = None,
    fisher_mode: str = "mc_sample",
):
    """Top-k eigenvectors per source batch, then slopes/curvatures of every
    batch's quadratic and the full-batch quadratic along those directions.

    Returns (direction_sets, reports), one entry per source batch. Directions
    are stored raw; apply ScanReport.display_normalized() for plot-ready
    output.
    """
    if k > theta_star.n_params:
        raise ValidationError(f"k={k} exceeds parameter count {theta_star.n_params}")
    rng = rng if rng is not None else Rng(0)
    quads = [
        build_quadratic(mlp, theta_star, b, kind, beta, delta, batch_id=i,
                        fisher_mode=fisher_mode,
                        rng=rng.split(10_000 + i) if kind == "kfac" else None)
        for i, b in enumerate(batches)
    ]
    q_full = fullbatch_quadratic(mlp, theta_star, data, kind, beta, delta,
                                 chunk_size, fisher_mode,
                                 rng.split(20_000) if kind == "kfac" else None)
    sources = range(len(batches)) if source_indices is None else source_indices

    direction_sets = []
    reports = []
    for m in sources:
        eig = top_k_eigenpairs(
            quads[m].curvature.matvec, theta_star.n_params, k, rng.split(m)
        )
        dset = DirectionSet(
            kind="eigen",
            source_batch=m,
            directions=eig.basis,
            eigenvalues=eig.eigenvalues,
        )
        slopes = np.empty((k, len(batches)))
        curvs = np.empty((k, len(batches)))
        full_s = np.empty(k)
        full_c = np.empty(k)
        for i in range(k):
            d = eig.basis[:, i]
            for j, q in enumerate(quads):
                slopes[i, j] = float(d @ q.gradient)
                curvs[i, j] = directional_curvature(q, d)
            full_s[i] = float(d @ q_full.gradient)
            full_c[i] = directional_curvature(q_full, d)
        reports.append(
            ScanReport(
                source_batch=m,
                batch_ids=list(range(len(batches))),
                slopes=slopes,
                curvatures=curvs,
                full_slopes=full_s,
                full_curvatures=full_c,
                meta={"kind": kind, "k": k, "beta": beta, "delta": delta,
                      "direction_kind": "eigen"},
            )
        )
        direction_sets.append(dset)
    return direction_sets, reports


def cg_direction_scan(
    q_b: QuadraticModel,
    batch_quads: list,
    q_full: QuadraticModel,
    n_steps: int,
    config: CgConfig | None = None,
):
    """Run CG on q_b, then evaluate slope, curvature, and the implied 1D
    Newton magnitude -slope/curvature along each search direction d_p at its
    iterate theta_p, for every batch quadratic and the full-batch one.

    If CG stops early on negative curvature the scan is truncated at the
    achieved length and flagged in meta.
    """
    config = config or CgConfig(p_max=n_steps)
    trace = cg_minimize(q_b, CgConfig(epsilon=config.epsilon, p_max=n_steps))
    n = trace.n_steps
    m = len(batch_quads)
    slopes = np.empty((n, m))
    curvs = np.empty((n, m))
    mags = np.empty((n, m))
    full_s = np.empty(n)
    full_c = np.empty(n)
    full_m = np.empty(n)
    for p in range(n):
        d = trace.directions[p]
        theta_p = trace.iterates[p]
        for j, q in enumerate(batch_quads):
            slopes[p, j] = float(d @ grad_at(q, theta_p))
            curvs[p, j] = directional_curvature(q, d)
            mags[p, j] = -slopes[p, j] / curvs[p, j]
        full_s[p] = float(d @ grad_at(q_full, theta_p))
        full_c[p] = directional_curvature(q_full, d)
        full_m[p] = -full_s[p] / full_c[p]
    report = ScanReport(
        source_batch=q_b.batch_id,
        batch_ids=[q.batch_id for q in batch_quads],
        slopes=slopes,
        curvatures=curvs,
        full_slopes=full_s,
        full_curvatures=full_c,
        magnitudes=mags,
        full_magnitudes=full_m,
        meta={
            "direction_kind": "cg",
            "termination": trace.termination,
            "truncated": trace.termination == "negative_curvature",
            "requested_steps": n_steps,
        },
    )
    return trace, report


def overlap_matrix(u: DirectionSet, u_tilde: DirectionSet) -> OverlapMatrix:
    """Omega_{i,p} = (u_i . u~_p)^2 between two eigen direction sets."""
    if u.kind != "eigen" or u_tilde.kind != "eigen":
        raise ValidationError("overlap matrices are defined for eigen direction sets")
    if u.directions.shape[0] != u_tilde.directions.shape[0]:
        raise ValidationError("direction sets live in different ambient dimensions")
    inner = u.directions.T @ u_tilde.directions
    return OverlapMatrix(
        omega=np.clip(inner * inner, 0.0, 1.0 + 1e-12),
        source_ids=(u.source_batch, u_tilde.source_batch),
    )


def spectral_transfer(
    eig_b: EigenDecomposition,
    eig_bt: EigenDecomposition,
    omega: OverlapMatrix,
) -> np.ndarray:
    """Cross-batch curvatures predicted from spectra and overlaps:
    sum_p lambda~_p Omega_{i,p} for each direction u_i; on full bases this
    equals the direct quadratic form u_i^T H~ u_i."""
    if omega.omega.shape != (eig_b.k, eig_bt.k):
        raise ValidationError("overlap matrix shape does not match the bases")
    return omega.omega @ eig_bt.eigenvalues


@dataclass(frozen=True)
class SlopeBias:
    slope_b: float
    slope_bt: float
    angle: float
    grad_norm_b: float
    grad_norm_bt: float


def slope_bias(q_b: QuadraticModel, q_bt: QuadraticModel, theta) -> SlopeBias:
    """Slopes of both quadratics along the first batch's steepest-descent
    direction at theta, plus the angle between the two gradients.

    The first slope is exactly -||grad q_b||; the second equals
    -(grad q_b . grad q_bt)/||grad q_b|| and, for equal gradient norms,
    exceeds the first by ||grad q_b|| (1 - cos angle).
    """
    g_b = grad_at(q_b, theta)
    g_bt = grad_at(q_bt, theta)
    norm_b = float(np.linalg.norm(g_b))
    norm_bt = float(np.linalg.norm(g_bt))
    if norm_b == 0.0:
        raise ValidationError("gradient of the first quadratic vanishes at theta")
    d = -g_b / norm_b
    cos = float(g_b @ g_bt) / (norm_b * norm_bt) if norm_bt > 0 else 1.0
    return SlopeBias(
        slope_b=float(d @ g_b),
        slope_bt=float(d @ g_bt),
        angle=float(np.arccos(np.clip(cos, -1.0, 1.0))),
        grad_norm_b=norm_b,
        grad_norm_bt=norm_bt,
    )


def relative_errors(measured: np.ndarray, truth: np.ndarray):
    """|measured - truth| / |truth| with near-zero truths excluded and counted."""
    measured = np.asarray(measured, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    keep = np.abs(truth) >= RELERR_FLOOR
    errs = np.abs(measured[keep] - truth[keep]) / np.abs(truth[keep])
    return errs, int(np.sum(~keep))


def bias_summary(
    scans: list,
    quantity: str = "curvature",
    batch_size: int | None = None,
    n_params: int | None = None,
    epoch: int | None = None,
) -> list:
    """Per-scan relative errors of the same-batch values against the
    full-batch row, aggregated into mean and quartiles."""
    if quantity not in ("slope", "curvature"):
        raise ValidationError(f"unknown quantity {quantity!r}")
    out = []
    for scan in scans:
        col = scan.source_column()
        if quantity == "curvature":
            measured = scan.curvatures[:, col]
            truth = scan.full_curvatures
        else:
            measured = scan.slopes[:, col]
            truth = scan.full_slopes
        errs, n_excl = relative_errors(measured, truth)
        if errs.size:
            p25, med, p75 = np.percentile(errs, [25, 50, 75])
            mean = float(np.mean(errs))
        else:
            p25 = med = p75 = mean = float("nan")
        out.append(
            BiasSummary(
                relative_errors=errs,
                mean=mean,
                p25=float(p25),
                median=float(med),
                p75=float(p75),
                n_excluded=n_excl,
                batch_size=batch_size,
                n_params=n_params,
                epoch=epoch,
                quantity=quantity,
                source_batch=scan.source_batch,
            )
        )
    return out
