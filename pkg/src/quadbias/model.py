"""Small fully-connected classifier with exact curvature access.

The network is evaluated with plain numpy. Besides the forward pass it exposes
the exact loss gradient, Hessian-vector products (forward-over-reverse),
Gauss-Newton-vector products, Jacobian-vector products, and per-layer
Kronecker factors for dense layers. These are the curvature sources that all
other modules consume.

Conventions
-----------
Layer l maps activations A_{l-1} (rows = samples) to Z_l = A_{l-1} W_l + b_l
with W_l of shape (fan_in, fan_out). Flat parameter storage is row-major, so
a layer's flat weight slice equals the column-stacked (fan_out x fan_in)
matrix used by the Kronecker utilities in :mod:`quadbias.linalg`.

The empirical risk is the mean per-sample loss; the regularizer beta/2 ||w||^2
acts on the weights only by default (reg_mode="weights"), switchable to all
parameters (reg_mode="all").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .linalg import DenseSymMatrix, Rng

ACTIVATIONS = ("relu", "tanh", "identity")
LOSSES = ("cross_entropy", "mse")


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer sizes [D, h1, ..., C], activation between linear layers, loss id."""

    layer_sizes: tuple
    activation: str = "relu"
    loss: str = "cross_entropy"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValidationError(f"need >= 1 linear layer with positive sizes, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.loss not in LOSSES:
            raise ValidationError(f"unknown loss {self.loss!r}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "loss": self.loss,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpArchitecture":
        return cls(tuple(d["layer_sizes"]), d["activation"], d["loss"])


@dataclass(frozen=True)
class LayoutEntry:
    layer: int
    role: str  # "weight" | "bias"
    shape: tuple
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def build_layout(arch: MlpArchitecture) -> tuple:
    entries = []
    offset = 0
    for l in range(arch.n_layers):
        fan_in, fan_out = arch.layer_sizes[l], arch.layer_sizes[l + 1]
        entries.append(LayoutEntry(l, "weight", (fan_in, fan_out), offset))
        offset += fan_in * fan_out
        entries.append(LayoutEntry(l, "bias", (fan_out,), offset))
        offset += fan_out
    return tuple(entries)


@dataclass
class ParamVector:
    """Flat parameter array plus the layout that maps slices to layers.

    weight_mask is True exactly on weight entries (used for masked
    regularization).
    """

    values: np.ndarray
    layout: tuple
    weight_mask: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        total = sum(e.size for e in self.layout)
        if self.values.shape != (total,):
            raise ValidationError(
                f"values length {self.values.shape} does not match layout size {total}"
            )
        if self.weight_mask is None:
            mask = np.zeros(total, dtype=bool)
            for e in self.layout:
                if e.role == "weight":
                    mask[e.offset : e.offset + e.size] = True
            self.weight_mask = mask

    @property
    def n_params(self) -> int:
        return self.values.size

    def view(self, layer: int, role: str) -> np.ndarray:
        for e in self.layout:
            if e.layer == layer and e.role == role:
                return self.values[e.offset : e.offset + e.size].reshape(e.shape)
        raise KeyError((layer, role))

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout, self.weight_mask)

    def with_values(self, values: np.ndarray) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=np.float64), self.layout, self.weight_mask)

    @classmethod
    def from_values(cls, values: np.ndarray) -> "ParamVector":
        """Wrap a bare vector as a single-weight-block parameter (synthetic use)."""
        values = np.asarray(values, dtype=np.float64)
        layout = (LayoutEntry(0, "weight", (values.size,), 0),)
        return cls(values, layout)


@dataclass(frozen=True)
class Batch:
    """Inputs, one-hot targets, and source row ids of a data subset."""

    inputs: np.ndarray
    targets: np.ndarray
    indices: np.ndarray = None

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.float64)
        if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValidationError(f"inconsistent batch shapes {x.shape}, {y.shape}")
        row_sums = y.sum(axis=1)
        ones_per_row = (y == 1.0).sum(axis=1)
        if not (np.all(row_sums == 1.0) and np.all(ones_per_row == 1)):
            raise ValidationError("targets must be one-hot rows")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)
        idx = self.indices
        if idx is None:
            idx = np.arange(x.shape[0])
        object.__setattr__(self, "indices", np.asarray(idx, dtype=np.int64))

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.targets, axis=1)


@dataclass(frozen=True)
class KfacBlock:
    """Per-layer Kronecker pair: input-side factor_a (m x m), output-side
    factor_b (n x n), both symmetric PSD averages of outer products."""

    layer: int
    factor_a: DenseSymMatrix
    factor_b: DenseSymMatrix

    @property
    def m(self) -> int:
        return self.factor_a.dim

    @property
    def n(self) -> int:
        return self.factor_b.dim


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_d(name: str, z: np.ndarray) -> np.ndarray:
    # relu derivative at exactly 0 is 0 (subgradient choice)
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return np.ones_like(z)


def _act_dd(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        t = np.tanh(z)
        return -2.0 * t * (1.0 - t * t)
    return np.zeros_like(z)


class Mlp:
    """Model context bundling an architecture with its derivative machinery."""

    def __init__(self, arch: MlpArchitecture, reg_mode: str = "weights"):
        if reg_mode not in ("weights", "all"):
            raise ValidationError(f"unknown reg_mode {reg_mode!r}")
        self.arch = arch
        self.reg_mode = reg_mode
        self.layout = build_layout(arch)
        self.n_params = sum(e.size for e in self.layout)

    # -- parameters ---------------------------------------------------------

    def zero_params(self) -> ParamVector:
        return ParamVector(np.zeros(self.n_params), self.layout)

    def init_params(self, rng: Rng, scale: float | None = None) -> ParamVector:
        """He-style Gaussian weights, zero biases; deterministic given rng."""
        p = self.zero_params()
        for l in range(self.arch.n_layers):
            fan_in = self.arch.layer_sizes[l]
            w = p.view(l, "weight")
            std = scale if scale is not None else np.sqrt(2.0 / fan_in)
            w[...] = rng.normal(w.size).reshape(w.shape) * std
        return p

    def reg_mask(self, params: ParamVector) -> np.ndarray:
        if self.reg_mode == "all":
            return np.ones(params.n_params, dtype=bool)
        return params.weight_mask

    # -- forward ------------------------------------------------------------

    def _unpack(self, params: ParamVector):
        return [
            (params.view(l, "weight"), params.view(l, "bias"))
            for l in range(self.arch.n_layers)
        ]

    def forward(self, params: ParamVector, inputs: np.ndarray) -> np.ndarray:
        """Logits for a batch of inputs (rows); deterministic."""
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if x.shape[1] != self.arch.input_dim:
            raise ValidationError(
                f"input width {x.shape[1]} != architecture input dim {self.arch.input_dim}"
            )
        a = x
        wb = self._unpack(params)
        for l, (w, b) in enumerate(wb):
            z = a @ w + b
            a = _act(self.arch.activation, z) if l < len(wb) - 1 else z
        return a

    def _forward_trace(self, params: ParamVector, x: np.ndarray):
        """Activations list [A_0..A_{L-1}] and pre-activations [Z_1..Z_L]."""
        wb = self._unpack(params)
        acts = [x]
        pre = []
        a = x
        for l, (w, b) in enumerate(wb):
            z = a @ w + b
            pre.append(z)
            a = _act(self.arch.activation, z) if l < len(wb) - 1 else z
            if l < len(wb) - 1:
                acts.append(a)
        return wb, acts, pre

    # -- loss and gradient ---------------------------------------------------

    def _loss_value(self, logits: np.ndarray, targets: np.ndarray) -> float:
        n = logits.shape[0]
        if self.arch.loss == "cross_entropy":
            shifted = logits - logits.max(axis=1, keepdims=True)
            log_z = np.log(np.exp(shifted).sum(axis=1))
            true_logit = (shifted * targets).sum(axis=1)
            return float((log_z - true_logit).sum() / n)
        diff = logits - targets
        return float((diff * diff).sum() / n)

    def _loss_grad_logits(self, logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """d(mean loss)/d logits."""
        n = logits.shape[0]
        if self.arch.loss == "cross_entropy":
            return (softmax(logits) - targets) / n
        return 2.0 * (logits - targets) / n

    def _backprop(self, wb, acts, pre, g_logits: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradient from a logits-side seed."""
        grad = np.zeros(self.n_params)
        gview = ParamVector(grad, self.layout)
        g = g_logits
        for l in range(len(wb) - 1, -1, -1):
            w, _ = wb[l]
            gview.view(l, "weight")[...] = acts[l].T @ g
            gview.view(l, "bias")[...] = g.sum(axis=0)
            if l > 0:
                g = (g @ w.T) * _act_d(self.arch.activation, pre[l - 1])
        return grad

    def loss_and_grad(self, params: ParamVector, batch: Batch, beta: float):
        """Regularized mean loss and its exact gradient."""
        if beta < 0:
            raise ValidationError(f"beta must be >= 0, got {beta}")
        wb, acts, pre = self._forward_trace(params, batch.inputs)
        logits = pre[-1]
        mask = self.reg_mask(params)
        loss = self._loss_value(logits, batch.targets)
        loss += 0.5 * beta * float(params.values[mask] @ params.values[mask])
        grad = self._backprop(wb, acts, pre, self._loss_grad_logits(logits, batch.targets))
        grad[mask] += beta * params.values[mask]
        return loss, grad

    # -- directional derivatives ----------------------------------------------

    def _r_forward(self, wb, acts, pre, v: ParamVector):
        """Forward-mode pass: returns R[Z_l] for all layers (R[A_0] = 0)."""
        act = self.arch.activation
        r_a = np.zeros_like(acts[0])
        r_pre = []
        for l, (w, b) in enumerate(wb):
            r_z = acts[l] @ v.view(l, "weight") + r_a @ w + v.view(l, "bias")
            r_pre.append(r_z)
            if l < len(wb) - 1:
                r_a = _act_d(act, pre[l]) * r_z
        return r_pre

    def hvp(self, params: ParamVector, batch: Batch, beta: float, v: np.ndarray) -> np.ndarray:
        """Exact Hessian-vector product of the regularized loss.

        Forward-over-reverse: one linearized forward pass, then the
        linearization of the backward pass. Linear in v.
        """
        v = np.asarray(v, dtype=np.float64)
        vp = params.with_values(v)
        wb, acts, pre = self._forward_trace(params, batch.inputs)
        r_pre = self._r_forward(wb, acts, pre, vp)
        act = self.arch.activation
        n = batch.size
        logits = pre[-1]

        # R of the loss-gradient seed at the logits
        if self.arch.loss == "cross_entropy":
            p = softmax(logits)
            rz = r_pre[-1]
            r_g = (p * rz - p * (p * rz).sum(axis=1, keepdims=True)) / n
            g = (p - batch.targets) / n
        else:
            r_g = 2.0 * r_pre[-1] / n
            g = 2.0 * (logits - batch.targets) / n

        # R of activations, needed for R[A^T G] terms
        r_acts = [np.zeros_like(acts[0])]
        for l in range(len(wb) - 1):
            r_acts.append(_act_d(act, pre[l]) * r_pre[l])

        out = np.zeros(self.n_params)
        oview = ParamVector(out, self.layout)
        for l in range(len(wb) - 1, -1, -1):
            w, _ = wb[l]
            oview.view(l, "weight")[...] = r_acts[l].T @ g + acts[l].T @ r_g
            oview.view(l, "bias")[...] = r_g.sum(axis=0)
            if l > 0:
                s = g @ w.T
                r_s = r_g @ w.T + g @ vp.view(l, "weight").T
                d1 = _act_d(act, pre[l - 1])
                d2 = _act_dd(act, pre[l - 1])
                r_g = r_s * d1 + s * d2 * r_pre[l - 1]
                g = s * d1

        mask = self.reg_mask(params)
        out[mask] += beta * v[mask]
        return out

    def ggn_vp(self, params: ParamVector, batch: Batch, beta: float, v: np.ndarray) -> np.ndarray:
        """Generalized Gauss-Newton-vector product (G_B + beta * mask) v.

        Computed as J v (forward mode), loss Hessian at the logits, then J^T
        (reverse mode); the per-sample Jacobians are never materialized.
        """
        v = np.asarray(v, dtype=np.float64)
        vp = params.with_values(v)
        wb, acts, pre = self._forward_trace(params, batch.inputs)
        jv = self._r_forward(wb, acts, pre, vp)[-1]

        if self.arch.loss == "cross_entropy":
            p = softmax(pre[-1])
            h_jv = p * jv - p * (p * jv).sum(axis=1, keepdims=True)
        else:
            h_jv = 2.0 * jv

        out = self._backprop(wb, acts, pre, h_jv / batch.size)
        mask = self.reg_mask(params)
        out[mask] += beta * v[mask]
        return out

    def jvp_batch(self, params: ParamVector, inputs: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Directional derivative of the logits, grad f(x) . v, for many inputs."""
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        vp = params.with_values(np.asarray(v, dtype=np.float64))
        wb, acts, pre = self._forward_trace(params, x)
        return self._r_forward(wb, acts, pre, vp)[-1]

    def jacobian_vp(self, params: ParamVector, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """grad f(x) . v for a single input, via forward-mode differentiation."""
        return self.jvp_batch(params, np.atleast_2d(x), v)[0]

    # -- K-FAC factors ---------------------------------------------------------

    def kfac_factors(
        self,
        params: ParamVector,
        batch: Batch,
        fisher_mode: str = "mc_sample",
        rng: Rng | None = None,
    ) -> list:
        """Kronecker factors A^(l), B^(l) for each dense layer (weights only).

        A^(l) averages outer products of layer inputs; B^(l) averages outer
        products of per-sample loss gradients w.r.t. the layer pre-activation,
        with targets either sampled from the model's predictive distribution
        (fisher_mode="mc_sample", one draw per datum) or taken from the batch
        (fisher_mode="empirical").
        """
        if fisher_mode not in ("mc_sample", "empirical"):
            raise ValidationError(f"unknown fisher_mode {fisher_mode!r}")
        if fisher_mode == "mc_sample" and rng is None:
            raise ValidationError("mc_sample mode requires an Rng")
        wb, acts, pre = self._forward_trace(params, batch.inputs)
        logits = pre[-1]
        n = batch.size

        # per-sample gradient seed at the logits (loss summed per sample,
        # the 1/N average lives in the factor normalization)
        if self.arch.loss == "cross_entropy":
            p = softmax(logits)
            if fisher_mode == "empirical":
                seed = p - batch.targets
            else:
                u = rng.uniform(n)
                cdf = np.cumsum(p, axis=1)
                drawn = np.minimum((u[:, None] > cdf).sum(axis=1), p.shape[1] - 1)
                y = np.zeros_like(p)
                y[np.arange(n), drawn] = 1.0
                seed = p - y
        else:
            if fisher_mode == "empirical":
                seed = 2.0 * (logits - batch.targets)
            else:
                eps = rng.normal(n * logits.shape[1]).reshape(logits.shape)
                seed = np.sqrt(2.0) * eps

        blocks = []
        g = seed
        per_layer_g = [None] * len(wb)
        for l in range(len(wb) - 1, -1, -1):
            per_layer_g[l] = g
            if l > 0:
                g = (g @ wb[l][0].T) * _act_d(self.arch.activation, pre[l - 1])
        for l in range(len(wb)):
            a = acts[l]
            gl = per_layer_g[l]
            factor_a = DenseSymMatrix(_sym(a.T @ a / n))
            factor_b = DenseSymMatrix(_sym(gl.T @ gl / n))
            blocks.append(KfacBlock(layer=l, factor_a=factor_a, factor_b=factor_b))
        return blocks


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValidationError("labels out of range for one-hot encoding")
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out
