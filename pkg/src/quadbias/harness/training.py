"""SGD training of the toy models with checkpoint persistence.

Checkpoints are written as one UTF-8 JSON metadata line followed by the raw
little-endian float64 parameter array, so round trips are bitwise exact and
the format stays readable from other languages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import NumericalError, ValidationError
from ..linalg import Rng
from ..model import Mlp, MlpArchitecture, ParamVector, build_layout
from .datasets import Dataset

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    momentum: float = 0.0
    epochs: int = 50
    batch_size: int = 64
    beta: float = 0.0  # weight decay on the masked parameters
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0 or self.epochs < 1 or self.batch_size < 1 or self.beta < 0:
            raise ValidationError(f"invalid training config {self}")

    def digest_dict(self) -> dict:
        return {
            "lr": self.lr, "momentum": self.momentum, "epochs": self.epochs,
            "batch_size": self.batch_size, "beta": self.beta, "seed": self.seed,
        }


@dataclass
class Checkpoint:
    epoch: int
    params: ParamVector
    arch: MlpArchitecture
    config_digest: str
    rng_state: dict
    format_version: int = CHECKPOINT_FORMAT_VERSION


def checkpoint_epochs(n_epochs: int, n_points: int = 10) -> list:
    """n_points log-equidistant epochs between the first and last, plus the
    final epoch."""
    if n_epochs == 1:
        return [1]
    raw = np.logspace(0.0, np.log10(n_epochs), n_points)
    epochs = sorted(set(int(round(e)) for e in raw) | {n_epochs})
    return epochs


def train(
    arch: MlpArchitecture,
    dataset: Dataset,
    config: TrainConfig,
    rng: Rng | None = None,
    reg_mode: str = "weights",
) -> list:
    """Plain SGD with optional momentum on the regularized loss.

    Checkpoints at the log-equidistant epochs plus the final one;
    deterministic given the seed. Non-finite loss raises, naming the epoch.
    """
    mlp = Mlp(arch, reg_mode=reg_mode)
    rng = rng if rng is not None else Rng(config.seed)
    params = mlp.init_params(rng.split(0))
    velocity = np.zeros(params.n_params)
    ckpt_at = set(checkpoint_epochs(config.epochs))
    checkpoints = []
    digest = json.dumps(config.digest_dict(), sort_keys=True)

    for epoch in range(1, config.epochs + 1):
        epoch_rng = rng.split(epoch)
        batches = dataset.minibatches(config.batch_size, seed=epoch_rng)
        for batch in batches:
            loss, grad = mlp.loss_and_grad(params, batch, config.beta)
            if not np.isfinite(loss):
                raise NumericalError(f"training diverged at epoch {epoch}")
            velocity = config.momentum * velocity + grad
            params = params.with_values(params.values - config.lr * velocity)
        if epoch in ckpt_at:
            checkpoints.append(
                Checkpoint(
                    epoch=epoch,
                    params=params.copy(),
                    arch=arch,
                    config_digest=digest,
                    rng_state=epoch_rng.state_dict(),
                )
            )
    return checkpoints


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    meta = {
        "format_version": ckpt.format_version,
        "epoch": ckpt.epoch,
        "arch": ckpt.arch.to_dict(),
        "config_digest": ckpt.config_digest,
        "rng_state": ckpt.rng_state,
        "n_params": ckpt.params.n_params,
    }
    with path.open("wb") as fh:
        fh.write(json.dumps(meta, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(ckpt.params.values.astype("<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with path.open("rb") as fh:
        meta = json.loads(fh.readline().decode("utf-8"))
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValidationError(
                f"{path}: unsupported checkpoint format version "
                f"{meta.get('format_version')!r}"
            )
        raw = fh.read()
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if values.size != meta["n_params"]:
        raise ValidationError(f"{path}: parameter payload truncated")
    arch = MlpArchitecture.from_dict(meta["arch"])
    params = ParamVector(values, build_layout(arch))
    return Checkpoint(
        epoch=meta["epoch"],
        params=params,
        arch=arch,
        config_digest=meta["config_digest"],
        rng_state=meta["rng_state"],
    )
