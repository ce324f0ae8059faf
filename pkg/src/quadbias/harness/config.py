"""Experiment configuration: a sectioned key-value text format, its typed
view, and the digest that stamps every output file.

Grammar: `[section]` headers, `key = value` pairs, `#` comment lines. Lists
are comma-separated. All seeds are explicit in the file; the digest is the
sha256 of the canonicalized (section, key, value) triples.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..model import MlpArchitecture
from .datasets import DatasetSpec
from .training import TrainConfig

EXPERIMENT_KINDS = (
    "bias-scan",
    "overlap",
    "cg-compare",
    "laplace-sweep",
    "bias-over-training",
    "size-sweep",
)


def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))


def read_config_text(text: str) -> dict:
    """Parse the sectioned key-value grammar into {section: {key: value}}."""
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config parse error: {exc}") from exc
    return {s: dict(cp.items(s)) for s in cp.sections()}


def read_config_file(path) -> dict:
    return read_config_text(Path(path).read_text())


def config_digest(sections: dict) -> str:
    canon = io.StringIO()
    for section in sorted(sections):
        for key in sorted(sections[section]):
            canon.write(f"{section}\x1f{key}\x1f{sections[section][key]}\x1e")
    return hashlib.sha256(canon.getvalue().encode("utf-8")).hexdigest()


def write_config(sections: dict, path) -> None:
    cp = _parser()
    for section, items in sections.items():
        cp.add_section(section)
        for key, value in items.items():
            cp.set(section, key, str(value))
    with Path(path).open("w") as fh:
        cp.write(fh)


def _get(items: dict, key: str, cast, default=None, required: bool = False):
    if key not in items:
        if required:
            raise ValidationError(f"missing required config key {key!r}")
        return default
    raw = items[key].strip()
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"config key {key!r}: cannot parse {raw!r}") from exc


def _int_list(raw: str) -> tuple:
    return tuple(int(v.strip()) for v in raw.split(",") if v.strip())


def _float_list(raw: str) -> tuple:
    return tuple(float(v.strip()) for v in raw.split(",") if v.strip())


@dataclass
class ExperimentConfig:
    """Typed view of one experiment file; `sections` keeps the raw text values
    so the digest reflects exactly what was parsed."""

    kind: str
    dataset: DatasetSpec
    arch: MlpArchitecture
    train: TrainConfig
    curvature: str = "ggn"
    beta: float = 0.0005
    delta: float = 0.0
    batch_sizes: tuple = (64,)
    n_directions: int = 10
    cg_iterations: int = 30
    seeds: tuple = (0,)
    la_grid: tuple = ()
    mc_samples: int = 40
    fisher_mode: str = "mc_sample"
    n_source_batches: int | None = None
    widths: tuple = ()
    chunk_size: int = 512
    sections: dict = field(default_factory=dict)
    digest: str = ""

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValidationError(f"unknown experiment kind {self.kind!r}")
        if self.curvature not in ("hessian", "ggn", "kfac"):
            raise ValidationError(f"unknown curvature {self.curvature!r}")


def parse_experiment_config(sections: dict, seed_override: int | None = None) -> ExperimentConfig:
    if seed_override is not None:
        sections = {s: dict(kv) for s, kv in sections.items()}
        sections.setdefault("dataset", {})["seed"] = str(seed_override)
    digest = config_digest(sections)

    ds = sections.get("dataset", {})
    dataset = DatasetSpec(
        generator=_get(ds, "generator", str, "gaussian_blobs"),
        n=_get(ds, "n", int, 1024),
        d=_get(ds, "dim", int, 2),
        c=_get(ds, "classes", int, 2),
        noise=_get(ds, "noise", float, 0.5),
        seed=_get(ds, "seed", int, 0),
        train_frac=_get(ds, "train_frac", float, 0.8),
        ood_translation=_get(ds, "ood_translation", float, 0.0),
        ood_noise_mult=_get(ds, "ood_noise_mult", float, 1.0),
        path=_get(ds, "path", str, None),
    )

    md = sections.get("model", {})
    arch = MlpArchitecture(
        layer_sizes=_get(md, "layers", _int_list, (dataset.d, 16, dataset.c)),
        activation=_get(md, "activation", str, "relu"),
        loss=_get(md, "loss", str, "cross_entropy"),
    )

    tr = sections.get("train", {})
    train = TrainConfig(
        lr=_get(tr, "lr", float, 0.05),
        momentum=_get(tr, "momentum", float, 0.0),
        epochs=_get(tr, "epochs", int, 50),
        batch_size=_get(tr, "batch_size", int, 64),
        beta=_get(tr, "beta", float, 0.0),
        seed=_get(tr, "seed", int, 0),
    )

    ex = sections.get("experiment", {})
    grid_points = _get(ex, "la_grid_points", int, 13)
    grid_min = _get(ex, "la_grid_min", float, 1e-4)
    grid_max = _get(ex, "la_grid_max", float, 1.0)
    grid_extra = _get(ex, "la_grid_extra", _float_list, (10.0,))
    la_grid = tuple(
        np.logspace(np.log10(grid_min), np.log10(grid_max), grid_points)
    ) + tuple(grid_extra)

    return ExperimentConfig(
        kind=_get(ex, "kind", str, required=True),
        dataset=dataset,
        arch=arch,
        train=train,
        curvature=_get(ex, "curvature", str, "ggn"),
        beta=_get(ex, "beta", float, 0.0005),
        delta=_get(ex, "delta", float, 0.0),
        batch_sizes=_get(ex, "batch_sizes", _int_list, (64,)),
        n_directions=_get(ex, "k", int, 10),
        cg_iterations=_get(ex, "cg_iterations", int, 30),
        seeds=_get(ex, "seeds", _int_list, (0,)),
        la_grid=la_grid,
        mc_samples=_get(ex, "mc_samples", int, 40),
        fisher_mode=_get(ex, "fisher_mode", str, "mc_sample"),
        n_source_batches=_get(ex, "n_source_batches", int, None),
        widths=_get(ex, "widths", _int_list, (8, 32, 128)),
        chunk_size=_get(ex, "chunk_size", int, 512),
        sections=sections,
        digest=digest,
    )


def load_experiment_config(path, seed_override: int | None = None) -> ExperimentConfig:
    return parse_experiment_config(read_config_file(path), seed_override)
