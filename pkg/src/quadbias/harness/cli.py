"""Command-line entry point.

Subcommands: gen-data, train, bias-scan, overlap, cg-compare, laplace-sweep,
verify. Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import NumericalError, ValidationError
from .config import load_experiment_config, read_config_file, config_digest
from .datasets import DatasetSpec, generate_dataset, save_csv
from .experiments import run_experiment
from .reports import verify_result_dir, write_summary
from .training import save_checkpoint, train

_EXPERIMENT_COMMANDS = {
    # the bias-scan command also runs the scan-family kinds selected in the
    # config file (bias-over-training, size-sweep)
    "bias-scan": ("bias-scan", "bias-over-training", "size-sweep"),
    "overlap": ("overlap",),
    "cg-compare": ("cg-compare",),
    "laplace-sweep": ("laplace-sweep",),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadbias",
        description="Mini-batch quadratic bias diagnostics and debiasing experiments",
    )
    parser.add_argument("--config", type=Path, help="experiment config file")
    parser.add_argument("--out-dir", type=Path, default=Path("results"),
                        help="output directory")
    parser.add_argument("--seed-override", type=int, default=None,
                        help="override the dataset seed from the config")
    parser.add_argument("--verbose", action="store_true",
                        help="show numerical warnings (eigenvalue clamps etc.)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "train", "bias-scan", "overlap", "cg-compare",
                 "laplace-sweep"):
        sub.add_parser(name)
    verify = sub.add_parser("verify")
    verify.add_argument("result_dir", nargs="?", type=Path, default=None)
    return parser


def _require_config(args) -> Path:
    if args.config is None:
        raise ValidationError("this command requires --config")
    if not args.config.is_file():
        raise ValidationError(f"config file not found: {args.config}")
    return args.config


def _cmd_gen_data(args) -> None:
    sections = read_config_file(_require_config(args))
    if args.seed_override is not None:
        sections.setdefault("dataset", {})["seed"] = str(args.seed_override)
    ds = sections.get("dataset", {})
    spec = DatasetSpec(
        generator=ds.get("generator", "gaussian_blobs"),
        n=int(ds.get("n", 1024)),
        d=int(ds.get("dim", 2)),
        c=int(ds.get("classes", 2)),
        noise=float(ds.get("noise", 0.5)),
        seed=int(ds.get("seed", 0)),
        train_frac=float(ds.get("train_frac", 0.8)),
        ood_translation=float(ds.get("ood_translation", 0.0)),
        ood_noise_mult=float(ds.get("ood_noise_mult", 1.0)),
        path=ds.get("path"),
    )
    dataset = generate_dataset(spec)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    save_csv(args.out_dir / "train.csv", dataset.train_inputs, dataset.train_labels)
    save_csv(args.out_dir / "test.csv", dataset.test_inputs, dataset.test_labels)
    if dataset.ood_inputs is not None:
        save_csv(args.out_dir / "ood.csv", dataset.ood_inputs, dataset.ood_labels)
    write_summary(args.out_dir / "summary.json", config_digest(sections), {
        "command": "gen-data",
        "n_train": int(dataset.n_train),
        "n_test": int(dataset.test_inputs.shape[0]),
        "has_ood": dataset.ood_inputs is not None,
    })
    print(f"wrote dataset to {args.out_dir}")


def _cmd_train(args) -> None:
    cfg = load_experiment_config(_require_config(args), args.seed_override)
    dataset = generate_dataset(cfg.dataset)
    checkpoints = train(cfg.arch, dataset, cfg.train)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for ckpt in checkpoints:
        save_checkpoint(ckpt, args.out_dir / f"ckpt_epoch{ckpt.epoch:04d}.qckpt")
    write_summary(args.out_dir / "summary.json", cfg.digest, {
        "command": "train",
        "epochs": [c.epoch for c in checkpoints],
        "n_params": checkpoints[-1].params.n_params,
    })
    print(f"wrote {len(checkpoints)} checkpoints to {args.out_dir}")


def _cmd_experiment(args, allowed_kinds) -> None:
    cfg = load_experiment_config(_require_config(args), args.seed_override)
    if cfg.kind not in allowed_kinds:
        raise ValidationError(
            f"config kind {cfg.kind!r} not runnable via this subcommand "
            f"(expected one of {allowed_kinds})"
        )
    out = run_experiment(cfg, args.out_dir)
    print(f"experiment {cfg.kind} complete: {out}")


def _cmd_verify(args) -> None:
    target = args.result_dir or args.out_dir
    result = verify_result_dir(target)
    if not result["consistent"]:
        raise ValidationError(
            f"digest mismatch in {target}: {result['mismatches']}"
        )
    print(f"verified {len(result['files'])} files, digest {result['digest'][:12]}...")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING)
    if not args.verbose:
        # roundoff-scale eigenvalue clamps are routine at desk scale
        logging.getLogger("quadbias.laplace").setLevel(logging.ERROR)
    try:
        if args.command == "gen-data":
            _cmd_gen_data(args)
        elif args.command == "train":
            _cmd_train(args)
        elif args.command == "verify":
            _cmd_verify(args)
        else:
            _cmd_experiment(args, _EXPERIMENT_COMMANDS[args.command])
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
