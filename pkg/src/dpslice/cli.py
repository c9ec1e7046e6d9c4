"""Command-line pipeline: account, slice, train, generate, evaluate.

Configuration is a flat ``key = value`` text file; any key can be overridden
on the command line with ``--set key=value``. Exit codes: 0 success, 2
usage/config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import pandas as pd

from . import accounting, trainer
from .accounting import (InfeasibleOrderError, MechanismDims, RenyiPoint,
                         UnreachableBudgetError)
from .divergence import KernelConfig
from .evaluate import evaluate_tables
from .generator import DEFAULT_HIDDEN, DEFAULT_LATENT, GeneratorModel, init
from .mechanism import ColumnSchema, SchemaError, SliceBundle, release
from .trainer import TrainConfig, TrainingDivergedError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

BUNDLE_FILE = "bundle.slb"
REPORT_FILE = "privacy_report.json"
MODEL_FILE = "model.gen"
HISTORY_FILE = "history.csv"
SYNTHETIC_FILE = "synthetic.csv"
METRICS_FILE = "metrics.json"


class ConfigError(ValueError):
    pass


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg: dict[str, str] = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, value = line.split("=", 1)
                cfg[key.strip()] = value.strip()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def _require(cfg: dict, key: str) -> str:
    if key not in cfg:
        raise ConfigError(f"missing required config key {key!r}")
    return cfg[key]


def _get(cfg, key, cast, default):
    return cast(cfg[key]) if key in cfg else default


def cmd_account(args) -> int:
    dims = MechanismDims(d=args.d, k=args.k, m=args.m)
    if args.alpha is not None:
        eps = accounting.epsilon_at(args.sigma, dims, args.alpha, args.delta)
        alpha_star = args.alpha
    else:
        alpha_star, eps = accounting.optimize_alpha(args.sigma, dims, args.delta)
    gamma = accounting.gamma_value(args.sigma, alpha_star)
    det_eps = accounting.deterministic_epsilon(args.sigma, dims.m, alpha_star, args.delta)
    report = accounting.PrivacyReport(
        epsilon=eps, delta=args.delta, alpha_star=alpha_star, sigma=args.sigma,
        gamma=gamma, dims=dims, subsample_rate=args.rate,
    )
    if args.rate is not None and args.rate < 1.0:
        eps_amp, delta_amp = accounting.amplify(eps, args.delta, args.rate)
        report.epsilon_pre_amplification = eps
        report.delta_pre_amplification = args.delta
        report.epsilon = eps_amp
        report.delta = delta_amp
    print(f"epsilon = {report.epsilon:.6f}")
    print(f"delta = {report.delta:.3g}")
    print(f"alpha_star = {alpha_star:.6f}")
    print(f"gamma = {gamma:.6f} (d = {dims.d})")
    print(f"deterministic-projection epsilon at same alpha = {det_eps:.6f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    return EXIT_OK


def cmd_slice(args) -> int:
    cfg = load_config(args.config, args.set)
    table = pd.read_csv(_require(cfg, "input_csv"), dtype=str)
    schema = ColumnSchema.load(_require(cfg, "schema"))
    out_dir = _require(cfg, "output_dir")
    dims = MechanismDims(d=schema.encoded_width,
                         k=int(_require(cfg, "k")), m=int(_require(cfg, "m")))
    seed = _get(cfg, "seed", int, args.seed)
    rate = _get(cfg, "subsample_rate", float, 1.0)
    delta = _get(cfg, "delta", float, None)

    if "sigma" in cfg:
        if "epsilon" in cfg:
            raise ConfigError("give either sigma or (epsilon, delta), not both")
        sigma = float(cfg["sigma"])
        if delta is None:
            raise ConfigError("delta is required to report the privacy budget")
    else:
        if delta is None or "epsilon" not in cfg:
            raise ConfigError("either sigma or both epsilon and delta are required")
        eps_target = float(cfg["epsilon"])
        # calibrate against the pre-amplification budget so the reported,
        # amplified epsilon hits the requested target
        if rate < 1.0:
            eps_pre, delta_pre = accounting.deamplify(eps_target, delta, rate)
        else:
            eps_pre, delta_pre = eps_target, delta
        sigma = accounting.calibrate_sigma(eps_pre, delta_pre, dims)
        delta = delta_pre

    report = accounting.build_report(sigma, dims, delta,
                                     subsample_rate=rate if rate < 1.0 else None)
    bundle = release(table, schema, dims, sigma, seed, subsample_rate=rate)
    os.makedirs(out_dir, exist_ok=True)
    bundle.save(os.path.join(out_dir, BUNDLE_FILE))
    with open(os.path.join(out_dir, REPORT_FILE), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    print(f"released {bundle.n} rows x {dims.m_prime} projected columns")
    print(f"epsilon = {report.epsilon:.6f}, delta = {report.delta:.3g}, "
          f"sigma = {sigma:.6f}")
    return EXIT_OK


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    kernel = KernelConfig(
        multipliers=tuple(
            float(v) for v in _get(cfg, "kernel_multipliers", str, "0.5,1,2").split(",")
        ),
        ridge=_get(cfg, "kernel_ridge", float, KernelConfig().ridge),
    )
    return TrainConfig(
        batch_size=_get(cfg, "batch_size", int, 128),
        max_steps=_get(cfg, "max_steps", int, 1000),
        learning_rate=_get(cfg, "learning_rate", float, 2e-5),
        loss=_get(cfg, "loss", str, trainer.LOSS_SMOOTHED_SLICED),
        f_name=_get(cfg, "f_name", str, "KL"),
        kernel=kernel,
        seed=_get(cfg, "seed", int, seed),
        checkpoint_interval=_get(cfg, "checkpoint_interval", int, 0),
        noise_resample=_get(cfg, "noise_resample", str, "step"),
    )


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    out_dir = _require(cfg, "output_dir")
    bundle_path = os.path.join(out_dir, BUNDLE_FILE)
    if not os.path.exists(bundle_path):
        raise FileNotFoundError(
            f"{bundle_path} not found; run the slice stage first"
        )
    bundle = SliceBundle.load(bundle_path)
    tcfg = _train_config(cfg, args.seed)
    hidden = tuple(int(v) for v in _get(cfg, "hidden", str, ",".join(
        map(str, DEFAULT_HIDDEN))).split(","))
    latent = _get(cfg, "latent_dim", int, DEFAULT_LATENT)
    if "resume" in cfg:
        step, model, state, history = trainer.load_checkpoint(cfg["resume"])
        model, history = trainer.train(
            bundle, model, tcfg, checkpoint_dir=out_dir,
            start_step=step, opt_state=state, history=history,
        )
    else:
        model = init((latent, *hidden, bundle.dims.d),
                     seed=_get(cfg, "init_seed", int, tcfg.seed))
        model, history = trainer.train(bundle, model, tcfg, checkpoint_dir=out_dir)
    model.save(os.path.join(out_dir, MODEL_FILE))
    history.to_csv(os.path.join(out_dir, HISTORY_FILE))
    first = np.mean(history.losses[:100]) if history.losses else float("nan")
    last = np.mean(history.losses[-100:]) if history.losses else float("nan")
    print(f"trained {len(history.losses)} steps; "
          f"loss first-100 mean {first:.6f} -> last-100 mean {last:.6f}")
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = load_config(args.config, args.set)
    out_dir = _require(cfg, "output_dir")
    model_path = os.path.join(out_dir, MODEL_FILE)
    if not os.path.exists(model_path):
        raise FileNotFoundError(f"{model_path} not found; run the train stage first")
    model = GeneratorModel.load(model_path)
    schema = ColumnSchema.load(_require(cfg, "schema"))
    count = args.count if args.count is not None else _get(cfg, "count", int, 1000)
    seed = _get(cfg, "generate_seed", int, args.seed)
    table = trainer.generate(model, count, schema, seed)
    out_path = os.path.join(out_dir, SYNTHETIC_FILE)
    table.to_csv(out_path, index=False)
    print(f"wrote {len(table)} synthetic rows to {out_path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args.set)
    out_dir = _require(cfg, "output_dir")
    schema = ColumnSchema.load(_require(cfg, "schema"))
    syn_path = args.synthetic or os.path.join(out_dir, SYNTHETIC_FILE)
    if not os.path.exists(syn_path):
        raise FileNotFoundError(
            f"{syn_path} not found; run the generate stage first"
        )
    real_path = args.real or _require(cfg, "real_csv")
    real = pd.read_csv(real_path, dtype=str)
    syn = pd.read_csv(syn_path, dtype=str)
    target = args.target or cfg.get("target")
    report = evaluate_tables(real, syn, schema, target=target)
    out_path = os.path.join(out_dir, METRICS_FILE)
    report.save(out_path)
    for key, value in report.to_dict().items():
        if key != "per_column" and value is not None:
            print(f"{key} = {value:.6f}")
    print(f"wrote {out_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpslice",
        description="Differentially private synthetic tabular data via the "
                    "noisy slicing mechanism.",
    )
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="best-effort cap on BLAS threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("account", help="query the privacy accountant")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--alpha", type=float, default=None,
                   help="evaluate at a fixed order instead of optimizing")
    p.add_argument("--rate", type=float, default=None,
                   help="Poisson subsampling rate for amplification")
    p.add_argument("--out", default=None, help="write the report as JSON")
    p.set_defaults(func=cmd_account)

    for name, func, help_ in (
        ("slice", cmd_slice, "encode a table and release its noisy slices"),
        ("train", cmd_train, "train a generator against a slice bundle"),
        ("generate", cmd_generate, "sample synthetic rows from a trained model"),
        ("evaluate", cmd_evaluate, "score a synthetic table against a real one"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key")
        if name == "generate":
            p.add_argument("--count", type=int, default=None)
        if name == "evaluate":
            p.add_argument("--real", default=None, help="held-out real CSV")
            p.add_argument("--synthetic", default=None, help="synthetic CSV")
            p.add_argument("--target", default=None,
                           help="binary target column for the downstream F1")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        try:
            from threadpoolctl import threadpool_limits
            threadpool_limits(args.threads)
        except ImportError:
            pass
    try:
        return args.func(args)
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, InfeasibleOrderError, UnreachableBudgetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergedError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
