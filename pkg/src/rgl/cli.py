"""Command-line driver: gradcheck, train, diagnose, standardize.

Exit codes: 0 success, 1 check/assertion failure, 2 configuration error.
Every command is deterministic given its config and seed. RGL_BACKEND picks
the kernel backend (numba or numpy) and RGL_THREADS caps numba's thread pool.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bptt, diagnostics, training
from .checkpoint import save_params
from .config import ConfigError, ExperimentConfig, load_config
from .lstm_vanilla import ConstantFeatureError, GateOverrides, TooFewSamplesError, \
    fit_standardization, standardize
from .segmentation import SegmentPlan, SequenceData

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2


def _load_csv(path: Path) -> np.ndarray:
    if not path.exists():
        raise ConfigError(f"input file not found: {path}")
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ConfigError(f"{path}: cannot parse CSV: {exc}") from exc
    if data.size == 0:
        raise ConfigError(f"{path}: no rows")
    return data


def _write_csv(path: Path, data: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(data), delimiter=",", fmt="%.17g")


def _build_params(cfg: ExperimentConfig):
    d_v = cfg.d_s if cfg.d_v is None else cfg.d_v
    if cfg.init_scheme == "uniform":
        params = training.init_params(
            cfg.kind, d_x=cfg.d_x, d_s=cfg.d_s, d_v=d_v, window=cfg.window,
            input_gate=cfg.input_gate, seed=cfg.seed, scale=cfg.init_scale,
        )
    else:
        params = training.init_params(
            cfg.kind, d_x=cfg.d_x, d_s=cfg.d_s, d_v=d_v, window=cfg.window,
            input_gate=cfg.input_gate, seed=cfg.seed, scale=0.0,
        )
    ent = params.entities()
    if cfg.w_r_diag is not None:
        ent = dict(ent)
        ent["w_r"] = np.eye(cfg.d_s) * cfg.w_r_diag
        params = params.replace_entities(ent)
    if cfg.b_cs_fill is not None:
        ent = dict(params.entities())
        ent["b_cs"] = np.full(cfg.d_s, cfg.b_cs_fill)
        params = params.replace_entities(ent)
    return params


def _build_head(cfg: ExperimentConfig, d_v: int):
    if cfg.head_kind == "identity-mse":
        return training.IdentityMseHead()
    d_y = cfg.d_y or d_v
    rng = np.random.default_rng(cfg.seed + 1)
    return training.AffineSoftmaxCeHead(rng.uniform(-0.1, 0.1, (d_y, d_v)), np.zeros(d_y))


def _build_overrides(cfg: ExperimentConfig) -> GateOverrides | None:
    if all(v is None for v in (cfg.override_g_cu, cfg.override_g_cs,
                               cfg.override_g_cr, cfg.override_g_cx)):
        return None
    return GateOverrides.constants(
        cfg.d_s, cu=cfg.override_g_cu, cs=cfg.override_g_cs,
        cr=cfg.override_g_cr, cx=cfg.override_g_cx, d_x=cfg.d_x,
    )


def _build_dataset(cfg: ExperimentConfig) -> tuple[SequenceData, SegmentPlan]:
    if cfg.source == "delayed-echo":
        data, plan = training.make_delayed_echo(
            cfg.num_segments, cfg.segment_length, cfg.lag, d_x=cfg.d_x, seed=cfg.seed,
        )
    else:
        inputs = _load_csv(Path(cfg.input_path))
        targets = _load_csv(Path(cfg.target_path)) if cfg.target_path else None
        data = SequenceData(inputs, targets)
        plan = SegmentPlan.uniform(data.length, cfg.segment_length)
    if cfg.standardize:
        stats = fit_standardization(data.inputs)
        data = SequenceData(standardize(stats, data.inputs), data.targets)
    return data, plan


def cmd_gradcheck(cfg: ExperimentConfig, out_dir: Path) -> int:
    params = _build_params(cfg)
    rng = np.random.default_rng(cfg.seed + 2)
    k = min(cfg.segment_length, 8)
    xs = rng.uniform(-1.0, 1.0, size=(k, cfg.d_x))
    outputs, _ = bptt._model_outputs(cfg.kind, params, xs)
    targets = outputs + 0.1 * rng.standard_normal(outputs.shape)
    head = training.IdentityMseHead()
    report = bptt.grad_check(cfg.kind, params, xs, targets, head,
                             epsilon=cfg.gradcheck_epsilon, _corrupt=cfg.gradcheck_corrupt)
    text = report.to_text()
    print(text)
    (out_dir / "gradcheck.txt").write_text(text + "\n")
    return EXIT_OK if report.passed(cfg.gradcheck_tolerance) else EXIT_CHECK_FAILED


def cmd_train(cfg: ExperimentConfig, out_dir: Path) -> int:
    params = _build_params(cfg)
    data, plan = _build_dataset(cfg)
    if data.targets is None:
        raise ConfigError("training requires targets (data.targets for csv sources)")
    d_v = params.d_v if hasattr(params, "d_v") else params.d_s
    if cfg.replicate_targets and cfg.head_kind == "identity-mse" \
            and data.targets.shape[1] != d_v:
        data = training.replicate_targets(data, d_v)
    head = _build_head(cfg, d_v)
    config = training.TrainConfig(
        learning_rate=cfg.learning_rate, batch_size=cfg.batch_size,
        epochs=cfg.epochs, clip_enabled=cfg.clip, seed=cfg.seed,
    )
    result = training.train(cfg.kind, params, data, plan, head, config)
    lines = ["epoch,mean_loss"]
    lines += [f"{i},{loss:.17g}" for i, loss in enumerate(result.history)]
    (out_dir / "history.csv").write_text("\n".join(lines) + "\n")
    save_params(result.params, out_dir / "checkpoint.bin")
    mse = training.evaluate_mse(cfg.kind, result.params, data, plan)
    print(f"trained {cfg.kind} for {result.updates} updates; "
          f"final mean loss {result.history[-1]:.6g}; per-element mse {mse:.6g}")
    print(f"wrote {out_dir / 'history.csv'} and {out_dir / 'checkpoint.bin'}")
    return EXIT_OK


def cmd_diagnose(cfg: ExperimentConfig, out_dir: Path) -> int:
    if cfg.kind == "augmented-lstm":
        raise ConfigError("diagnose covers standard-rnn and vanilla-lstm")
    params = _build_params(cfg)
    overrides = _build_overrides(cfg)
    xs = np.zeros((cfg.diag_steps, cfg.d_x))  # zero input holds the quasi-linear region

    if cfg.diag_mode == "qaudit":
        audit = diagnostics.q_regimes_audit(params)
        text = audit.to_text()
        print(text)
        (out_dir / "qaudit.txt").write_text(text + "\n")
        return EXIT_OK

    norms = diagnostics.decay_curve(cfg.kind, params, xs, overrides=overrides)
    (out_dir / "decay.csv").write_text(diagnostics.decay_curve_csv(norms))
    report = diagnostics.flow_report(cfg.kind, params, xs, overrides=overrides)
    (out_dir / "flow.txt").write_text(report.to_text() + "\n")
    print(f"decay curve over {cfg.diag_steps} steps: "
          f"|psi[0]|={norms[0]:.6e} |psi[K-1]|={norms[-1]:.6e}")
    print(f"classification: {report.classification}")
    print(f"wrote {out_dir / 'decay.csv'} and {out_dir / 'flow.txt'}")
    return EXIT_OK


def cmd_standardize(input_path: str, output_path: str, stats_path: str) -> int:
    inp = Path(input_path)
    if not inp.exists():
        raise ConfigError(f"input file not found: {inp}")
    data = _load_csv(inp)
    try:
        stats = fit_standardization(data)
    except (ConstantFeatureError, TooFewSamplesError) as exc:
        print(f"standardize: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    _write_csv(Path(output_path), standardize(stats, data))
    with open(stats_path, "w") as fh:
        fh.write("# rgl standardization stats (rows: mu, sigma)\n")
        fh.write("mu," + ",".join(f"{v:.17g}" for v in stats.mu) + "\n")
        fh.write("sigma," + ",".join(f"{v:.17g}" for v in stats.sigma) + "\n")
    print(f"standardized {data.shape[0]} rows x {data.shape[1]} cols -> {output_path}")
    return EXIT_OK


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="experiment config file (INI sections)")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--out", default=".", help="output directory (created if missing)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rgl",
        description="recurrent sequence-learning laboratory "
                    "(env: RGL_BACKEND=numba|numpy, RGL_THREADS=N)",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, desc in (
        ("gradcheck", "compare analytic BPTT gradients against finite differences"),
        ("train", "SGD training; writes history CSV and a checkpoint"),
        ("diagnose", "gradient-flow diagnostics; writes decay CSV and flow report"),
    ):
        _add_common(subs.add_parser(name, help=desc))
    std = subs.add_parser("standardize", help="standardize a CSV column-wise to mean 0, std 1")
    std.add_argument("input", help="input CSV (one vector per row)")
    std.add_argument("output", help="output CSV of standardized rows")
    std.add_argument("stats", help="stats file (mu and sigma rows) for later reuse")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "standardize":
            return cmd_standardize(args.input, args.output, args.stats)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.validate()
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, out_dir)
        if args.command == "train":
            return cmd_train(cfg, out_dir)
        return cmd_diagnose(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except training.TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
