"""Batch driver: parse a config, dispatch, emit text reports and CSV files.

Commands: ``moments``, ``check``, ``simulate``, ``ensemble``,
``probe-conjecture``.  Exit codes: 0 success (verdict contents never
affect the exit code), 2 config error, 3 runtime error.  All files are
written atomically (temp file + rename) so an interrupted run never
leaves a truncated CSV behind.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from . import analysis as _analysis
from . import engine as _engine
from . import ensemble as _ens
from . import noise as _noise
from .analysis import CheckId
from .config import ConfigError, RunConfig, dump_config, load_config

OUTPUT_ENV_VAR = "STOCHREC_OUT"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def _output_dir(cfg: RunConfig, args) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(OUTPUT_ENV_VAR, "stochrec-out"))


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    from dataclasses import replace

    ens = cfg.ensemble
    if getattr(args, "seed", None) is not None:
        ens = replace(ens, master_seed=args.seed)
    if getattr(args, "horizon", None) is not None:
        ens = replace(ens, horizon=args.horizon)
    if getattr(args, "replicas", None) is not None:
        ens = replace(ens, replicas=args.replicas)
    return replace(cfg, ensemble=ens)


def _noise_of(cfg: RunConfig):
    eq = cfg.equation
    if isinstance(eq, _engine.Deterministic):
        raise ValueError("this command needs a noise-driven equation kind")
    return eq.noise


def cmd_moments(cfg: RunConfig, outdir: Path) -> str:
    model = _noise_of(cfg)
    alpha = cfg.analysis.alpha if cfg.analysis.alpha is not None else 1.0
    header = ("n", "alpha", "power_moment", "log_moment", "m1", "m2", "m3", "curvature_ratio")
    rows = []
    for n in cfg.analysis.n_grid:
        try:
            ratio = _noise.curvature_ratio(model, n)
        except ZeroDivisionError:
            ratio = math.nan
        rows.append(
            (
                n,
                alpha,
                _noise.power_moment(model, n, alpha),
                _noise.log_moment(model, n),
                _noise.raw_moment(model, n, 1),
                _noise.raw_moment(model, n, 2),
                _noise.raw_moment(model, n, 3),
                ratio,
            )
        )
    _write_atomic(outdir / "moments.csv", _ens.format_csv(header, rows))
    lines = ["  ".join(f"{h:>16s}" for h in header)]
    for row in rows:
        lines.append("  ".join(f"{v:16.10g}" if isinstance(v, float) else f"{v:>16}" for v in row))
    return "\n".join(lines)


def _check(cfg: RunConfig, check_id: CheckId) -> _analysis.Verdict:
    eq = cfg.equation
    an = cfg.analysis
    if check_id is CheckId.LINEAR_MOMENT:
        return _analysis.check_linear_moment(_noise_of(cfg), eq.forcing, an.alpha, an.n_tail)
    if check_id is CheckId.LINEAR_DECAY_RATE:
        return _analysis.check_linear_decay_rate(
            _noise_of(cfg), eq.forcing, cfg.kappa, an.alpha, an.gamma_decay, an.n_tail
        )
    if check_id is CheckId.HOMOGENEOUS_LOG:
        return _analysis.check_homogeneous_log(_noise_of(cfg), eq.forcing)
    if check_id is CheckId.LIMINF_ZERO:
        return _analysis.check_liminf_zero(_noise_of(cfg), eq.forcing)
    if check_id is CheckId.NONLINEAR_MEAN:
        return _analysis.check_nonlinear_mean(_noise_of(cfg), eq.forcing, an.n_tail)
    if check_id is CheckId.NONLINEAR_MOMENT:
        return _analysis.check_nonlinear_moment(_noise_of(cfg), eq.forcing, an.alpha, an.n_tail)
    if check_id is CheckId.ITO_STABILIZATION:
        return _analysis.check_ito_stabilization(
            eq.noise, eq.drift, eq.step_size, eq.forcing, an.alpha
        )
    return _analysis.check_deterministic_decay(eq.feedback, eq.gain, eq.forcing, an.n_tail)


def cmd_check(cfg: RunConfig, outdir: Path) -> str:
    if not cfg.analysis.checks:
        raise ValueError("no checks requested; set [analysis] checks = [...]")
    blocks = []
    rows = []
    for check_id in cfg.analysis.checks:
        verdict = _check(cfg, check_id)
        blocks.append(verdict.to_text())
        rows.extend(verdict.csv_rows())
    _write_atomic(
        outdir / "verdicts.csv",
        _ens.format_csv(("check", "condition", "status", "quantity"), rows),
    )
    return "\n\n".join(blocks)


def cmd_simulate(cfg: RunConfig, outdir: Path) -> str:
    ens = cfg.ensemble
    options = _engine.SimOptions(
        track_martingale=ens.track_martingale,
        thresholds_below=ens.thresholds_below,
        thresholds_above=ens.thresholds_above,
        record_stride=cfg.stride,
        tail_window=ens.surrogate.tail_window,
        checkpoints=ens.checkpoints,
        record_trajectory=True,
    )
    summary = _engine.simulate(
        cfg.equation, ens.horizon, _ens.derive_rng(ens.master_seed, 0), options
    )
    ns, xs = summary.trajectory
    _write_atomic(
        outdir / "trajectory_r000000.csv",
        _ens.format_csv(("n", "x"), list(zip(ns.tolist(), xs.tolist()))),
    )
    srows = [
        ("final", summary.final_value),
        ("steps", summary.steps),
        ("running_max", summary.running_max),
        ("argmax", summary.argmax),
        ("running_min", summary.running_min),
        ("argmin", summary.argmin),
        ("overflow", int(summary.overflow)),
        ("tail_max", summary.tail_max),
    ]
    if summary.martingale_final is not None:
        srows.append(("martingale_final", summary.martingale_final))
        srows.append(("martingale_mean_abs_dev", summary.martingale_mean_abs_dev))
    for t, idx in summary.first_below:
        srows.append((f"first_below_{t}", "" if idx is None else idx))
    for t, idx in summary.first_above:
        srows.append((f"first_above_{t}", "" if idx is None else idx))
    _write_atomic(outdir / "path_summary.csv", _ens.format_csv(("statistic", "value"), srows))
    return "\n".join(f"{k} = {v}" for k, v in srows)


def cmd_ensemble(cfg: RunConfig, outdir: Path) -> str:
    ens = cfg.ensemble
    result = _ens.run_ensemble(
        cfg.equation,
        ens.horizon,
        ens.replicas,
        ens.master_seed,
        ens.surrogate,
        checkpoints=ens.checkpoints,
        track_martingale=ens.track_martingale,
        record_stride=cfg.stride,
        thresholds_below=ens.thresholds_below,
        thresholds_above=ens.thresholds_above,
    )
    _write_atomic(
        outdir / "ensemble_paths.csv", _ens.format_csv(_ens.PATH_HEADER, result.path_rows())
    )
    _write_atomic(
        outdir / "ensemble_summary.csv",
        _ens.format_csv(("statistic", "value"), result.summary_rows()),
    )
    report = [
        f"replicas = {result.replicas}",
        f"horizon = {result.horizon}",
        f"p_converged = {result.p_converged} (eps={ens.surrogate.eps_converged}, "
        f"window={ens.surrogate.tail_window})",
        f"p_exceeded = {result.p_exceeded} (threshold={ens.surrogate.divergence_threshold})",
    ]
    for lvl, v in result.final_quantiles:
        report.append(f"final_q{int(round(lvl * 100)):02d} = {v}")
    if result.martingale_mean is not None:
        report.append(f"martingale_mean = {result.martingale_mean} (se={result.martingale_se})")

    if (
        cfg.kappa is not None
        and cfg.analysis.gamma_decay is not None
        and cfg.analysis.alpha is not None
        and isinstance(cfg.equation, _engine.Linear)
        and ens.checkpoints
    ):
        profile = _ens.decay_rate_check(
            cfg.equation,
            cfg.kappa,
            cfg.analysis.alpha,
            cfg.analysis.gamma_decay,
            ens.checkpoints,
            ens.replicas,
            ens.master_seed,
        )
        rows = []
        med = profile.quantile(0.5)
        p95 = profile.quantile(0.95)
        for j, cp in enumerate(profile.checkpoints):
            rows.append((cp, med[j], p95[j]))
        _write_atomic(outdir / "decay_profile.csv", _ens.format_csv(("n", "q50", "q95"), rows))
        report.append("decay_profile.csv written")
    return "\n".join(report)


def cmd_probe_conjecture(cfg: RunConfig, outdir: Path) -> str:
    if cfg.conjecture_p_grid is None:
        raise ValueError("probe-conjecture needs a [conjecture] table with p_grid")
    model = _noise_of(cfg)
    critical = _analysis.critical_alpha(model)
    ens = cfg.ensemble
    rows = _ens.conjecture_probe(
        model,
        critical,
        cfg.conjecture_p_grid,
        x0=cfg.equation.x0,
        horizon=ens.horizon,
        replicas=ens.replicas,
        master_seed=ens.master_seed,
        surrogate=ens.surrogate,
    )
    _write_atomic(
        outdir / "conjecture.csv",
        _ens.format_csv(
            ("p", "regime", "p_converged"), [(r.p, r.regime, r.p_converged) for r in rows]
        ),
    )
    lines = [f"alpha_star = {critical.alpha_star}"]
    for r in rows:
        lines.append(f"p = {r.p}: {r.regime}, p_converged = {r.p_converged}")
    return "\n".join(lines)


_COMMANDS = {
    "moments": cmd_moments,
    "check": cmd_check,
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "probe-conjecture": cmd_probe_conjecture,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochrec",
        description="Simulate noisy multiplicative recursions and check stability criteria.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the TOML run configuration")
        p.add_argument("--seed", type=int, help="override [ensemble] master_seed")
        p.add_argument("--horizon", type=int, help="override [ensemble] horizon")
        p.add_argument("--replicas", type=int, help="override [ensemble] replicas")
        p.add_argument("--out", help="output directory (else config, else $" + OUTPUT_ENV_VAR + ")")
        p.add_argument(
            "--dump-config",
            action="store_true",
            help="print the normalized config and exit",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.dump_config:
        print(dump_config(cfg), end="")
        return 0
    outdir = _output_dir(cfg, args)
    try:
        report = _COMMANDS[args.command](cfg, outdir)
    except Exception as exc:  # runtime failures map to exit 3
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(report)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
