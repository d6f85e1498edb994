"""Seeded Monte Carlo over many independent paths.

Replica r draws from a stream derived from (master_seed, r), so results
are independent of execution order and any subset of paths can be
re-simulated in isolation.  The asymptotic statements being probed are
replaced by explicit finite surrogates -- a tail window below eps for
"converged", a running max above a cutoff for "diverged" -- and every
report carries the surrogate used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import engine as _engine
from . import noise as _noise
from . import sequences as _seq
from .analysis import CriticalExponent

QUANTILE_LEVELS = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class Surrogate:
    """Finite stand-ins for the asymptotic statements."""

    eps_converged: float = 1e-2
    tail_window: int = 100
    divergence_threshold: float = 1e2

    def __post_init__(self):
        if self.eps_converged <= 0:
            raise ValueError("eps_converged must be > 0")
        if self.tail_window < 1:
            raise ValueError("tail_window must be >= 1")
        if self.divergence_threshold <= self.eps_converged:
            raise ValueError(
                "divergence_threshold must exceed eps_converged; "
                f"got {self.divergence_threshold} <= {self.eps_converged}"
            )


@dataclass
class EnsembleResult:
    replicas: int
    horizon: int
    master_seed: int
    surrogate: Surrogate
    summaries: list
    p_converged: float
    p_exceeded: float
    final_quantiles: tuple[tuple[float, float], ...]
    running_min_quantiles: tuple[tuple[float, float], ...]
    checkpoints: tuple[int, ...]
    checkpoint_quantiles: tuple[tuple[float, np.ndarray], ...]
    martingale_mean: Optional[float] = None
    martingale_se: Optional[float] = None

    def checkpoint_quantile(self, level: float) -> np.ndarray:
        for lvl, arr in self.checkpoint_quantiles:
            if lvl == level:
                return arr
        raise KeyError(level)

    def path_rows(self):
        rows = []
        for r, ps in enumerate(self.summaries):
            rows.append(
                (
                    r,
                    ps.final_value,
                    ps.running_max,
                    ps.running_min,
                    ps.argmax,
                    ps.argmin,
                    int(ps.overflow),
                    "" if ps.martingale_final is None else ps.martingale_final,
                )
            )
        return rows

    def summary_rows(self):
        rows = [
            ("replicas", self.replicas),
            ("horizon", self.horizon),
            ("master_seed", self.master_seed),
            ("eps_converged", self.surrogate.eps_converged),
            ("tail_window", self.surrogate.tail_window),
            ("divergence_threshold", self.surrogate.divergence_threshold),
            ("p_converged", self.p_converged),
            ("p_exceeded", self.p_exceeded),
        ]
        for lvl, v in self.final_quantiles:
            rows.append((f"final_q{int(round(lvl * 100)):02d}", v))
        for lvl, v in self.running_min_quantiles:
            rows.append((f"running_min_q{int(round(lvl * 100)):02d}", v))
        for lvl, arr in self.checkpoint_quantiles:
            for cp, v in zip(self.checkpoints, arr):
                rows.append((f"checkpoint_{cp}_q{int(round(lvl * 100)):02d}", v))
        if self.martingale_mean is not None:
            rows.append(("martingale_mean", self.martingale_mean))
            rows.append(("martingale_se", self.martingale_se))
        return rows


PATH_HEADER = (
    "replica",
    "final",
    "running_max",
    "running_min",
    "argmax",
    "argmin",
    "overflow",
    "martingale",
)


def format_csv(header, rows) -> str:
    """Deterministic CSV text: floats via repr so bytes reproduce exactly."""
    def cell(v):
        if isinstance(v, float):
            return repr(float(v))  # float() strips numpy scalar wrappers
        if isinstance(v, (np.integer,)):
            return str(int(v))
        return str(v)

    lines = [",".join(header)]
    lines.extend(",".join(cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def derive_rng(master_seed: int, replica: int) -> np.random.Generator:
    """The stream for one replica; a pure function of (master_seed, replica)."""
    if master_seed < 0 or replica < 0:
        raise ValueError("seeds and replica indices must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(replica)]))


def _quantiles(values) -> tuple[tuple[float, float], ...]:
    arr = np.asarray(values, dtype=float)
    return tuple((lvl, float(np.quantile(arr, lvl))) for lvl in QUANTILE_LEVELS)


def run_ensemble(
    spec: _engine.EquationSpec,
    horizon: int,
    replicas: int,
    master_seed: int,
    surrogate: Surrogate = Surrogate(),
    *,
    checkpoints: tuple[int, ...] = (),
    track_martingale: bool = False,
    record_stride: int = 64,
    thresholds_below: tuple[float, ...] = (),
    thresholds_above: tuple[float, ...] = (),
) -> EnsembleResult:
    """Simulate ``replicas`` independent paths and aggregate the summaries."""
    if replicas < 1:
        raise ValueError(f"replicas must be >= 1, got {replicas}")
    horizon = int(horizon)
    _engine.validate_spec(spec, horizon)
    for cp in checkpoints:
        if not 1 <= int(cp) <= horizon:
            raise ValueError(f"checkpoint {cp} outside 1..{horizon}")
    shared_forcing = _seq.forcing_values(spec.forcing, horizon)
    options = _engine.SimOptions(
        track_martingale=track_martingale,
        thresholds_below=tuple(thresholds_below),
        thresholds_above=tuple(thresholds_above),
        record_stride=record_stride,
        tail_window=surrogate.tail_window,
        checkpoints=tuple(int(c) for c in checkpoints),
    )
    summaries = [
        _engine.simulate(
            spec,
            horizon,
            derive_rng(master_seed, r),
            options,
            forcing=shared_forcing,
            validate=False,
        )
        for r in range(replicas)
    ]

    tail_max = np.asarray([ps.tail_max for ps in summaries])
    running_max = np.asarray([ps.running_max for ps in summaries])
    finals = np.asarray([ps.final_value for ps in summaries])
    running_min = np.asarray([ps.running_min for ps in summaries])
    p_converged = float(np.mean(tail_max < surrogate.eps_converged))
    p_exceeded = float(np.mean(running_max > surrogate.divergence_threshold))

    cps = tuple(int(c) for c in checkpoints)
    cp_quantiles = []
    if cps:
        matrix = np.full((replicas, len(cps)), math.nan)
        for i, ps in enumerate(summaries):
            have = dict(ps.checkpoint_values)
            for j, cp in enumerate(cps):
                if cp in have:
                    matrix[i, j] = have[cp]
        cp_quantiles = [
            (lvl, np.quantile(matrix, lvl, axis=0)) for lvl in QUANTILE_LEVELS
        ]

    mart_mean = mart_se = None
    if track_martingale:
        m = np.asarray([ps.martingale_final for ps in summaries], dtype=float)
        mart_mean = float(np.mean(m))
        mart_se = float(np.std(m, ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0

    return EnsembleResult(
        replicas=replicas,
        horizon=horizon,
        master_seed=int(master_seed),
        surrogate=surrogate,
        summaries=summaries,
        p_converged=p_converged,
        p_exceeded=p_exceeded,
        final_quantiles=_quantiles(finals),
        running_min_quantiles=_quantiles(running_min),
        checkpoints=cps,
        checkpoint_quantiles=tuple(cp_quantiles),
        martingale_mean=mart_mean,
        martingale_se=mart_se,
    )


def liminf_estimator(
    spec: _engine.EquationSpec,
    horizon: int,
    replicas: int,
    master_seed: int,
) -> tuple[tuple[float, float], ...]:
    """Quantiles of the per-path running minimum.

    A running minimum shrinking with the horizon is the finite signature
    of a zero lower limit; paired with a large exceedance fraction it
    exhibits oscillation with growing amplitude.
    """
    result = run_ensemble(spec, horizon, replicas, master_seed)
    return result.running_min_quantiles


@dataclass(frozen=True)
class DecayProfile:
    checkpoints: tuple[int, ...]
    quantiles: tuple[tuple[float, np.ndarray], ...]
    alpha: float
    gamma_decay: float

    def quantile(self, level: float) -> np.ndarray:
        for lvl, arr in self.quantiles:
            if lvl == level:
                return arr
        raise KeyError(level)


def _logaddexp(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    m = a if a > b else b
    return m + math.log1p(math.exp(min(a, b) - m))


def decay_rate_check(
    spec: _engine.Linear,
    kappa: _seq.CoefficientFamily,
    alpha: float,
    gamma_decay: float,
    checkpoints: tuple[int, ...],
    replicas: int,
    master_seed: int,
) -> DecayProfile:
    """Per-checkpoint quantiles of exp(-gamma * K_n) * X_n**alpha.

    The path is advanced entirely in log space (log-sum-exp against the
    forcing term), so the statistic survives states far below the
    smallest normal float.  Requires the linear kind and a weight
    sequence that actually sums to -inf.
    """
    if not isinstance(spec, _engine.Linear):
        raise ValueError("decay_rate_check applies to the linear kind")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not 0.0 < gamma_decay < 1.0:
        raise ValueError(f"gamma_decay must lie in (0, 1), got {gamma_decay}")
    if not checkpoints:
        raise ValueError("at least one checkpoint is required")
    if _seq.is_zero_forcing(kappa) or not _seq.eventually_nonpositive(kappa) or (
        _seq.alpha_summable(kappa, 1.0) is _seq.Summability.SUMMABLE
    ):
        raise ValueError("weight sequence must be nonpositive with divergent sum")
    horizon = max(int(c) for c in checkpoints)
    _engine.validate_spec(spec, horizon)
    cps = sorted({int(c) for c in checkpoints})
    if cps[0] < 1:
        raise ValueError("checkpoints must be >= 1")
    kpre = _seq.prefix_sums(kappa, horizon)
    with np.errstate(divide="ignore"):
        log_s = np.log(_seq.forcing_values(spec.forcing, horizon))
    ns = np.arange(1, horizon + 1)
    lnx0 = math.log(spec.x0)
    cp_set = set(cps)

    stats = np.empty((replicas, len(cps)))
    for r in range(replicas):
        rng = derive_rng(master_seed, r)
        lnxi = np.log1p(_noise.draw_values(spec.noise, ns, rng))
        lnx = lnx0
        col = 0
        for t in range(horizon):
            lnx = _logaddexp(lnx + lnxi[t], log_s[t])
            n1 = t + 1
            if n1 in cp_set:
                stats[r, col] = math.exp(alpha * lnx - gamma_decay * kpre[t])
                col += 1
    quantiles = tuple(
        (lvl, np.quantile(stats, lvl, axis=0)) for lvl in QUANTILE_LEVELS
    )
    return DecayProfile(tuple(cps), quantiles, alpha, gamma_decay)


@dataclass(frozen=True)
class ProbeRow:
    p: float
    regime: str  # "summable" | "not_summable" | "boundary"
    p_converged: float


def conjecture_probe(
    model: _noise.NoiseModel,
    critical: CriticalExponent,
    p_grid,
    *,
    x0: float = 1.0,
    horizon: int = 10_000,
    replicas: int = 200,
    master_seed: int = 0,
    surrogate: Surrogate = Surrogate(),
) -> list[ProbeRow]:
    """Empirical convergence fraction for forcing n**-p across a p grid.

    Sweeps the forcing decay across the reciprocal critical exponent and
    reports how often paths converge on each side.  The boundary rows are
    reported, never asserted: the summability boundary being exact is an
    open question, so this is a probe, not a check.
    """
    _noise.require_iid(model)
    if critical.alpha_star is None:
        raise ValueError(f"critical exponent unavailable: {critical.reason}")
    a_star = critical.alpha_star
    rows = []
    for p in p_grid:
        p = float(p)
        prod = p * a_star
        if prod > 1.0 + 1e-9:
            regime = "summable"
        elif prod < 1.0 - 1e-9:
            regime = "not_summable"
        else:
            regime = "boundary"
        spec = _engine.Linear(noise=model, forcing=_seq.power_law(1.0, p), x0=x0)
        result = run_ensemble(spec, horizon, replicas, master_seed, surrogate)
        rows.append(ProbeRow(p, regime, result.p_converged))
    return rows
