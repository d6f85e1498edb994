"""Stability criteria checkers and the critical moment exponent.

Each checker evaluates the hypotheses of one convergence/divergence
criterion against a concrete configuration and returns a structured
:class:`Verdict`: per-condition status plus the conclusion the criterion
licenses.  A conclusion other than ``NOT_APPLICABLE`` is only ever
attached when every required condition holds; inconclusive tail
heuristics therefore surface as ``NOT_APPLICABLE`` with the offending
condition visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import noise as _noise
from . import sequences as _seq
from .sequences import DEFAULT_TAIL, Status, Summability

BISECTION_RESIDUAL = 1e-12
MAX_BRACKET = 128.0
PROVISO_START = 10  # first index for the "from some n on" positivity window


class CheckId(Enum):
    LINEAR_MOMENT = "linear_moment"
    LINEAR_DECAY_RATE = "linear_decay_rate"
    HOMOGENEOUS_LOG = "homogeneous_log"
    LIMINF_ZERO = "liminf_zero"
    NONLINEAR_MEAN = "nonlinear_mean"
    NONLINEAR_MOMENT = "nonlinear_moment"
    ITO_STABILIZATION = "ito_stabilization"
    DETERMINISTIC_DECAY = "deterministic_decay"


class Conclusion(Enum):
    LIMIT_EXISTS = "limit_exists"
    CONVERGES_TO_ZERO = "converges_to_zero"
    LIMINF_ZERO = "liminf_zero"
    DIVERGES_AS = "diverges_as"
    NOT_APPLICABLE = "not_applicable"


@dataclass(frozen=True)
class ConditionResult:
    condition_id: str
    status: Status
    quantity: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class Verdict:
    check_id: CheckId
    conditions: tuple[ConditionResult, ...]
    conclusion: Conclusion
    flags: tuple[str, ...] = ()

    def condition(self, condition_id: str) -> ConditionResult:
        for c in self.conditions:
            if c.condition_id == condition_id:
                return c
        raise KeyError(condition_id)

    def to_text(self) -> str:
        lines = [f"check = {self.check_id.value}", f"conclusion = {self.conclusion.value}"]
        for c in self.conditions:
            lines.append(f"condition.{c.condition_id}.status = {c.status.value}")
            if c.quantity is not None:
                lines.append(f"condition.{c.condition_id}.quantity = {c.quantity!r}")
            if c.detail:
                lines.append(f"condition.{c.condition_id}.detail = {c.detail}")
        for flag in self.flags:
            lines.append(f"flag = {flag}")
        return "\n".join(lines)

    def csv_rows(self) -> list[tuple[str, str, str, str]]:
        rows = [
            (
                self.check_id.value,
                c.condition_id,
                c.status.value,
                "" if c.quantity is None else repr(c.quantity),
            )
            for c in self.conditions
        ]
        rows.append((self.check_id.value, "conclusion", self.conclusion.value, ""))
        return rows


@dataclass(frozen=True)
class CriticalExponent:
    alpha_star: float | None
    bracket: tuple[float, float]
    residual: float
    reason: str | None = None


def _status_from(cls: Summability, want_divergent: bool = False) -> Status:
    if cls is Summability.INCONCLUSIVE:
        return Status.INCONCLUSIVE
    hit = (cls is Summability.DIVERGENT) if want_divergent else (cls is Summability.SUMMABLE)
    return Status.HOLDS if hit else Status.FAILS


def _all_hold(*conds: ConditionResult) -> bool:
    return all(c.status is Status.HOLDS for c in conds)


# ---------------------------------------------------------------------------
# critical exponent


def critical_alpha(model, *, residual_tol: float = BISECTION_RESIDUAL) -> CriticalExponent:
    """The positive root of E(1+xi)**alpha = 1 for an iid model.

    The map alpha -> E(1+xi)**alpha is convex with value 1 and slope
    E ln(1+xi) at zero, so a unique positive root exists exactly when the
    log moment is negative and the law charges (0, inf).  Found by a
    doubling bracket followed by bisection on the moment residual;
    divergent moments count as positive values, which confines the search
    below a Pareto tail's divergence threshold automatically.
    """
    _noise.require_iid(model)
    elog = _noise.log_moment(model, 1)
    _smin, smax = _noise.support_bounds(model, 1)
    if smax <= 0:
        return CriticalExponent(None, (0.0, 0.0), math.nan, reason="no mass above zero")
    if elog >= 0:
        return CriticalExponent(None, (0.0, 0.0), math.nan, reason="log moment nonnegative")

    def g(a: float) -> float:
        return _noise.power_moment(model, 1, a) - 1.0

    hi = 1.0
    ghi = g(hi)
    while ghi < 0.0:
        hi *= 2.0
        if hi > MAX_BRACKET:
            return CriticalExponent(
                None, (hi / 2.0, hi), math.nan, reason=f"no sign change below alpha={MAX_BRACKET}"
            )
        ghi = g(hi)
    if ghi == 0.0 and hi == 1.0:
        return CriticalExponent(1.0, (1.0, 1.0), 0.0)
    lo = hi / 2.0
    glo = g(lo)
    while glo >= 0.0:
        if glo == 0.0:
            return CriticalExponent(lo, (lo, lo), 0.0)
        lo /= 2.0
        if lo < 1e-300:
            return CriticalExponent(None, (lo, hi), math.nan, reason="bracketing failed")
        glo = g(lo)
    bracket = (lo, hi)
    mid = 0.5 * (lo + hi)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if abs(gm) <= residual_tol:
            return CriticalExponent(mid, bracket, abs(gm))
        if gm < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * mid:
            break
    gm = g(mid)
    return CriticalExponent(mid, bracket, abs(gm))


# ---------------------------------------------------------------------------
# linear recursion checkers


def _moment_gap_terms(model, alpha: float, n_tail: int):
    """E(1+xi_{i+1})**alpha - 1 for i = 1..n_tail."""
    ns = np.arange(1, n_tail + 1)
    em = _noise.power_moment(model, ns + 1, alpha)
    return ns, np.asarray(em, dtype=float) - 1.0


def check_linear_moment(model, seq_s, alpha: float, n_tail: int = DEFAULT_TAIL) -> Verdict:
    """Moment-balance criterion for the linear recursion.

    Expansion steps (positive moment gaps) must be summable and the
    forcing must be alpha-summable (weighted by the moment gap when
    alpha > 1); that yields a finite limit.  Divergent contraction
    (negative gaps summing to -inf) pushes the limit to zero.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    ns, gap = _moment_gap_terms(model, alpha, n_tail)
    pos = np.clip(gap, 0.0, None)
    neg = np.clip(gap, None, 0.0)

    cls_pos, sum_pos, _ = _seq.classify_terms(ns, pos)
    c_expansion = ConditionResult("expansion_summable", _status_from(cls_pos), sum_pos)

    if alpha <= 1.0:
        cls_forcing = _seq.alpha_summable(seq_s, alpha)
        c_forcing = ConditionResult("forcing_summable", _status_from(cls_forcing), alpha)
    else:
        try:
            sv = _seq.moment_weighted_sum(seq_s, model, alpha, n_tail)
        except ZeroDivisionError as exc:
            sv = _seq.SeriesVerdict(Status.INCONCLUSIVE, math.nan, None, str(exc))
        c_forcing = ConditionResult(
            "forcing_weighted_summable", sv.status, sv.partial_sum, sv.detail
        )

    cls_neg, sum_neg, _ = _seq.classify_terms(ns, -neg)
    c_contraction = ConditionResult(
        "contraction_divergent", _status_from(cls_neg, want_divergent=True), -sum_neg
    )

    if _all_hold(c_expansion, c_forcing):
        conclusion = (
            Conclusion.CONVERGES_TO_ZERO
            if c_contraction.status is Status.HOLDS
            else Conclusion.LIMIT_EXISTS
        )
    else:
        conclusion = Conclusion.NOT_APPLICABLE
    return Verdict(CheckId.LINEAR_MOMENT, (c_expansion, c_forcing, c_contraction), conclusion)


def check_linear_decay_rate(
    model, seq_s, kappa, alpha: float, gamma_decay: float, n_tail: int = DEFAULT_TAIL
) -> Verdict:
    """Exponentially-weighted decay criterion for the linear recursion.

    With weights kappa_i dominating the negative moment gaps, summing to
    -inf, and the weighted forcing summable, the statistic
    exp(-gamma * sum kappa) * X_n**alpha tends to zero for every
    gamma in (0, 1).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not 0.0 < gamma_decay < 1.0:
        raise ValueError(f"gamma_decay must lie in (0, 1), got {gamma_decay}")
    ns, gap = _moment_gap_terms(model, alpha, n_tail)
    neg = np.clip(gap, None, 0.0)
    kv = _seq.value_at(kappa, ns)
    margin = kv - neg
    bad = np.where(margin < 0)[0]
    if bad.size:
        c_dominates = ConditionResult(
            "kappa_dominates_contraction",
            Status.FAILS,
            float(margin[bad[0]]),
            f"kappa below the moment gap at n={int(ns[bad[0]])}",
        )
    else:
        c_dominates = ConditionResult(
            "kappa_dominates_contraction", Status.HOLDS, float(np.min(margin))
        )

    kappa_div = (
        _seq.eventually_nonpositive(kappa)
        and not _seq.is_zero_forcing(kappa)
        and _seq.alpha_summable(kappa, 1.0) is Summability.DIVERGENT
    )
    c_divergent = ConditionResult(
        "kappa_divergent",
        Status.HOLDS if kappa_div else Status.FAILS,
        float(np.sum(kv)),
    )

    sv = _seq.exp_weighted_sum(seq_s, kappa, alpha, n_tail)
    c_weighted = ConditionResult("weighted_forcing_summable", sv.status, sv.partial_sum, sv.detail)

    conclusion = (
        Conclusion.CONVERGES_TO_ZERO
        if _all_hold(c_dominates, c_divergent, c_weighted)
        else Conclusion.NOT_APPLICABLE
    )
    return Verdict(
        CheckId.LINEAR_DECAY_RATE,
        (c_dominates, c_divergent, c_weighted),
        conclusion,
        flags=("weighted_decay_rate",) if conclusion is Conclusion.CONVERGES_TO_ZERO else (),
    )


def check_homogeneous_log(model, seq_s) -> Verdict:
    """Homogeneous iid criterion: the sign of E ln(1+xi) decides the limit."""
    c_forcing = ConditionResult(
        "forcing_zero",
        Status.HOLDS if _seq.is_zero_forcing(seq_s) else Status.FAILS,
    )
    iid = _noise.is_iid(model)
    c_iid = ConditionResult("iid", Status.HOLDS if iid else Status.FAILS)
    if not iid or c_forcing.status is not Status.HOLDS:
        return Verdict(
            CheckId.HOMOGENEOUS_LOG, (c_forcing, c_iid), Conclusion.NOT_APPLICABLE
        )
    elog = _noise.log_moment(model, 1)
    c_log = ConditionResult(
        "log_moment_negative",
        Status.HOLDS if elog < 0 else Status.FAILS,
        elog,
    )
    if elog < 0:
        conclusion = Conclusion.CONVERGES_TO_ZERO
    elif elog > 0:
        conclusion = Conclusion.DIVERGES_AS
    else:
        conclusion = Conclusion.NOT_APPLICABLE
    return Verdict(CheckId.HOMOGENEOUS_LOG, (c_forcing, c_iid, c_log), conclusion)


def check_liminf_zero(model, seq_s) -> Verdict:
    """iid noise with negative log moment and power-summable forcing
    drives the running infimum to zero even when no limit exists."""
    iid = _noise.is_iid(model)
    c_iid = ConditionResult("iid", Status.HOLDS if iid else Status.FAILS)
    if not iid:
        return Verdict(CheckId.LIMINF_ZERO, (c_iid,), Conclusion.NOT_APPLICABLE)
    elog = _noise.log_moment(model, 1)
    c_log = ConditionResult(
        "log_moment_negative", Status.HOLDS if elog < 0 else Status.FAILS, elog
    )
    alpha = _seq.some_summable_alpha(seq_s)
    c_forcing = ConditionResult(
        "forcing_power_summable",
        Status.HOLDS if alpha is not None else Status.FAILS,
        alpha,
    )
    conclusion = (
        Conclusion.LIMINF_ZERO if _all_hold(c_iid, c_log, c_forcing) else Conclusion.NOT_APPLICABLE
    )
    return Verdict(CheckId.LIMINF_ZERO, (c_iid, c_log, c_forcing), conclusion)


# ---------------------------------------------------------------------------
# nonlinear recursion checkers


def check_nonlinear_mean(model, seq_s, n_tail: int = DEFAULT_TAIL) -> Verdict:
    """Mean-sign criterion for the feedback recursion with summable forcing."""
    ns = np.arange(1, n_tail + 1)
    means = np.asarray(_noise.raw_moment(model, ns, 1), dtype=float)
    cls_pos, sum_pos, _ = _seq.classify_terms(ns, np.clip(means, 0.0, None))
    c_up = ConditionResult("positive_mean_summable", _status_from(cls_pos), sum_pos)
    c_forcing = ConditionResult(
        "forcing_summable", _status_from(_seq.alpha_summable(seq_s, 1.0)), 1.0
    )
    cls_neg, sum_neg, _ = _seq.classify_terms(ns, np.clip(-means, 0.0, None))
    c_down = ConditionResult(
        "negative_mean_divergent", _status_from(cls_neg, want_divergent=True), -sum_neg
    )
    if _all_hold(c_up, c_forcing):
        conclusion = (
            Conclusion.CONVERGES_TO_ZERO
            if c_down.status is Status.HOLDS
            else Conclusion.LIMIT_EXISTS
        )
    else:
        conclusion = Conclusion.NOT_APPLICABLE
    return Verdict(CheckId.NONLINEAR_MEAN, (c_up, c_forcing, c_down), conclusion)


def check_nonlinear_moment(
    model, seq_s, alpha: float, n_tail: int = DEFAULT_TAIL, proviso_start: int = PROVISO_START
) -> Verdict:
    """Second/third-moment criterion for the feedback recursion when the
    forcing is only alpha-summable for some alpha in (0, 1)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    ns = np.arange(1, n_tail + 1)
    c_forcing = ConditionResult(
        "forcing_alpha_summable", _status_from(_seq.alpha_summable(seq_s, alpha)), alpha
    )
    means = np.asarray(_noise.raw_moment(model, ns, 1), dtype=float)
    cls_pos, sum_pos, _ = _seq.classify_terms(ns, np.clip(means, 0.0, None))
    c_up = ConditionResult("positive_mean_summable", _status_from(cls_pos), sum_pos)

    m2 = np.asarray(_noise.raw_moment(model, ns, 2), dtype=float)
    m3pos = np.clip(np.asarray(_noise.raw_moment(model, ns, 3), dtype=float), 0.0, None)
    window = ns >= proviso_start
    proviso_vals = 3.0 * m2[window] - (2.0 - alpha) * m3pos[window]
    bad = np.where(proviso_vals <= 0)[0]
    if bad.size:
        c_proviso = ConditionResult(
            "moment_positivity",
            Status.FAILS,
            float(proviso_vals[bad[0]]),
            f"3*E xi^2 - (2-alpha)*[E xi^3]+ not positive at n={int(ns[window][bad[0]])}",
        )
    else:
        c_proviso = ConditionResult("moment_positivity", Status.HOLDS, float(np.min(proviso_vals)))

    terms = np.clip(m2 - (2.0 - alpha) / 3.0 * m3pos, 0.0, None)
    cls_var, sum_var, _ = _seq.classify_terms(ns, terms)
    c_var = ConditionResult(
        "second_moment_divergent", _status_from(cls_var, want_divergent=True), sum_var
    )

    if _all_hold(c_forcing, c_up):
        conclusion = (
            Conclusion.CONVERGES_TO_ZERO
            if _all_hold(c_var, c_proviso)
            else Conclusion.LIMIT_EXISTS
        )
    else:
        conclusion = Conclusion.NOT_APPLICABLE
    return Verdict(
        CheckId.NONLINEAR_MOMENT, (c_forcing, c_up, c_var, c_proviso), conclusion
    )


def check_ito_stabilization(zeta, drift: float, step_size: float, seq_s, alpha: float) -> Verdict:
    """Diffusion-dominant stabilization for the square-root-scaled scheme.

    The diffusion term can stabilize a positive drift provided the drift
    stays below half the noise variance; the admissible power range is
    alpha < (var - 2*drift)/var and the forcing must be alpha-summable.
    The conclusion carries a small-step flag: it holds for step sizes
    small enough, with no explicit threshold.
    """
    _noise.require_iid(zeta)
    mean = _noise.raw_moment(zeta, 1, 1)
    if abs(mean) > 1e-12:
        raise ValueError(f"noise must be centered, got mean {mean}")
    if not _noise.abs_moment_finite(zeta, 3):
        raise ValueError("noise needs a finite third absolute moment")
    var = _noise.raw_moment(zeta, 1, 2)
    if not math.isfinite(var) or var <= 0:
        raise ValueError(f"noise variance must be finite and positive, got {var}")
    alpha0 = (var - 2.0 * drift) / var
    c_drift = ConditionResult(
        "drift_below_half_variance",
        Status.HOLDS if drift < var / 2.0 else Status.FAILS,
        var / 2.0 - drift,
    )
    c_alpha = ConditionResult(
        "alpha_below_threshold",
        Status.HOLDS if 0.0 < alpha < alpha0 else Status.FAILS,
        alpha0,
    )
    c_forcing = ConditionResult(
        "forcing_alpha_summable", _status_from(_seq.alpha_summable(seq_s, alpha)), alpha
    )
    pos = _noise.validate_positivity(zeta, "ito", drift=drift, step_size=step_size)
    c_pos = ConditionResult(
        "positivity", Status.HOLDS if pos.ok else Status.FAILS, pos.bound, pos.detail
    )
    conclusion = (
        Conclusion.CONVERGES_TO_ZERO
        if _all_hold(c_drift, c_alpha, c_forcing, c_pos)
        else Conclusion.NOT_APPLICABLE
    )
    return Verdict(
        CheckId.ITO_STABILIZATION,
        (c_drift, c_alpha, c_forcing, c_pos),
        conclusion,
        flags=("small_step_required",),
    )


# ---------------------------------------------------------------------------
# deterministic checker


def _ratio_tends_to_zero(seq_s, seq_a, n_tail: int) -> Status:
    """Does S_n / a_n -> 0?  Symbolic for the family pairs, heuristic otherwise."""
    if _seq.is_zero_forcing(seq_s):
        return Status.HOLDS
    if isinstance(seq_s, _seq.Table):
        return Status.HOLDS  # eventually zero over a nonvanishing gain
    if isinstance(seq_a, _seq.Zero) or _seq.is_zero_forcing(seq_a):
        return Status.FAILS
    if isinstance(seq_s, _seq.PowerLaw) and isinstance(seq_a, _seq.PowerLaw):
        return Status.HOLDS if seq_s.p > seq_a.p else Status.FAILS
    if isinstance(seq_s, _seq.Geometric) and isinstance(seq_a, _seq.PowerLaw):
        return Status.HOLDS
    if isinstance(seq_s, _seq.PowerLaw) and isinstance(seq_a, _seq.Geometric):
        return Status.FAILS
    if isinstance(seq_s, _seq.Geometric) and isinstance(seq_a, _seq.Geometric):
        return Status.HOLDS if seq_s.r < seq_a.r else Status.FAILS
    ns = np.unique(np.geomspace(1, n_tail, 64).astype(np.int64))
    ratio = np.abs(_seq.value_at(seq_s, ns) / _seq.value_at(seq_a, ns))
    if ratio[-1] < 1e-3 * max(ratio[0], 1e-300) and np.all(np.diff(ratio[-8:]) <= 0):
        return Status.HOLDS
    return Status.INCONCLUSIVE


def check_deterministic_decay(feedback, seq_a, seq_s, n_tail: int = DEFAULT_TAIL) -> Verdict:
    """Deterministic feedback decay: gains in (-1, 0) summing to -inf and
    negligible forcing force the state to zero."""
    probe = np.unique(
        np.concatenate(
            [np.arange(1, min(n_tail, 10_000) + 1), np.geomspace(1, n_tail, 64).astype(np.int64)]
        )
    )
    av = _seq.value_at(seq_a, probe)
    # a boundary gain of exactly -1 at n=1 is tolerated: the forcing keeps
    # the state positive through that step and the limit only depends on
    # the tail of the hypotheses
    bad = np.where((av >= 0) | (av < -1) | ((av == -1) & (probe > 1)))[0]
    if bad.size:
        c_range = ConditionResult(
            "gain_in_unit_interval",
            Status.FAILS,
            float(av[bad[0]]),
            f"gain {av[bad[0]]} outside (-1, 0) at n={int(probe[bad[0]])}",
        )
    else:
        c_range = ConditionResult("gain_in_unit_interval", Status.HOLDS)

    gain_div = (
        _seq.eventually_nonpositive(seq_a)
        and not _seq.is_zero_forcing(seq_a)
        and _seq.alpha_summable(seq_a, 1.0) is Summability.DIVERGENT
    )
    c_div = ConditionResult("gain_divergent", Status.HOLDS if gain_div else Status.FAILS)

    c_ratio = ConditionResult("forcing_negligible", _ratio_tends_to_zero(seq_s, seq_a, n_tail))

    # probe inf_{u > c} u * f(u) > 0 on a grid of cutoffs
    admissible = True
    worst = math.inf
    for cutoff in np.geomspace(1e-3, 10.0, 16):
        us = np.geomspace(cutoff, 1e3, 512)
        prod = us * np.asarray([feedback(u) for u in us])
        worst = min(worst, float(prod.min()))
        if prod.min() <= 0:
            admissible = False
            break
    c_feedback = ConditionResult(
        "feedback_admissible", Status.HOLDS if admissible else Status.FAILS, worst
    )

    conclusion = (
        Conclusion.CONVERGES_TO_ZERO
        if _all_hold(c_range, c_div, c_ratio, c_feedback)
        else Conclusion.NOT_APPLICABLE
    )
    return Verdict(
        CheckId.DETERMINISTIC_DECAY, (c_range, c_div, c_ratio, c_feedback), conclusion
    )


# ---------------------------------------------------------------------------
# inequality utilities


def power_split_bound(alpha: float, epsilon: float) -> float:
    """Sharp K with (a+b)**alpha <= (1+eps)*a**alpha + K*b**alpha for a, b > 0.

    For alpha = 1 the triangle inequality gives K = 1; for alpha > 1 the
    supremum over a of (a+1)**alpha - (1+eps)*a**alpha is attained at the
    stationary point and collapses to the closed form below.
    """
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if alpha == 1.0:
        return 1.0
    return (1.0 - (1.0 + epsilon) ** (-1.0 / (alpha - 1.0))) ** (1.0 - alpha)


def admissible_alpha(curvature_bound: float) -> float:
    """Largest power exponent covered by the two-sided envelope: min(1/K, 1)."""
    if curvature_bound <= 0:
        raise ValueError(f"curvature bound must be > 0, got {curvature_bound}")
    return min(1.0 / curvature_bound, 1.0)


def power_moment_envelope(model, n, alpha: float) -> tuple[float, float]:
    """Two-sided bounds for E(1+xi_n)**alpha - 1 in terms of the log moment.

    Valid for alpha below ``admissible_alpha(curvature_ratio(model, n))``:
    the gap is sandwiched between alpha * E ln(1+xi) and
    alpha * (E ln(1+xi) + |E ln(1+xi)| / 2).
    """
    elog = _noise.log_moment(model, n)
    return alpha * elog, alpha * (elog + abs(elog) / 2.0)
