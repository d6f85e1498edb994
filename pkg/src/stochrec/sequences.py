"""Deterministic coefficient families and summability classification.

The forcing term, the decay-rate weights and the deterministic gains are
all drawn from the same four symbolic families: power laws ``c * n**-p``,
geometric sequences ``c * r**n``, finite tables (zero tail) and the zero
sequence.  Keeping them symbolic lets summability be decided by exact
rules (p-series, geometric) where possible; everything asymptotic that
cannot be decided exactly goes through documented tail heuristics that
return ``INCONCLUSIVE`` rather than guessing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

DEFAULT_TAIL = 100_000

RATIO_DELTA = 1e-3          # geometric-trend margin for the ratio test
LOG_OVERFLOW = 700.0        # log-summand cap; beyond this the sum certainly blows up
SLOPE_HOLD = 1.05           # fitted decay exponent above which a tail is called summable
SLOPE_FAIL = 0.95


class Summability(Enum):
    SUMMABLE = "summable"
    DIVERGENT = "divergent"
    INCONCLUSIVE = "inconclusive"


class Status(Enum):
    HOLDS = "holds"
    FAILS = "fails"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class PowerLaw:
    """c * n**-p (p > 0 decays, p < 0 grows)."""

    c: float
    p: float


@dataclass(frozen=True)
class Geometric:
    """c * r**n with 0 < r < 1."""

    c: float
    r: float

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"Geometric ratio must lie in (0, 1), got {self.r}")


@dataclass(frozen=True)
class Table:
    """Explicit head values for n = 1..len(values), zero afterwards."""

    values: tuple[float, ...]


@dataclass(frozen=True)
class Zero:
    pass


CoefficientFamily = Union[PowerLaw, Geometric, Table, Zero]

ZERO = Zero()


def power_law(c, p) -> PowerLaw:
    return PowerLaw(float(c), float(p))


def geometric(c, r) -> Geometric:
    return Geometric(float(c), float(r))


def table(values) -> Table:
    return Table(tuple(float(v) for v in values))


def require_nonnegative(seq: CoefficientFamily, what: str = "coefficient sequence") -> None:
    """Forcing terms must be >= 0 for every n; gains and weights may be signed."""
    if isinstance(seq, PowerLaw) and seq.c < 0:
        raise ValueError(f"{what} must be nonnegative, got c={seq.c}")
    if isinstance(seq, Geometric) and seq.c < 0:
        raise ValueError(f"{what} must be nonnegative, got c={seq.c}")
    if isinstance(seq, Table) and any(v < 0 for v in seq.values):
        raise ValueError(f"{what} must be nonnegative, got table entry < 0")


def value_at(seq: CoefficientFamily, n):
    """Value at index n >= 1 (scalar or integer array)."""
    scalar = np.ndim(n) == 0
    ns = np.atleast_1d(np.asarray(n, dtype=float))
    if np.any(ns < 1):
        raise ValueError(f"sequence values are defined for n >= 1, got {n}")
    if isinstance(seq, Zero):
        vals = np.zeros(ns.shape)
    elif isinstance(seq, PowerLaw):
        vals = seq.c * ns ** (-seq.p)
    elif isinstance(seq, Geometric):
        vals = seq.c * seq.r**ns
    else:
        head = np.asarray(seq.values, dtype=float)
        if len(head) == 0:
            vals = np.zeros(ns.shape)
        else:
            idx = ns.astype(np.int64) - 1
            vals = np.where(idx < len(head), head[np.minimum(idx, len(head) - 1)], 0.0)
    return float(vals[0]) if scalar else vals


def forcing_at(seq: CoefficientFamily, n: int) -> float:
    """Forcing term applied at step n >= 0.

    The recursion consumes an index-0 value that power laws and tables do
    not define; those clamp to n=1, while geometric and zero families
    evaluate their formula literally.
    """
    if n < 0:
        raise ValueError(f"forcing index must be >= 0, got {n}")
    if n == 0:
        if isinstance(seq, Geometric):
            return seq.c
        if isinstance(seq, Zero):
            return 0.0
        return value_at(seq, 1)
    return value_at(seq, n)


def forcing_values(seq: CoefficientFamily, horizon: int) -> np.ndarray:
    """Forcing terms for steps 0..horizon-1 as one array."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    out = np.empty(horizon)
    out[0] = forcing_at(seq, 0)
    if horizon > 1:
        out[1:] = value_at(seq, np.arange(1, horizon))
    return out


def prefix_sums(seq: CoefficientFamily, n_max: int) -> np.ndarray:
    """Cumulative sums of values at n = 1..n_max (entry j is the sum to j+1)."""
    return np.cumsum(value_at(seq, np.arange(1, n_max + 1)))


def alpha_summable(seq: CoefficientFamily, alpha: float) -> Summability:
    """Exact classification of sum |value_n|**alpha by symbolic rule."""
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if isinstance(seq, (Zero, Table, Geometric)):
        return Summability.SUMMABLE
    if seq.c == 0.0:
        return Summability.SUMMABLE
    return Summability.SUMMABLE if alpha * seq.p > 1.0 else Summability.DIVERGENT


def some_summable_alpha(seq: CoefficientFamily):
    """An exponent making the sequence summable, or None if none exists."""
    if isinstance(seq, (Zero, Table, Geometric)):
        return 1.0
    if seq.c == 0.0:
        return 1.0
    if seq.p > 0:
        return 2.0 / seq.p
    return None


def eventually_nonpositive(seq: CoefficientFamily, n_probe: int = 4096) -> bool:
    if isinstance(seq, Zero):
        return True
    if isinstance(seq, (PowerLaw, Geometric)):
        return seq.c <= 0
    return all(v <= 0 for v in seq.values)


def is_zero_forcing(seq: CoefficientFamily) -> bool:
    if isinstance(seq, Zero):
        return True
    if isinstance(seq, Table):
        return all(v == 0 for v in seq.values)
    if isinstance(seq, (PowerLaw, Geometric)):
        return seq.c == 0.0
    return False


# ---------------------------------------------------------------------------
# tail heuristics


@dataclass(frozen=True)
class SeriesVerdict:
    status: Status
    partial_sum: float
    fitted_decay: float | None = None
    detail: str = ""


def classify_terms(ns: np.ndarray, terms: np.ndarray) -> tuple[Summability, float, float | None]:
    """Classify sum(terms) from its tail decay; terms must be >= 0.

    Fits log terms against log n over the last decade of indices; a
    fitted decay exponent q >= 1.05 reads as summable and q <= 0.95 as
    divergent.  An identically-zero tail is summable.  Returns
    (classification, partial sum, fitted exponent or None).
    """
    ns = np.asarray(ns, dtype=float)
    terms = np.asarray(terms, dtype=float)
    if np.any(terms < 0):
        raise ValueError("classify_terms expects nonnegative terms")
    partial = float(np.sum(terms))
    tail = ns >= ns[-1] / 10.0
    tail_terms = terms[tail]
    if not np.any(tail_terms > 0):
        return Summability.SUMMABLE, partial, None
    if np.any(tail_terms == 0.0):
        return Summability.INCONCLUSIVE, partial, None
    if not np.all(np.isfinite(tail_terms)):
        return Summability.DIVERGENT, partial, None
    slope = np.polyfit(np.log(ns[tail]), np.log(tail_terms), 1)[0]
    q = -float(slope)
    if q >= SLOPE_HOLD:
        return Summability.SUMMABLE, partial, q
    if q <= SLOPE_FAIL:
        return Summability.DIVERGENT, partial, q
    return Summability.INCONCLUSIVE, partial, q


def moment_weighted_sum(
    seq: CoefficientFamily,
    noise_model,
    alpha: float,
    n_tail: int = DEFAULT_TAIL,
) -> SeriesVerdict:
    """Tail classification of sum S_i**a / |1 - E(1+xi_{i+1})**a|**(a-1).

    This is the forcing condition that replaces plain alpha-summability
    when a > 1: slowly-shrinking moment gaps inflate the admissible
    forcing.  Raises ZeroDivisionError if the moment gap vanishes exactly
    at a tested index.
    """
    from . import noise as _noise

    if alpha <= 1:
        raise ValueError(f"weighted sum applies for alpha > 1, got {alpha}")
    ns = np.arange(1, n_tail + 1)
    em = _noise.power_moment(noise_model, ns + 1, alpha)
    gap = np.abs(1.0 - em)
    zero = np.where(gap == 0.0)[0]
    if zero.size:
        raise ZeroDivisionError(
            f"E(1+xi)^alpha = 1 exactly at n={int(ns[zero[0]]) + 1}; weighted sum undefined"
        )
    summand = value_at(seq, ns) ** alpha / gap ** (alpha - 1.0)
    cls, partial, q = classify_terms(ns, summand)
    status = {
        Summability.SUMMABLE: Status.HOLDS,
        Summability.DIVERGENT: Status.FAILS,
        Summability.INCONCLUSIVE: Status.INCONCLUSIVE,
    }[cls]
    return SeriesVerdict(status, partial, q)


def exp_weighted_sum(
    seq: CoefficientFamily,
    kappa: CoefficientFamily,
    alpha: float,
    n_tail: int = DEFAULT_TAIL,
) -> SeriesVerdict:
    """Tail classification of sum exp(-K_{n+1}) * S_n**a, K_m = sum kappa_i to m.

    Computed in log space.  A log-summand above 700 certifies blow-up.
    Geometric trends are decided by a ratio test (|successive ratio|
    bounded away from 1); polynomially-behaving summands fall back to the
    log-log slope fit.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    ns = np.arange(1, n_tail + 1)
    kpre = prefix_sums(kappa, n_tail + 1)
    s_vals = value_at(seq, ns)
    with np.errstate(divide="ignore"):
        log_summand = -kpre[1:] + alpha * np.log(s_vals)
    peak = float(np.max(log_summand))
    if peak > LOG_OVERFLOW:
        return SeriesVerdict(Status.FAILS, math.inf, None, "log-summand overflow")
    with np.errstate(divide="ignore"):
        partial = float(np.sum(np.exp(log_summand)))
    tail = ns >= ns[-1] / 10.0
    tail_log = log_summand[tail]
    if np.all(np.isneginf(tail_log)):
        return SeriesVerdict(Status.HOLDS, partial, None, "tail identically zero")
    if np.any(np.isneginf(tail_log)):
        return SeriesVerdict(Status.INCONCLUSIVE, partial, None, "mixed zero tail")
    ratios = np.diff(tail_log)
    if ratios.size and float(np.max(ratios)) <= math.log1p(-RATIO_DELTA):
        return SeriesVerdict(Status.HOLDS, partial, None, "geometric decay")
    if ratios.size and float(np.min(ratios)) >= -math.log1p(-RATIO_DELTA):
        return SeriesVerdict(Status.FAILS, partial, None, "geometric growth")
    slope = np.polyfit(np.log(ns[tail]), tail_log, 1)[0]
    q = -float(slope)
    if q >= SLOPE_HOLD:
        return SeriesVerdict(Status.HOLDS, partial, q)
    if q <= SLOPE_FAIL:
        return SeriesVerdict(Status.FAILS, partial, q)
    return SeriesVerdict(Status.INCONCLUSIVE, partial, q)
