"""Single-path simulation of the multiplicative recursions.

Four equation kinds share one stepping loop:

* ``Linear``        x' = x * (1 + xi) + s
* ``Nonlinear``     x' = x * (1 + f(x) * xi) + s
* ``Ito``           x' = x * (1 + k*f(x)*drift + sqrt(k*f(x)) * zeta) + s
* ``Deterministic`` x' = x * (1 + f(x) * a) + s

The engine only produces raw path statistics; whether a path "converged"
is decided by the ensemble layer against explicit finite surrogates.
Values are allowed to denormalize to zero, and anything past 1e300 sets
an overflow flag and halts the path -- heavy-tailed divergence is an
expected regime, not an error.

A single path is strictly sequential (each step feeds the next), but the
engine holds no shared mutable state, so distinct paths with distinct
generators can run concurrently.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from . import noise as _noise
from . import sequences as _seq

OVERFLOW_CAP = 1e300
TRACKER_SUPPORT_MARGIN = 1e-6


class Feedback(Enum):
    """Feedback gains f: R -> [0, 1] with f(u) = 0 iff u = 0 (except ONE)."""

    ONE = "one"
    MIN_ABS_ONE = "min_abs_one"
    RATIONAL = "rational"
    SQUARE_RATIONAL = "square_rational"

    def __call__(self, u: float) -> float:
        return _FEEDBACK_FNS[self](u)


def _f_one(u: float) -> float:
    return 1.0


def _f_min_abs_one(u: float) -> float:
    a = u if u >= 0 else -u
    return a if a < 1.0 else 1.0


def _f_rational(u: float) -> float:
    a = u if u >= 0 else -u
    return a / (1.0 + a)


def _f_square_rational(u: float) -> float:
    s = u * u
    return s / (1.0 + s)


_FEEDBACK_FNS = {
    Feedback.ONE: _f_one,
    Feedback.MIN_ABS_ONE: _f_min_abs_one,
    Feedback.RATIONAL: _f_rational,
    Feedback.SQUARE_RATIONAL: _f_square_rational,
}


@dataclass(frozen=True)
class Linear:
    noise: _noise.NoiseModel
    forcing: _seq.CoefficientFamily
    x0: float


@dataclass(frozen=True)
class Nonlinear:
    feedback: Feedback
    noise: _noise.NoiseModel
    forcing: _seq.CoefficientFamily
    x0: float


@dataclass(frozen=True)
class Ito:
    feedback: Feedback
    drift: float
    step_size: float
    noise: _noise.NoiseModel
    forcing: _seq.CoefficientFamily
    x0: float


@dataclass(frozen=True)
class Deterministic:
    feedback: Feedback
    gain: _seq.CoefficientFamily
    forcing: _seq.CoefficientFamily
    x0: float


EquationSpec = Union[Linear, Nonlinear, Ito, Deterministic]


@dataclass(frozen=True)
class SimOptions:
    track_martingale: bool = False
    thresholds_below: tuple[float, ...] = ()
    thresholds_above: tuple[float, ...] = ()
    record_stride: int = 64
    tail_window: int = 100
    checkpoints: tuple[int, ...] = ()
    record_trajectory: bool = False


@dataclass
class PathSummary:
    """Streaming statistics of one path, X_0 included in the extremes."""

    final_value: float
    steps: int
    running_max: float
    argmax: int
    running_min: float
    argmin: int
    overflow: bool
    tail_max: float
    first_below: tuple[tuple[float, Optional[int]], ...]
    first_above: tuple[tuple[float, Optional[int]], ...]
    checkpoint_values: tuple[tuple[int, float], ...]
    martingale_final: Optional[float] = None
    martingale_mean_abs_dev: Optional[float] = None
    trajectory: Optional[tuple[np.ndarray, np.ndarray]] = None

    def __eq__(self, other):
        if not isinstance(other, PathSummary):
            return NotImplemented
        for name in (
            "final_value",
            "steps",
            "running_max",
            "argmax",
            "running_min",
            "argmin",
            "overflow",
            "tail_max",
            "first_below",
            "first_above",
            "checkpoint_values",
            "martingale_final",
            "martingale_mean_abs_dev",
        ):
            if getattr(self, name) != getattr(other, name):
                return False
        if (self.trajectory is None) != (other.trajectory is None):
            return False
        if self.trajectory is not None:
            if not np.array_equal(self.trajectory[0], other.trajectory[0]):
                return False
            if not np.array_equal(self.trajectory[1], other.trajectory[1]):
                return False
        return True


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(int(seed))


def validate_spec(spec: EquationSpec, horizon: int) -> None:
    """Positivity and parameter validation before any stepping happens."""
    if not spec.x0 > 0:
        raise ValueError(f"x0 must be > 0, got {spec.x0}")
    _seq.require_nonnegative(spec.forcing, "forcing sequence")
    if isinstance(spec, Deterministic):
        # a gain of exactly -1 zeroes the multiplicative part for one step;
        # the forcing keeps the state nonnegative, so only gains below -1
        # (which would flip the sign) are rejected
        probe = _noise._probe_indices(max(horizon, 1))
        gains = _seq.value_at(spec.gain, probe)
        bad = np.where(gains < -1.0)[0]
        if bad.size:
            raise ValueError(
                f"deterministic gain {gains[bad[0]]} < -1 at n={int(probe[bad[0]])}"
            )
        return
    if isinstance(spec, Ito):
        if spec.drift < 0:
            raise ValueError(f"drift must be >= 0, got {spec.drift}")
        if spec.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {spec.step_size}")
        check = _noise.validate_positivity(
            spec.noise, "ito", drift=spec.drift, step_size=spec.step_size, n_max=horizon
        )
    else:
        context = "linear" if isinstance(spec, Linear) else "nonlinear"
        check = _noise.validate_positivity(spec.noise, context, n_max=horizon)
    if not check.ok:
        raise ValueError(f"positivity violated: {check.detail}")


def step(spec: EquationSpec, x: float, n: int, rng: np.random.Generator) -> float:
    """One transition from state x at index n, consuming the index-(n+1) draw."""
    if not x > 0:
        raise ValueError(f"state must be > 0, got {x}")
    s = _seq.forcing_at(spec.forcing, n)
    if isinstance(spec, Linear):
        return x * (1.0 + _noise.sample(spec.noise, n + 1, rng)) + s
    if isinstance(spec, Nonlinear):
        xi = _noise.sample(spec.noise, n + 1, rng)
        return x * (1.0 + spec.feedback(x) * xi) + s
    if isinstance(spec, Ito):
        z = _noise.sample(spec.noise, n + 1, rng)
        c = spec.feedback(x)
        k = spec.step_size
        return x * (1.0 + k * c * spec.drift + math.sqrt(k * c) * z) + s
    a = _seq.value_at(spec.gain, n + 1)
    return x * (1.0 + spec.feedback(x) * a) + s


class MartingaleTracker:
    """Multiplicative diagnostic M_n for the feedback recursion.

    M_0 = 1 and M_{n+1} = M_n * (1 + f(x_n) xi_{n+1})^{-1} /
    E[(1 + f(x_n) xi)^{-1}], which makes {M_n} a mean-one martingale; its
    ensemble average staying near 1 is a cheap consistency check on both
    the sampler and the moment formulas.  Requires noise with bounded
    support staying clear of -1; heavy tails are rejected.
    """

    def __init__(self, model: _noise.NoiseModel, horizon: int = 1):
        if isinstance(model, _noise.ParetoTail):
            raise _noise.UnsupportedModelError(
                "martingale tracking requires bounded noise support"
            )
        if _noise.is_iid(model):
            probe = np.asarray([1])
        else:
            probe = _noise._probe_indices(max(horizon, 1_000_000))
        for idx in probe:
            smin, smax = _noise.support_bounds(model, int(idx))
            if smin <= -1.0 + TRACKER_SUPPORT_MARGIN:
                raise _noise.UnsupportedModelError(
                    f"martingale tracking disabled: support within {TRACKER_SUPPORT_MARGIN}"
                    f" of -1 at n={int(idx)}"
                )
            if not math.isfinite(smax):
                raise _noise.UnsupportedModelError(
                    "martingale tracking requires bounded noise support"
                )
        self._inv = _noise.inverse_moment_fn(model)
        self.value = 1.0

    def update(self, gain: float, xi: float, n: int) -> float:
        denom = 1.0 + gain * xi
        self.value *= (1.0 / denom) / self._inv(n, gain)
        return self.value


def simulate(
    spec: EquationSpec,
    horizon: int,
    seed,
    options: SimOptions = SimOptions(),
    *,
    forcing: Optional[np.ndarray] = None,
    validate: bool = True,
) -> PathSummary:
    """Run one path for ``horizon`` steps; deterministic given (spec, seed).

    ``forcing`` lets the caller share a precomputed forcing array across
    paths.  Values are recorded every ``record_stride`` steps plus at
    power-of-two indices, user checkpoints and the final step; the tail
    window and trajectory are built from those records.
    """
    horizon = int(horizon)
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if validate:
        validate_spec(spec, horizon)
    if options.record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    rng = as_generator(seed)

    s = forcing if forcing is not None else _seq.forcing_values(spec.forcing, horizon)
    ns = np.arange(1, horizon + 1)
    kind = 0  # 0 linear, 1 nonlinear, 2 ito, 3 deterministic
    f_fn = _f_one
    ka = 0.0
    k = 0.0
    if isinstance(spec, Linear):
        shocks = _noise.draw_values(spec.noise, ns, rng)
    elif isinstance(spec, Nonlinear):
        kind = 1
        f_fn = _FEEDBACK_FNS[spec.feedback]
        shocks = _noise.draw_values(spec.noise, ns, rng)
    elif isinstance(spec, Ito):
        kind = 2
        f_fn = _FEEDBACK_FNS[spec.feedback]
        k = spec.step_size
        ka = k * spec.drift
        shocks = _noise.draw_values(spec.noise, ns, rng)
    else:
        kind = 3
        f_fn = _FEEDBACK_FNS[spec.feedback]
        shocks = np.asarray(_seq.value_at(spec.gain, ns), dtype=float)

    # plain Python floats in the hot loop; numpy scalars cost ~2x per op
    shocks = shocks.tolist()
    s = np.asarray(s, dtype=float).tolist()

    tracker = None
    if options.track_martingale:
        if kind >= 2:
            raise ValueError("martingale tracking applies to the noise-driven feedback kinds")
        tracker = MartingaleTracker(spec.noise, horizon)
    mdev = 0.0

    stride = options.record_stride
    special = {1 << i for i in range((horizon).bit_length()) if (1 << i) <= horizon}
    special.update(int(c) for c in options.checkpoints)
    special.add(horizon)
    cp_user = {int(c) for c in options.checkpoints}
    cp_values: dict[int, float] = {}
    tail: deque = deque(maxlen=options.tail_window)
    traj_n: list[int] = []
    traj_x: list[float] = []
    record_traj = options.record_trajectory

    pending_below = sorted(options.thresholds_below, reverse=True)
    pending_above = sorted(options.thresholds_above)
    first_below: dict[float, Optional[int]] = {t: None for t in options.thresholds_below}
    first_above: dict[float, Optional[int]] = {t: None for t in options.thresholds_above}

    x = float(spec.x0)
    rmax = rmin = x
    amax = amin = 0
    overflow = False
    steps = horizon
    sqrt = math.sqrt

    for t in range(horizon):
        if kind == 0:
            xn = x * (1.0 + shocks[t]) + s[t]
            gain = 1.0
        elif kind == 1:
            gain = f_fn(x)
            xn = x * (1.0 + gain * shocks[t]) + s[t]
        elif kind == 2:
            gain = f_fn(x)
            xn = x * (1.0 + ka * gain + sqrt(k * gain) * shocks[t]) + s[t]
        else:
            gain = f_fn(x)
            xn = x * (1.0 + gain * shocks[t]) + s[t]
        n1 = t + 1

        if tracker is not None:
            m = tracker.update(gain, shocks[t], n1)
            mdev += abs(m - 1.0)

        if xn > rmax:
            rmax = xn
            amax = n1
        if xn < rmin:
            rmin = xn
            amin = n1
        if pending_below and xn < pending_below[0]:
            while pending_below and xn < pending_below[0]:
                first_below[pending_below.pop(0)] = n1
        if pending_above and xn > pending_above[0]:
            while pending_above and xn > pending_above[0]:
                first_above[pending_above.pop(0)] = n1

        blown = not (xn <= OVERFLOW_CAP)  # catches inf and nan as well
        strided = n1 % stride == 0 or n1 == horizon or blown
        if strided or n1 in special:
            # the convergence window sees only the evenly-strided records;
            # log-spaced and user checkpoints would drag early values in
            if strided:
                tail.append(xn)
            if record_traj:
                traj_n.append(n1)
                traj_x.append(xn)
            if n1 in cp_user:
                cp_values[n1] = xn
        if blown:
            overflow = True
            steps = n1
            x = xn
            break
        x = xn

    traj = None
    if record_traj:
        traj = (np.asarray(traj_n, dtype=np.int64), np.asarray(traj_x, dtype=float))
    return PathSummary(
        final_value=x,
        steps=steps,
        running_max=rmax,
        argmax=amax,
        running_min=rmin,
        argmin=amin,
        overflow=overflow,
        tail_max=max(tail) if tail else x,
        first_below=tuple((t_, first_below[t_]) for t_ in options.thresholds_below),
        first_above=tuple((t_, first_above[t_]) for t_ in options.thresholds_above),
        checkpoint_values=tuple(sorted(cp_values.items())),
        martingale_final=tracker.value if tracker is not None else None,
        martingale_mean_abs_dev=(mdev / steps) if tracker is not None else None,
        trajectory=traj,
    )
