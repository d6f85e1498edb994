"""Run configuration: declarative TOML tables mapped to validated objects.

A config file is the archivable description of one experiment: the
equation, its noise law, the coefficient sequences, what to check and
how to sample.  Loading performs all cross-field validation up front
(positivity included) so a config either fully works or fails with the
offending field named.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib as _toml
except ImportError:  # Python < 3.11
    import tomli as _toml

from . import engine as _engine
from . import noise as _noise
from . import sequences as _seq
from .analysis import CheckId
from .ensemble import Surrogate
from .schedule import Schedule, ScheduleParseError, as_schedule


class ConfigError(ValueError):
    """A config problem, pointing at the table and field responsible."""


@dataclass(frozen=True)
class AnalysisConfig:
    alpha: Optional[float] = None
    gamma_decay: Optional[float] = None
    checks: tuple[CheckId, ...] = ()
    n_tail: int = _seq.DEFAULT_TAIL
    n_grid: tuple[int, ...] = (1, 2, 5, 10, 100, 1000)


@dataclass(frozen=True)
class EnsembleConfig:
    horizon: int = 10_000
    replicas: int = 100
    master_seed: int = 0
    surrogate: Surrogate = field(default_factory=Surrogate)
    checkpoints: tuple[int, ...] = ()
    track_martingale: bool = False
    thresholds_below: tuple[float, ...] = ()
    thresholds_above: tuple[float, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    equation: _engine.EquationSpec
    kappa: Optional[_seq.CoefficientFamily]
    analysis: AnalysisConfig
    ensemble: EnsembleConfig
    conjecture_p_grid: Optional[tuple[float, ...]]
    output_dir: Optional[str]
    stride: int = 64


class _Table:
    def __init__(self, name: str, data: dict):
        self.name = name
        self.data = dict(data)

    def take(self, key, kinds, required=False, default=None):
        if key not in self.data:
            if required:
                raise ConfigError(f"[{self.name}] missing required key {key!r}")
            return default
        value = self.data.pop(key)
        if kinds is not None and not isinstance(value, kinds):
            raise ConfigError(
                f"[{self.name}] {key}: expected {kinds}, got {type(value).__name__}"
            )
        return value

    def number(self, key, required=False, default=None):
        v = self.take(key, (int, float), required, default)
        return None if v is None else float(v)

    def integer(self, key, required=False, default=None):
        v = self.take(key, int, required, default)
        return None if v is None else int(v)

    def done(self):
        if self.data:
            raise ConfigError(f"[{self.name}] unknown keys: {sorted(self.data)}")


def _schedule_field(tbl: _Table, key: str, required=False, default=None) -> Optional[Schedule]:
    value = tbl.take(key, (int, float, str), required, default)
    if value is None:
        return None
    try:
        return as_schedule(value)
    except ScheduleParseError as exc:
        raise ConfigError(f"[{tbl.name}] {key}: {exc}") from exc


def _build_noise(data: dict, section: str) -> _noise.NoiseModel:
    tbl = _Table(section, data)
    family = tbl.take("family", str, required=True)
    try:
        if family == "two_point":
            model = _noise.two_point(
                _schedule_field(tbl, "lo", required=True),
                _schedule_field(tbl, "hi", required=True),
                _schedule_field(tbl, "p_hi", required=True),
            )
        elif family == "uniform":
            model = _noise.uniform_interval(
                _schedule_field(tbl, "lo", required=True),
                _schedule_field(tbl, "hi", required=True),
            )
        elif family == "pareto":
            model = _noise.pareto_tail(
                tbl.number("shape", required=True), tbl.number("scale", required=True)
            )
        elif family == "degenerate":
            model = _noise.degenerate(tbl.number("value", required=True))
        else:
            raise ConfigError(
                f"[{section}] family: unknown noise family {family!r} "
                "(expected two_point, uniform, pareto or degenerate)"
            )
    except _noise.InvalidModelError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc
    tbl.done()
    return model


def _build_family(data: dict, section: str) -> _seq.CoefficientFamily:
    tbl = _Table(section, data)
    family = tbl.take("family", str, required=True)
    try:
        if family == "power_law":
            out = _seq.power_law(tbl.number("c", required=True), tbl.number("p", required=True))
        elif family == "geometric":
            out = _seq.geometric(tbl.number("c", required=True), tbl.number("r", required=True))
        elif family == "table":
            values = tbl.take("values", list, required=True)
            out = _seq.table(values)
        elif family == "zero":
            out = _seq.ZERO
        else:
            raise ConfigError(
                f"[{section}] family: unknown sequence family {family!r} "
                "(expected power_law, geometric, table or zero)"
            )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[{section}] {exc}") from exc
    tbl.done()
    return out


def _feedback(name: Optional[str], section: str) -> _engine.Feedback:
    if name is None:
        return _engine.Feedback.ONE
    try:
        return _engine.Feedback(name)
    except ValueError:
        valid = ", ".join(f.value for f in _engine.Feedback)
        raise ConfigError(f"[{section}] feedback: unknown gain {name!r} (expected {valid})")


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        try:
            raw = _toml.load(fh)
        except _toml.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc
    return build_config(raw)


def build_config(raw: dict) -> RunConfig:
    raw = dict(raw)
    known = {
        "equation",
        "noise",
        "free_coefficient",
        "kappa",
        "gain",
        "analysis",
        "ensemble",
        "conjecture",
        "output",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level tables: {sorted(unknown)}")

    eq_tbl = _Table("equation", raw.get("equation", {}))
    kind = eq_tbl.take("kind", str, required=True)
    x0 = eq_tbl.number("x0", required=True)
    if not x0 > 0:
        raise ConfigError(f"[equation] x0 must be > 0, got {x0}")
    fb = _feedback(eq_tbl.take("feedback", str), "equation")
    drift = eq_tbl.number("drift")
    step_size = eq_tbl.number("step_size")
    eq_tbl.done()

    if "free_coefficient" not in raw:
        raise ConfigError("missing required table [free_coefficient]")
    forcing = _build_family(raw["free_coefficient"], "free_coefficient")
    try:
        _seq.require_nonnegative(forcing, "free coefficient")
    except ValueError as exc:
        raise ConfigError(f"[free_coefficient] {exc}") from exc

    noise_model = None
    if kind != "deterministic":
        if "noise" not in raw:
            raise ConfigError("missing required table [noise]")
        noise_model = _build_noise(raw["noise"], "noise")

    gain = _build_family(raw["gain"], "gain") if "gain" in raw else None

    if kind == "linear":
        equation: _engine.EquationSpec = _engine.Linear(noise_model, forcing, x0)
    elif kind == "nonlinear":
        equation = _engine.Nonlinear(fb, noise_model, forcing, x0)
    elif kind == "ito":
        if drift is None or step_size is None:
            raise ConfigError("[equation] ito kind requires drift and step_size")
        equation = _engine.Ito(fb, drift, step_size, noise_model, forcing, x0)
    elif kind == "deterministic":
        if gain is None:
            raise ConfigError("[equation] deterministic kind requires a [gain] table")
        equation = _engine.Deterministic(fb, gain, forcing, x0)
    else:
        raise ConfigError(
            f"[equation] kind: unknown kind {kind!r} "
            "(expected linear, nonlinear, ito or deterministic)"
        )
    if kind != "ito" and (drift is not None or step_size is not None):
        raise ConfigError("[equation] drift/step_size only apply to the ito kind")

    kappa = _build_family(raw["kappa"], "kappa") if "kappa" in raw else None

    an_tbl = _Table("analysis", raw.get("analysis", {}))
    alpha = an_tbl.number("alpha")
    gamma = an_tbl.number("gamma_decay")
    check_names = an_tbl.take("checks", list, default=[])
    checks = []
    for name in check_names:
        try:
            checks.append(CheckId(name))
        except ValueError:
            valid = ", ".join(c.value for c in CheckId)
            raise ConfigError(f"[analysis] checks: unknown check {name!r} (expected {valid})")
    n_tail = an_tbl.integer("n_tail", default=_seq.DEFAULT_TAIL)
    n_grid = tuple(int(v) for v in an_tbl.take("n_grid", list, default=[1, 2, 5, 10, 100, 1000]))
    an_tbl.done()
    if alpha is not None and alpha <= 0:
        raise ConfigError(f"[analysis] alpha must be > 0, got {alpha}")
    if gamma is not None and not 0.0 < gamma < 1.0:
        raise ConfigError(f"[analysis] gamma_decay must lie in (0, 1), got {gamma}")
    if any(g < 1 for g in n_grid):
        raise ConfigError("[analysis] n_grid entries must be >= 1")
    analysis = AnalysisConfig(alpha, gamma, tuple(checks), n_tail, n_grid)

    en_tbl = _Table("ensemble", raw.get("ensemble", {}))
    horizon = en_tbl.integer("horizon", default=10_000)
    replicas = en_tbl.integer("replicas", default=100)
    master_seed = en_tbl.integer("master_seed", default=0)
    try:
        surrogate = Surrogate(
            eps_converged=en_tbl.number("eps_converged", default=1e-2),
            tail_window=en_tbl.integer("tail_window", default=100),
            divergence_threshold=en_tbl.number("divergence_threshold", default=1e2),
        )
    except ValueError as exc:
        raise ConfigError(f"[ensemble] {exc}") from exc
    checkpoints = tuple(int(v) for v in en_tbl.take("checkpoints", list, default=[]))
    track = bool(en_tbl.take("track_martingale", bool, default=False))
    th_below = tuple(float(v) for v in en_tbl.take("thresholds_below", list, default=[]))
    th_above = tuple(float(v) for v in en_tbl.take("thresholds_above", list, default=[]))
    en_tbl.done()
    if horizon < 1:
        raise ConfigError(f"[ensemble] horizon must be >= 1, got {horizon}")
    if replicas < 1:
        raise ConfigError(f"[ensemble] replicas must be >= 1, got {replicas}")
    if master_seed < 0:
        raise ConfigError(f"[ensemble] master_seed must be >= 0, got {master_seed}")
    for cp in checkpoints:
        if not 1 <= cp <= horizon:
            raise ConfigError(f"[ensemble] checkpoint {cp} outside 1..{horizon}")
    ensemble = EnsembleConfig(
        horizon, replicas, master_seed, surrogate, checkpoints, track, th_below, th_above
    )

    conj_tbl = _Table("conjecture", raw.get("conjecture", {}))
    p_grid = conj_tbl.take("p_grid", list)
    conj_tbl.done()
    p_grid = None if p_grid is None else tuple(float(v) for v in p_grid)

    out_tbl = _Table("output", raw.get("output", {}))
    output_dir = out_tbl.take("directory", str)
    stride = out_tbl.integer("stride", default=64)
    out_tbl.done()
    if stride < 1:
        raise ConfigError(f"[output] stride must be >= 1, got {stride}")

    cfg = RunConfig(equation, kappa, analysis, ensemble, p_grid, output_dir, stride)
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: RunConfig) -> None:
    try:
        _engine.validate_spec(cfg.equation, cfg.ensemble.horizon)
    except (ValueError, _noise.InvalidModelError) as exc:
        raise ConfigError(f"positivity validation failed: {exc}") from exc
    for check in cfg.analysis.checks:
        if check is not CheckId.DETERMINISTIC_DECAY and isinstance(
            cfg.equation, _engine.Deterministic
        ):
            raise ConfigError(
                f"[analysis] check {check.value!r} requires a noise-driven equation kind"
            )
        if check in (CheckId.LINEAR_MOMENT, CheckId.NONLINEAR_MOMENT, CheckId.LINEAR_DECAY_RATE,
                     CheckId.ITO_STABILIZATION):
            if cfg.analysis.alpha is None:
                raise ConfigError(f"[analysis] check {check.value!r} requires alpha")
        if check is CheckId.NONLINEAR_MOMENT and not 0.0 < cfg.analysis.alpha < 1.0:
            raise ConfigError(
                f"[analysis] check 'nonlinear_moment' requires alpha in (0, 1), "
                f"got {cfg.analysis.alpha}"
            )
        if check is CheckId.LINEAR_DECAY_RATE:
            if cfg.kappa is None:
                raise ConfigError("[analysis] check 'linear_decay_rate' requires a [kappa] table")
            if cfg.analysis.gamma_decay is None:
                raise ConfigError("[analysis] check 'linear_decay_rate' requires gamma_decay")
            if not 0.0 < cfg.analysis.alpha <= 1.0:
                raise ConfigError(
                    "[analysis] check 'linear_decay_rate' requires alpha in (0, 1], "
                    f"got {cfg.analysis.alpha}"
                )
        if check is CheckId.ITO_STABILIZATION and not isinstance(cfg.equation, _engine.Ito):
            raise ConfigError("[analysis] check 'ito_stabilization' requires the ito kind")
        if check is CheckId.DETERMINISTIC_DECAY and not isinstance(
            cfg.equation, _engine.Deterministic
        ):
            raise ConfigError(
                "[analysis] check 'deterministic_decay' requires the deterministic kind"
            )
    if cfg.ensemble.track_martingale:
        if isinstance(cfg.equation, (_engine.Ito, _engine.Deterministic)):
            raise ConfigError(
                "[ensemble] track_martingale applies to linear/nonlinear kinds only"
            )
        try:
            _engine.MartingaleTracker(cfg.equation.noise, cfg.ensemble.horizon)
        except _noise.UnsupportedModelError as exc:
            raise ConfigError(f"[ensemble] track_martingale: {exc}") from exc


# ---------------------------------------------------------------------------
# dumping


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v) or math.isnan(v):
            raise ValueError(f"cannot dump non-finite value {v}")
        return repr(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    raise TypeError(f"cannot dump {type(v).__name__}")


def _schedule_value(s: Schedule):
    try:
        return float(s.source)
    except ValueError:
        return s.source


def _noise_table(model: _noise.NoiseModel) -> dict:
    if isinstance(model, _noise.TwoPoint):
        return {
            "family": "two_point",
            "lo": _schedule_value(model.lo),
            "hi": _schedule_value(model.hi),
            "p_hi": _schedule_value(model.p_hi),
        }
    if isinstance(model, _noise.UniformInterval):
        return {
            "family": "uniform",
            "lo": _schedule_value(model.lo),
            "hi": _schedule_value(model.hi),
        }
    if isinstance(model, _noise.ParetoTail):
        return {"family": "pareto", "shape": model.shape, "scale": model.scale}
    return {"family": "degenerate", "value": model.value}


def _family_table(seq: _seq.CoefficientFamily) -> dict:
    if isinstance(seq, _seq.PowerLaw):
        return {"family": "power_law", "c": seq.c, "p": seq.p}
    if isinstance(seq, _seq.Geometric):
        return {"family": "geometric", "c": seq.c, "r": seq.r}
    if isinstance(seq, _seq.Table):
        return {"family": "table", "values": list(seq.values)}
    return {"family": "zero"}


def dump_config(cfg: RunConfig) -> str:
    """Normalized TOML that reparses to an equal RunConfig."""
    eq = cfg.equation
    tables: list[tuple[str, dict]] = []
    eq_table: dict = {}
    if isinstance(eq, _engine.Linear):
        eq_table = {"kind": "linear", "x0": eq.x0}
    elif isinstance(eq, _engine.Nonlinear):
        eq_table = {"kind": "nonlinear", "x0": eq.x0, "feedback": eq.feedback.value}
    elif isinstance(eq, _engine.Ito):
        eq_table = {
            "kind": "ito",
            "x0": eq.x0,
            "feedback": eq.feedback.value,
            "drift": eq.drift,
            "step_size": eq.step_size,
        }
    else:
        eq_table = {"kind": "deterministic", "x0": eq.x0, "feedback": eq.feedback.value}
    tables.append(("equation", eq_table))
    if not isinstance(eq, _engine.Deterministic):
        tables.append(("noise", _noise_table(eq.noise)))
    tables.append(("free_coefficient", _family_table(eq.forcing)))
    if cfg.kappa is not None:
        tables.append(("kappa", _family_table(cfg.kappa)))
    if isinstance(eq, _engine.Deterministic):
        tables.append(("gain", _family_table(eq.gain)))
    an: dict = {}
    if cfg.analysis.alpha is not None:
        an["alpha"] = cfg.analysis.alpha
    if cfg.analysis.gamma_decay is not None:
        an["gamma_decay"] = cfg.analysis.gamma_decay
    an["checks"] = [c.value for c in cfg.analysis.checks]
    an["n_tail"] = cfg.analysis.n_tail
    an["n_grid"] = list(cfg.analysis.n_grid)
    tables.append(("analysis", an))
    en = {
        "horizon": cfg.ensemble.horizon,
        "replicas": cfg.ensemble.replicas,
        "master_seed": cfg.ensemble.master_seed,
        "eps_converged": cfg.ensemble.surrogate.eps_converged,
        "tail_window": cfg.ensemble.surrogate.tail_window,
        "divergence_threshold": cfg.ensemble.surrogate.divergence_threshold,
        "checkpoints": list(cfg.ensemble.checkpoints),
        "track_martingale": cfg.ensemble.track_martingale,
        "thresholds_below": list(cfg.ensemble.thresholds_below),
        "thresholds_above": list(cfg.ensemble.thresholds_above),
    }
    tables.append(("ensemble", en))
    if cfg.conjecture_p_grid is not None:
        tables.append(("conjecture", {"p_grid": list(cfg.conjecture_p_grid)}))
    out: dict = {}
    if cfg.output_dir is not None:
        out["directory"] = cfg.output_dir
    out["stride"] = cfg.stride
    tables.append(("output", out))

    lines = []
    for name, data in tables:
        lines.append(f"[{name}]")
        for key, value in data.items():
            lines.append(f"{key} = {_toml_scalar(value)}")
        lines.append("")
    return "\n".join(lines)
