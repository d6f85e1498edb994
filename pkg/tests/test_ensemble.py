import numpy as np
import pytest

from stochrec import noise
from stochrec.analysis import critical_alpha
from stochrec.engine import Feedback, Linear, Nonlinear, SimOptions, simulate
from stochrec.ensemble import (
    PATH_HEADER,
    Surrogate,
    conjecture_probe,
    decay_rate_check,
    derive_rng,
    format_csv,
    liminf_estimator,
    run_ensemble,
)
from stochrec.sequences import ZERO, geometric, power_law

TP_ASYM = noise.two_point(-0.5, 1.0, 0.25)


def test_surrogate_validation():
    with pytest.raises(ValueError):
        Surrogate(eps_converged=1.0, divergence_threshold=0.5)
    with pytest.raises(ValueError):
        Surrogate(eps_converged=0.0)
    with pytest.raises(ValueError):
        Surrogate(tail_window=0)


def test_deterministic_halving_converges():
    spec = Linear(noise.degenerate(-0.5), ZERO, 1.0)
    result = run_ensemble(
        spec, 100, 20, 0, Surrogate(eps_converged=1e-6, tail_window=10, divergence_threshold=10)
    )
    assert result.p_converged == 1.0
    assert result.p_exceeded == 0.0
    # every path is the same deterministic sequence
    assert dict(result.final_quantiles)[0.5] == 2.0**-100


def test_stream_independence_per_replica():
    # every replica resimulated in isolation matches its in-ensemble
    # summary: the stream depends on the index, not on execution order
    spec = Linear(TP_ASYM, power_law(1.0, 2.0), 1.0)
    result = run_ensemble(spec, 500, 8, 777)
    opts = SimOptions(tail_window=100)
    for r in range(8):
        alone = simulate(spec, 500, derive_rng(777, r), opts)
        assert alone == result.summaries[r]


def test_reproducibility_bytes():
    spec = Linear(TP_ASYM, power_law(1.0, 2.0), 1.0)
    a = run_ensemble(spec, 300, 40, 2024)
    b = run_ensemble(spec, 300, 40, 2024)
    assert format_csv(PATH_HEADER, a.path_rows()) == format_csv(PATH_HEADER, b.path_rows())
    assert format_csv(("k", "v"), a.summary_rows()) == format_csv(("k", "v"), b.summary_rows())


def test_checkpoint_quantiles_monotone_levels():
    spec = Linear(TP_ASYM, power_law(1.0, 2.0), 1.0)
    result = run_ensemble(spec, 1000, 50, 3, checkpoints=(10, 100, 1000))
    q25 = result.checkpoint_quantile(0.25)
    q50 = result.checkpoint_quantile(0.5)
    q95 = result.checkpoint_quantile(0.95)
    assert np.all(q25 <= q50) and np.all(q50 <= q95)
    assert result.checkpoints == (10, 100, 1000)


def test_martingale_diagnostic_small():
    spec = Nonlinear(
        Feedback.MIN_ABS_ONE, noise.uniform_interval(-0.5, 0.6), power_law(1.0, 2.0), 0.01
    )
    result = run_ensemble(spec, 200, 2000, 11, track_martingale=True)
    assert result.martingale_se > 0
    assert abs(result.martingale_mean - 1.0) <= 4 * result.martingale_se


def test_liminf_estimator_deterministic():
    spec = Linear(noise.degenerate(-0.5), ZERO, 1.0)
    quantiles = liminf_estimator(spec, 50, 10, 0)
    for _lvl, v in quantiles:
        assert v == 2.0**-50


def test_liminf_estimator_oscillating_regime():
    # E ln(1+xi) < 0 with forcing n^-1 (2-summable): running minima shrink
    tp_sym = noise.two_point(-0.5, 0.5, 0.5)
    spec = Linear(tp_sym, power_law(1.0, 1.0), 1.0)
    short = dict(liminf_estimator(spec, 300, 100, 5))
    long = dict(liminf_estimator(spec, 3000, 100, 5))
    assert long[0.95] < short[0.95]
    assert long[0.5] < 0.05


def test_path_rows_shape():
    spec = Linear(TP_ASYM, power_law(1.0, 2.0), 1.0)
    result = run_ensemble(spec, 100, 7, 1)
    rows = result.path_rows()
    assert len(rows) == 7
    assert [r[0] for r in rows] == list(range(7))
    text = format_csv(PATH_HEADER, rows)
    assert text.startswith("replica,final,")
    assert len(text.splitlines()) == 8


# ---------------------------------------------------------------------------
# decay-rate profile


KAPPA = power_law(-0.125, 0.0)


def test_decay_rate_check_trend():
    spec = Linear(TP_ASYM, geometric(1.0, 0.25), 1.0)
    profile = decay_rate_check(spec, KAPPA, 1.0, 0.5, (50, 200), 100, 77)
    med = profile.quantile(0.5)
    assert med[1] < med[0]
    assert profile.checkpoints == (50, 200)


def test_decay_rate_check_gamma_to_zero_limit():
    # a vanishing gamma weight reduces the statistic to X_n*
    spec = Linear(TP_ASYM, geometric(1.0, 0.25), 1.0)
    profile = decay_rate_check(spec, KAPPA, 1.0, 1e-12, (20,), 30, 5)
    result = run_ensemble(spec, 20, 30, 5, checkpoints=(20,))
    med_direct = result.checkpoint_quantile(0.5)[0]
    assert profile.quantile(0.5)[0] == pytest.approx(med_direct, rel=1e-6)


def test_decay_rate_check_refuses_zero_kappa():
    spec = Linear(TP_ASYM, geometric(1.0, 0.25), 1.0)
    with pytest.raises(ValueError):
        decay_rate_check(spec, ZERO, 1.0, 0.5, (50,), 10, 0)


def test_decay_rate_check_refuses_nonlinear():
    spec = Nonlinear(Feedback.MIN_ABS_ONE, TP_ASYM, ZERO, 1.0)
    with pytest.raises(ValueError):
        decay_rate_check(spec, KAPPA, 1.0, 0.5, (50,), 10, 0)


def test_decay_rate_log_space_survives_underflow():
    # by n = 3000 the raw path sits around 4^-3000, far below any float
    spec = Linear(noise.degenerate(-0.75), ZERO, 1.0)
    profile = decay_rate_check(spec, KAPPA, 1.0, 0.5, (3000,), 3, 0)
    assert profile.quantile(0.5)[0] == 0.0  # statistic underflows cleanly to zero


# ---------------------------------------------------------------------------
# conjecture probe


def test_conjecture_probe_regimes():
    pareto = noise.pareto_tail(2.0, 0.5)
    ce = critical_alpha(pareto)
    # window of 20 records at stride 64 spans the last ~1300 of 3000 steps
    rows = conjecture_probe(
        pareto,
        ce,
        (0.5, 1.0, 2.0),
        horizon=3000,
        replicas=80,
        master_seed=9,
        surrogate=Surrogate(eps_converged=1e-2, tail_window=20, divergence_threshold=1e3),
    )
    by_p = {r.p: r for r in rows}
    assert by_p[0.5].regime == "not_summable"
    assert by_p[1.0].regime == "boundary"
    assert by_p[2.0].regime == "summable"
    assert by_p[2.0].p_converged > 0.9
    assert by_p[0.5].p_converged < 0.1


def test_conjecture_probe_refuses_without_root():
    ce = critical_alpha(noise.degenerate(0.0))
    with pytest.raises(ValueError):
        conjecture_probe(noise.degenerate(0.0), ce, (1.0,))


def test_derive_rng_validation():
    with pytest.raises(ValueError):
        derive_rng(-1, 0)
    with pytest.raises(ValueError):
        derive_rng(0, -2)


def test_run_ensemble_checkpoint_bounds():
    spec = Linear(TP_ASYM, power_law(1.0, 2.0), 1.0)
    with pytest.raises(ValueError):
        run_ensemble(spec, 100, 5, 0, checkpoints=(101,))
