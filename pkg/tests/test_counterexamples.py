from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamcorr.counterexamples import (
    PomdpCounterexample,
    SquareWaveSystem,
    UnsupportedVariant,
    dyadic_intervals,
    four_symbol_limit,
    four_symbol_prob,
    lc_limit_measure,
    lc_surrogate_team,
    pomdp_classical_value,
    pomdp_open_loop_value,
    pomdp_report,
    pomdp_widesense_run,
    pomdp_widesense_sim,
    square_wave_limit,
    square_wave_prob,
    verify_ci_failure,
    verify_lc_failure,
    widesense_marginals,
)
from teamcorr.linprog import OPTIMAL
from teamcorr.model import profile_from_lists, strategic_measure_of

F = Fraction


# -- square wave -------------------------------------------------------------------

def test_square_wave_examples():
    assert square_wave_prob(1, 1, (0, F(1, 2)), 1, exact=True) == F(1, 2)
    assert square_wave_prob(1, 0, (0, F(1, 2)), 0, exact=True) == 0
    assert square_wave_prob(2, 1, (0, F(1, 4)), 1, exact=True) == F(1, 4)
    assert square_wave_prob(2, 1, (0, 1), 0) == 0.0
    assert square_wave_limit(1, (0, F(1, 4)), 1, exact=True) == F(1, 8)
    assert SquareWaveSystem(2).action(F(1, 2)) == 1 and SquareWaveSystem(2).action(F(1, 4)) == 0


@pytest.mark.parametrize("n", [1, 3, 7])
def test_square_wave_against_fine_midpoint_sum(n):
    # midpoint sum on a grid aligned with every cell edge is exact for indicator integrands
    grid = 2 * n * 8
    mids = (np.arange(grid) + 0.5) / grid
    acts = np.array([SquareWaveSystem(n).action(F(2 * i + 1, 2 * grid)) for i in range(grid)])
    for s, t in [(0.0, 1.0), (0.125, 0.75), (0.3125, 0.4375)]:
        inside = (mids >= s) & (mids < t)
        assert square_wave_prob(n, 1, (F(s), F(t)), 1) == pytest.approx(np.sum(inside & (acts == 1)) / grid)
        assert square_wave_prob(n, 0, (F(s), F(t)), 0) == pytest.approx(np.sum(inside & (acts == 0)) / grid)


def test_cells_partition_the_unit_interval():
    cells = SquareWaveSystem(5).cells()
    assert cells[0][0] == 0 and cells[-1][1] == 1
    assert all(a[1] == b[0] for a, b in zip(cells, cells[1:]))
    assert [c[2] for c in cells[:4]] == [1, 0, 1, 0]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 300), st.integers(0, 64), st.integers(0, 64))
def test_setwise_deviation_bound(n, i, j):
    s, t = sorted((F(i, 64), F(j, 64)))
    for a in (0, 1):
        dev = abs(square_wave_prob(n, a, (s, t), a, exact=True) - square_wave_limit(a, (s, t), a, exact=True))
        assert dev <= F(1, 2 * n)


def test_ci_report():
    report = verify_ci_failure()
    assert report.bounds_ok
    for n, d in report.deviations:
        assert d == (F(1, 4 * n) if n < 64 else 0)
    assert max(r for _, r in report.ci_residuals) == 0.0
    assert report.limit_conditional == 1.0 and report.limit_marginal == 0.5
    assert report.ci_fails_in_limit
    assert report.to_csv().splitlines()[0] == "n,max_deviation"
    assert "fails in the limit: True" in report.to_text()


def test_interval_validation():
    with pytest.raises(ValueError):
        square_wave_prob(2, 1, (F(1, 2), F(1, 4)), 1)
    with pytest.raises(ValueError):
        square_wave_prob(2, 2, (0, 1), 2)
    with pytest.raises(ValueError):
        SquareWaveSystem(0)
    assert len(dyadic_intervals(2)) == 10


# -- four-symbol construction ----------------------------------------------------

def test_four_symbol_total_mass():
    for n in (1, 4, 16):
        total = sum(four_symbol_prob(n, a, (0, 2), a, exact=True) for a in range(4))
        assert total == 1
    assert sum(four_symbol_limit(a, (0, 2), a, exact=True) for a in range(4)) == 1


def test_lc_limit_measure_is_a_common_coin_mixture():
    # Both DMs share a fair coin c and play 2*cell + c: this is the surrogate limit.
    team = lc_surrogate_team()
    mix = 0.5 * strategic_measure_of(team, profile_from_lists([[0, 2], [0, 2]])).probs \
        + 0.5 * strategic_measure_of(team, profile_from_lists([[1, 3], [1, 3]])).probs
    np.testing.assert_array_equal(mix, lc_limit_measure())


def test_lc_report_states_the_lp_outcome():
    report = verify_lc_failure(n=16, n_list=(1, 4, 16))
    assert report.lp_status == OPTIMAL
    assert not report.excluded
    assert report.mixture_residual <= 1e-12
    assert sum(w for w, _ in report.mixture) == pytest.approx(1.0)
    assert report.pn_product_residual == 0.0
    devs = [float(d) for _, d in report.convergence]
    assert devs == sorted(devs, reverse=True) and devs[-1] <= 1 / 32
    assert "exclusion not certified" in report.to_text()


# -- frozen-state POMDP --------------------------------------------------------------

BALANCED = np.array([[0.5, 0.0], [0.0, 0.5]])


def test_classical_values():
    assert pomdp_classical_value(PomdpCounterexample.frozen(BALANCED)) == (0.5, "constant")
    assert pomdp_classical_value(PomdpCounterexample.frozen([[1, 0], [0, 0]])) == (1.0, "constant")
    assert pomdp_classical_value(PomdpCounterexample.frozen(np.full((2, 2), 0.25))) == (0.75, "constant")
    assert pomdp_classical_value(PomdpCounterexample.frozen([[0, 0], [0, 1]])) == (1.0, "alternating")


@pytest.mark.parametrize("seed", range(5))
def test_open_loop_sequences_never_beat_the_classical_value(seed):
    rng = np.random.default_rng(seed)
    pi0 = rng.dirichlet(np.ones(4)).reshape(2, 2)
    ce = PomdpCounterexample.frozen(pi0)
    value, _ = pomdp_classical_value(ce)
    for _ in range(20):
        seq = rng.integers(0, 2, size=50)
        assert pomdp_open_loop_value(ce, seq) <= value + 1 / 50 + 1e-12
    assert pomdp_open_loop_value(ce, np.zeros(10_000, dtype=int)) == pytest.approx(1 - ce.prod_one, abs=1e-4)


@pytest.mark.parametrize("seed", range(10))
def test_widesense_run_earns_every_reward(seed):
    ce = PomdpCounterexample.frozen(BALANCED, horizon=500)
    run = pomdp_widesense_run(ce, seed=seed)
    assert run.average_reward == 1.0
    expected = np.array([run.x3_initial ^ ((t + 1) * run.prod & 1) for t in range(500)])
    np.testing.assert_array_equal(run.actions, expected)


def test_widesense_ensemble_marginals_match_the_classical_law():
    ce = PomdpCounterexample.frozen(BALANCED)
    episodes = 4000
    marg = widesense_marginals(ce, episodes, T=8, seed=0)
    assert np.all(np.abs(marg - 0.5) <= 3 / np.sqrt(episodes))


def test_report_and_simulation():
    ce = PomdpCounterexample.frozen(BALANCED, horizon=10_000)
    assert pomdp_widesense_sim(ce, seed=3) == 1.0
    report = pomdp_report(ce)
    assert report.ratio == 2.0
    assert "constant sequence" in report.to_text()


def test_invalid_variants():
    with pytest.raises(UnsupportedVariant):
        swap = np.eye(4)[[0, 1, 3, 2]]
        pomdp_classical_value(PomdpCounterexample(np.full((2, 2), 0.25), np.array([0.5, 0.5]), swap))
    with pytest.raises(ValueError):
        PomdpCounterexample.frozen([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ValueError):
        PomdpCounterexample(BALANCED, np.array([0.5, 0.5]), np.eye(4)[[1, 0, 2, 3]])
    with pytest.raises(ValueError):
        pomdp_widesense_run(PomdpCounterexample.frozen(BALANCED), T=0)
