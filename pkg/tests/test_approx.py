import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from teamcorr.approx import (
    QuadratureError,
    QuadratureSpec,
    WitsenhausenConfig,
    WitsenhausenInstance,
    action_grid,
    affine_benchmark,
    affine_cost,
    build_finite_witsenhausen,
    cell_masses,
    discretize,
    extend_and_evaluate,
    first_stage_profile,
    make_uniform_quantizer,
    overflow_mass,
    reduced_density,
    refinement_levels,
    run_pipeline,
    second_stage_profile,
    standard_grids,
)
from teamcorr.classical import enumerate_optimal
from teamcorr.model import DeterministicProfile, profile_value

INST = WitsenhausenInstance(0.2, 5.0)


# -- quantizers -------------------------------------------------------------------

def test_two_level_quantizer():
    q = make_uniform_quantizer(1.0, 2)
    np.testing.assert_array_equal(q.levels, [-0.5, 0.5])
    assert q(0.3) == 0.5
    assert q(-0.3) == -0.5
    assert q.quantize_index(0.3) == 2 and q.quantize_index(-1.5) == 0
    # ties on an edge go to the lower cell; overflow goes to the boundary level
    assert q(0.0) == -0.5
    assert q(7.0) == 0.5 and q(-7.0) == -0.5


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 50), st.integers(1, 200), st.floats(-1, 1))
def test_quantizer_idempotent_with_bounded_error(M, n, frac):
    q = make_uniform_quantizer(M, n)
    t = frac * M
    assert q(q(t)) == q(t)
    assert abs(q(t) - t) <= M / n * (1 + 1e-12)


def test_quantizer_rejects_bad_parameters():
    for M, n in [(0.0, 4), (-1.0, 4), (math.inf, 4), (1.0, 0), (1.0, 2.5)]:
        with pytest.raises(ValueError):
            make_uniform_quantizer(M, n)


def test_action_grid_contains_zero_and_is_nested():
    coarse, fine = action_grid(20.0, 16), action_grid(20.0, 32)
    assert 0.0 in coarse
    assert np.all(np.isin(coarse, fine))
    np.testing.assert_array_equal(action_grid(1.0, 1), [0.0])


@pytest.mark.parametrize("n,scale", [(1, 1.0), (16, 5.0), (64, 5.0), (1024, 5.0), (64, 0.01)])
def test_cell_masses_sum_to_one(n, scale):
    q = make_uniform_quantizer(20.0, n)
    masses = cell_masses(q, scale)
    assert abs(masses.sum() - 1.0) <= 1e-12
    assert np.all(masses >= 0)


def test_cell_masses_against_reference_cdf():
    q = make_uniform_quantizer(3.0, 6)
    masses = cell_masses(q, 2.0, mean=0.5)
    e = q.edges
    ref = np.diff(norm.cdf(e, loc=0.5, scale=2.0))
    ref[0] += norm.cdf(e[0], 0.5, 2.0)
    ref[-1] += norm.sf(e[-1], 0.5, 2.0)
    np.testing.assert_allclose(masses, ref, atol=1e-15)
    assert overflow_mass(q, 2.0) == pytest.approx(2 * norm.sf(1.5), rel=1e-14)


# -- the finite team ----------------------------------------------------------------

def test_reduced_density_at_zero_action():
    np.testing.assert_array_equal(reduced_density(0.0, np.linspace(-5, 5, 11)), 1.0)
    # it is the ratio of N(u1, 1) to N(0, 1)
    assert reduced_density(1.3, 0.4) == pytest.approx(norm.pdf(0.4, 1.3) / norm.pdf(0.4), rel=1e-14)


def test_zero_only_action_grid():
    grids = standard_grids(INST, 8)
    team = build_finite_witsenhausen(INST, grids.qy1, grids.qy2, np.array([0.0]), np.array([0.0]))
    value, _ = enumerate_optimal(team)
    # u1 = u2 = 0: cost k^2 * E[Q(y1)^2], evaluated on cell representatives
    masses = cell_masses(grids.qy1, INST.sigma)
    assert value == pytest.approx(INST.k**2 * float(masses @ grids.qy1.levels**2), abs=1e-12)


def test_single_level_team():
    team = discretize(INST, 1)
    assert team.obs_sizes == (1, 1) and team.act_sizes == (1, 1)
    assert team.prior.sum() == pytest.approx(1.0, abs=1e-12)


def test_density_overflow_is_reported():
    grids = standard_grids(INST, 64)
    wide = make_uniform_quantizer(1e4, 8)
    with pytest.raises(ValueError, match="overflows"):
        build_finite_witsenhausen(INST, grids.qy1, wide, grids.grid_u1, grids.grid_u2)


def test_finite_value_matches_direct_evaluation():
    team = discretize(INST, 16)
    prof = DeterministicProfile((first_stage_profile(team, lambda y: y),
                                 second_stage_profile(team, lambda y: 0.9 * y)))
    q1, q2 = team.qy1, team.qy2
    p1, p2 = cell_masses(q1, INST.sigma), cell_masses(q2, 1.0)
    a1 = team.grid_u1[prof.maps[0]]
    a2 = team.grid_u2[prof.maps[1]]
    direct = 0.0
    for i in range(16):
        for j in range(16):
            f = math.exp(-(a1[i] ** 2 - 2 * q2.levels[j] * a1[i]) / 2)
            direct += p1[i] * p2[j] * f * INST.cost(q1.levels[i], a1[i], a2[j])
    assert profile_value(team, prof) == pytest.approx(direct, rel=1e-12)


# -- continuous evaluation ---------------------------------------------------------

def test_zero_profile_costs_exactly_one():
    # u1 = 0, u2 = 0 costs k^2 sigma^2 = 1 at the default instance
    grids = standard_grids(INST, 64)
    zero = DeterministicProfile((first_stage_profile(grids, lambda y: 0 * y),
                                 second_stage_profile(grids, lambda y: 0 * y)))
    ev = extend_and_evaluate(zero, grids)
    assert ev.value == pytest.approx(1.0, abs=1e-10)
    assert ev.error_bound <= 1e-8


def test_two_point_profile_matches_closed_form():
    grids = standard_grids(INST, 64)
    s = INST.sigma
    prof = DeterministicProfile((first_stage_profile(grids, lambda y: s * np.where(y > 0, 1.0, -1.0)),
                                 second_stage_profile(grids, lambda y: s * np.where(y > 0, 1.0, -1.0))))
    closed = 2 * INST.k**2 * s**2 * (1 - math.sqrt(2 / math.pi)) + 4 * s**2 * norm.cdf(-s)
    assert closed == pytest.approx(0.40425954355, abs=1e-10)
    assert extend_and_evaluate(prof, grids).value == pytest.approx(closed, abs=1e-8)


def test_affine_profile_approaches_its_closed_form():
    grids = standard_grids(INST, 1024)
    s2 = INST.sigma**2
    prof = DeterministicProfile((first_stage_profile(grids, lambda y: y),
                                 second_stage_profile(grids, lambda y: s2 / (1 + s2) * y)))
    ev = extend_and_evaluate(prof, grids)
    assert abs(ev.value - float(affine_cost(INST, 1.0))) <= 2e-3
    assert float(affine_cost(INST, 1.0)) == pytest.approx(25 / 26, abs=1e-15)


def test_random_staircase_against_monte_carlo():
    grids = standard_grids(INST, 32)
    rng = np.random.default_rng(1)
    prof = DeterministicProfile((rng.integers(0, len(grids.grid_u1), 32),
                                 rng.integers(0, len(grids.grid_u2), 32)))
    ev = extend_and_evaluate(prof, grids)
    n = 400_000
    y1 = rng.normal(0, INST.sigma, n)
    u1 = grids.grid_u1[prof.maps[0][grids.qy1.cell(y1)]]
    y2 = u1 + rng.normal(size=n)
    u2 = grids.grid_u2[prof.maps[1][grids.qy2.cell(y2)]]
    c = INST.cost(y1, u1, u2)
    assert abs(ev.value - c.mean()) <= 5 * c.std() / math.sqrt(n)


def test_evaluation_rejects_mismatched_profiles():
    grids = standard_grids(INST, 16)
    with pytest.raises(ValueError):
        extend_and_evaluate(DeterministicProfile((np.zeros(8, dtype=int), np.zeros(16, dtype=int))), grids)


def test_unreachable_tolerance_raises():
    grids = standard_grids(INST, 16)
    prof = DeterministicProfile((first_stage_profile(grids, lambda y: y),
                                 second_stage_profile(grids, lambda y: y)))
    with pytest.raises(QuadratureError):
        extend_and_evaluate(prof, grids, QuadratureSpec(order=1, panels=1, tol=1e-15, max_doublings=1))


# -- affine benchmark ------------------------------------------------------------

def test_affine_benchmark_against_dense_scan():
    lam, value = affine_benchmark(INST)
    scan = np.linspace(0.0, 2.0, 100_001)
    assert value <= float(affine_cost(INST, scan).min()) + 1e-8
    assert lam == pytest.approx(0.9582575645, abs=1e-8)
    assert value < 1.0


def test_affine_endpoints():
    assert float(affine_cost(INST, 0.0)) == pytest.approx(INST.k**2 * INST.sigma**2)
    assert float(affine_cost(INST, 1.0)) == pytest.approx(25 / 26)


# -- pipeline ---------------------------------------------------------------------

def test_refinement_levels():
    assert refinement_levels(64) == [16, 32, 64]
    assert refinement_levels(16) == [16]
    assert refinement_levels(48) == [24, 48]
    assert refinement_levels(1) == [1]


@pytest.fixture(scope="module")
def pipeline():
    return run_pipeline(WitsenhausenConfig())


def test_pipeline_values(pipeline):
    finite = [r.finite_value for r in pipeline]
    assert [r.levels for r in pipeline] == [16, 32, 64]
    assert all(b <= a + 1e-12 for a, b in zip(finite, finite[1:]))
    _, affine = affine_benchmark(INST)
    assert pipeline[-1].continuous_value < affine
    assert pipeline[-1].continuous_value < 0.45
    assert all(r.quad_bound <= 1e-8 for r in pipeline)


@pytest.mark.xfail(strict=True, reason="representative-point density bias grows with the action range")
def test_gap_shrinks_with_refinement(pipeline):
    gap = [abs(r.finite_value - r.continuous_value) for r in pipeline]
    assert gap[-1] <= 5 * gap[0]


def test_pipeline_is_deterministic(pipeline):
    again = run_pipeline(WitsenhausenConfig())
    assert [r.continuous_value for r in again] == [r.continuous_value for r in pipeline]
