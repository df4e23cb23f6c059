import numpy as np
import pytest
from scipy.optimize import linprog as highs

from teamcorr.classical import enumerate_optimal
from teamcorr.model import (
    BehavioralPolicy,
    FiniteStaticTeam,
    chsh_team,
    random_team,
    strategic_measure_of_behavioral,
)
from teamcorr.relax import (
    HierarchyViolation,
    NonProductPriorError,
    build_m_lp,
    build_ns_lp,
    centralized_bound,
    dual_certificate,
    hierarchy_report,
    is_non_signaling,
    m_value,
    ns_value,
    solve_relaxation,
)


def pr_box():
    """P(u1, u2 | y1, y2) = 1/2 when u1 xor u2 = y1 y2, joint with the uniform prior."""
    p = np.zeros((1, 2, 2, 2, 2))
    for y1 in range(2):
        for y2 in range(2):
            for u1 in range(2):
                p[0, y1, y2, u1, u1 ^ (y1 * y2)] = 0.125
    return p


def random_behavioral(team, rng):
    pol = BehavioralPolicy(tuple(rng.dirichlet(np.ones(team.act_sizes[i]), size=team.obs_sizes[i])
                                 for i in range(team.num_dms)))
    return strategic_measure_of_behavioral(team, pol)


def test_chsh_relaxation_values():
    team = chsh_team()
    assert ns_value(team) == pytest.approx(1.0, abs=1e-9)
    assert m_value(team) == pytest.approx(1.0, abs=1e-9)
    assert centralized_bound(team) == pytest.approx(1.0, abs=1e-12)


def test_pr_box_is_non_signaling_and_wins():
    team = chsh_team()
    box = pr_box()
    assert build_ns_lp(team).residual(box) <= 1e-12
    assert is_non_signaling(team, box)
    assert float(np.sum(box * team.cost)) == pytest.approx(1.0)


def test_signaling_measure_is_rejected():
    # u2 copies y1: DM 2's action reveals DM 1's observation.
    p = np.zeros((1, 2, 2, 2, 2))
    for y1 in range(2):
        for y2 in range(2):
            p[0, y1, y2, 0, y1] = 0.25
    assert not is_non_signaling(chsh_team(), p)


@pytest.mark.parametrize("seed", range(8))
def test_single_dm_local_markov_equals_classical(seed):
    team = random_team(np.random.default_rng(seed), num_dms=1)
    assert m_value(team) == pytest.approx(enumerate_optimal(team)[0], abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_behavioral_measures_are_feasible(seed):
    rng = np.random.default_rng(seed)
    team = random_team(rng, num_dms=int(rng.integers(2, 4)), max_size=2)
    probs = random_behavioral(team, rng).probs
    assert build_ns_lp(team).residual(probs) <= 1e-12
    assert build_m_lp(team).residual(probs) <= 1e-12


@pytest.mark.parametrize("seed", range(12))
def test_relaxations_match_reference_solver(seed):
    rng = np.random.default_rng(seed)
    team = random_team(rng, num_dms=2, max_size=3, sense="maximize" if seed % 2 else "minimize")
    for lp in (build_ns_lp(team), build_m_lp(team)):
        value, sol = solve_relaxation(lp)
        ref = highs(lp.problem.c, A_eq=lp.problem.A, b_eq=lp.problem.b, bounds=(0, None), method="highs")
        assert value == pytest.approx(lp.sign * ref.fun, abs=1e-7)
        assert sol.certified()


@pytest.mark.parametrize("seed", range(6))
def test_dual_certificate(seed, tmp_path):
    team = random_team(np.random.default_rng(seed), num_dms=2, max_size=3)
    lp = build_ns_lp(team)
    value, sol = solve_relaxation(lp)
    cert = dual_certificate(team, lp, sol)
    assert cert.ok and cert.max_violation <= 1e-7
    assert cert.bound == pytest.approx(value, abs=1e-7)
    # the certified bound bounds every feasible measure, behavioral ones included
    probs = random_behavioral(team, np.random.default_rng(seed + 100)).probs
    assert float(np.sum(probs * team.cost)) >= cert.bound - 1e-9
    cert.save(tmp_path / "cert.txt")
    text = (tmp_path / "cert.txt").read_text()
    assert text.startswith("# teamcorr dual certificate v1") and "status: valid" in text


def test_tampered_dual_is_flagged():
    team = chsh_team()
    lp = build_ns_lp(team)
    _, sol = solve_relaxation(lp)
    bad = type(sol)(**{**sol.__dict__, "y": sol.y + 0.5})
    assert not dual_certificate(team, lp, bad).ok


@pytest.mark.parametrize("seed", range(10))
def test_hierarchy_chain_on_random_teams(seed):
    rng = np.random.default_rng(seed)
    team = random_team(rng, num_dms=2, max_size=3, sense="maximize" if seed % 2 else "minimize")
    table = dict(hierarchy_report(team))
    sgn = 1.0 if team.maximize else -1.0
    assert sgn * (table["ns"] - table["classical"]) >= -1e-7
    assert sgn * (table["m"] - table["ns"]) >= -1e-7
    assert sgn * (table["cj"] - table["m"]) >= -1e-7


def test_chsh_hierarchy_with_quantum():
    table = hierarchy_report(chsh_team())
    assert [c for c, _ in table] == ["classical", "quantum", "ns", "m", "cj"]
    values = dict(table)
    assert values["classical"] == pytest.approx(0.5)
    assert values["quantum"] == pytest.approx(np.sqrt(2) / 2, abs=1e-9)
    assert values["ns"] == pytest.approx(1.0)


def test_hierarchy_violation_carries_the_table():
    exc = HierarchyViolation("x", [("classical", 1.0)])
    assert exc.table == [("classical", 1.0)]


def test_non_product_prior_is_rejected():
    prior = np.array([[[0.5, 0.0], [0.0, 0.5]]])
    team = FiniteStaticTeam(2, 1, (2, 2), (2, 2), prior, np.zeros((1, 2, 2, 2, 2)))
    with pytest.raises(NonProductPriorError, match="static_reduce"):
        ns_value(team)
    with pytest.raises(NonProductPriorError):
        m_value(team)


def test_action_relabeling_keeps_values():
    rng = np.random.default_rng(21)
    team = random_team(rng, num_dms=2, max_size=3)
    perm = rng.permutation(team.act_sizes[0])
    cost = np.take(team.cost, perm, axis=1 + team.num_dms)
    relabeled = team.with_cost(cost)
    assert ns_value(relabeled) == pytest.approx(ns_value(team), abs=1e-9)
    assert m_value(relabeled) == pytest.approx(m_value(team), abs=1e-9)
