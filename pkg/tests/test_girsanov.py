import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bmg.errors import (
    AdaptednessError,
    AssumptionViolation,
    ConstructionInfeasible,
    CrossComponentError,
    SizeBudgetError,
)
from bmg.girsanov import (
    DensityEntry,
    build_filtration,
    check_eq5,
    closed_form_ratio,
    closed_form_tilt,
    coin_walk,
    explicit_walk,
    fixture_brownian_walk,
    fixture_exact_synthetic,
    girsanov_measure,
    girsanov_ratio,
    is_martingale,
    marginal_density,
    run_girsanov,
)
from bmg.girsanov.fixtures import gaussian_steps
from bmg.spaces import AtomicVectorMeasure, FiniteSpace, Partition

from oracles import law_under, path_martingale_gap, prefix_blocks


# -- filtrations and martingales ---------------------------------------------------

def test_coin_walk_filtration():
    p = coin_walk(2)
    F = build_filtration(p)
    assert F[0].partition == p.space.trivial_partition()
    assert F[1].partition == Partition(p.space, [["++", "+-"], ["-+", "--"]])
    assert F[2].partition == p.space.atomic_partition()
    assert F.is_increasing()


@given(st.integers(0, 2**32 - 1))
def test_filtration_matches_prefix_oracle(seed):
    p = fixture_exact_synthetic(seed % 1000, q=0.0).process
    F = build_filtration(p)
    assert F.is_increasing()
    for k in range(p.K + 1):
        oracle = {tuple(sorted(p.space.atoms[i] for i in b)) for b in prefix_blocks(p.values, k).values()}
        got = {tuple(sorted(b)) for b in F[k].blocks}
        assert got == oracle


def test_constant_process_is_martingale():
    p = coin_walk(2)
    rep = is_martingale(np.ones((3, 4)), p.measure, p.filtration, 1e-12)
    assert rep.passed and rep.max_gap == 0.0


def test_fair_walk_is_martingale():
    p = coin_walk(3)
    rep = is_martingale(p.values, p.measure, p.filtration, 1e-12)
    assert rep.passed
    assert rep.max_gap == pytest.approx(path_martingale_gap(p.values, p.values, p.measure.values), abs=1e-15)


def test_drifting_walk_fails_with_worst_triple():
    p = coin_walk(2, drift=0.3)
    rep = is_martingale(p.values, p.measure, p.filtration, 1e-9)
    assert not rep.passed
    worst = rep.worst()
    oracle = path_martingale_gap(p.values, p.values, p.measure.values)
    assert worst["gap"] == pytest.approx(oracle, rel=1e-12)
    assert worst["s"] == 0 and worst["v"] == 2
    assert rep.violations()


def test_non_adapted_process_rejected():
    p = coin_walk(2)
    x = p.values.copy()
    x[1] = [1.0, 2.0, 3.0, 4.0]
    with pytest.raises(AdaptednessError):
        is_martingale(x, p.measure, p.filtration, 1e-9)


# -- densities and ratios ------------------------------------------------------------

def test_marginal_density_of_coin_walk():
    p = coin_walk(2, p_up=0.25, v=(1.0, 2.0))
    df = marginal_density(p, 2)
    assert df.points.tolist() == [-2.0, 0.0, 2.0]
    oracle = law_under(p.measure.values, p.values[2], 2)
    for x, row in zip(df.points, df.density):
        assert row.tolist() == pytest.approx(oracle[x])
    assert np.allclose(df.reconstruct(df.points), p.measure.total)
    assert np.allclose(df.null_integral, df.points @ df.density)


def _entry(points, dens, time=1.0):
    dens = np.asarray(dens, dtype=float)
    return DensityEntry(1, time, np.asarray(points, dtype=float), dens, np.zeros(dens.shape[1]))


def test_ratio_with_zero_drift_is_one():
    df = _entry([0.0, 1.0], [[0.5, 1.0], [0.5, 1.0]])
    rf = girsanov_ratio(df, 0.0, 1e-12)
    assert rf.g.tolist() == [1.0, 1.0] and rf.discarded == 0.0
    assert check_eq5(df, rf, None, 1, 1e-12).passed


def test_ratio_requires_shifted_support():
    df = _entry([0.0, 1.0], [[0.5], [0.5]])
    with pytest.raises(AssumptionViolation, match="vanishes"):
        girsanov_ratio(df, 1.0, 1e-12)


def test_ratio_floor_drops_small_mass():
    df = _entry([0.0, 1.0], [[1e-12], [1.0]])
    rf = girsanov_ratio(df, 1.0, math.inf, floor=1e-9)
    assert rf.discarded == pytest.approx(1e-12)
    assert rf(0.0)[0] == 0.0


def test_ratio_cross_component_disagreement():
    # at x = 1 the coordinates give ratios 0.6 and 0.2
    df = _entry([-1.0, 0.0, 1.0], [[0.2, 0.2], [0.5, 0.5], [0.3, 0.1]])
    with pytest.raises(CrossComponentError):
        girsanov_ratio(df, 1.0, 1e-9, floor=0.25)
    rf = girsanov_ratio(df, 1.0, math.inf, floor=0.25)
    assert rf.max_deviation == pytest.approx(0.4)
    assert rf(0.0)[0] == pytest.approx(2.5)


def test_ratio_rejects_off_lattice_queries():
    rf = girsanov_ratio(_entry([0.0], [[1.0]]), 0.0, 1e-12)
    with pytest.raises(AssumptionViolation):
        rf(0.5)


# -- exact synthetic fixtures ----------------------------------------------------------

def test_default_drift_is_infeasible():
    with pytest.raises(ConstructionInfeasible, match="shifted preimage"):
        fixture_exact_synthetic(0)


@pytest.mark.parametrize("seed", range(20))
def test_exact_zero_drift_fixtures(seed):
    fx = fixture_exact_synthetic(seed, q=0.0)
    p = fx.process
    assert len(p.space) <= 64 and p.K in (1, 2)
    # non-diagonal: coordinates are not proportional
    Mv = p.measure.values
    assert np.linalg.matrix_rank(Mv) >= 2
    # independent martingale oracle for w and for the constant one
    assert path_martingale_gap(p.values, p.values, Mv) <= 1e-12
    b = run_girsanov(p, 1e-10)
    assert b.passed
    assert np.allclose(b.Q.values, Mv, rtol=0, atol=0)


def test_exact_fixture_is_deterministic():
    a = fixture_exact_synthetic(3, q=0.0).process
    b = fixture_exact_synthetic(3, q=0.0).process
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.measure.values, b.measure.values)


# -- negative controls -------------------------------------------------------------

def test_drift_breaks_a2_and_the_q_martingale():
    b = run_girsanov(coin_walk(2, drift=0.3), 1e-9)
    a = b.assumptions
    assert a.a1a.passed is False
    assert not a.a2.passed
    assert not b.theorem7.passed
    assert b.theorem7.martingale.worst() is not None


def test_drift_without_shift_support_fails_a1b():
    b = run_girsanov(coin_walk(2, q=0.5), 1e-9)
    a = b.assumptions
    assert not a.a1b.passed and a.a1b.max_gap == math.inf
    assert "not evaluated" in a.a1c.detail
    assert b.Q is None and not b.passed


# -- Brownian walk ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def brownian():
    fx = fixture_brownian_walk(steps=4)
    return fx, run_girsanov(fx.process, fx.tol, floor=fx.floor)


def test_brownian_pitch_is_aligned(brownian):
    fx, _ = brownian
    n = 0.5 * 0.0625 / fx.info["delta"]
    assert fx.info["delta"] <= 0.01 and n == round(n)


def test_brownian_checks_pass(brownian):
    fx, b = brownian
    assert b.passed
    assert b.theorem6.max_gap <= fx.tol
    assert b.theorem7.max_gap <= fx.tol


def test_brownian_ratio_matches_closed_form(brownian):
    fx, b = brownian
    p = fx.process
    for k, rf in enumerate(b.assumptions.ratios):
        y = p.state_values(k) + p.q * p.times[k]
        prob = p.probability(k)
        g = rf(y)
        weighted = np.sum(prob * np.abs(g - closed_form_ratio(p.q, p.times[k], y)))
        assert weighted <= fx.info["ratio_deviation"] + 1e-15


def test_ratio_and_tilt_agree_along_paths():
    q, t = 0.7, 1.3
    w = np.linspace(-2, 2, 9)
    assert np.allclose(closed_form_ratio(q, t, w + q * t), closed_form_tilt(q, t, w), rtol=1e-14)


def test_one_step_moment_sum():
    dt, q = 0.0625, 0.5
    probs = gaussian_steps(dt, 0.0078125)
    x = (np.arange(len(probs)) - (len(probs) - 1) // 2) * 0.0078125
    m0 = float(np.dot(probs, closed_form_tilt(q, dt, x)))
    assert abs(m0 - 1.0) <= 1e-8


def test_explicit_paths_match_the_markov_walk():
    fx = fixture_brownian_walk(steps=2, delta=0.05)
    ex = fixture_brownian_walk(steps=2, delta=0.05, explicit=True).process
    walk = fx.process
    for k in range(3):
        a, b = marginal_density(walk, k), marginal_density(ex, k)
        assert np.allclose(a.points, b.points)
        assert np.allclose(a.density, b.density, rtol=0, atol=1e-14)
    bw = run_girsanov(walk, fx.tol, floor=fx.floor)
    be = run_girsanov(ex, fx.tol, floor=fx.floor)
    assert bw.passed and be.passed
    assert abs(bw.theorem6.max_gap - be.theorem6.max_gap) <= 1e-14
    assert np.allclose(bw.Q.total(), be.Q.total, atol=1e-14)


def test_walk_states_are_unions_of_prefix_blocks():
    walk = fixture_brownian_walk(steps=2, delta=0.05).process
    ex = fixture_brownian_walk(steps=2, delta=0.05, explicit=True).process
    phi = lambda x: np.cos(3 * x) + x  # noqa: E731
    lhs = walk.integrate(1, {2: phi(walk.state_values(2))})
    blocks = ex.integrate(1, {2: phi(ex.state_values(2))})
    ends = ex.state_values(1)
    for x, row in zip(walk.state_values(1), lhs):
        assert np.allclose(row, blocks[np.isclose(ends, x)].sum(axis=0), rtol=1e-12, atol=1e-17)


def test_zero_drift_is_degenerate():
    fx = fixture_brownian_walk(steps=3, q=0.0)
    b = run_girsanov(fx.process, fx.tol, floor=fx.floor)
    assert fx.floor == 0.0
    assert all(np.all(r.g == 1.0) for r in b.assumptions.ratios)
    assert b.theorem6.max_gap <= 1e-14 and b.theorem7.max_gap <= 1e-14


def test_explicit_walk_budget():
    with pytest.raises(SizeBudgetError):
        explicit_walk(np.ones(101) / 101, 0.01, 0.1, 4, 0.0, (1.0,))


def test_measure_cross_check_on_paths():
    p = fixture_exact_synthetic(5, q=0.0).process
    ratios = run_girsanov(p, 1e-10).assumptions.ratios
    Q = girsanov_measure(p, ratios)
    assert isinstance(Q, AtomicVectorMeasure)
    assert np.array_equal(Q.total, p.measure.total)


def test_shifted_process_law_on_small_tree():
    # independent oracle for Q-law of w~ on a q = 0 tree: identical to the M-law
    p = fixture_exact_synthetic(8, q=0.0).process
    b = run_girsanov(p, 1e-10)
    for k in range(p.K + 1):
        m_law = law_under(p.measure.values, p.values[k], p.dim)
        q_law = law_under(b.Q.values, p.values[k], p.dim)
        assert m_law.keys() == q_law.keys()
        for x in m_law:
            assert np.allclose(m_law[x], q_law[x], atol=1e-15)


def test_space_atoms_unique_per_path():
    p = coin_walk(3)
    assert len(set(p.space.atoms)) == 8 and isinstance(p.space, FiniteSpace)
