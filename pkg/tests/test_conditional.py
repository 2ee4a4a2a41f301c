from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bmg.birkhoff import b1_integrate
from bmg.conditional import (
    SubSigmaAlgebra,
    check_defining,
    check_linearity,
    check_pull_out,
    check_tower,
    conditional_expectation,
    sigma_of,
)
from bmg.corpus import nested_case
from bmg.errors import InputError
from bmg.spaces import AtomicScalarMeasure, FiniteSpace, GridSpace, LebesgueMeasure, Partition

from oracles import block_ratio, term_scale

ABCD = FiniteSpace("abcd")


def test_sigma_of_examples():
    E = sigma_of({"a": 1, "b": 1, "c": 2, "d": 3}, ABCD)
    assert E.partition == Partition(ABCD, [["a", "b"], ["c"], ["d"]])
    assert sigma_of(lambda a: 5.0, ABCD).partition == ABCD.trivial_partition()
    assert sigma_of({"a": 1, "b": 2, "c": 3, "d": 4}, ABCD).partition == ABCD.atomic_partition()


def test_sigma_of_carries_levels():
    E = sigma_of({"a": 2.5, "b": -1.0, "c": 2.5, "d": -1.0}, ABCD)
    for block, level in zip(E.blocks, E.levels):
        assert level == {"a": 2.5, "c": 2.5, "b": -1.0, "d": -1.0}[block[0]]


def test_sigma_of_on_grid_reads_cells():
    g = GridSpace.uniform(0.0, 1.0, 4)
    E = sigma_of(g.piecewise([0, 1, 1, 0]), g)
    assert len(E) == 2


def test_block_ratio_example():
    mu = AtomicScalarMeasure(ABCD, np.array([1, 1, 2, 4]) / 8)
    F = {"a": (1, 0), "b": (3, 0), "c": (0, 2), "d": (0, 6)}
    E = SubSigmaAlgebra(Partition(ABCD, [["a", "b"], ["c", "d"]]))
    Z = conditional_expectation(F, mu, E)
    # exact: (1+3)/2 = 2 on {a,b}; (2*2 + 6*4)/6 = 14/3 on {c,d}
    exact = [(Fraction(2), Fraction(0)), (Fraction(0), Fraction(14, 3))]
    for k, (x, y) in enumerate(exact):
        assert np.allclose(Z.values[k], [float(x), float(y)], rtol=1e-15, atol=0)
    assert Z.at("b").coords == Z.at("a").coords
    assert not Z.null.any()


def test_trivial_and_full_algebras():
    mu = AtomicScalarMeasure(ABCD, [0.1, 0.2, 0.3, 0.4])
    F = {"a": (1.0,), "b": (2.0,), "c": (3.0,), "d": (4.0,)}
    Z = conditional_expectation(F, mu, SubSigmaAlgebra.trivial(ABCD))
    assert np.allclose(Z.values, [[3.0]])
    Z = conditional_expectation(F, mu, SubSigmaAlgebra.full(ABCD))
    assert np.allclose(Z(list("abcd"))[:, 0], [1, 2, 3, 4])


def test_null_block_is_zero_and_flagged():
    mu = AtomicScalarMeasure(ABCD, [0.5, 0.5, 0.0, 0.0])
    F = {a: (7.0, 7.0) for a in "abcd"}
    Z = conditional_expectation(F, mu, SubSigmaAlgebra(Partition(ABCD, [["a", "b"], ["c", "d"]])))
    assert Z.null.tolist() == [False, True]
    assert Z.values[1].tolist() == [0.0, 0.0]


def test_factor_map():
    mu = AtomicScalarMeasure(ABCD, [0.25] * 4)
    f = {"a": 0.0, "b": 0.0, "c": 1.0, "d": 1.0}
    F = {"a": (1.0,), "b": (3.0,), "c": (5.0,), "d": (5.0,)}
    Z = conditional_expectation(F, mu, sigma_of(f, ABCD))
    h = Z.factor
    assert h[0.0].coords == (2.0,) and h[1.0].coords == (5.0,)
    for a in "abcd":
        assert Z.at(a) == h[f[a]]
    assert conditional_expectation(F, mu, SubSigmaAlgebra.full(ABCD)).factor is None


def test_grid_block_ratio():
    g = GridSpace.uniform(0.0, 1.0, 2)
    mu = LebesgueMeasure(g)
    E = SubSigmaAlgebra(Partition(g, [((0.0, 0.5),), ((0.5, 1.0),)]))
    Z = conditional_expectation(lambda t: np.asarray(t)[:, None], mu, E, eps=1e-5)
    assert np.allclose(Z.values[:, 0], [0.25, 0.75], atol=2e-5)
    assert np.allclose(Z(np.array([0.1, 0.9]))[:, 0], [0.25, 0.75], atol=2e-5)


def test_algebra_on_other_space_rejected():
    mu = AtomicScalarMeasure(FiniteSpace("xy"), [1, 1])
    with pytest.raises(InputError):
        conditional_expectation({"x": (1,), "y": (1,)}, mu, SubSigmaAlgebra.trivial(ABCD))


def test_tower_needs_nested_algebras():
    mu = AtomicScalarMeasure(ABCD, [0.25] * 4)
    A = SubSigmaAlgebra(Partition(ABCD, [["a", "b"], ["c", "d"]]))
    B = SubSigmaAlgebra(Partition(ABCD, [["a", "c"], ["b", "d"]]))
    with pytest.raises(InputError):
        check_tower({a: (1.0,) for a in "abcd"}, mu, A, B)


def test_pull_out_rejects_non_measurable_factor():
    mu = AtomicScalarMeasure(ABCD, [0.25] * 4)
    E = SubSigmaAlgebra(Partition(ABCD, [["a", "b"], ["c", "d"]]))
    with pytest.raises(InputError):
        check_pull_out({"a": 1, "b": 2, "c": 3, "d": 3}, {a: (1.0,) for a in "abcd"}, mu, E)


# -- properties ------------------------------------------------------------------

def _tol(c):
    mu = dict(zip(c.space.atoms, c.mu.masses))
    return 1e-10 * (1 + term_scale(c.F, mu) / max(min(m for m in c.mu.masses if m > 0), 1e-300))


@given(st.integers(0, 2**32 - 1))
def test_matches_block_ratio_oracle(seed):
    n = nested_case(np.random.default_rng(seed))
    c = n.base
    mu = dict(zip(c.space.atoms, c.mu.masses))
    Z = conditional_expectation(c.F, c.mu, SubSigmaAlgebra(n.fine), norm=c.norm)
    oracle = np.array(block_ratio(c.F, mu, n.fine.blocks))
    assert np.max(np.abs(Z.values - oracle)) <= _tol(c)


@given(st.integers(0, 2**32 - 1))
def test_defining_identity_on_every_union(seed):
    n = nested_case(np.random.default_rng(seed))
    c = n.base
    E = SubSigmaAlgebra(n.coarse)
    if len(E) > 12:
        E = SubSigmaAlgebra(c.space.trivial_partition())
    Z = conditional_expectation(c.F, c.mu, E, norm=c.norm)
    Zt = dict(zip(c.space.atoms, Z(list(c.space.atoms))))
    for ids in E.sets():
        if not ids:
            continue  # both sides vanish on the empty set
        A = E.union(ids)
        lhs = b1_integrate(Zt, c.mu, A, norm=c.norm).value.array
        rhs = b1_integrate(c.F, c.mu, A, norm=c.norm).value.array
        assert np.max(np.abs(lhs - rhs)) <= _tol(c)


@given(st.integers(0, 2**32 - 1))
def test_laws(seed):
    n = nested_case(np.random.default_rng(seed))
    c = n.base
    fine, coarse = SubSigmaAlgebra(n.fine), SubSigmaAlgebra(n.coarse)
    scale = _tol(c) * (1 + abs(n.a) + abs(n.b)) * (1 + max(abs(v) for v in n.h.values()))
    assert check_defining(c.F, c.mu, fine, norm=c.norm).gap <= scale
    assert check_linearity(c.F, n.G, n.a, n.b, c.mu, fine, norm=c.norm).gap <= scale * 10
    assert check_tower(c.F, c.mu, coarse, fine, norm=c.norm).gap <= scale
    assert check_pull_out(n.h, c.F, c.mu, fine, norm=c.norm).gap <= scale
