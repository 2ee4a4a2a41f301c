"""Acceptance gate: criteria 1-10 at their stated tolerances.

Each test prints one ``PASS``/``FAIL criterion N: ...`` line (shown even
under output capture).  Run just this file with::

    pytest tests/test_acceptance.py -v
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from bmg.birkhoff import (
    b1_integrate,
    b2_integrate,
    check_change_of_variable,
    check_substitution,
    layered_double_sum,
    layered_partition,
)
from bmg.cli import main
from bmg.conditional import (
    SubSigmaAlgebra,
    check_defining,
    check_linearity,
    check_pull_out,
    check_tower,
)
from bmg.corpus import case_rng, finite_case, grid_integrand, layered_case, nested_case, unit_grid
from bmg.errors import ConstructionInfeasible
from bmg.girsanov import (
    closed_form_ratio,
    closed_form_tilt,
    fixture_brownian_walk,
    fixture_exact_synthetic,
    run_girsanov,
)
from bmg.spaces import LebesgueMeasure, vnorm

from oracles import atom_sum, term_scale

SEED = 20240601


@pytest.fixture
def verdict(capsys):
    def emit(n: int, ok: bool, text: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {text}")
        assert ok, f"criterion {n}: {text}"
    return emit


def _rel_err(got, values, weights):
    want = np.asarray(atom_sum(values, weights))
    return float(np.max(np.abs(np.asarray(got) - want))) / max(term_scale(values, weights), 1e-300)


def test_criterion_1_oracle_equivalence(verdict):
    start = time.perf_counter()
    worst, norms = 0.0, set()
    for i in range(1000):
        c = finite_case(case_rng(SEED, i))
        norms.add(c.norm)
        mu = dict(zip(c.space.atoms, c.mu.masses))
        M = dict(zip(c.space.atoms, c.M.values))
        worst = max(worst,
                    _rel_err(b1_integrate(c.F, c.mu, norm=c.norm).value.array, c.F, mu),
                    _rel_err(b2_integrate(c.f, c.M).value.array, c.f, M))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed <= 10 and norms == {"L1", "L2", "Linf"}
    verdict(1, ok, f"1000 cases, max relative error {worst:.2e} (<= 1e-12), "
                   f"norms {sorted(norms)}, {elapsed:.1f} s (<= 10 s)")


def test_criterion_2_substitution(verdict):
    start = time.perf_counter()
    worst = 0.0
    for i in range(1000):
        c = finite_case(case_rng(SEED + 2, i))
        worst = max(worst, check_substitution(c.f, c.F, c.mu, norm=c.norm).gap)
    elapsed = time.perf_counter() - start
    verdict(2, worst <= 1e-10 and elapsed <= 10,
            f"1000 triples, max gap {worst:.2e} (<= 1e-10), {elapsed:.1f} s (<= 10 s)")


def test_criterion_3_change_of_variable(verdict):
    worst = 0.0
    for i in range(1000):
        c = finite_case(case_rng(SEED + 2, i))
        worst = max(worst, check_change_of_variable(c.g, c.f, c.M).gap)
    verdict(3, worst <= 1e-10, f"1000 cases, max gap {worst:.2e} (<= 1e-10)")


def test_criterion_4_certificate(verdict):
    start = time.perf_counter()
    mu = LebesgueMeasure(unit_grid())
    worst, kinds = 0.0, set()
    for i, eps in enumerate(np.logspace(-2, -6, 100)):
        F = grid_integrand(case_rng(SEED + 4, i), kind=("poly", "trig")[i % 2], variation=1.0)
        kinds.add((F.kind, F.dim))
        res = b1_integrate(F, mu, eps=float(eps))
        lo, hi, tags = res.grid_blocks
        # independent per-cell oracle: exact antiderivatives
        disc = math.fsum(vnorm(F(tags) * (hi - lo)[:, None] - F.integral(lo, hi), "L2"))
        worst = max(worst, disc / eps)
    elapsed = time.perf_counter() - start
    ok = worst <= 1.0 and elapsed <= 60
    verdict(4, ok, f"100 eps in [1e-6, 1e-2], max discrepancy/eps {worst:.3f} (<= 1), "
                   f"{len(kinds)} kind/dim combinations, {elapsed:.1f} s (<= 60 s)")


def test_criterion_5_layered_bound(verdict):
    mu = LebesgueMeasure(unit_grid())
    worst = 0.0
    for i in range(50):
        c = layered_case(case_rng(SEED + 5, i))
        f = c.f.scalar()
        tp = layered_partition(f, c.F, mu, c.eps)
        worst = max(worst, layered_double_sum(f, c.F, mu, tp) / (2 * c.eps))
    verdict(5, worst <= 1.0, f"50 grid cases, max double sum / (2 eps) {worst:.3f} (<= 1)")


def test_criterion_6_conditional_laws(verdict):
    worst = {"defining": 0.0, "linearity": 0.0, "tower": 0.0, "pull-out": 0.0}
    for i in range(500):
        n = nested_case(case_rng(SEED + 6, i))
        c = n.base
        fine, coarse = SubSigmaAlgebra(n.fine), SubSigmaAlgebra(n.coarse)
        gaps = {"defining": check_defining(c.F, c.mu, coarse, norm=c.norm).gap,
                "linearity": check_linearity(c.F, n.G, n.a, n.b, c.mu, coarse, norm=c.norm).gap,
                "tower": check_tower(c.F, c.mu, coarse, fine, norm=c.norm).gap,
                "pull-out": check_pull_out(n.h, c.F, c.mu, fine, norm=c.norm).gap}
        for k, g in gaps.items():
            worst[k] = max(worst[k], g)
    text = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    verdict(6, max(worst.values()) <= 1e-10, f"500 nested cases, max gaps {text} (<= 1e-10)")


def _exact_fixtures():
    built, failures = [], []
    for seed in range(50):
        try:
            built.append(fixture_exact_synthetic(seed))
        except ConstructionInfeasible as exc:
            failures.append((seed, str(exc)))
    return built, failures


def test_criterion_7_marginals_exact(verdict):
    built, failures = _exact_fixtures()
    worst6, worst_total = 0.0, 0.0
    for fx in built:
        b = run_girsanov(fx.process, 1e-10)
        worst6 = max(worst6, b.theorem6.max_gap if b.theorem6 else math.inf)
        worst_total = max(worst_total, b.theorem6.total_gap if b.theorem6 else math.inf)
    ok = not failures and worst6 <= 1e-10 and worst_total <= 1e-12
    detail = f"first: seed {failures[0][0]}: {failures[0][1]}" if failures else ""
    gaps = (f"max marginal gap {worst6:.2e}, Q(T)-M(T) {worst_total:.2e}" if built
            else "no gaps measured")
    verdict(7, ok, f"{len(built)}/50 fixtures built, {gaps}. {detail}")


def test_criterion_8_q_martingale_exact(verdict):
    built, failures = _exact_fixtures()
    worst = 0.0
    for fx in built:
        b = run_girsanov(fx.process, 1e-10)
        worst = max(worst, b.theorem7.max_gap if b.theorem7 else math.inf)
    ok = not failures and worst <= 1e-10
    detail = f"first: seed {failures[0][0]}: {failures[0][1]}" if failures else ""
    gaps = f"max gap {worst:.2e}" if built else "no gaps measured"
    verdict(8, ok, f"{len(built)}/50 fixtures built, {gaps}. {detail}")


def test_criterion_9_brownian(verdict):
    start = time.perf_counter()
    fx = fixture_brownian_walk(16, 0.0625, 0.01, 0.5, (1.0, 2.0))
    p = fx.process
    # (a) closed-form algebra at every state of every time
    alg = 0.0
    for k in range(p.K + 1):
        t, w = p.times[k], p.state_values(k)
        lhs, rhs = closed_form_ratio(p.q, t, w + p.q * t), closed_form_tilt(p.q, t, w)
        alg = max(alg, float(np.max(np.abs(lhs - rhs))))
    b = run_girsanov(p, fx.tol, floor=fx.floor)
    a = b.assumptions
    assumption_gap = max(r.max_gap for r in a.all)
    t6 = b.theorem6.max_gap if b.theorem6 else math.inf
    z = fixture_brownian_walk(16, 0.0625, 0.01, 0.0, (1.0, 2.0))
    bz = run_girsanov(z.process, 1e-12)
    zero = max(max(r.max_gap for r in bz.assumptions.all), bz.theorem6.max_gap,
               bz.theorem7.max_gap)
    elapsed = time.perf_counter() - start
    ok = (alg <= 1e-12 and a.passed and t6 <= fx.tol and zero <= 1e-12 and bz.passed
          and elapsed <= 120)
    verdict(9, ok, f"(a) {alg:.1e} (<= 1e-12); (b) A1a-A2 max gap {assumption_gap:.2e}, "
                   f"(c) marginal gap {t6:.2e}, declared tol {fx.tol:.2e} at pitch "
                   f"{fx.info['delta']}; (d) q = 0 max gap {zero:.1e} (<= 1e-12); "
                   f"{elapsed:.1f} s (<= 120 s)")


COMMANDS = [
    ["check", "substitution", "--random", "1000", "--seed", str(SEED)],
    ["check", "changevar", "--random", "1000", "--seed", str(SEED)],
    ["check", "condexp", "--random", "500", "--seed", str(SEED)],
    ["check", "martingale", "--random", "50", "--seed", str(SEED)],
    ["girsanov", "--fixture", "exact", "--seed", "11"],
    ["girsanov", "--fixture", "brownian", "--steps", "16", "--dt", "0.0625", "--delta", "0.01",
     "--q", "0.5"],
]


def test_criterion_10_determinism(verdict, tmp_path, capsys):
    differing = []
    for j, argv in enumerate(COMMANDS):
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{j}{rep}"
            main(argv + ["--out", str(out)])
            outs.append({f.name: f.read_bytes() for f in sorted(Path(out).iterdir())})
        if outs[0] != outs[1]:
            differing.append(" ".join(argv))
    capsys.readouterr()
    verdict(10, not differing, f"{len(COMMANDS)} commands rerun, "
                               f"{len(COMMANDS) - len(differing)} byte-identical"
                               + (f"; differing: {differing}" if differing else ""))
