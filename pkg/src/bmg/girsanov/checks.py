"""Densities, tilting ratios, the equivalent measure ``Q`` and its checks.

Every function takes a process *view* (:class:`~bmg.girsanov.process.PathProcess`
or :class:`~bmg.girsanov.walk.LatticeWalk`).  Densities are taken with
respect to counting measure on the per-time value lattice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..birkhoff import b2_integrate
from ..errors import AssumptionViolation, CrossComponentError
from ..spaces import AtomicVectorMeasure, FiniteSpace, vnorm
from .process import MartingaleReport, PathProcess, martingale_of, pair_report
from .walk import LatticeWalk, TiltedWalk

MATCH_RTOL = 1e-9


def locate(points: np.ndarray, targets, rtol: float = MATCH_RTOL) -> np.ndarray:
    """Index of each target in sorted ``points`` (``-1`` if absent)."""
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if len(points) == 0:
        return np.full(len(targets), -1)
    i = np.clip(np.searchsorted(points, targets), 0, len(points) - 1)
    j = np.clip(i - 1, 0, len(points) - 1)
    pick = np.where(np.abs(points[j] - targets) < np.abs(points[i] - targets), j, i)
    ok = np.abs(points[pick] - targets) <= rtol * np.maximum(1.0, np.abs(targets))
    return np.where(ok, pick, -1)


def _union(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    pts = np.sort(np.concatenate([a, b]))
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.diff(pts) > MATCH_RTOL * np.maximum(1.0, np.abs(pts[1:]))
    return pts[keep]


# --------------------------------------------------------------------------
# densities and ratios


@dataclass(frozen=True)
class DensityEntry:
    """Marginal of ``w_{s_k}``: ``f(x) = M(w^-1{x})`` w.r.t. counting measure."""

    k: int
    time: float
    points: np.ndarray
    density: np.ndarray
    null_integral: np.ndarray
    norm_tag: str = "L2"

    @property
    def reference_mass(self) -> np.ndarray:
        return np.ones(len(self.points))

    def reconstruct(self, B) -> np.ndarray:
        """``sum over x in B of f(x) lambda({x})``."""
        idx = locate(self.points, list(B))
        idx = idx[idx >= 0]
        return np.sum(self.density[idx] * self.reference_mass[idx, None], axis=0)

    def at(self, x) -> np.ndarray:
        idx = locate(self.points, x)
        out = np.zeros((len(idx), self.density.shape[1]))
        out[idx >= 0] = self.density[idx[idx >= 0]]
        return out


def marginal_density(p, k: int) -> DensityEntry:
    vals = p.state_values(k)
    mass = p.integrate(k, {})
    points, inv = np.unique(vals, return_inverse=True)
    dens = np.zeros((len(points), mass.shape[1]))
    np.add.at(dens, inv.reshape(-1), mass)
    return DensityEntry(k, p.times[k], points, dens, np.asarray(p.null_integral(k)), p.norm_tag)


@dataclass(frozen=True)
class RatioEntry:
    """``g_{s_k}`` on ``V_k`` united with the shifted lattice ``V_k + q s_k``."""

    k: int
    shift: float
    points: np.ndarray
    g: np.ndarray
    numerator: np.ndarray
    denominator: np.ndarray
    vanishing: np.ndarray
    deviation: np.ndarray
    discarded: float

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max(initial=0.0))

    def __call__(self, y) -> np.ndarray:
        idx = locate(self.points, y)
        if np.any(idx < 0):
            bad = float(np.atleast_1d(y)[np.flatnonzero(idx < 0)[0]])
            raise AssumptionViolation(f"g at time index {self.k} is undefined at {bad!r}")
        return self.g[idx]


def girsanov_ratio(df: DensityEntry, q: float, tol: float, *, floor: float = 0.0) -> RatioEntry:
    """Solve ``f(x) = g(x) f(x - q s)`` for ``g`` coordinate-wise.

    The first coordinate with a nonzero denominator defines ``g``; the other
    coordinates' disagreement is recorded.  Raises
    :class:`AssumptionViolation` where the numerator exceeds ``floor`` but the
    shifted density vanishes; numerators up to ``floor`` there get ``g = 0``
    and their mass is reported as ``discarded``.  Raises
    :class:`CrossComponentError` if coordinates disagree by more than ``tol``.
    """
    shift = q * df.time
    pts = _union(df.points, df.points + shift)
    num = df.at(pts)
    den = df.at(pts - shift)
    num_nz = np.abs(num) > floor
    den_nz = den != 0
    bad = num_nz & ~den_nz
    if np.any(bad):
        i = int(np.flatnonzero(bad.any(axis=1))[0])
        raise AssumptionViolation(
            f"time index {df.k}: density at {float(pts[i])!r} is nonzero but vanishes at the shifted "
            f"point {float(pts[i] - shift)!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(den_nz, num / np.where(den_nz, den, 1.0), np.nan)
    vanishing = ~den_nz.any(axis=1)
    # mass dropped by setting g = 0 below the floor
    discarded = float(np.sum(vnorm(num[vanishing], df.norm_tag)))
    first = np.argmax(den_nz, axis=1)
    g = np.where(vanishing, 0.0, ratios[np.arange(len(pts)), first])
    with np.errstate(invalid="ignore"):
        dev = np.nanmax(np.abs(ratios - g[:, None]), axis=1, initial=0.0)
    dev = np.where(vanishing, 0.0, dev)
    entry = RatioEntry(df.k, shift, pts, g, num, den, vanishing, dev, discarded)
    if entry.max_deviation > tol:
        i = int(np.argmax(dev))
        raise CrossComponentError(f"time index {df.k}: coordinate ratios at {float(pts[i])!r} "
                                  f"disagree by {dev[i]:.3g} > {tol:.3g}")
    return entry


@dataclass(frozen=True)
class Eq5Report:
    """``M_s(B)`` against ``int_B g dM_{w~_s}`` on singletons and the whole lattice."""

    k: int
    singleton_gaps: np.ndarray
    whole_lhs: np.ndarray
    whole_rhs: np.ndarray
    whole_gap: float
    tol: float

    @property
    def max_gap(self) -> float:
        return max(float(self.singleton_gaps.max(initial=0.0)), self.whole_gap)

    @property
    def passed(self) -> bool:
        return self.max_gap <= self.tol


def check_eq5(df: DensityEntry, rf: RatioEntry, p, k: int, tol: float) -> Eq5Report:
    live = ~rf.vanishing
    lhs = rf.numerator[live]
    rhs = rf.g[live, None] * rf.denominator[live]
    singles = vnorm(lhs - rhs, df.norm_tag)
    # whole lattice through the B2 engine over the distribution of w~
    shifted = df.points + rf.shift
    space = FiniteSpace(shifted.tolist())
    dist = AtomicVectorMeasure(space, df.density, df.norm_tag)
    gv = dict(zip(space.atoms, rf(shifted).tolist()))
    whole_rhs = b2_integrate(gv, dist).value.array
    whole_lhs = np.sum(df.density, axis=0)
    return Eq5Report(k, singles, whole_lhs, whole_rhs,
                     float(vnorm(whole_lhs - whole_rhs, df.norm_tag)), tol)


# --------------------------------------------------------------------------
# assumption reports


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    max_gap: float
    tol: float
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReports:
    a1a: CheckReport
    a1b: CheckReport
    a1c: CheckReport
    a2: CheckReport
    densities: tuple = field(repr=False)
    ratios: tuple | None = field(repr=False)
    eq5: tuple = field(repr=False, default=())
    a1c_report: MartingaleReport | None = field(repr=False, default=None)
    a2_report: MartingaleReport | None = field(repr=False, default=None)

    @property
    def all(self) -> tuple[CheckReport, ...]:
        return (self.a1a, self.a1b, self.a1c, self.a2)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.all)


def shifted_states(p, k: int) -> np.ndarray:
    return p.state_values(k) + p.q * p.times[k]


def ratio_factors(p, ratios) -> list[np.ndarray]:
    """``g_{s_k}(w~_{s_k})`` on the states of every time."""
    return [ratios[k](shifted_states(p, k)) for k in range(p.K + 1)]


def check_assumptions(p, tol: float, *, floor: float = 0.0) -> AssumptionReports:
    densities = tuple(marginal_density(p, k) for k in range(p.K + 1))
    nulls = [float(vnorm(d.null_integral, p.norm_tag)) for d in densities]
    a1a = CheckReport("A1a", max(nulls) <= tol, max(nulls), tol, "null integral of w_s")
    try:
        ratios = tuple(girsanov_ratio(d, p.q, tol, floor=floor) for d in densities)
    except AssumptionViolation as exc:
        skipped = "not evaluated: ratio g_s does not exist"
        return AssumptionReports(
            a1a, CheckReport("A1b", False, float("inf"), tol, str(exc)),
            CheckReport("A1c", False, float("inf"), tol, skipped),
            CheckReport("A2", False, float("inf"), tol, skipped), densities, None)
    eq5 = tuple(check_eq5(d, r, p, d.k, tol) for d, r in zip(densities, ratios))
    eq5_gap = max(r.max_gap for r in eq5)
    dev = max(r.max_deviation for r in ratios)
    a1b = CheckReport("A1b", eq5_gap <= tol and dev <= tol, max(eq5_gap, dev), tol,
                      f"density identity gap {eq5_gap:.3e}, cross-component deviation {dev:.3e}, "
                      f"discarded mass {sum(r.discarded for r in ratios):.3e}")
    g = ratio_factors(p, ratios)
    rep_c = martingale_of(p, g, tol)
    rep_2 = martingale_of(p, [shifted_states(p, k) * g[k] for k in range(p.K + 1)], tol)
    a1c = CheckReport("A1c", rep_c.passed, rep_c.max_gap, tol, "g_s(w~_s) martingale under M")
    a2 = CheckReport("A2", rep_2.passed, rep_2.max_gap, tol, "w~_s g_s(w~_s) martingale under M")
    return AssumptionReports(a1a, a1b, a1c, a2, densities, ratios, eq5, rep_c, rep_2)


# --------------------------------------------------------------------------
# the measure Q and its checks


def girsanov_measure(p, ratios, eps: float = 1e-12):
    """``Q(A) = int_A g_S(w~_S) dM``.

    For a :class:`PathProcess` this is an :class:`AtomicVectorMeasure` whose
    total is cross-checked against the B2 engine; for a lattice walk it is
    the tilted walk view.
    """
    K = p.K
    factor = ratios[K](shifted_states(p, K))
    if isinstance(p, LatticeWalk):
        return p.tilt(factor)
    per_atom = factor[p.filtration.labels[K]]
    values = per_atom[:, None] * p.measure.values
    Q = AtomicVectorMeasure(p.space, values, p.norm_tag)
    engine = b2_integrate(dict(zip(p.space.atoms, per_atom.tolist())), p.measure, None, eps)
    gap = float(vnorm(engine.value.array - Q.total, p.norm_tag))
    scale = float(np.sum(vnorm(values, p.norm_tag)))
    if gap > 1e-12 * max(scale, 1.0):
        raise AssumptionViolation(f"B2 aggregation of Q disagrees with atom sums by {gap:.3e}")
    return Q


def under(p, Q):
    """The process view with ``Q`` in place of ``M``."""
    if isinstance(Q, TiltedWalk):
        return Q
    if isinstance(p, PathProcess):
        return p.with_measure(Q)
    raise TypeError(f"cannot re-measure {type(p).__name__}")


def total_of(Q) -> np.ndarray:
    return Q.total() if isinstance(Q, TiltedWalk) else Q.total


@dataclass(frozen=True)
class MarginalRow:
    k: int
    time: float
    point: float
    m_mass: np.ndarray
    q_mass: np.ndarray
    gap: float


@dataclass(frozen=True)
class Theorem6Report:
    rows: list
    outside_gap: float
    q_total: np.ndarray
    m_total: np.ndarray
    tol: float

    @property
    def total_gap(self) -> float:
        return float(np.max(np.abs(self.q_total - self.m_total)))

    @property
    def max_gap(self) -> float:
        return max(max((r.gap for r in self.rows), default=0.0), self.outside_gap)

    @property
    def passed(self) -> bool:
        return self.max_gap <= self.tol


def verify_theorem6(p, Q, tol: float) -> Theorem6Report:
    """Compare the law of ``w~_s`` under ``Q`` with the law of ``w_s`` under ``M``.

    Gaps are max-coordinate differences of the two masses at each point.
    """
    qv = under(p, Q)
    rows = []
    outside = 0.0
    for k in range(p.K + 1):
        dm = marginal_density(p, k)
        qmass = qv.integrate(k, {})
        qpts, inv = np.unique(shifted_states(p, k), return_inverse=True)
        qd = np.zeros((len(qpts), qmass.shape[1]))
        np.add.at(qd, inv.reshape(-1), qmass)
        idx = locate(qpts, dm.points)
        matched = np.zeros_like(dm.density)
        matched[idx >= 0] = qd[idx[idx >= 0]]
        gaps = np.max(np.abs(matched - dm.density), axis=1)
        for x, fm, fq, gp in zip(dm.points, dm.density, matched, gaps):
            rows.append(MarginalRow(k, p.times[k], float(x), fm, fq, float(gp)))
        # Q-mass of w~ at points outside the M-lattice
        back = locate(dm.points, qpts)
        if np.any(back < 0):
            outside = max(outside, float(np.max(np.abs(qd[back < 0]))))
    return Theorem6Report(rows, outside, total_of(Q), p.total(), tol)


@dataclass(frozen=True)
class Theorem7Report:
    martingale: MartingaleReport
    identity_i: MartingaleReport
    identity_ii: MartingaleReport
    identity_iii: MartingaleReport

    @property
    def passed(self) -> bool:
        return all(r.passed for r in (self.martingale, self.identity_i, self.identity_ii,
                                      self.identity_iii))

    @property
    def max_gap(self) -> float:
        return max(r.max_gap for r in (self.martingale, self.identity_i, self.identity_ii,
                                       self.identity_iii))


def verify_theorem7(p, Q, ratios, tol: float) -> Theorem7Report:
    """Martingale property of ``w~`` under ``Q`` plus the three intermediate
    identities of the argument, on every state ``E`` at every time ``s``."""
    qv = under(p, Q)
    K = p.K
    g = ratio_factors(p, ratios)
    wt = [shifted_states(p, k) for k in range(K + 1)]
    w = [p.state_values(k) for k in range(K + 1)]
    mart = martingale_of(qv, wt, tol)
    ident_i = pair_report(p, lambda s, v: qv.integrate(s, {v: wt[v]}),
                          lambda s, v: p.integrate(s, {v: wt[v] * g[v]}), tol)
    same = [(s, s) for s in range(K + 1)]
    ident_ii = pair_report(p, lambda s, _: qv.integrate(s, {}),
                           lambda s, _: p.integrate(s, {s: g[s]}), tol, pairs=same)
    ident_iii = pair_report(p, lambda s, _: p.integrate(s, {s: w[s] * g[s]}),
                            lambda s, _: qv.integrate(s, {s: w[s]}), tol, pairs=same)
    return Theorem7Report(mart, ident_i, ident_ii, ident_iii)


@dataclass(frozen=True)
class GirsanovBundle:
    assumptions: AssumptionReports
    Q: object
    theorem6: Theorem6Report | None
    theorem7: Theorem7Report | None

    @property
    def passed(self) -> bool:
        return (self.assumptions.passed and self.theorem6 is not None and self.theorem6.passed
                and self.theorem7 is not None and self.theorem7.passed)


def run_girsanov(p, tol: float, *, floor: float = 0.0) -> GirsanovBundle:
    """Assumption checks, then ``Q`` with its marginal and martingale checks."""
    rep = check_assumptions(p, tol, floor=floor)
    if rep.ratios is None:
        return GirsanovBundle(rep, None, None, None)
    Q = girsanov_measure(p, rep.ratios)
    return GirsanovBundle(rep, Q, verify_theorem6(p, Q, tol), verify_theorem7(p, Q, rep.ratios, tol))
