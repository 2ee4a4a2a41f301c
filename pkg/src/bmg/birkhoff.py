"""Birkhoff-type integration by tagged-partition refinement.

``b1_integrate`` integrates a vector function against a nonnegative scalar
measure, ``b2_integrate`` a scalar function against a vector measure.  Both
engines refine a partition of the integration domain until the certified
bound on every tagged Riemann sum over finer partitions is at most ``eps``:

    bound = sum over blocks of  osc_B(integrand) * weight(B)

where ``weight`` is ``mu(B)`` for B1 and the variation of the vector measure
on ``B`` for B2.  On finite spaces the oscillation is an exact max over all
atom tags and refinement runs until the bound is exactly zero.  On grid
spaces the oscillation is estimated from ``samples`` tag candidates per block
(both endpoints, the midpoint and random interior points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping, NamedTuple

import numpy as np

from .errors import InputError, NonConvergenceError
from .spaces import (
    AtomicScalarMeasure,
    AtomicVectorMeasure,
    DensityVectorMeasure,
    GridSpace,
    LebesgueMeasure,
    Partition,
    ScalarMeasure,
    TaggedPartition,
    VectorMeasure,
    VectorValue,
    adaptive_quad,
    as_set,
    check_norm,
    evaluate,
    pushforward,
    vnorm,
)

DEFAULT_MAX_BLOCKS = 10**6
DEFAULT_SAMPLES = 8


@dataclass(frozen=True)
class IntegrationResult:
    value: VectorValue
    certified_bound: float
    refinement_rounds: int
    _space: object
    _domain: tuple
    _blocks: object  # finite: list of atom-id tuples; grid: (lo, hi) arrays
    _tags: object

    @property
    def n_blocks(self) -> int:
        return len(self._tags)

    @cached_property
    def partition_used(self) -> TaggedPartition:
        if self._space.kind == "finite":
            blocks = tuple(self._blocks)
            tags = tuple(self._tags)
        else:
            lo, hi = self._blocks
            blocks = tuple(((a, b),) for a, b in zip(lo.tolist(), hi.tolist()))
            tags = tuple(np.asarray(self._tags).tolist())
        part = Partition.trusted(self._space, blocks, self._domain)
        return TaggedPartition.trusted(part, tags)

    @property
    def grid_blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(lo, hi, tags)`` arrays of a grid result."""
        lo, hi = self._blocks
        return lo, hi, np.asarray(self._tags)


def _call(func, x):
    if isinstance(func, Mapping):
        return func[x]
    return func(x)


# --------------------------------------------------------------------------
# finite spaces


def _finite_refine(values: np.ndarray, weights: np.ndarray, norm: str):
    """Split contiguous index blocks until every block has zero bound.

    ``values`` are integrand values per atom (scalar or vector), ``weights``
    the nonnegative per-atom weights.  Returns block start offsets, rounds.
    """
    n = len(weights)
    starts = np.array([0], dtype=np.intp)
    rounds = 0
    while True:
        owner = np.repeat(np.arange(len(starts)), np.diff(np.append(starts, n)))
        dev = values - values[starts][owner]
        dev = np.abs(dev) if dev.ndim == 1 else vnorm(dev, norm)
        osc = np.maximum.reduceat(dev, starts)
        weight = np.add.reduceat(weights, starts)
        contrib = osc * weight
        bad = np.flatnonzero(contrib > 0)
        if bad.size == 0:
            return starts, rounds
        ends = np.append(starts, n)[1:]
        mids = (starts[bad] + ends[bad] + 1) // 2
        starts = np.union1d(starts, mids)
        rounds += 1


def _finite_result(space, A, values, masses, weights, norm, dim):
    starts, rounds = _finite_refine(values, weights, norm)
    n = len(A)
    ends = np.append(starts, n)[1:]
    block_mass = np.add.reduceat(masses, starts, axis=0)
    tag_vals = values[starts]
    if tag_vals.ndim == 1:
        terms = tag_vals[:, None] * block_mass
    else:
        terms = tag_vals * block_mass[:, None]
    value = np.sum(terms, axis=0) if len(terms) else np.zeros(dim)
    blocks = [tuple(A[s:e]) for s, e in zip(starts, ends)]
    tags = [A[s] for s in starts]
    return IntegrationResult(VectorValue.of(value, norm), 0.0, rounds, space, tuple(A), blocks, tags)


# --------------------------------------------------------------------------
# grid spaces


def _grid_start(space: GridSpace, A: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Intersect the domain with the space's cells."""
    lo, hi = [], []
    for a, b in A:
        for c0, c1 in space.cells:
            l, h = max(a, c0), min(b, c1)
            if h > l:
                lo.append(l)
                hi.append(h)
    return np.array(lo), np.array(hi)


def _sample_points(lo, hi, samples, rng):
    """Tag candidates per block: left end, last float before the right end,
    midpoint, and ``samples - 3`` uniform interior points."""
    mid = 0.5 * (lo + hi)
    cols = [lo, np.nextafter(hi, lo), mid]
    if samples > 3:
        u = rng.random((len(lo), samples - 3))
        cols.extend((lo[:, None] + u * (hi - lo)[:, None]).T)
    return np.stack(cols, axis=1)


def _grid_refine(lo, hi, evaluate_at: Callable, weight_of: Callable, eps: float, *,
                 samples: int, seed: int, max_blocks: int, norm: str = "L2",
                 pairwise: bool = False, what: str = "integral"):
    """Greedy batched bisection on interval blocks.

    ``evaluate_at(points)`` maps a flat point array to values ``(n, ...)``;
    ``weight_of(lo, hi)`` gives the per-block weight.  Each round bisects
    the largest contributions, as many as halving them would need to bring
    the sum down to ``eps``; rounds repeat until the sum is at most ``eps``.
    Returns ``lo, hi, mid-values, contributions, rounds``.
    """
    rng = np.random.default_rng(seed)
    samples = max(int(samples), 3)
    todo_lo, todo_hi = lo, hi
    keep_lo = keep_hi = np.empty(0)
    keep_c = np.empty(0)
    keep_mid = None
    rounds = 0
    while True:
        pts = _sample_points(todo_lo, todo_hi, samples, rng)
        vals = evaluate_at(pts.reshape(-1))
        vals = vals.reshape(pts.shape + vals.shape[1:])
        if vals.ndim == 2:
            vals = vals[:, :, None]
        if pairwise:
            diff = vals[:, :, None, :] - vals[:, None, :, :]
            osc = vnorm(diff, norm).reshape(len(todo_lo), -1).max(axis=1)
        else:
            osc = vnorm(vals - vals[:, 2:3, :], norm).max(axis=1)
        c = osc * weight_of(todo_lo, todo_hi)
        mid = vals[:, 2, :]
        # merge with untouched blocks and restore canonical (left-to-right) order
        all_lo = np.concatenate([keep_lo, todo_lo])
        all_hi = np.concatenate([keep_hi, todo_hi])
        all_c = np.concatenate([keep_c, c])
        all_mid = mid if keep_mid is None else np.concatenate([keep_mid, mid])
        order = np.argsort(all_lo, kind="stable")
        all_lo, all_hi, all_c, all_mid = all_lo[order], all_hi[order], all_c[order], all_mid[order]
        total = math.fsum(all_c)
        if total <= eps:
            return all_lo, all_hi, all_mid, all_c, rounds
        n = len(all_lo)
        # bisect the largest contributions until halving them would meet eps
        order = np.argsort(-all_c, kind="stable")
        need = np.searchsorted(np.cumsum(all_c[order]), 2.0 * (total - eps)) + 1
        split = np.zeros(n, dtype=bool)
        split[order[: min(int(need), n)]] = True
        if n + int(split.sum()) > max_blocks:
            raise NonConvergenceError(f"{what}: refinement budget exhausted", total, n)
        # blocks too narrow to bisect cannot improve
        sl, sh = all_lo[split], all_hi[split]
        m = 0.5 * (sl + sh)
        if np.any((m <= sl) | (m >= sh)):
            raise NonConvergenceError(f"{what}: blocks reached floating-point resolution", total, n)
        keep_lo, keep_hi, keep_c, keep_mid = all_lo[~split], all_hi[~split], all_c[~split], all_mid[~split]
        todo_lo = np.concatenate([sl, m])
        todo_hi = np.concatenate([m, sh])
        rounds += 1


def _grid_result(space, A, lo, hi, mid_vals, masses, contrib, rounds, norm):
    terms = mid_vals * (masses[:, None] if masses.ndim == 1 else masses)
    value = np.sum(terms, axis=0)
    tags = 0.5 * (lo + hi)
    return IntegrationResult(VectorValue.of(value, norm), float(math.fsum(contrib)), rounds,
                             space, A, (lo, hi), tags)


# --------------------------------------------------------------------------
# public engines


def b1_integrate(F, mu: ScalarMeasure, A=None, eps: float = 1e-6, *, norm: str = "L2",
                 samples: int = DEFAULT_SAMPLES, seed: int = 0,
                 max_blocks: int = DEFAULT_MAX_BLOCKS) -> IntegrationResult:
    """Integrate the vector function ``F`` over ``A`` against ``mu``.

    Raises :class:`NonConvergenceError` when ``max_blocks`` is reached
    before the certified bound drops to ``eps``.
    """
    if not eps > 0:
        raise InputError("eps must be positive")
    check_norm(norm)
    space = mu.space
    A = as_set(space, A)
    if space.kind == "finite":
        if not isinstance(mu, AtomicScalarMeasure):
            raise InputError("finite spaces need an atomic scalar measure")
        if not A:
            raise InputError("empty integration domain")
        idx = space.index(A)
        values = evaluate(F, space, A, vector=True)
        w = mu.masses[idx]
        return _finite_result(space, A, values, w, w, norm, values.shape[1])
    if not isinstance(mu, LebesgueMeasure):
        raise InputError("grid spaces integrate against Lebesgue measure")
    lo, hi = _grid_start(space, A)

    def at(t):
        return evaluate(F, space, t, vector=True)

    lo, hi, mid, c, rounds = _grid_refine(lo, hi, at, lambda a, b: b - a, eps,
                                        samples=samples, seed=seed, max_blocks=max_blocks,
                                        norm=norm, what="b1_integrate")
    return _grid_result(space, A, lo, hi, mid, hi - lo, c, rounds, norm)


def b2_integrate(f, M: VectorMeasure, A=None, eps: float = 1e-6, *,
                 samples: int = DEFAULT_SAMPLES, seed: int = 0,
                 max_blocks: int = DEFAULT_MAX_BLOCKS) -> IntegrationResult:
    """Integrate the scalar function ``f`` over ``A`` against ``M``."""
    if not eps > 0:
        raise InputError("eps must be positive")
    space = M.space
    A = as_set(space, A)
    norm = M.norm_tag
    if space.kind == "finite":
        if not isinstance(M, AtomicVectorMeasure):
            raise InputError("finite spaces need an atomic vector measure")
        if not A:
            raise InputError("empty integration domain")
        idx = space.index(A)
        values = evaluate(f, space, A)
        masses = M.values[idx]
        return _finite_result(space, A, values, masses, vnorm(masses, norm), norm, M.dim)
    if not isinstance(M, DensityVectorMeasure):
        raise InputError("grid spaces need a density vector measure")
    lo, hi = _grid_start(space, A)

    def at(t):
        return evaluate(f, space, t)

    lo, hi, mid, c, rounds = _grid_refine(lo, hi, at, M.interval_variation, eps,
                                        samples=samples, seed=seed, max_blocks=max_blocks,
                                        norm=norm, what="b2_integrate")
    return _grid_result(space, A, lo, hi, mid, M.interval_measure(lo, hi), c, rounds, norm)


def _dim_of(F, space) -> int:
    t = space.atoms[:1] if space.kind == "finite" else np.array([space.a])
    return evaluate(F, space, t, vector=True).shape[1]


def indefinite(F, mu: ScalarMeasure, eps: float = 1e-6, *, norm: str = "L2",
               **engine) -> VectorMeasure:
    """The vector measure ``A -> integral over A of F d mu``.

    Integrability is checked on the whole space at ``eps``; it then holds on
    every measurable subset.
    """
    space = mu.space
    if space.kind == "finite":
        dim = _dim_of(F, space)
        values = np.zeros((len(space), dim))
        for i, a in enumerate(space.atoms):
            values[i] = b1_integrate(F, mu, (a,), eps, norm=norm, **engine).value.array
        return AtomicVectorMeasure(space, values, norm)
    b1_integrate(F, mu, None, eps, norm=norm, **engine)
    return DensityVectorMeasure(space, F, _dim_of(F, space), norm)


@dataclass(frozen=True)
class DiscrepancyReport:
    terms: np.ndarray
    total: float
    partition: TaggedPartition


def _block_integrals(F, mu, blocks, *, norm="L2"):
    space = mu.space
    dim = _dim_of(F, space)
    if space.kind == "finite":
        vals = evaluate(F, space, space.atoms, vector=True)
        return np.array([np.sum(vals[space.index(b)] * mu.masses[space.index(b)][:, None], axis=0)
                         for b in blocks]).reshape(len(blocks), dim)
    rows = [(k, lo, hi) for k, b in enumerate(blocks) for lo, hi in b]
    k, lo, hi = np.array(rows).T
    parts = adaptive_quad(lambda t: evaluate(F, space, t, vector=True), lo, hi)
    out = np.zeros((len(blocks), dim))
    np.add.at(out, k.astype(np.intp), parts)
    return out


def discrepancy(F, mu: ScalarMeasure, tp: TaggedPartition, *, norm: str = "L2") -> DiscrepancyReport:
    """Per-block ``||F(t_j) mu(E_j) - integral over E_j of F||``."""
    space = mu.space
    blocks = tp.blocks
    tag_vals = evaluate(F, space, list(tp.tags) if space.kind == "finite" else np.asarray(tp.tags),
                        vector=True)
    if space.kind == "finite":
        block_mu = np.array([mu.measure(b) for b in blocks])
    else:
        block_mu = np.array([sum(hi - lo for lo, hi in b) for b in blocks])
    integrals = _block_integrals(F, mu, blocks, norm=norm)
    terms = vnorm(tag_vals * block_mu[:, None] - integrals, norm)
    return DiscrepancyReport(terms, float(np.sum(terms)), tp)


# --------------------------------------------------------------------------
# layered partition


def _band(x) -> np.ndarray:
    return np.floor(np.abs(np.asarray(x, dtype=float))).astype(np.int64) + 1


def _band_cuts(f, space: GridSpace, per_cell: int = 256) -> np.ndarray:
    """Points where the band index floor(|f|)+1 changes, located by bisection."""
    cuts = set(space.edges)
    for c0, c1 in space.cells:
        t = np.linspace(c0, c1, per_cell + 1)
        t[-1] = np.nextafter(c1, c0)
        j = _band(evaluate(f, space, t))
        for i in np.flatnonzero(np.diff(j) != 0):
            a, b = t[i], t[i + 1]
            ja = j[i]
            while True:
                m = 0.5 * (a + b)
                if m <= a or m >= b:
                    break
                if _band(evaluate(f, space, np.array([m])))[0] == ja:
                    a = m
                else:
                    b = m
            cuts.add(b)
    return np.array(sorted(cuts))


def layered_partition(f, F, mu: ScalarMeasure, eps: float = 1e-3, *, norm: str = "L2",
                      samples: int = DEFAULT_SAMPLES, seed: int = 0,
                      max_blocks: int = DEFAULT_MAX_BLOCKS) -> TaggedPartition:
    """Partition refining the bands ``{j-1 <= |f| < j}`` so that inside band
    ``j`` the summed discrepancy of ``F`` is at most ``eps / (j 2^j)``.

    The tagged partition then satisfies
    ``sum ||F(t) f(t) mu(E) - f(t) M(E)|| <= 2 eps`` with
    ``M(E) = integral over E of F``.
    """
    if not eps > 0:
        raise InputError("eps must be positive")
    space = mu.space
    if space.kind == "finite":
        # the atomic partition has zero discrepancy in every band
        P = space.atomic_partition()
        return TaggedPartition(P, tuple(b[0] for b in P.blocks))
    cuts = _band_cuts(f, space)
    seg_lo, seg_hi = cuts[:-1], cuts[1:]
    seg_band = _band(evaluate(f, space, 0.5 * (seg_lo + seg_hi)))

    def at(t):
        return evaluate(F, space, t, vector=True)

    out_lo, out_hi = [], []
    for j in np.unique(seg_band):
        sel = seg_band == j
        budget = eps / (float(j) * 2.0 ** float(j))
        lo, hi, _, _, _ = _grid_refine(seg_lo[sel], seg_hi[sel], at,
                                     lambda a, b: b - a, budget, samples=samples,
                                     seed=seed + int(j), max_blocks=max_blocks, norm=norm, pairwise=True,
                                     what=f"layered_partition band {j}")
        out_lo.append(lo)
        out_hi.append(hi)
    lo = np.concatenate(out_lo)
    hi = np.concatenate(out_hi)
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    part = Partition.trusted(space, tuple(((a, b),) for a, b in zip(lo.tolist(), hi.tolist())),
                             space.whole)
    return TaggedPartition.trusted(part, tuple((0.5 * (lo + hi)).tolist()))


def layered_double_sum(f, F, mu: ScalarMeasure, tp: TaggedPartition, *, norm: str = "L2") -> float:
    """``sum over blocks of ||F(t) f(t) mu(E) - f(t) M(E)||``."""
    space = mu.space
    tags = list(tp.tags) if space.kind == "finite" else np.asarray(tp.tags)
    fv = evaluate(f, space, tags)
    rep = discrepancy(F, mu, tp, norm=norm)
    # ||f(t) (F(t) mu(E) - M(E))|| = |f(t)| * discrepancy term
    return float(np.sum(np.abs(fv) * rep.terms))


# --------------------------------------------------------------------------
# identity checkers


class GapCheck(NamedTuple):
    lhs: VectorValue
    rhs: VectorValue
    gap: float
    bound: float


def product(f, F, space) -> Callable:
    """Pointwise product ``t -> f(t) F(t)``."""
    if space.kind == "finite":
        return lambda a: float(_call(f, a)) * np.asarray(_call(F, a), dtype=float)

    def fF(t):
        return evaluate(f, space, t)[:, None] * evaluate(F, space, t, vector=True)

    return fF


def check_substitution(f, F, mu: ScalarMeasure, eps: float = 1e-6, *, norm: str = "L2",
                       **engine) -> GapCheck:
    """Compare ``integral f F d mu`` (B1) with ``integral f dM`` (B2) where
    ``M`` is the indefinite integral of ``F``."""
    space = mu.space
    try:
        lhs = b1_integrate(product(f, F, space), mu, None, eps, norm=norm, **engine)
    except NonConvergenceError as exc:
        raise NonConvergenceError(f"substitution lhs (B1 of f*F): {exc}", exc.best_bound, exc.blocks)
    try:
        M = indefinite(F, mu, eps, norm=norm, **engine)
        rhs = b2_integrate(f, M, None, eps, **engine)
    except NonConvergenceError as exc:
        raise NonConvergenceError(f"substitution rhs (B2 of f dM): {exc}", exc.best_bound, exc.blocks)
    gap = (lhs.value - rhs.value).norm()
    return GapCheck(lhs.value, rhs.value, gap, 4 * eps)


def check_change_of_variable(g, f, m: VectorMeasure, eps: float = 1e-6, **engine) -> GapCheck:
    """Compare ``integral g(f) dm`` with ``integral g dm_f`` over the
    distribution of ``f``."""
    space = m.space
    if space.kind == "finite":
        gf = lambda a: g(float(_call(f, a)))  # noqa: E731
    else:
        gf = lambda t: evaluate(g, space, evaluate(f, space, t))  # noqa: E731
    lhs = b2_integrate(gf, m, None, eps, **engine)
    dist = pushforward(m, f)
    gv = np.array([g(c) for c in dist.support], dtype=float)
    rhs = VectorValue.of(np.sum(gv[:, None] * dist.masses, axis=0), m.norm_tag)
    gap = (lhs.value - rhs).norm()
    return GapCheck(lhs.value, rhs, gap, 2 * eps)
