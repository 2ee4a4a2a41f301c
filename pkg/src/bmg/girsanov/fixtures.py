"""Ready-made processes: the discretized Brownian walk, exact synthetic trees
and small coin-flip walks used as positive and negative controls."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConstructionInfeasible, InputError, SizeBudgetError
from ..spaces import AtomicVectorMeasure, FiniteSpace, vnorm
from .process import PathProcess
from .walk import LatticeWalk

ATOM_BUDGET = 10**6


@dataclass(frozen=True)
class Fixture:
    """A process together with the tolerance its checks are expected to meet."""

    process: object
    tol: float
    floor: float = 0.0
    info: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# discretized Brownian walk


def aligned_pitch(q: float, dt: float, delta: float) -> float:
    """Largest pitch ``<= delta`` with ``q*dt`` on the lattice."""
    if q == 0:
        return float(delta)
    shift = abs(q) * dt
    n = math.ceil(shift / delta - 1e-9)
    return shift / n


def gaussian_steps(dt: float, delta: float, truncation: float = 6.0) -> np.ndarray:
    """Discretized ``N(0, dt)`` on ``delta * {-J..J}``, cut at ``truncation`` sd."""
    J = int(math.floor(truncation * math.sqrt(dt) / delta + 1e-9))
    x = np.arange(-J, J + 1) * delta
    p = np.exp(-x * x / (2 * dt))
    return p / p.sum()


def closed_form_ratio(q: float, t, y):
    """``exp(-q y + q^2 t / 2)``: the Gaussian density ratio at drift ``q``."""
    return np.exp(-q * np.asarray(y, dtype=float) + 0.5 * q * q * np.asarray(t, dtype=float))


def closed_form_tilt(q: float, t, w):
    """``exp(-q w - q^2 t / 2)``: the tilt evaluated along the unshifted path."""
    return np.exp(-q * np.asarray(w, dtype=float) - 0.5 * q * q * np.asarray(t, dtype=float))


def _tilt_moments(p: np.ndarray, delta: float, dt: float, q: float) -> tuple[float, float]:
    J = (len(p) - 1) // 2
    x = np.arange(-J, J + 1) * delta
    e = np.exp(-q * x - 0.5 * q * q * dt)
    m0 = float(np.dot(p, e))
    m1 = float(np.dot(p, x * e))
    return m0 - 1.0, abs(m1 + q * dt * m0)


def _declared_tolerance(walk: LatticeWalk, floor: float) -> tuple[float, dict]:
    """Bound on every assumption and marginal gap of the truncated walk.

    Per step, the closed-form tilt has multiplicative defect ``r`` and the
    tilted increment mean misses ``-q dt`` by ``c``.  Iterating over ``K``
    steps bounds the martingale defects of ``G`` and ``w~ G``; the
    data-derived ratio differs from ``G`` by the mass-weighted deviation
    ``D_k``; the floor drops at most ``discarded`` mass.
    """
    from .checks import girsanov_ratio, marginal_density

    q, K, dt = walk.q, walk.K, walk.dt
    r, c = _tilt_moments(walk.probs, walk.delta, dt, q)
    grow = (1.0 + abs(r)) ** K
    w_max = K * walk.J * walk.delta + abs(q) * K * dt
    a1c = grow * (grow - 1.0)
    a2 = grow * (w_max * (grow - 1.0) + K * c)
    dev, dropped = 0.0, 0.0
    for k in range(K + 1):
        df = marginal_density(walk, k)
        rf = girsanov_ratio(df, q, math.inf, floor=floor)
        x = walk.state_values(k)
        y = x + q * walk.times[k]
        g = rf(y)
        prob = walk.probability(k)
        dev = max(dev, float(np.sum(prob * np.abs(g - closed_form_ratio(q, walk.times[k], y))
                                    * (1.0 + np.abs(y)))))
        dropped = max(dropped, rf.discarded)
    vn = float(vnorm(walk.v, walk.norm_tag))
    body = (1.0 + w_max) * (2.0 * dev + a1c) + a2 + (1.0 + w_max) * dropped / vn
    tol = 2.0 * vn * body + 1e-12 * vn * (1.0 + w_max)
    terms = {"step_tilt_defect": r, "step_mean_defect": c, "max_abs_state": w_max,
             "ratio_deviation": dev, "floored_mass": dropped, "a1c_bound": a1c, "a2_bound": a2}
    return tol, terms


def _lower_band_floor(walk: LatticeWalk) -> float:
    """Largest density on points whose shifted preimage leaves the support.

    Those points exist only because of the truncation; treating densities up
    to this size as zero is the least floor under which the ratio exists.
    """
    if walk.q == 0:
        return 0.0
    floor = 0.0
    for k in range(1, walk.K + 1):
        n = int(round(abs(walk.q) * walk.times[k] / walk.delta))
        p = walk.probability(k)
        band = p[:n] if walk.q > 0 else p[len(p) - n:]
        floor = max(floor, float(band.max(initial=0.0)) * float(np.max(np.abs(walk.v))))
    return floor * (1.0 + 1e-9)


def fixture_brownian_walk(steps: int = 16, dt: float = 0.0625, delta: float = 0.01,
                          q: float = 0.5, v=(1.0, 2.0), *, norm: str = "L2",
                          truncation: float = 6.0, explicit: bool = False) -> Fixture:
    """Gaussian-increment walk on a lattice aligned with the drift.

    ``delta`` is an upper bound on the pitch: when ``q*dt`` is not a multiple
    of it the pitch shrinks to ``q*dt / ceil(q*dt / delta)``.  With
    ``explicit=True`` the paths are enumerated as atoms (small cases only).
    """
    if steps < 0 or dt <= 0 or delta <= 0 or not math.isfinite(q):
        raise InputError("steps >= 0, dt > 0, delta > 0 and finite q are required")
    pitch = aligned_pitch(q, dt, delta)
    probs = gaussian_steps(dt, pitch, truncation)
    walk = LatticeWalk(probs, pitch, dt, steps, q, np.asarray(v, dtype=float), norm)
    floor = _lower_band_floor(walk)
    tol, terms = _declared_tolerance(walk, floor)
    info = {"requested_delta": float(delta), "delta": pitch, "steps": steps, "dt": dt, "q": q,
            "truncation_sd": truncation, "increments": len(probs), **terms}
    process = walk
    if explicit:
        process = explicit_walk(probs, pitch, dt, steps, q, walk.v, norm)
    return Fixture(process, tol, floor, info)


def explicit_walk(probs, delta: float, dt: float, steps: int, q: float, v, norm: str = "L2"
                  ) -> PathProcess:
    """Enumerate every path of a lattice walk as an atom of a finite space."""
    probs = np.asarray(probs, dtype=float)
    J = (len(probs) - 1) // 2
    n_paths = len(probs) ** steps
    if n_paths > ATOM_BUDGET:
        raise SizeBudgetError(f"{n_paths} paths exceed the budget of {ATOM_BUDGET} atoms")
    idx = np.array(list(itertools.product(range(len(probs)), repeat=steps)), dtype=np.intp)
    idx = idx.reshape(n_paths, steps)
    pos = np.concatenate([np.zeros((n_paths, 1), dtype=np.intp),
                          np.cumsum(idx - J, axis=1)], axis=1)
    P = np.prod(probs[idx], axis=1)
    space = FiniteSpace(range(n_paths))
    M = AtomicVectorMeasure(space, np.outer(P, np.atleast_1d(v)), norm)
    times = [k * dt for k in range(steps + 1)]
    return PathProcess(space, M, times, (pos * delta).T, q)


def coin_walk(steps: int = 2, *, drift: float = 0.0, p_up: float = 0.5, v=(1.0, 2.0),
              q: float = 0.0, norm: str = "L2") -> PathProcess:
    """``+-1`` walk with an added per-step ``drift``; atoms are sign strings."""
    paths = list(itertools.product((1, -1), repeat=steps))
    atoms = ["".join("+" if x > 0 else "-" for x in path) or "0" for path in paths]
    P = np.array([np.prod([p_up if x > 0 else 1 - p_up for x in path]) for path in paths])
    steps_arr = np.array(paths, dtype=float).reshape(len(paths), steps) + drift
    values = np.concatenate([np.zeros((len(paths), 1)), np.cumsum(steps_arr, axis=1)], axis=1).T
    space = FiniteSpace(atoms)
    M = AtomicVectorMeasure(space, np.outer(P, np.atleast_1d(v)), norm)
    return PathProcess(space, M, list(range(steps + 1)), values, q)


# --------------------------------------------------------------------------
# exact synthetic trees


def _balanced_weights(rng, d: np.ndarray, mass: float) -> np.ndarray:
    """Positive weights summing to ``mass`` with zero mean displacement ``d``."""
    a = rng.uniform(0.5, 1.5, len(d))
    up, down = d > 0, d < 0
    a[up] *= np.sum(a[down] * -d[down]) / np.sum(a[up] * d[up])
    return mass * a / a.sum()


def _density_support_closes(values: np.ndarray, shift: float) -> bool:
    """A finite positive density with ``f(x) = g(x) f(x - shift)`` needs the
    support to be closed under ``x -> x - shift``; true only for ``shift == 0``."""
    lattice = set(np.round(values / 2.0**-20).astype(np.int64).tolist())
    step = int(round(shift / 2.0**-20))
    return all(x - step in lattice for x in lattice)


def fixture_exact_synthetic(seed: int, q: float | None = None, *, retries: int = 32,
                            tol: float = 1e-12) -> Fixture:
    """Small tree process satisfying both assumption sets exactly.

    The builder draws a time grid with 2 or 3 points, a lattice tree with at
    most 64 leaves and, per coordinate, positive transition weights with zero
    mean displacement, so ``w`` is a martingale under a non-diagonal ``M``.
    Each draw is verified with :func:`check_assumptions` at ``tol``.

    ``q=None`` draws a nonzero drift.  For a finite tree the lowest point of
    ``range(w_s)`` has positive density while its shifted preimage lies
    outside the range, so every draw with ``q*s != 0`` is rejected and
    :class:`ConstructionInfeasible` is raised once ``retries`` is spent.
    """
    from .checks import check_assumptions

    rng = np.random.default_rng(seed)
    drawn = q is None
    reasons = []
    for _ in range(retries):
        qq = float(rng.choice([0.25, 0.5, 1.0]) * rng.choice([-1, 1])) if drawn else float(q)
        p = _draw_tree(rng, qq)
        bad = [k for k in range(1, p.K + 1)
               if not _density_support_closes(p.values[k], qq * p.times[k])]
        if bad:
            reasons.append(f"q={qq}: range of w at time index {bad[0]} is not closed under "
                           f"the shift {qq * p.times[bad[0]]}")
            continue
        rep = check_assumptions(p, tol)
        if rep.passed:
            return Fixture(p, tol, 0.0, {"seed": seed, "q": qq, "atoms": len(p.space),
                                         "times": list(p.times), "attempts": len(reasons) + 1})
        reasons.append("; ".join(f"{r.name} gap {r.max_gap:.3g}" for r in rep.all if not r.passed))
    raise ConstructionInfeasible(
        f"seed {seed}: no exact fixture after {retries} draws. A finite positive density "
        f"cannot satisfy f(x) = g(x) f(x - q s) for q s != 0, since the lowest lattice point "
        f"has no shifted preimage in the support. Last reason: {reasons[-1]}")


def _draw_tree(rng, q: float) -> PathProcess:
    K = int(rng.integers(1, 3))
    times = np.cumsum(np.concatenate([[0.0], rng.choice([0.5, 1.0], K)]))
    max_branch = 8 if K == 1 else 4
    dim = int(rng.integers(2, 4))
    pitch = 0.25
    # per node: list of (path values, per-coordinate mass)
    nodes = [([0.0], np.full(dim, 1.0) * rng.uniform(0.5, 2.0, dim))]
    for _ in range(K):
        nxt = []
        for path, mass in nodes:
            b = int(rng.integers(2, max_branch + 1))
            offs = rng.choice(np.arange(-4, 5), size=b, replace=False)
            while not (np.any(offs > 0) and np.any(offs < 0)):
                offs = rng.choice(np.arange(-4, 5), size=b, replace=False)
            d = offs * pitch
            w = np.stack([_balanced_weights(rng, d, m) for m in mass], axis=1)
            for j in range(b):
                nxt.append((path + [path[-1] + float(d[j])], w[j]))
        nodes = nxt
    space = FiniteSpace([f"a{i}" for i in range(len(nodes))])
    values = np.array([path for path, _ in nodes]).T
    M = AtomicVectorMeasure(space, np.array([m for _, m in nodes]))
    return PathProcess(space, M, times, values, q)
