"""Seeded random instances shared by the CLI ``--random`` mode and the tests.

Finite cases are small spaces with a nonnegative scalar measure, a vector
integrand ``F``, a scalar ``f`` and an atomic vector measure ``M``.  Grid
cases are polynomial or trigonometric integrands on ``[0, 1]`` with exact
antiderivatives, so per-cell integrals can be checked without quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .spaces import (
    NORMS,
    AtomicScalarMeasure,
    AtomicVectorMeasure,
    FiniteSpace,
    GridSpace,
    Partition,
)


def case_rng(seed: int, i: int) -> np.random.Generator:
    """Independent stream for case ``i`` of a run seeded with ``seed``."""
    return np.random.default_rng([int(seed), int(i)])


@dataclass(frozen=True)
class FiniteCase:
    space: FiniteSpace
    mu: AtomicScalarMeasure
    F: dict
    f: dict
    M: AtomicVectorMeasure
    g_coeffs: tuple
    norm: str

    @property
    def dim(self) -> int:
        return self.M.dim

    def g(self, x: float) -> float:
        """Random cubic applied to values of ``f``."""
        a, b, c, d = self.g_coeffs
        return a + x * (b + x * (c + x * d))


def finite_case(rng: np.random.Generator, *, max_atoms: int = 64, max_dim: int = 4) -> FiniteCase:
    n = int(rng.integers(1, max_atoms + 1))
    d = int(rng.integers(1, max_dim + 1))
    norm = NORMS[int(rng.integers(len(NORMS)))]
    space = FiniteSpace(f"a{i}" for i in range(n))
    masses = rng.exponential(1.0, n)
    masses[rng.random(n) < 0.1] = 0.0
    F = rng.normal(0.0, 1.0, (n, d))
    # a few repeated levels so that f generates a coarser sigma-algebra
    f = rng.choice(np.round(rng.normal(0.0, 2.0, max(1, n // 2)), 3), n)
    Mv = rng.normal(0.0, 1.0, (n, d))
    return FiniteCase(space, AtomicScalarMeasure(space, masses),
                      {a: F[i] for i, a in enumerate(space.atoms)},
                      {a: float(f[i]) for i, a in enumerate(space.atoms)},
                      AtomicVectorMeasure(space, Mv, norm),
                      tuple(rng.normal(0.0, 1.0, 4).tolist()), norm)


def finite_cases(seed: int, n: int, **kw):
    for i in range(n):
        yield finite_case(case_rng(seed, i), **kw)


# --------------------------------------------------------------------------
# nested partitions


@dataclass(frozen=True)
class NestedCase:
    """Finite case with partitions ``coarse <= fine`` and an extra integrand.

    ``h`` is constant on the blocks of ``fine`` (pull-out factor); ``G`` and
    the scalars ``a``, ``b`` feed the linearity check.
    """

    base: FiniteCase
    coarse: Partition
    fine: Partition
    G: dict
    h: dict
    a: float
    b: float


def _random_partition(rng, atoms, k: int) -> list[list]:
    labels = rng.integers(0, k, len(atoms))
    labels[:k] = np.arange(min(k, len(atoms)))  # keep k blocks when possible
    blocks: dict[int, list] = {}
    for a, lab in zip(atoms, rng.permutation(labels)):
        blocks.setdefault(int(lab), []).append(a)
    return list(blocks.values())


def nested_case(rng: np.random.Generator, **kw) -> NestedCase:
    base = finite_case(rng, **kw)
    atoms = base.space.atoms
    fine_blocks = _random_partition(rng, atoms, int(rng.integers(1, len(atoms) + 1)))
    grouped = _random_partition(rng, list(range(len(fine_blocks))),
                                int(rng.integers(1, len(fine_blocks) + 1)))
    coarse_blocks = [[a for j in grp for a in fine_blocks[j]] for grp in grouped]
    hv = rng.normal(0.0, 1.0, len(fine_blocks))
    h = {a: float(hv[j]) for j, blk in enumerate(fine_blocks) for a in blk}
    G = {a: rng.normal(0.0, 1.0, base.dim) for a in atoms}
    return NestedCase(base, Partition(base.space, coarse_blocks), Partition(base.space, fine_blocks),
                      G, h, float(rng.normal()), float(rng.normal()))


def nested_cases(seed: int, n: int, **kw):
    for i in range(n):
        yield nested_case(case_rng(seed, i), **kw)


# --------------------------------------------------------------------------
# grid integrands


@dataclass(frozen=True)
class GridIntegrand:
    """Vector function on ``[0, 1]``; one polynomial or trig series per coordinate."""

    kind: str
    coeffs: tuple  # per coordinate: poly coefficients, or (sin, cos) amplitude rows

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    def _eval(self, t, integrate: bool) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = []
        for c in self.coeffs:
            if self.kind == "poly":
                p = Polynomial(c)
                cols.append((p.integ() if integrate else p)(t))
            else:
                s, co = np.asarray(c[0]), np.asarray(c[1])
                w = 2 * np.pi * np.arange(1, len(s) + 1)
                arg = np.outer(t, w)
                if integrate:
                    cols.append((-np.cos(arg) / w) @ s + (np.sin(arg) / w) @ co + c[2] * t)
                else:
                    cols.append(np.sin(arg) @ s + np.cos(arg) @ co + c[2])
        return np.stack(cols, axis=1)

    def __call__(self, t) -> np.ndarray:
        return self._eval(t, False)

    def antiderivative(self, t) -> np.ndarray:
        return self._eval(t, True)

    def integral(self, lo, hi) -> np.ndarray:
        """Exact ``integral over [lo, hi)`` per interval, shape ``(n, d)``."""
        return self.antiderivative(hi) - self.antiderivative(lo)

    def scalar(self):
        """First coordinate as a scalar function."""
        return lambda t: self(t)[:, 0]

    def scaled(self, factor: float) -> "GridIntegrand":
        if self.kind == "poly":
            return GridIntegrand("poly", tuple(tuple(factor * x for x in c) for c in self.coeffs))
        return GridIntegrand("trig", tuple((tuple(factor * x for x in c[0]),
                                            tuple(factor * x for x in c[1]), factor * c[2])
                                           for c in self.coeffs))

    def variation(self, n: int = 4096) -> float:
        """Total variation of ``t -> F(t)`` (sum over coordinates)."""
        v = self(np.linspace(0.0, 1.0, n + 1))
        return float(np.sum(np.abs(np.diff(v, axis=0))))


def grid_integrand(rng: np.random.Generator, *, max_dim: int = 3, kind: str | None = None,
                   variation: float | None = 0.5) -> GridIntegrand:
    """Random integrand, rescaled to the given total variation."""
    d = int(rng.integers(1, max_dim + 1))
    kind = kind or ("poly", "trig")[int(rng.integers(2))]
    if kind == "poly":
        coeffs = tuple(tuple(rng.normal(0.0, 1.0, int(rng.integers(1, 6))).tolist())
                       for _ in range(d))
    else:
        coeffs = []
        for _ in range(d):
            m = int(rng.integers(1, 4))
            coeffs.append((tuple(rng.normal(0.0, 1.0, m).tolist()),
                           tuple(rng.normal(0.0, 1.0, m).tolist()), float(rng.normal())))
        coeffs = tuple(coeffs)
    F = GridIntegrand(kind, coeffs)
    if variation is not None:
        v = F.variation()
        if v > 0:
            F = F.scaled(variation / v)
    return F


def unit_grid(cells: int = 1) -> GridSpace:
    return GridSpace(np.linspace(0.0, 1.0, cells + 1))


@dataclass(frozen=True)
class LayeredCase:
    f: GridIntegrand  # scalar, first coordinate used
    F: GridIntegrand
    eps: float


def layered_case(rng: np.random.Generator) -> LayeredCase:
    """``|f|`` sweeps several bands ``[j-1, j)``; ``F`` has moderate variation."""
    f = grid_integrand(rng, max_dim=1, variation=None)
    vals = np.abs(f(np.linspace(0.0, 1.0, 257))[:, 0])
    span = float(vals.max()) or 1.0
    f = f.scaled(float(rng.uniform(1.5, 4.5)) / span)
    F = grid_integrand(rng, variation=float(rng.uniform(0.2, 1.0)))
    return LayeredCase(f, F, float(10 ** rng.uniform(-4, -2)))
