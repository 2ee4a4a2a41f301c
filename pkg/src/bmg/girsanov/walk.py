"""Markov lattice walks under a diagonally lifted vector measure.

The outcome space is the set of all paths of a homogeneous random walk on the
lattice ``delta * Z`` started at 0, with ``M(A) = P(A) v``.  Paths are never
enumerated: the natural filtration's block ``E`` at time ``s`` is a path
prefix, and for any product of functions of later states

    int_E prod_t phi_t(w_t) dM = P(E) * (K phi)(w_s(E)) * v

depends on ``E`` only through its endpoint.  A view state at time ``s`` is
therefore the union of all prefix blocks ending at one lattice point.  Gaps
on these unions are sums of same-signed per-block gaps, so every reported
gap bounds the gap of each prefix block it contains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError
from ..spaces import check_norm


@dataclass(frozen=True)
class LatticeWalk:
    """``K`` steps of size ``dt`` with increment law ``probs`` on offsets
    ``-J..J`` (in units of ``delta``)."""

    probs: np.ndarray
    delta: float
    dt: float
    steps: int
    q: float
    v: np.ndarray
    norm_tag: str = "L2"
    forward: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or len(probs) % 2 != 1 or np.any(probs < 0):
            raise InputError("increment law must be a nonnegative odd-length array")
        if not (self.delta > 0 and self.dt > 0 and self.steps >= 0):
            raise InputError("delta, dt must be positive and steps nonnegative")
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        check_norm(self.norm_tag)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "v", v)
        marg = [np.ones(1)]
        for _ in range(self.steps):
            marg.append(np.convolve(marg[-1], probs))
        object.__setattr__(self, "forward", tuple(marg))

    @property
    def J(self) -> int:
        return (len(self.probs) - 1) // 2

    @property
    def K(self) -> int:
        return self.steps

    @property
    def dim(self) -> int:
        return len(self.v)

    @property
    def times(self) -> tuple[float, ...]:
        return tuple(k * self.dt for k in range(self.steps + 1))

    def lattice_index(self, k: int) -> np.ndarray:
        """Integer lattice coordinates of the states at time ``k``."""
        return np.arange(-k * self.J, k * self.J + 1)

    def state_values(self, k: int) -> np.ndarray:
        return self.lattice_index(k) * self.delta

    def state_label(self, k: int, i: int) -> str:
        return f"w={self.state_values(k)[i]!r}"

    def probability(self, k: int) -> np.ndarray:
        return self.forward[k]

    def expectation(self, s: int, factors: dict) -> np.ndarray:
        """``E_P[prod_t phi_t(w_t) | w_s = x]`` for each state ``x`` at ``s``."""
        if any(t < s for t in factors):
            raise InputError("factors must live at times >= s")
        top = max(factors, default=s)
        h = np.asarray(factors.get(top, np.ones(2 * top * self.J + 1)), dtype=float)
        for t in range(top - 1, s - 1, -1):
            h = np.correlate(h, self.probs, mode="valid")
            if t in factors:
                h = h * factors[t]
        return h

    def integrate(self, s: int, factors: dict) -> np.ndarray:
        return np.outer(self.forward[s] * self.expectation(s, factors), self.v)

    def null_integral(self, k: int) -> np.ndarray:
        return float(np.dot(self.state_values(k), self.forward[k])) * self.v

    def total(self) -> np.ndarray:
        return self.integrate(0, {})[0]

    def tilt(self, factor_K: np.ndarray) -> "TiltedWalk":
        return TiltedWalk(self, np.asarray(factor_K, dtype=float))


@dataclass(frozen=True)
class TiltedWalk:
    """The walk under ``Q(A) = int_A factor(w_K) dM``."""

    base: LatticeWalk
    factor: np.ndarray

    def __getattr__(self, name):
        return getattr(self.base, name)

    def integrate(self, s: int, factors: dict) -> np.ndarray:
        K = self.base.K
        merged = dict(factors)
        merged[K] = merged.get(K, 1.0) * self.factor
        return self.base.integrate(s, merged)

    def total(self) -> np.ndarray:
        return self.integrate(0, {})[0]
