"""Generated sub-sigma-algebras and conditional expectation of vector functions."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterator

import numpy as np

from .birkhoff import b1_integrate
from .errors import InputError
from .spaces import (
    Partition,
    ScalarMeasure,
    Space,
    VectorValue,
    common_refinement,
    evaluate,
    is_finer,
)


@dataclass(frozen=True)
class SubSigmaAlgebra:
    """The sigma-algebra generated by a partition of the space.

    ``levels`` holds the generating function's value on each block when the
    algebra comes from :func:`sigma_of`.
    """

    partition: Partition
    levels: tuple[float, ...] | None = None

    @property
    def space(self) -> Space:
        return self.partition.space

    @property
    def blocks(self) -> tuple:
        return self.partition.blocks

    def __len__(self):
        return len(self.partition)

    def is_subalgebra_of(self, other: "SubSigmaAlgebra") -> bool:
        return is_finer(other.partition, self.partition)

    def join(self, other: "SubSigmaAlgebra") -> "SubSigmaAlgebra":
        return SubSigmaAlgebra(common_refinement(self.partition, other.partition))

    def block_index(self, points) -> np.ndarray:
        """Generating block containing each point."""
        space = self.space
        if space.kind == "finite":
            return self.partition.labels()[space.index(points)]
        lo, hi, lab = self.partition.segments()
        pts = np.asarray(points, dtype=float)
        return lab[np.clip(np.searchsorted(lo, pts, side="right") - 1, 0, len(lo) - 1)]

    def sets(self, max_blocks: int = 12) -> Iterator[tuple]:
        """Every member of the algebra as a tuple of block indices."""
        n = len(self)
        if n > max_blocks:
            raise InputError(f"refusing to enumerate 2^{n} sets")
        for r in range(n + 1):
            yield from combinations(range(n), r)

    def union(self, block_ids) -> tuple:
        parts = [x for k in block_ids for x in self.blocks[k]]
        return self.space.canonical(parts)

    @classmethod
    def trivial(cls, space: Space) -> "SubSigmaAlgebra":
        return cls(space.trivial_partition())

    @classmethod
    def full(cls, space: Space) -> "SubSigmaAlgebra":
        return cls(space.atomic_partition())


def sigma_of(f, space: Space) -> SubSigmaAlgebra:
    """Sub-sigma-algebra generated by the level sets of ``f``.

    On grid spaces ``f`` is read per cell (value at the cell midpoint).
    """
    if space.kind == "finite":
        units = [(a,) for a in space.atoms]
        values = evaluate(f, space, space.atoms)
    else:
        units = [((lo, hi),) for lo, hi in space.cells]
        values = evaluate(f, space, np.array([0.5 * (lo + hi) for lo, hi in space.cells]))
    levels, inv = np.unique(values, return_inverse=True)
    groups: dict[int, list] = {}
    for u, k in zip(units, inv.reshape(-1)):
        groups.setdefault(int(k), []).extend(u)
    blocks = tuple(tuple(groups[k]) for k in range(len(levels)))
    part = Partition(space, blocks)
    # Partition sorts blocks canonically; carry the levels along
    level_of = {b: levels[k] for k, b in enumerate(space.canonical(g) for g in blocks)}
    return SubSigmaAlgebra(part, tuple(float(level_of[b]) for b in part.blocks))


@dataclass(frozen=True)
class ConditionalExpectation:
    """``Z = E(F | E)``: one vector per generating block.

    Blocks of zero measure carry ``Z = 0`` and ``null[k] = True``.
    """

    algebra: SubSigmaAlgebra
    values: np.ndarray
    null: np.ndarray
    norm_tag: str = "L2"

    def block_value(self, k: int) -> VectorValue:
        return VectorValue.of(self.values[k], self.norm_tag)

    def __call__(self, points) -> np.ndarray:
        """Evaluate ``Z`` at points (shape ``(n, d)``)."""
        return self.values[self.algebra.block_index(points)]

    def at(self, t) -> VectorValue:
        pts = [t] if self.algebra.space.kind == "finite" else np.array([t], dtype=float)
        return VectorValue.of(self(pts)[0], self.norm_tag)

    @property
    def factor(self) -> dict[float, VectorValue] | None:
        """The map ``h`` with ``Z = h(f)`` when the algebra is ``sigma_of(f)``."""
        if self.algebra.levels is None:
            return None
        return {c: self.block_value(k) for k, c in enumerate(self.algebra.levels)}


def conditional_expectation(F, mu: ScalarMeasure, E: SubSigmaAlgebra, eps: float = 1e-9, *,
                            norm: str = "L2", **engine) -> ConditionalExpectation:
    """Block-ratio construction ``Z|_B = (integral over B of F d mu) / mu(B)``."""
    if E.space != mu.space:
        raise InputError("sub-sigma-algebra and measure live on different spaces")
    n = len(E)
    block_eps = eps / n
    values = []
    null = np.zeros(n, dtype=bool)
    for k, B in enumerate(E.blocks):
        res = b1_integrate(F, mu, B, block_eps, norm=norm, **engine)
        mass = mu.measure(B)
        if mass > 0:
            values.append(res.value.array / mass)
        else:
            null[k] = True
            values.append(np.zeros(res.value.dim))
    return ConditionalExpectation(E, np.array(values), null, norm)


# --------------------------------------------------------------------------
# law checks


def _as_table(Z: ConditionalExpectation, space) -> dict:
    vals = Z(list(space.atoms))
    return dict(zip(space.atoms, vals))


def _worst(lhs: np.ndarray, rhs: np.ndarray, norm: str):
    from .birkhoff import GapCheck
    from .spaces import vnorm

    gaps = vnorm(lhs - rhs, norm)
    i = int(np.argmax(gaps)) if len(gaps) else 0
    return GapCheck(VectorValue.of(lhs[i], norm), VectorValue.of(rhs[i], norm),
                    float(gaps[i]) if len(gaps) else 0.0, 0.0)


def check_defining(F, mu: ScalarMeasure, E: SubSigmaAlgebra, *, norm: str = "L2"):
    """``integral over B of Z d mu`` against ``integral over B of F d mu``
    on every generating block ``B``; returns the worst block."""
    if mu.space.kind != "finite":
        raise InputError("law checks run on finite spaces")
    Z = conditional_expectation(F, mu, E, norm=norm)
    Zt = _as_table(Z, mu.space)
    lhs = np.array([b1_integrate(Zt, mu, B, norm=norm).value.array for B in E.blocks])
    rhs = np.array([b1_integrate(F, mu, B, norm=norm).value.array for B in E.blocks])
    return _worst(lhs, rhs, norm)


def check_linearity(F, G, a: float, b: float, mu: ScalarMeasure, E: SubSigmaAlgebra, *,
                    norm: str = "L2"):
    """``E(aF + bG)`` against ``a E(F) + b E(G)`` blockwise."""
    space = mu.space
    H = {t: a * np.asarray(F[t], dtype=float) + b * np.asarray(G[t], dtype=float)
         for t in space.atoms}
    lhs = conditional_expectation(H, mu, E, norm=norm).values
    rhs = (a * conditional_expectation(F, mu, E, norm=norm).values
           + b * conditional_expectation(G, mu, E, norm=norm).values)
    return _worst(lhs, rhs, norm)


def check_tower(F, mu: ScalarMeasure, coarse: SubSigmaAlgebra, fine: SubSigmaAlgebra, *,
                norm: str = "L2"):
    """``E(E(F | fine) | coarse)`` against ``E(F | coarse)`` for ``coarse <= fine``."""
    if not coarse.is_subalgebra_of(fine):
        raise InputError("tower property needs the coarse algebra inside the fine one")
    inner = _as_table(conditional_expectation(F, mu, fine, norm=norm), mu.space)
    lhs = conditional_expectation(inner, mu, coarse, norm=norm).values
    rhs = conditional_expectation(F, mu, coarse, norm=norm).values
    return _worst(lhs, rhs, norm)


def check_pull_out(h, F, mu: ScalarMeasure, E: SubSigmaAlgebra, *, norm: str = "L2"):
    """``E(h F | E)`` against ``h E(F | E)`` for ``E``-measurable scalar ``h``."""
    space = mu.space
    hv = evaluate(h, space, space.atoms)
    lab = E.partition.labels()
    for k in range(len(E)):
        vals = hv[lab == k]
        if vals.size and np.ptp(vals) != 0:
            raise InputError(f"pull-out factor is not constant on block {k} of the algebra")
    hF = {t: hv[i] * np.asarray(F[t], dtype=float) for i, t in enumerate(space.atoms)}
    lhs = conditional_expectation(hF, mu, E, norm=norm).values
    first = np.array([hv[np.flatnonzero(lab == k)[0]] for k in range(len(E))])
    rhs = first[:, None] * conditional_expectation(F, mu, E, norm=norm).values
    return _worst(lhs, rhs, norm)
