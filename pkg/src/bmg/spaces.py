"""Measurable spaces, partitions, scalar/vector measures and pushforwards.

Two kinds of space are supported:

* :class:`FiniteSpace` -- a finite set of labelled atoms; every subset is
  measurable and sets are canonical tuples of atom ids in space order.
* :class:`GridSpace` -- an interval ``[a, b]`` cut into cells; measurable
  sets are finite unions of half-open intervals, stored as a canonical tuple
  of merged ``(lo, hi)`` pairs.

The Banach space ``X`` is coordinate ``d``-space with an L1, L2 or Linf norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, MismatchedSpaceError

NORMS = ("L1", "L2", "Linf")


def check_norm(tag: str) -> str:
    if tag not in NORMS:
        raise InputError(f"unknown norm tag {tag!r}; expected one of {NORMS}")
    return tag


def vnorm(x, tag: str = "L2", axis: int = -1):
    """Norm of ``x`` along ``axis`` (vectorised over the other axes)."""
    x = np.asarray(x, dtype=float)
    if tag == "L1":
        return np.sum(np.abs(x), axis=axis)
    if tag == "L2":
        return np.sqrt(np.sum(x * x, axis=axis))
    if tag == "Linf":
        return np.max(np.abs(x), axis=axis, initial=0.0)
    raise InputError(f"unknown norm tag {tag!r}")


@dataclass(frozen=True)
class VectorValue:
    """An element of coordinate space with its norm tag."""

    coords: tuple[float, ...]
    norm_tag: str = "L2"

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if len(coords) < 1:
            raise InputError("vector values need at least one coordinate")
        object.__setattr__(self, "coords", coords)
        check_norm(self.norm_tag)

    @classmethod
    def of(cls, arr, norm_tag: str = "L2") -> "VectorValue":
        return cls(tuple(np.atleast_1d(np.asarray(arr, dtype=float)).tolist()), norm_tag)

    @classmethod
    def zero(cls, dim: int, norm_tag: str = "L2") -> "VectorValue":
        return cls((0.0,) * dim, norm_tag)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coords)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def norm(self) -> float:
        return float(vnorm(self.array, self.norm_tag))

    def _other(self, other):
        if isinstance(other, VectorValue):
            if other.dim != self.dim:
                raise InputError(f"dimension mismatch: {self.dim} vs {other.dim}")
            return other.array
        return np.asarray(other, dtype=float)

    def __add__(self, other):
        return VectorValue.of(self.array + self._other(other), self.norm_tag)

    def __sub__(self, other):
        return VectorValue.of(self.array - self._other(other), self.norm_tag)

    def __mul__(self, scalar):
        return VectorValue.of(self.array * float(scalar), self.norm_tag)

    __rmul__ = __mul__

    def __neg__(self):
        return VectorValue.of(-self.array, self.norm_tag)

    def __len__(self):
        return self.dim


# --------------------------------------------------------------------------
# spaces


@dataclass(frozen=True, eq=True)
class FiniteSpace:
    """Finitely many atoms; the generated sigma-algebra is the power set."""

    atoms: tuple
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    kind = "finite"

    def __init__(self, atoms: Iterable[Hashable]):
        atoms = tuple(atoms)
        if not atoms:
            raise InputError("a finite space needs at least one atom")
        index = {}
        for i, a in enumerate(atoms):
            if a in index:
                raise InputError(f"duplicate atom id {a!r}")
            index[a] = i
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.atoms)

    @property
    def whole(self) -> tuple:
        return self.atoms

    def index(self, ids: Iterable[Hashable]) -> np.ndarray:
        try:
            return np.fromiter((self._index[a] for a in ids), dtype=np.intp)
        except KeyError as exc:
            raise InputError(f"unknown atom {exc.args[0]!r}") from None

    def canonical(self, ids: Iterable[Hashable]) -> tuple:
        idx = np.unique(self.index(ids))
        return tuple(self.atoms[i] for i in idx)

    def contains(self, A, t) -> bool:
        return t in A

    def atomic_partition(self) -> "Partition":
        return Partition(self, tuple((a,) for a in self.atoms))

    def trivial_partition(self) -> "Partition":
        return Partition(self, (self.atoms,))


def _merge_intervals(intervals: Iterable[Sequence[float]]) -> tuple:
    ivs = sorted((float(lo), float(hi)) for lo, hi in intervals if hi > lo)
    out: list[list[float]] = []
    for lo, hi in ivs:
        if out and lo <= out[-1][1]:
            if lo < out[-1][1]:
                raise InputError(f"overlapping intervals near {lo!r}")
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return tuple((lo, hi) for lo, hi in out)


@dataclass(frozen=True)
class GridSpace:
    """The interval ``[a, b]`` with a finite cell decomposition.

    Cells are half-open ``[lo, hi)`` (the last one also holds ``b``).
    """

    edges: tuple[float, ...]

    kind = "grid"

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if len(edges) < 2 or any(not (hi > lo) for lo, hi in zip(edges, edges[1:])):
            raise InputError("grid edges must be strictly increasing with at least one cell")
        if not all(np.isfinite(edges)):
            raise InputError("grid edges must be finite")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def uniform(cls, a: float, b: float, cells: int = 1) -> "GridSpace":
        if cells < 1:
            raise InputError("cell count must be positive")
        return cls(tuple(np.linspace(a, b, cells + 1)))

    @property
    def a(self) -> float:
        return self.edges[0]

    @property
    def b(self) -> float:
        return self.edges[-1]

    @property
    def cells(self) -> list[tuple[float, float]]:
        return list(zip(self.edges, self.edges[1:]))

    def __len__(self):
        return len(self.edges) - 1

    @property
    def whole(self) -> tuple:
        return ((self.a, self.b),)

    def split(self, i: int) -> "GridSpace":
        lo, hi = self.edges[i], self.edges[i + 1]
        return GridSpace(self.edges[: i + 1] + (0.5 * (lo + hi),) + self.edges[i + 1 :])

    def cell_of(self, t):
        idx = np.searchsorted(self.edges, np.asarray(t, dtype=float), side="right") - 1
        return np.clip(idx, 0, len(self) - 1)

    def piecewise(self, values) -> Callable:
        """A vectorised function that is constant on every cell."""
        values = np.asarray(values, dtype=float)
        if values.shape[0] != len(self):
            raise InputError(f"need {len(self)} cell values, got {values.shape[0]}")
        return lambda t: values[self.cell_of(t)]

    def canonical(self, intervals) -> tuple:
        ivs = _merge_intervals(intervals)
        for lo, hi in ivs:
            if lo < self.a or hi > self.b:
                raise InputError(f"interval ({lo}, {hi}) leaves [{self.a}, {self.b}]")
        return ivs

    def contains(self, A, t) -> bool:
        return any(lo <= t < hi or (t == hi == self.b) for lo, hi in A)

    def atomic_partition(self) -> "Partition":
        return Partition(self, tuple(((lo, hi),) for lo, hi in self.cells))

    def trivial_partition(self) -> "Partition":
        return Partition(self, (self.whole,))


Space = FiniteSpace | GridSpace


def same_space(*spaces) -> Space:
    first = spaces[0]
    for s in spaces[1:]:
        if s != first:
            raise MismatchedSpaceError("objects live on different spaces")
    return first


def as_set(space: Space, A) -> tuple:
    """Canonical form of a measurable set (``None`` means the whole space)."""
    if A is None:
        return space.whole
    if space.kind == "grid" and len(A) == 2 and np.isscalar(A[0]):
        A = (A,)
    return space.canonical(A)


def set_measure_length(A) -> float:
    return float(sum(hi - lo for lo, hi in A))


# --------------------------------------------------------------------------
# partitions


@dataclass(frozen=True)
class Partition:
    """A finite partition of ``domain`` (default: the whole space) into
    nonempty measurable blocks."""

    space: Space
    blocks: tuple
    domain: tuple | None = None

    def __post_init__(self):
        space = self.space
        domain = as_set(space, self.domain)
        blocks = tuple(space.canonical(b) for b in self.blocks)
        if any(len(b) == 0 for b in blocks):
            raise InputError("partition blocks must be nonempty")
        if space.kind == "finite":
            blocks = tuple(sorted(blocks, key=lambda b: space.index(b[:1])[0]))
            seen = np.concatenate([space.index(b) for b in blocks])
            if len(np.unique(seen)) != len(seen) or set(seen.tolist()) != set(space.index(domain).tolist()):
                raise InputError("blocks must be disjoint and cover the domain")
        else:
            blocks = tuple(sorted(blocks, key=lambda b: b[0][0]))
            ivs = sorted(iv for b in blocks for iv in b)
            for (_, h), (l2, _) in zip(ivs, ivs[1:]):
                if l2 < h:
                    raise InputError("partition blocks overlap")
            if _merge_intervals(ivs) != domain:
                raise InputError("blocks must be disjoint and cover the domain")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "domain", domain)

    @classmethod
    def trusted(cls, space: Space, blocks: tuple, domain: tuple) -> "Partition":
        """Skip validation for blocks already canonical (engine output)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "space", space)
        object.__setattr__(obj, "blocks", blocks)
        object.__setattr__(obj, "domain", domain)
        return obj

    def __len__(self):
        return len(self.blocks)

    def labels(self) -> np.ndarray:
        """Block index of every atom (finite spaces only)."""
        lab = np.empty(len(self.space), dtype=np.intp)
        for k, b in enumerate(self.blocks):
            lab[self.space.index(b)] = k
        return lab

    def segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sorted elementary intervals with their block labels (grid only)."""
        rows = sorted((lo, hi, k) for k, b in enumerate(self.blocks) for lo, hi in b)
        arr = np.array(rows, dtype=float)
        return arr[:, 0], arr[:, 1], arr[:, 2].astype(np.intp)

    @classmethod
    def from_labels(cls, space: FiniteSpace, labels) -> "Partition":
        labels = np.asarray(labels)
        _, inv = np.unique(labels, return_inverse=True, axis=0 if labels.ndim > 1 else None)
        inv = inv.reshape(-1)
        groups: dict[int, list] = {}
        for i, k in enumerate(inv):
            groups.setdefault(int(k), []).append(space.atoms[i])
        return cls(space, tuple(tuple(g) for g in groups.values()))


@dataclass(frozen=True)
class TaggedPartition:
    partition: Partition
    tags: tuple

    def __post_init__(self):
        tags = tuple(self.tags)
        if len(tags) != len(self.partition.blocks):
            raise InputError("one tag per block is required")
        space = self.partition.space
        for A, t in zip(self.partition.blocks, tags):
            if not space.contains(A, t):
                raise InputError(f"tag {t!r} is not in its block")
        object.__setattr__(self, "tags", tags)

    @classmethod
    def trusted(cls, partition: Partition, tags: tuple) -> "TaggedPartition":
        obj = object.__new__(cls)
        object.__setattr__(obj, "partition", partition)
        object.__setattr__(obj, "tags", tags)
        return obj

    @property
    def blocks(self):
        return self.partition.blocks

    def __len__(self):
        return len(self.tags)


def _grid_segment_labels(P: Partition, cuts: np.ndarray) -> np.ndarray:
    lo, _, lab = P.segments()
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    return lab[np.searchsorted(lo, mids, side="right") - 1]


def is_finer(P_prime: Partition, P: Partition) -> bool:
    """True iff every block of ``P_prime`` lies inside a block of ``P``."""
    space = same_space(P_prime.space, P.space)
    if space.kind == "finite":
        outer = P.labels()
        return all(len(np.unique(outer[space.index(b)])) == 1 for b in P_prime.blocks)
    cuts = np.unique(np.concatenate([np.concatenate(P.segments()[:2]),
                                     np.concatenate(P_prime.segments()[:2])]))
    outer = _grid_segment_labels(P, cuts)
    inner = _grid_segment_labels(P_prime, cuts)
    for k in range(len(P_prime)):
        if len(np.unique(outer[inner == k])) != 1:
            return False
    return True


def common_refinement(P: Partition, P_prime: Partition) -> Partition:
    """Partition made of all nonempty intersections of blocks."""
    space = same_space(P.space, P_prime.space)
    if space.kind == "finite":
        return Partition.from_labels(space, np.stack([P.labels(), P_prime.labels()], axis=1))
    cuts = np.unique(np.concatenate([np.concatenate(P.segments()[:2]),
                                     np.concatenate(P_prime.segments()[:2])]))
    pair = np.stack([_grid_segment_labels(P, cuts), _grid_segment_labels(P_prime, cuts)], axis=1)
    groups: dict[tuple, list] = {}
    for (lo, hi), key in zip(zip(cuts[:-1], cuts[1:]), map(tuple, pair)):
        groups.setdefault(key, []).append((lo, hi))
    return Partition(space, tuple(tuple(v) for v in groups.values()))


# --------------------------------------------------------------------------
# function evaluation


def evaluate(func, space: Space, points, *, vector: bool = False) -> np.ndarray:
    """Evaluate a scalar or vector function at tag points.

    On finite spaces ``func`` may be a mapping ``id -> value`` or a callable
    on ids; on grid spaces it must be callable and is tried vectorised first.
    Vector results have shape ``(n, d)``.
    """
    if space.kind == "finite":
        if isinstance(func, Mapping):
            vals = [func[p] for p in points]
        else:
            vals = [func(p) for p in points]
        out = np.asarray(vals, dtype=float)
    else:
        pts = np.asarray(points, dtype=float)
        try:
            out = np.asarray(func(pts), dtype=float)
            ok = out.shape[:1] == pts.shape[:1] if out.ndim else False
        except Exception:
            ok = False
        if not ok:
            out = np.asarray([func(float(p)) for p in pts], dtype=float)
        if out.shape[:1] != pts.shape[:1] and out.ndim <= 1:
            out = np.broadcast_to(out, pts.shape + out.shape).copy()
    if vector:
        if out.ndim == 1:
            out = out[:, None]
        if out.ndim != 2:
            raise InputError("vector function must return d coordinates per point")
    elif out.ndim != 1:
        raise InputError("scalar function must return one value per point")
    return out


# --------------------------------------------------------------------------
# measures

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def gauss_legendre(func: Callable, lo, hi, *, pieces: int = 1) -> np.ndarray:
    """Composite 16-point Gauss-Legendre integral of ``func`` over each
    ``[lo[i], hi[i]]``; ``func`` maps an array of points to ``(n, ...)``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    total = None
    for p in range(pieces):
        a = lo + (hi - lo) * (p / pieces)
        b = lo + (hi - lo) * ((p + 1) / pieces)
        half = 0.5 * (b - a)
        pts = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = np.asarray(func(pts.reshape(-1)), dtype=float)
        vals = vals.reshape(pts.shape + vals.shape[1:])
        w = _GL_WEIGHTS.reshape((1, -1) + (1,) * (vals.ndim - 2))
        part = np.sum(vals * w, axis=1) * half.reshape((-1,) + (1,) * (vals.ndim - 2))
        total = part if total is None else total + part
    return total


def adaptive_quad(func: Callable, lo, hi, *, rtol: float = 1e-14, max_pieces: int = 1 << 12):
    """Vectorised adaptive Gauss-Legendre over many intervals.

    Each interval's composite rule is doubled until two successive results
    agree to ``rtol`` relative to the interval's absolute integral.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    pieces = 1
    prev = gauss_legendre(func, lo, hi, pieces=1)
    scale = gauss_legendre(lambda t: np.abs(func(t)), lo, hi, pieces=1)
    active = np.arange(len(lo))
    result = prev.copy()
    while active.size and pieces < max_pieces:
        pieces *= 2
        cur = gauss_legendre(func, lo[active], hi[active], pieces=pieces)
        diff = np.abs(cur - prev[active]).reshape(len(active), -1).max(axis=1)
        tol = rtol * np.maximum(np.abs(scale[active]).reshape(len(active), -1).max(axis=1), 1e-300)
        result[active] = cur
        prev[active] = cur
        active = active[diff > tol]
    return result


class ScalarMeasure:
    """Nonnegative measure; subclasses implement :meth:`measure`."""

    space: Space

    def measure(self, A=None) -> float:
        raise NotImplementedError

    @property
    def total(self) -> float:
        return self.measure(None)


class AtomicScalarMeasure(ScalarMeasure):
    def __init__(self, space: FiniteSpace, masses):
        if isinstance(masses, Mapping):
            masses = [masses[a] for a in space.atoms]
        masses = np.asarray(masses, dtype=float)
        if masses.shape != (len(space),):
            raise InputError(f"expected {len(space)} atom masses")
        for a, m in zip(space.atoms, masses):
            if not np.isfinite(m) or m < 0:
                raise InputError(f"atom {a!r}: measure must be a finite nonnegative number, got {float(m)!r}")
        self.space = space
        self.masses = masses

    def measure(self, A=None) -> float:
        A = as_set(self.space, A)
        return float(np.sum(self.masses[self.space.index(A)]))


class LebesgueMeasure(ScalarMeasure):
    def __init__(self, space: GridSpace):
        self.space = space

    def measure(self, A=None) -> float:
        return set_measure_length(as_set(self.space, A))

    def interval_measure(self, lo, hi) -> np.ndarray:
        return np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)


class VectorMeasure:
    """Countably additive set function with values in coordinate space."""

    space: Space
    dim: int
    norm_tag: str

    def measure(self, A=None) -> np.ndarray:
        raise NotImplementedError

    def value(self, A=None) -> VectorValue:
        return VectorValue.of(self.measure(A), self.norm_tag)

    @property
    def total(self) -> np.ndarray:
        return self.measure(None)


class AtomicVectorMeasure(VectorMeasure):
    def __init__(self, space: FiniteSpace, values, norm_tag: str = "L2"):
        if isinstance(values, Mapping):
            values = [values[a] for a in space.atoms]
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != len(space) or values.ndim != 2 or values.shape[1] < 1:
            raise InputError(f"expected {len(space)} vector values")
        if not np.all(np.isfinite(values)):
            raise InputError("vector measure values must be finite")
        self.space = space
        self.values = values
        self.dim = values.shape[1]
        self.norm_tag = check_norm(norm_tag)

    def measure(self, A=None) -> np.ndarray:
        A = as_set(self.space, A)
        if len(A) == 0:
            return np.zeros(self.dim)
        return np.sum(self.values[self.space.index(A)], axis=0)


class DensityVectorMeasure(VectorMeasure):
    """``A -> integral over A of F`` against Lebesgue measure on a grid."""

    def __init__(self, space: GridSpace, density: Callable, dim: int, norm_tag: str = "L2"):
        self.space = space
        self.density = density
        self.dim = dim
        self.norm_tag = check_norm(norm_tag)

    def _F(self, t):
        return evaluate(self.density, self.space, t, vector=True)

    def interval_measure(self, lo, hi) -> np.ndarray:
        return adaptive_quad(self._F, lo, hi)

    def interval_variation(self, lo, hi) -> np.ndarray:
        """``integral of ||F||`` per interval; bounds ||m|| on every subset."""
        return adaptive_quad(lambda t: vnorm(self._F(t), self.norm_tag), lo, hi)

    def measure(self, A=None) -> np.ndarray:
        A = as_set(self.space, A)
        if not A:
            return np.zeros(self.dim)
        lo, hi = np.array(A).T
        return np.sum(self.interval_measure(lo, hi), axis=0)


# --------------------------------------------------------------------------
# pushforward


@dataclass(frozen=True)
class Distribution:
    """Image measure of a finitely-valued function."""

    support: tuple[float, ...]
    masses: np.ndarray = field(compare=False)

    def __post_init__(self):
        support = tuple(float(s) for s in self.support)
        if any(b <= a for a, b in zip(support, support[1:])):
            raise InputError("distribution support must be strictly increasing")
        masses = np.asarray(self.masses, dtype=float)
        if masses.shape[0] != len(support):
            raise InputError("one mass per support point is required")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "masses", masses)

    @property
    def total(self) -> np.ndarray:
        return np.sum(self.masses, axis=0)

    def mass(self, c: float):
        i = int(np.searchsorted(self.support, c))
        if i < len(self.support) and self.support[i] == c:
            return self.masses[i]
        return np.zeros_like(self.masses[0])

    def as_space(self) -> tuple[FiniteSpace, Any]:
        """The support as a finite space carrying the distribution's masses."""
        space = FiniteSpace(self.support)
        if self.masses.ndim == 1:
            return space, AtomicScalarMeasure(space, self.masses)
        return space, AtomicVectorMeasure(space, self.masses)


def pushforward(m: ScalarMeasure | VectorMeasure, f) -> Distribution:
    """Distribution ``B -> m(f^-1(B))`` of a finitely-valued ``f``.

    On grid spaces ``f`` is read as constant on each cell (its value at the
    cell midpoint).
    """
    space = m.space
    if space.kind == "finite":
        values = evaluate(f, space, space.atoms)
        if isinstance(m, VectorMeasure):
            atom_mass = m.values
        else:
            atom_mass = m.masses
    else:
        lo, hi = np.array(space.cells).T
        values = evaluate(f, space, 0.5 * (lo + hi))
        atom_mass = m.interval_measure(lo, hi)
    support, inv = np.unique(values, return_inverse=True)
    masses = np.zeros((len(support),) + atom_mass.shape[1:])
    # canonical (space) order keeps the sums reproducible
    for i, k in enumerate(inv.reshape(-1)):
        masses[k] += atom_mass[i]
    return Distribution(tuple(support.tolist()), masses)
