"""Scalar processes on a finite outcome space, filtrations and martingale checks.

A process *view* exposes what the Girsanov checks need:

* ``state_values(k)`` -- the value of ``w`` on each state at time ``k``;
* ``integrate(s, factors)`` -- for every state ``E`` at time ``s`` the vector
  integral over ``E`` of the product of ``factors[t]`` (functions of the
  state at time ``t >= s``) against the process measure.

For :class:`PathProcess` the states at time ``k`` are the generating blocks
of the natural filtration.  The lattice walk in :mod:`bmg.girsanov.walk`
implements the same interface with lattice points as states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import AdaptednessError, InputError
from ..spaces import AtomicVectorMeasure, FiniteSpace, Partition, VectorValue, vnorm
from ..conditional import SubSigmaAlgebra


@dataclass(frozen=True)
class MartingaleReport:
    """Gaps ``||int_E x_v dM - int_E x_s dM||`` for every checked triple.

    Records are stored column-wise: ``s``, ``v`` (time indices), ``block``
    (state index at time ``s``), ``lhs``/``rhs`` (shape ``(n, d)``), ``gap``.
    """

    tol: float
    s: np.ndarray
    v: np.ndarray
    block: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    gap: np.ndarray
    labels: tuple = field(default=(), compare=False)

    @property
    def max_gap(self) -> float:
        return float(self.gap.max()) if self.gap.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_gap <= self.tol

    def worst(self) -> dict | None:
        if not self.gap.size:
            return None
        i = int(np.argmax(self.gap))
        return {"s": int(self.s[i]), "v": int(self.v[i]), "block": int(self.block[i]),
                "label": self.labels[i] if self.labels else str(int(self.block[i])),
                "lhs": self.lhs[i].tolist(), "rhs": self.rhs[i].tolist(),
                "gap": float(self.gap[i])}

    def violations(self) -> list[dict]:
        out = []
        for i in np.flatnonzero(self.gap > self.tol):
            out.append({"s": int(self.s[i]), "v": int(self.v[i]), "block": int(self.block[i]),
                        "gap": float(self.gap[i])})
        return out


def pair_report(view, lhs_of, rhs_of, tol: float, pairs=None) -> MartingaleReport:
    """Collect per-state gaps between two families of state integrals.

    ``lhs_of(s, v)`` and ``rhs_of(s, v)`` return ``(n_s, d)`` arrays.
    """
    K = view.K
    if pairs is None:
        pairs = [(s, v) for s in range(K + 1) for v in range(s + 1, K + 1)]
    cols = {k: [] for k in ("s", "v", "block", "lhs", "rhs", "gap")}
    labels: list[str] = []
    for s, v in pairs:
        lhs = lhs_of(s, v)
        rhs = rhs_of(s, v)
        n = lhs.shape[0]
        cols["s"].append(np.full(n, s))
        cols["v"].append(np.full(n, v))
        cols["block"].append(np.arange(n))
        cols["lhs"].append(lhs)
        cols["rhs"].append(rhs)
        cols["gap"].append(vnorm(lhs - rhs, view.norm_tag))
    d = view.dim
    if not pairs:
        empty = np.empty(0)
        return MartingaleReport(tol, empty.astype(int), empty.astype(int), empty.astype(int),
                                np.empty((0, d)), np.empty((0, d)), empty)
    rep = MartingaleReport(tol, *(np.concatenate(cols[k]) for k in ("s", "v", "block", "lhs", "rhs", "gap")))
    return MartingaleReport(rep.tol, rep.s, rep.v, rep.block, rep.lhs, rep.rhs, rep.gap,
                            labels=_LazyLabels(view, rep.s, rep.block))


class _LazyLabels(tuple):
    """Human-readable block labels, built only when indexed."""

    def __new__(cls, view, s, block):
        obj = super().__new__(cls, ())
        obj._view, obj._s, obj._block = view, s, block
        return obj

    def __bool__(self):
        return len(self._s) > 0

    def __getitem__(self, i):
        return self._view.state_label(int(self._s[i]), int(self._block[i]))


def martingale_of(view, phis, tol: float) -> MartingaleReport:
    """Martingale check of the adapted process ``phis[k]`` (values per state)."""
    return pair_report(view,
                       lambda s, v: view.integrate(s, {v: phis[v]}),
                       lambda s, v: view.integrate(s, {s: phis[s]}),
                       tol)


# --------------------------------------------------------------------------
# filtration


@dataclass(frozen=True)
class Filtration:
    """Increasing family of generated sub-sigma-algebras, one per time."""

    algebras: tuple[SubSigmaAlgebra, ...]
    labels: tuple[np.ndarray, ...] = field(compare=False, repr=False)

    def __len__(self):
        return len(self.algebras)

    def __getitem__(self, k) -> SubSigmaAlgebra:
        return self.algebras[k]

    def is_increasing(self) -> bool:
        return all(self.algebras[j].is_subalgebra_of(self.algebras[k])
                   for k in range(len(self)) for j in range(k))


def filtration_from_values(space: FiniteSpace, values: np.ndarray) -> Filtration:
    """Natural filtration of a finite family of functions (rows of ``values``)."""
    algebras, labels = [], []
    prev = np.zeros(len(space), dtype=np.intp)
    for k in range(values.shape[0]):
        key = np.stack([prev, _value_codes(values[k])], axis=1)
        # block order: first occurrence in space order (canonical)
        _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.intp)
        rank[np.argsort(first, kind="stable")] = np.arange(len(first))
        lab = rank[inv.reshape(-1)]
        blocks = [[] for _ in range(len(first))]
        for a, b in zip(space.atoms, lab):
            blocks[b].append(a)
        part = Partition.trusted(space, tuple(tuple(b) for b in blocks), space.whole)
        algebras.append(SubSigmaAlgebra(part))
        labels.append(lab)
        prev = lab
    return Filtration(tuple(algebras), tuple(labels))


def _value_codes(x: np.ndarray) -> np.ndarray:
    _, inv = np.unique(np.asarray(x, dtype=float), return_inverse=True)
    return inv.reshape(-1)


# --------------------------------------------------------------------------
# explicit path processes


@dataclass(frozen=True)
class PathProcess:
    """A scalar process whose outcomes are the atoms of a finite space.

    ``values[k, i]`` is ``w_{s_k}`` on atom ``i``; the shifted process
    ``w_s + s q`` is always derived, never stored.
    """

    space: FiniteSpace
    measure: AtomicVectorMeasure
    times: tuple[float, ...]
    values: np.ndarray
    q: float = 0.0
    filtration: Filtration = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if not times or any(b <= a for a, b in zip(times, times[1:])):
            raise InputError("time grid must be strictly increasing")
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(times), len(self.space)):
            raise InputError(f"values must have shape ({len(times)}, {len(self.space)})")
        if not np.all(np.isfinite(values)):
            raise InputError("process values must be finite")
        if self.measure.space != self.space:
            raise InputError("measure lives on a different space")
        if not np.isfinite(self.q):
            raise InputError("drift must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "filtration", filtration_from_values(self.space, values))

    @property
    def K(self) -> int:
        return len(self.times) - 1

    @property
    def dim(self) -> int:
        return self.measure.dim

    @property
    def norm_tag(self) -> str:
        return self.measure.norm_tag

    def w(self, k: int) -> np.ndarray:
        return self.values[k]

    def w_tilde(self, k: int) -> np.ndarray:
        return self.values[k] + self.times[k] * self.q

    # view interface -------------------------------------------------------

    def state_values(self, k: int) -> np.ndarray:
        lab = self.filtration.labels[k]
        out = np.empty(lab.max() + 1)
        out[lab] = self.values[k]
        return out

    def state_label(self, k: int, i: int) -> str:
        block = self.filtration[k].blocks[i]
        head = ",".join(map(str, block[:3]))
        return "{" + head + (",..." if len(block) > 3 else "") + "}"

    def integrate(self, s: int, factors: dict) -> np.ndarray:
        weight = np.ones(len(self.space))
        for t, phi in sorted(factors.items()):
            if t < s:
                raise InputError("factors must live at times >= s")
            weight = weight * np.asarray(phi)[self.filtration.labels[t]]
        lab = self.filtration.labels[s]
        out = np.zeros((lab.max() + 1, self.dim))
        np.add.at(out, lab, weight[:, None] * self.measure.values)
        return out

    def null_integral(self, k: int) -> np.ndarray:
        from ..birkhoff import b2_integrate

        f = dict(zip(self.space.atoms, self.values[k].tolist()))
        return b2_integrate(f, self.measure).value.array

    def with_measure(self, measure: AtomicVectorMeasure) -> "PathProcess":
        return PathProcess(self.space, measure, self.times, self.values, self.q)

    def total(self) -> np.ndarray:
        return self.measure.total


def build_filtration(p: PathProcess) -> Filtration:
    """Natural filtration: at time ``k`` the join of ``sigma(w_j)``, ``j <= k``."""
    return filtration_from_values(p.space, p.values)


class _AtomView:
    """Adapter running the generic checks on raw per-atom arrays."""

    def __init__(self, m: AtomicVectorMeasure, filt: Filtration):
        self.m, self.filt = m, filt
        self.K = len(filt) - 1
        self.dim = m.dim
        self.norm_tag = m.norm_tag

    def state_label(self, k, i):
        return str(self.filt[k].blocks[i])

    def integrate(self, s, factors):
        weight = np.ones(len(self.m.space))
        for t, phi in factors.items():
            weight = weight * np.asarray(phi)[self.filt.labels[t]]
        lab = self.filt.labels[s]
        out = np.zeros((lab.max() + 1, self.dim))
        np.add.at(out, lab, weight[:, None] * self.m.values)
        return out


def is_martingale(x, m: AtomicVectorMeasure, filt: Filtration, tol: float) -> MartingaleReport:
    """Check ``int_E x_v dm = int_E x_s dm`` for all ``s < v`` and all
    generating blocks ``E`` of ``filt[s]``.

    ``x`` has one row of per-atom values per time.  Raises
    :class:`AdaptednessError` if some ``x_s`` is not constant on the blocks
    of ``filt[s]``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (len(filt), len(m.space)):
        raise InputError(f"process values must have shape ({len(filt)}, {len(m.space)})")
    phis = []
    for k in range(len(filt)):
        lab = filt.labels[k]
        phi = np.full(lab.max() + 1, np.nan)
        phi[lab] = x[k]
        if not np.array_equal(phi[lab], x[k]):
            bad = int(np.flatnonzero(phi[lab] != x[k])[0])
            raise AdaptednessError(f"x at time index {k} is not constant on the block of atom "
                                   f"{m.space.atoms[bad]!r}")
        phis.append(phi)
    return martingale_of(_AtomView(m, filt), phis, tol)


def vector(view, arr) -> VectorValue:
    return VectorValue.of(arr, view.norm_tag)
