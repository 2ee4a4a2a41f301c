"""The ``bmg/1`` input schema, report serialization and marginal CSV tables.

An input document is a JSON object::

    {"schema": "bmg/1",
     "space": {"kind": "finite", "atoms": [{"id": "a", "mu": 0.25}, ...]},
     "measure": {"dim": 2, "norm": "L2", "values": {"a": [1, 0], ...}},
     "F": {"a": [1, 0], ...},
     "f": {"a": 2.0, ...},
     "process": {"times": [0, 1], "values": {"a": [0, 1], ...}, "q": 0.0},
     "partition": [["a"], ["b"]],
     "fine": [["a"], ["b"]]}

Grid spaces (``{"kind": "grid", "edges": [...]}``) take integrands as
polynomials, ``{"poly": [[c0, c1, ...], ...]}`` with one coefficient row per
coordinate in increasing powers; the vector measure on a grid is the
indefinite integral of such a density.  Unknown keys are rejected.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Literal, Union

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import InputError
from .spaces import (
    AtomicScalarMeasure,
    AtomicVectorMeasure,
    DensityVectorMeasure,
    FiniteSpace,
    GridSpace,
    LebesgueMeasure,
    Partition,
)

SCHEMA = "bmg/1"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AtomSpec(_Strict):
    id: str
    mu: float = 1.0


class FiniteSpaceSpec(_Strict):
    kind: Literal["finite"]
    atoms: list[AtomSpec] = Field(min_length=1)


class GridSpaceSpec(_Strict):
    kind: Literal["grid"]
    edges: list[float] = Field(min_length=2)


class PolySpec(_Strict):
    poly: list[list[float]] = Field(min_length=1)


class MeasureSpec(_Strict):
    dim: int = Field(ge=1)
    norm: Literal["L1", "L2", "Linf"] = "L2"
    values: dict[str, list[float]] | None = None
    density: PolySpec | None = None


class ProcessSpec(_Strict):
    times: list[float] = Field(min_length=1)
    values: dict[str, list[float]]
    q: float = 0.0


class Document(_Strict):
    schema_: Literal["bmg/1"] = Field(alias="schema")
    space: Union[FiniteSpaceSpec, GridSpaceSpec] = Field(discriminator="kind")
    measure: MeasureSpec | None = None
    F: Union[dict[str, list[float]], PolySpec, None] = None
    f: Union[dict[str, float], PolySpec, None] = None
    g: PolySpec | None = None
    process: ProcessSpec | None = None
    partition: list[list[str]] | None = None
    fine: list[list[str]] | None = None


def _field(loc) -> str:
    return ".".join(str(x) for x in loc) or "<root>"


def parse_document(text: str, source: str = "<input>") -> Document:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return Document.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        more = f" (and {exc.error_count() - 1} more)" if exc.error_count() > 1 else ""
        raise InputError(f"{source}: field {_field(err['loc'])}: {err['msg']}{more}") from None


def load_document(path) -> Document:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    return parse_document(text, str(path))


# --------------------------------------------------------------------------
# building library objects


def _need(value, name: str):
    if value is None:
        raise InputError(f"field {name} is required for this command")
    return value


def build_space(doc: Document):
    if doc.space.kind == "finite":
        return FiniteSpace(a.id for a in doc.space.atoms)
    return GridSpace(doc.space.edges)


def build_mu(doc: Document, space):
    if space.kind == "finite":
        return AtomicScalarMeasure(space, [a.mu for a in doc.space.atoms])
    return LebesgueMeasure(space)


def _atom_table(space: FiniteSpace, table: dict, name: str, width: int | None):
    extra = sorted(set(table) - set(space.atoms))
    if extra:
        raise InputError(f"field {name}: unknown atom {extra[0]!r}")
    missing = [a for a in space.atoms if a not in table]
    if missing:
        raise InputError(f"field {name}: atom {missing[0]!r} has no value")
    if width is not None:
        for a in space.atoms:
            if len(table[a]) != width:
                raise InputError(f"field {name}.{a}: expected {width} numbers, got {len(table[a])}")
    return [table[a] for a in space.atoms]


def poly_function(spec: PolySpec, *, vector: bool):
    polys = [Polynomial(c) for c in spec.poly]
    if vector:
        return lambda t: np.stack([p(np.asarray(t, dtype=float)) for p in polys], axis=-1)
    if len(polys) != 1:
        raise InputError("a scalar polynomial takes exactly one coefficient row")
    return lambda t: polys[0](np.asarray(t, dtype=float))


def build_M(doc: Document, space):
    m = _need(doc.measure, "measure")
    if space.kind == "finite":
        vals = _atom_table(space, _need(m.values, "measure.values"), "measure.values", m.dim)
        return AtomicVectorMeasure(space, vals, m.norm)
    dens = _need(m.density, "measure.density")
    if len(dens.poly) != m.dim:
        raise InputError(f"field measure.density: expected {m.dim} coefficient rows")
    return DensityVectorMeasure(space, poly_function(dens, vector=True), m.dim, m.norm)


def build_F(doc: Document, space):
    F = _need(doc.F, "F")
    if isinstance(F, PolySpec):
        if space.kind == "finite":
            raise InputError("field F: polynomial integrands need a grid space")
        return poly_function(F, vector=True)
    if space.kind != "finite":
        raise InputError("field F: atom tables need a finite space")
    rows = _atom_table(space, F, "F", None)
    widths = {len(r) for r in rows}
    if len(widths) != 1 or 0 in widths:
        raise InputError("field F: all atoms need vectors of one positive length")
    return {a: np.asarray(r, dtype=float) for a, r in zip(space.atoms, rows)}


def build_f(doc: Document, space, name: str = "f"):
    f = _need(getattr(doc, name), name)
    if isinstance(f, PolySpec):
        if space.kind == "finite":
            raise InputError(f"field {name}: polynomial integrands need a grid space")
        return poly_function(f, vector=False)
    if space.kind != "finite":
        raise InputError(f"field {name}: atom tables need a finite space")
    return dict(zip(space.atoms, (float(x) for x in _atom_table(space, f, name, None))))


def build_partition(doc: Document, space, name: str = "partition") -> Partition:
    blocks = _need(getattr(doc, name), name)
    if space.kind != "finite":
        raise InputError(f"field {name}: partitions are read for finite spaces only")
    return Partition(space, [tuple(b) for b in blocks])


def build_process(doc: Document, space, M):
    from .girsanov.process import PathProcess

    p = _need(doc.process, "process")
    if space.kind != "finite":
        raise InputError("field process: processes live on finite spaces")
    rows = _atom_table(space, p.values, "process.values", len(p.times))
    return PathProcess(space, M, p.times, np.asarray(rows, dtype=float).T, p.q)


# --------------------------------------------------------------------------
# reports


def jsonable(x):
    """Plain JSON types; non-finite floats become the strings ``"inf"`` etc."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def record(name: str, lhs=None, rhs=None, gap=None, passed: bool = True, **extra) -> dict:
    out = {"name": name, "lhs": lhs, "rhs": rhs, "gap": gap, "pass": bool(passed)}
    out.update(extra)
    return out


def make_report(command: str, config: dict, records: list[dict], **extra) -> dict:
    rep = {"schema": SCHEMA, "command": command, "config": config, "records": records,
           "pass": all(r["pass"] for r in records)}
    rep.update(extra)
    return jsonable(rep)


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


class ReportRecord(BaseModel):
    model_config = ConfigDict(extra="allow")
    name: str
    lhs: object = None
    rhs: object = None
    gap: object = None
    pass_: bool = Field(alias="pass")


class Report(BaseModel):
    model_config = ConfigDict(extra="allow")
    schema_: Literal["bmg/1"] = Field(alias="schema")
    command: str
    config: dict
    records: list[ReportRecord]
    pass_: bool = Field(alias="pass")


def parse_report(text: str) -> Report:
    try:
        return Report.model_validate_json(text)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise InputError(f"report field {_field(err['loc'])}: {err['msg']}") from None


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


def marginal_csv(report6) -> str:
    """Marginal comparison table: ``time, point, m_1..m_d, q_1..q_d, gap``."""
    rows = report6.rows
    d = len(rows[0].m_mass) if rows else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "point", *(f"m_{i + 1}" for i in range(d)),
                *(f"q_{i + 1}" for i in range(d)), "gap"])
    for r in rows:
        w.writerow([fmt17(r.time), fmt17(r.point), *map(fmt17, r.m_mass), *map(fmt17, r.q_mass),
                    fmt17(r.gap)])
    return buf.getvalue()
