"""Command-line entry point: ``bmg integrate | check | girsanov``.

Exit status: 0 every record passed, 2 input error, 3 engine non-convergence,
4 a verification or assumption failed (the report is still written).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import corpus
from .birkhoff import b1_integrate, b2_integrate, check_change_of_variable, check_substitution
from .conditional import (
    SubSigmaAlgebra,
    check_defining,
    check_linearity,
    check_pull_out,
    check_tower,
)
from .errors import (
    AdaptednessError,
    AssumptionViolation,
    BMGError,
    ConstructionInfeasible,
    InputError,
    MismatchedSpaceError,
    NonConvergenceError,
    SizeBudgetError,
)
from .io import (
    build_F,
    build_f,
    build_M,
    build_mu,
    build_partition,
    build_process,
    build_space,
    dumps_report,
    load_document,
    make_report,
    marginal_csv,
    record,
)

EXIT_OK, EXIT_INPUT, EXIT_NONCONV, EXIT_FAIL = 0, 2, 3, 4
SEED_MAX = 2**64


# --------------------------------------------------------------------------
# argument types


def positive(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (x > 0 and np.isfinite(x)):
        raise argparse.ArgumentTypeError(f"must be a positive finite number: {text!r}")
    return x


def seed_type(text: str) -> int:
    try:
        s = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= s < SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return s


def count_type(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return n


def vector_type(text: str) -> tuple[float, ...]:
    try:
        v = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from None
    if not v or not all(np.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected finite numbers: {text!r}")
    return v


def threads() -> int:
    raw = os.environ.get("BMG_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"BMG_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InputError(f"BMG_THREADS must be a positive integer, got {raw!r}")
    return n


def ordered_map(fn, items) -> list:
    """``map`` over a thread pool capped by ``BMG_THREADS``; results keep input order."""
    n = threads()
    items = list(items)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# integrate


def cmd_integrate(args) -> tuple[dict, dict]:
    doc = load_document(args.input)
    space = build_space(doc)
    if args.mode == "b1":
        mu = build_mu(doc, space)
        F = build_F(doc, space)
        norm = doc.measure.norm if doc.measure is not None else args.norm
        res = b1_integrate(F, mu, None, args.eps, norm=norm)
    else:
        M = build_M(doc, space)
        if args.f == "one":
            f = (lambda a: 1.0) if space.kind == "finite" else (lambda t: np.ones(np.shape(t)))
        else:
            f = build_f(doc, space)
        res = b2_integrate(f, M, None, args.eps)
    result = {"value": res.value.array, "certified_bound": res.certified_bound,
              "refinement_rounds": res.refinement_rounds, "blocks": res.n_blocks,
              "norm": res.value.norm_tag}
    rec = record(f"{args.mode} integral", res.value.array, None, res.certified_bound,
                 res.certified_bound <= args.eps, bound=args.eps)
    return {"records": [rec], "result": result}, {}


# --------------------------------------------------------------------------
# check


def _gap_record(name: str, chk, tol: float, **extra) -> dict:
    return record(name, chk.lhs.array, chk.rhs.array, chk.gap, chk.gap <= tol, **extra)


def _random_n(args) -> int:
    if args.random is not None:
        return args.random
    return 100


def check_substitution_records(args) -> list[dict]:
    if args.input:
        doc = load_document(args.input)
        space = build_space(doc)
        mu = build_mu(doc, space)
        norm = doc.measure.norm if doc.measure is not None else args.norm
        chk = check_substitution(build_f(doc, space), build_F(doc, space), mu, args.eps, norm=norm)
        return [_gap_record("substitution", chk, args.tol, bound=chk.bound)]

    def one(i):
        c = corpus.finite_case(corpus.case_rng(args.seed, i))
        chk = check_substitution(c.f, c.F, c.mu, args.eps, norm=c.norm)
        return _gap_record(f"substitution case {i}", chk, args.tol, atoms=len(c.space),
                           dim=c.dim, norm=c.norm)

    return ordered_map(one, range(_random_n(args)))


def check_changevar_records(args) -> list[dict]:
    if args.input:
        doc = load_document(args.input)
        space = build_space(doc)
        if doc.g is None or len(doc.g.poly) != 1:
            raise InputError("field g: one coefficient row is required for changevar")
        coeffs = doc.g.poly[0]
        g = lambda x: float(np.polynomial.polynomial.polyval(x, coeffs))  # noqa: E731
        chk = check_change_of_variable(g, build_f(doc, space), build_M(doc, space), args.eps)
        return [_gap_record("change of variable", chk, args.tol, bound=chk.bound)]

    def one(i):
        c = corpus.finite_case(corpus.case_rng(args.seed, i))
        chk = check_change_of_variable(c.g, c.f, c.M, args.eps)
        return _gap_record(f"change of variable case {i}", chk, args.tol, atoms=len(c.space),
                           dim=c.dim, norm=c.norm)

    return ordered_map(one, range(_random_n(args)))


def _law_records(tag: str, F, G, h, a, b, mu, coarse, fine, norm, tol, tower_only: bool):
    out = []
    if fine is not None and coarse is not None:
        out.append(_gap_record(f"tower {tag}", check_tower(F, mu, coarse, fine, norm=norm), tol))
    if tower_only:
        return out
    E = coarse if coarse is not None else fine
    out.append(_gap_record(f"defining {tag}", check_defining(F, mu, E, norm=norm), tol))
    if G is not None:
        out.append(_gap_record(f"linearity {tag}",
                               check_linearity(F, G, a, b, mu, E, norm=norm), tol))
    if h is not None and fine is not None:
        out.append(_gap_record(f"pull-out {tag}", check_pull_out(h, F, mu, fine, norm=norm), tol))
    return out


def check_condexp_records(args) -> list[dict]:
    if args.input:
        doc = load_document(args.input)
        space = build_space(doc)
        mu = build_mu(doc, space)
        F = build_F(doc, space)
        norm = doc.measure.norm if doc.measure is not None else args.norm
        coarse = SubSigmaAlgebra(build_partition(doc, space))
        fine = SubSigmaAlgebra(build_partition(doc, space, "fine")) if doc.fine else None
        if args.tower and fine is None:
            raise InputError("field fine is required for --tower")
        h = build_f(doc, space) if doc.f is not None else None
        return _law_records("file", F, None, h, 0.0, 0.0, mu, coarse, fine, norm, args.tol,
                            args.tower)

    def one(i):
        c = corpus.nested_case(corpus.case_rng(args.seed, i))
        return _law_records(f"case {i}", c.base.F, c.G, c.h, c.a, c.b, c.base.mu,
                            SubSigmaAlgebra(c.coarse), SubSigmaAlgebra(c.fine), c.base.norm,
                            args.tol, args.tower)

    return [r for recs in ordered_map(one, range(_random_n(args))) for r in recs]


def _martingale_record(name: str, rep) -> dict:
    worst = rep.worst()
    return record(name, worst["lhs"] if worst else None, worst["rhs"] if worst else None,
                  rep.max_gap, rep.passed, worst=worst, violations=len(rep.violations()))


def check_martingale_records(args) -> list[dict]:
    from .girsanov import fixture_exact_synthetic, is_martingale

    if args.input:
        doc = load_document(args.input)
        space = build_space(doc)
        p = build_process(doc, space, build_M(doc, space))
        return [_martingale_record("martingale", is_martingale(p.values, p.measure, p.filtration,
                                                               args.tol))]

    def one(i):
        fx = fixture_exact_synthetic(int(np.random.SeedSequence([args.seed, i]).generate_state(1)[0]),
                                     q=0.0)
        p = fx.process
        return _martingale_record(f"martingale case {i}",
                                  is_martingale(p.values, p.measure, p.filtration, args.tol))

    return ordered_map(one, range(_random_n(args)))


CHECKS = {"substitution": check_substitution_records, "changevar": check_changevar_records,
          "condexp": check_condexp_records, "martingale": check_martingale_records}


def cmd_check(args) -> tuple[dict, dict]:
    return {"records": CHECKS[args.what](args)}, {}


# --------------------------------------------------------------------------
# girsanov


def _girsanov_source(args):
    """Process, tolerance, floor and fixture info for the configured source."""
    from .girsanov import fixture_brownian_walk, fixture_exact_synthetic

    if args.input:
        if args.fixture:
            raise InputError("give either an input file or --fixture, not both")
        doc = load_document(args.input)
        space = build_space(doc)
        p = build_process(doc, space, build_M(doc, space))
        return p, args.tol or 1e-10, args.floor, {"source": "file"}
    if args.fixture == "brownian":
        q = 0.5 if args.q is None else args.q
        fx = fixture_brownian_walk(args.steps, args.dt, args.delta, q, args.v, norm=args.norm)
        return fx.process, args.tol or fx.tol, fx.floor, {"source": "brownian", **fx.info,
                                                        "declared_tol": fx.tol}
    if args.fixture == "exact":
        fx = fixture_exact_synthetic(args.seed, args.q)
        return fx.process, args.tol or 1e-10, 0.0, {"source": "exact", **fx.info}
    raise InputError("girsanov needs an input file or --fixture")


def cmd_girsanov(args) -> tuple[dict, dict]:
    from .girsanov import run_girsanov
    from .girsanov.checks import total_of

    try:
        p, tol, floor, info = _girsanov_source(args)
    except ConstructionInfeasible as exc:
        return {"records": [record("construction", passed=False, error=str(exc))]}, {}
    bundle = run_girsanov(p, tol, floor=floor)
    recs = [record(r.name, None, None, r.max_gap, r.passed, detail=r.detail)
            for r in bundle.assumptions.all]
    extra = {"fixture": info, "tol": tol, "floor": floor}
    files = {}
    if bundle.Q is not None:
        t6, t7 = bundle.theorem6, bundle.theorem7
        qt, mt = total_of(bundle.Q), p.total()
        gap = float(np.max(np.abs(qt - mt)))
        recs.append(record("Q(T) = M(T)", qt, mt, gap, gap <= tol))
        w6 = max(t6.rows, key=lambda r: r.gap, default=None)
        recs.append(record("marginal laws", w6.q_mass if w6 else None,
                           w6.m_mass if w6 else None, t6.max_gap, t6.passed,
                           outside_gap=t6.outside_gap,
                           worst={"time": w6.time, "point": w6.point} if w6 else None))
        for name, rep in (("Q-martingale", t7.martingale),
                          ("identity (i)", t7.identity_i), ("identity (ii)", t7.identity_ii),
                          ("identity (iii)", t7.identity_iii)):
            recs.append(_martingale_record(name, rep))
        extra["Q"] = {"total": qt, "kind": type(bundle.Q).__name__}
        files["marginals.csv"] = marginal_csv(t6)
    return {"records": recs, **extra}, files


# --------------------------------------------------------------------------
# parser and dispatch


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bmg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, eps=1e-9, tol=1e-10):
        p.add_argument("--eps", type=positive, default=eps, help="engine tolerance")
        p.add_argument("--tol", type=positive, default=tol, help="pass/fail tolerance for gaps")
        p.add_argument("--norm", choices=("L1", "L2", "Linf"), default="L2")
        p.add_argument("--out", type=Path, help="directory for report.json (and CSV tables)")
        p.add_argument("--timing", action="store_true", help="add wall time to the report")

    p = sub.add_parser("integrate", help="B1 or B2 integral of a file-defined integrand")
    p.add_argument("input", help="bmg/1 JSON document")
    p.add_argument("--mode", choices=("b1", "b2"), required=True)
    p.add_argument("--f", choices=("file", "one"), default="file",
                   help="b2 integrand: field f of the document, or the constant 1")
    common(p, eps=1e-6)

    p = sub.add_parser("check", help="identity checks on a file or a seeded random corpus")
    p.add_argument("what", choices=tuple(CHECKS))
    p.add_argument("input", nargs="?", help="bmg/1 JSON document (default: random corpus)")
    p.add_argument("--random", type=count_type, metavar="N", help="number of random cases")
    p.add_argument("--seed", type=seed_type, default=0)
    p.add_argument("--tower", action="store_true", help="condexp: only the tower-property records")
    common(p)

    p = sub.add_parser("girsanov", help="assumptions, Q, marginal laws and the Q-martingale check")
    p.add_argument("input", nargs="?", help="bmg/1 JSON document with a process")
    p.add_argument("--fixture", choices=("exact", "brownian"))
    p.add_argument("--steps", type=count_type, default=16)
    p.add_argument("--dt", type=positive, default=0.0625)
    p.add_argument("--delta", type=positive, default=0.01)
    p.add_argument("--q", type=float, default=None, help="drift (brownian default 0.5)")
    p.add_argument("--v", type=vector_type, default=(1.0, 2.0), help="weight vector, e.g. 1,2")
    p.add_argument("--seed", type=seed_type, default=0)
    p.add_argument("--floor", type=float, default=0.0, help="ratio floor for file processes")
    common(p, tol=None)
    return ap


COMMANDS = {"integrate": cmd_integrate, "check": cmd_check, "girsanov": cmd_girsanov}
SKIP_ECHO = {"out", "timing", "command"}


def config_echo(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
            if k not in SKIP_ECHO}


def _write(args, report: dict, files: dict) -> None:
    text = dumps_report(report)
    if args.out is None:
        sys.stdout.write(text)
        return
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.json").write_text(text, encoding="utf-8")
    for name, body in files.items():
        (args.out / name).write_text(body, encoding="utf-8")
    status = "PASS" if report["pass"] else "FAIL"
    print(f"{status} {args.command}: {len(report['records'])} records -> {args.out}")


def run(args) -> int:
    start = time.perf_counter()
    body, files = COMMANDS[args.command](args)
    records = body.pop("records")
    if args.timing:
        body["wall_time_s"] = time.perf_counter() - start
    report = make_report(args.command, config_echo(args), records, **body)
    _write(args, report, files)
    return EXIT_OK if report["pass"] else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except (InputError, MismatchedSpaceError, AdaptednessError, SizeBudgetError) as exc:
        print(f"bmg: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NonConvergenceError as exc:
        print(f"bmg: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (AssumptionViolation, ConstructionInfeasible) as exc:
        print(f"bmg: assumption violation: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except BMGError as exc:
        print(f"bmg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
