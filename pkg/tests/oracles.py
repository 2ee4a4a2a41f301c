"""Independent reference computations used by the tests.

Nothing here imports the engines: sums are plain loops with ``math.fsum``
or exact fractions, and process checks walk the atoms directly.
"""

from __future__ import annotations

import math
from collections import defaultdict
from fractions import Fraction


def atom_sum(values: dict, weights: dict) -> list[float]:
    """``sum over atoms of values[a] * weights[a]`` (vector times scalar or
    scalar times vector), coordinate-wise with exact rounding."""
    atoms = list(values)
    first_v, first_w = values[atoms[0]], weights[atoms[0]]
    dim = len(first_v) if hasattr(first_v, "__len__") else len(first_w)
    out = []
    for i in range(dim):
        terms = []
        for a in atoms:
            v, w = values[a], weights[a]
            vi = v[i] if hasattr(v, "__len__") else v
            wi = w[i] if hasattr(w, "__len__") else w
            terms.append(float(vi) * float(wi))
        out.append(math.fsum(terms))
    return out


def term_scale(values: dict, weights: dict) -> float:
    """``sum of |values[a]| |weights[a]|`` over atoms and coordinates."""
    total = 0.0
    for a in values:
        v, w = values[a], weights[a]
        vs = v if hasattr(v, "__len__") else [v]
        ws = w if hasattr(w, "__len__") else [w]
        total += sum(abs(float(x)) for x in vs) * sum(abs(float(y)) for y in ws)
    return total


def block_ratio(F: dict, mu: dict, blocks) -> list[list[float]]:
    out = []
    for B in blocks:
        mass = math.fsum(mu[a] for a in B)
        dim = len(next(iter(F.values())))
        if mass == 0:
            out.append([0.0] * dim)
        else:
            out.append([math.fsum(F[a][i] * mu[a] for a in B) / mass for i in range(dim)])
    return out


def preimage_sum(masses: dict, f: dict) -> dict:
    out: dict = defaultdict(lambda: None)
    for a, m in masses.items():
        c = f[a]
        cur = out[c]
        out[c] = list(m) if cur is None else [x + y for x, y in zip(cur, m)]
    return dict(out)


def exact_cell_integral_power(n: int, lo: Fraction, hi: Fraction) -> Fraction:
    """``integral of t^n over [lo, hi]``."""
    return (hi ** (n + 1) - lo ** (n + 1)) / (n + 1)


# --------------------------------------------------------------------------
# path processes


def prefix_blocks(values, k: int) -> dict:
    """Atoms grouped by their value history up to time ``k``.

    ``values[t][i]`` is the process at time ``t`` on atom ``i``.
    """
    groups: dict = defaultdict(list)
    n = len(values[0])
    for i in range(n):
        groups[tuple(values[t][i] for t in range(k + 1))].append(i)
    return dict(groups)


def path_martingale_gap(x, values, M, norm=lambda v: math.sqrt(sum(c * c for c in v))) -> float:
    """Largest ``||int_E x_v dM - int_E x_s dM||`` over prefix blocks ``E``.

    ``x`` and ``values`` are per-time lists of per-atom numbers; ``M`` is a
    list of per-atom vectors.
    """
    K = len(values) - 1
    dim = len(M[0])
    worst = 0.0
    for s in range(K + 1):
        for atoms in prefix_blocks(values, s).values():
            for v in range(s + 1, K + 1):
                diff = [math.fsum((x[v][i] - x[s][i]) * M[i][c] for i in atoms) for c in range(dim)]
                worst = max(worst, norm(diff))
    return worst


def law_under(weights, values_at, dim: int) -> dict:
    """Distribution of the per-atom values under per-atom vector weights."""
    out: dict = {}
    for w, val in zip(weights, values_at):
        key = round(float(val), 9)
        cur = out.get(key, [0.0] * dim)
        out[key] = [a + b for a, b in zip(cur, w)]
    return out
