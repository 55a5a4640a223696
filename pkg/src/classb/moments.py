"""Raw moments, central moments and cumulants from the variance function.

The three recursions, for multi-index k and coordinate i::

    a[k+e_i]     = sum_j V_ij d(a[k])/dx_j + x_i a[k]             a[e_i] = x_i
    beta[k+e_i]  = sum_j V_ij (d(beta[k])/dx_j + k_j beta[k-e_j])  beta[0] = 1, beta[e_i] = 0
    kappa[k+e_i] = sum_j V_ij d(kappa[k])/dx_j                      kappa[e_i] = x_i

Tables are symbolic (Expr in the mean variables and the family constants)
and memoized per (family, kind); numeric values come from
:func:`evaluate_table`.
"""

from __future__ import annotations

import csv
import io
import itertools
import threading
import weakref
from dataclasses import dataclass
from math import comb
from typing import Iterator, Mapping

from . import expr as ex
from .errors import TableError
from .expr import Expr
from .families import FamilySpec

__all__ = [
    "MultiIndex",
    "MomentTable",
    "KINDS",
    "MAX_ORDER",
    "multi_indices",
    "unit",
    "raw_moments",
    "central_moments",
    "cumulants",
    "moment_table",
    "central_from_raw",
    "raw_moment_along",
    "evaluate_table",
    "table_to_json",
    "table_to_csv",
]

MultiIndex = tuple
KINDS = ("raw", "central", "cumulant")
MAX_ORDER = 16


def unit(m: int, i: int) -> MultiIndex:
    return tuple(int(j == i) for j in range(m))


def multi_indices(m: int, order: int) -> Iterator[MultiIndex]:
    """All k in N^m with |k| == order, in lexicographic order."""
    if m == 1:
        yield (order,)
        return
    for first in range(order, -1, -1):
        for rest in multi_indices(m - 1, order - first):
            yield (first,) + rest


def _lower(k, i):
    return k[:i] + (k[i] - 1,) + k[i + 1:]


@dataclass(frozen=True, eq=False)
class MomentTable:
    kind: str
    family: FamilySpec
    entries: Mapping[MultiIndex, Expr]
    max_order: int

    def __getitem__(self, k):
        if isinstance(k, int):
            k = (k,)
        return self.entries[tuple(k)]

    def __contains__(self, k):
        if isinstance(k, int):
            k = (k,)
        return tuple(k) in self.entries

    def indices(self):
        return sorted(self.entries, key=lambda k: (sum(k), tuple(-v for v in k)))


class _Builder:
    """Incrementally extends one kind of table for one family."""

    def __init__(self, family: FamilySpec, kind: str):
        self.f = family
        self.kind = kind
        self.memo = {}
        self.order = 1
        self.lock = threading.Lock()
        m = family.dim
        zero = (0,) * m
        if kind == "raw":
            self.entries = {zero: ex.ONE}
        elif kind == "central":
            self.entries = {zero: ex.ONE}
        else:
            self.entries = {zero: ex.ZERO}
        for i in range(m):
            self.entries[unit(m, i)] = ex.ZERO if kind == "central" else family.mean_expr(i)

    def d(self, e, j):
        return self.f.d(e, j, self.memo)

    def step(self, k, i):
        """Entry at k + e_i from the entries at k (and k - e_j for central)."""
        f = self.f
        prev = self.entries[k]
        total = ex.ZERO
        for j in range(f.dim):
            v = f.V[i][j]
            if v is ex.ZERO:
                continue
            inner = self.d(prev, j)
            if self.kind == "central" and k[j] > 0:
                inner = inner + k[j] * self.entries[_lower(k, j)]
            total = total + v * inner
        if self.kind == "raw":
            total = total + f.mean_expr(i) * prev
        return total

    def extend(self, K):
        with self.lock:
            m = self.f.dim
            while self.order < K:
                self.order += 1
                for k in multi_indices(m, self.order):
                    i = next(c for c in range(m) if k[c] > 0)
                    self.entries[k] = self.step(_lower(k, i), i)

    def table(self, K):
        self.extend(K)
        entries = {k: v for k, v in self.entries.items() if sum(k) <= K}
        return MomentTable(self.kind, self.f, entries, K)


_builders: "weakref.WeakKeyDictionary[FamilySpec, dict]" = weakref.WeakKeyDictionary()
_builders_lock = threading.Lock()


def _builder(f, kind):
    with _builders_lock:
        per = _builders.setdefault(f, {})
        b = per.get(kind)
        if b is None:
            b = per[kind] = _Builder(f, kind)
    return b


def moment_table(f: FamilySpec, kind: str, K: int) -> MomentTable:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if not 0 <= K <= MAX_ORDER:
        raise ValueError(f"order must lie in [0, {MAX_ORDER}]")
    return _builder(f, kind).table(K)


def raw_moments(f: FamilySpec, K: int) -> MomentTable:
    """a_k for |k| <= K."""
    if K < 1:
        raise ValueError("K must be at least 1")
    return moment_table(f, "raw", K)


def central_moments(f: FamilySpec, K: int) -> MomentTable:
    """beta_k for |k| <= K, seeded with beta_0 = 1 and beta_{e_i} = 0."""
    if K < 2:
        raise ValueError("K must be at least 2")
    return moment_table(f, "central", K)


def cumulants(f: FamilySpec, K: int) -> MomentTable:
    """kappa_k for |k| <= K.  The zero-order entry is ln phi(0, x) = 0."""
    if K < 1:
        raise ValueError("K must be at least 1")
    return moment_table(f, "cumulant", K)


def raw_moment_along(f: FamilySpec, path) -> Expr:
    """Raw moment reached by applying the raw recursion along ``path``.

    ``path`` lists coordinates i; starting from a_0 = 1 each step maps
    a_k to a_{k+e_i}.  Used to check that the result does not depend on
    the order of the steps.
    """
    b = _Builder(f, "raw")
    k = (0,) * f.dim
    value = ex.ONE
    for i in path:
        b.entries[k] = value
        value = b.step(k, i)
        k = k[:i] + (k[i] + 1,) + k[i + 1:]
    return value


def central_from_raw(raw: MomentTable, K: int | None = None) -> MomentTable:
    """beta_k = sum_{p<=k} (-1)^{|k-p|} C(k,p) a_p x^{k-p}."""
    if raw.kind != "raw":
        raise TableError("central_from_raw needs a raw-moment table")
    f = raw.family
    K = raw.max_order if K is None else K
    if K > raw.max_order:
        raise TableError(f"raw table only reaches order {raw.max_order}, {K} requested")
    means = [f.mean_expr(i) for i in range(f.dim)]
    out = {}
    for order in range(K + 1):
        for k in multi_indices(f.dim, order):
            total = ex.ZERO
            for p in itertools.product(*(range(ki + 1) for ki in k)):
                if p not in raw.entries:
                    raise TableError(f"raw table is missing entry {p}")
                coef = 1
                term = raw.entries[p]
                for ki, pi, mu in zip(k, p, means):
                    coef *= comb(ki, pi)
                    term = term * mu ** (ki - pi)
                sign = -1 if (sum(k) - sum(p)) % 2 else 1
                total = total + (sign * coef) * term
            out[k] = total
    return MomentTable("central", f, out, K)


def evaluate_table(t: MomentTable, bindings: Mapping[str, float] | None = None) -> dict:
    """Numeric values of every entry.

    ``bindings`` may give the mean variables only (constants and chart
    coordinates are filled in by the family) or a full environment.
    """
    f = t.family
    env = _environment(f, bindings)
    keys = t.indices()
    values = ex.evaluate_many([t.entries[k] for k in keys], env)
    return dict(zip(keys, values))


def _environment(f, bindings):
    if bindings is None:
        return f.bindings()
    bindings = dict(bindings)
    if f.chart is not None and not all(v in bindings for v in f.chart.vars):
        env = f.bindings([bindings[v] for v in f.mean_vars])
    else:
        env = dict(f.constants)
    env.update(bindings)
    return env


def table_to_json(t: MomentTable, bindings=None, symbolic=True, numeric=True, expr_limit=20000) -> dict:
    values = evaluate_table(t, bindings) if numeric else {}
    entries = []
    for k in t.indices():
        row = {"k": list(k)}
        row["expr"] = ex.to_string(t.entries[k], limit=expr_limit) if symbolic else ""
        if numeric:
            row["value"] = values[k]
        entries.append(row)
    return {"kind": t.kind, "family": t.family.name, "order": t.max_order, "entries": entries}


def table_to_csv(t: MomentTable, bindings=None) -> str:
    values = evaluate_table(t, bindings)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "value"])
    for k in t.indices():
        w.writerow([" ".join(map(str, k)), repr(values[k])])
    return buf.getvalue()
