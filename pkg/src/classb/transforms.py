"""Closure of class B under affine maps, iid sums and sample means.

Each operation returns a new :class:`FamilySpec` whose mean variables keep
the original names: after ``affine(f, A, b)`` the variable ``x`` denotes the
mean of ``A xi + b``.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from . import expr as ex
from .errors import TransformError
from .families import Chart, Domain, FamilySpec

__all__ = ["affine", "convolve_iid", "sample_mean"]


def _to_fraction(v):
    # shortest decimal repr, so 0.1 becomes 1/10 rather than its binary value
    return Fraction(repr(float(v)))


def _exact_inverse(a):
    """Gauss-Jordan on Fractions; None when singular."""
    n = len(a)
    m = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(a)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(m[r][col]))
        if m[piv][col] == 0:
            return None
        m[col], m[piv] = m[piv], m[col]
        pv = m[col][col]
        m[col] = [v / pv for v in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                fac = m[r][col]
                m[r] = [x - fac * y for x, y in zip(m[r], m[col])]
    return [row[n:] for row in m]


def _c(v):
    return ex.const(v)


def _image_box(box, names, A, b):
    """Interval-arithmetic image of a box under x -> A x + b."""
    out = {}
    for i, name in enumerate(names):
        lo = hi = float(b[i])
        for j, src in enumerate(names):
            s_lo, s_hi = box[src]
            a = float(A[i][j])
            if a == 0:
                continue
            ends = (a * s_lo, a * s_hi)
            lo += min(ends)
            hi += max(ends)
        out[name] = (lo, hi)
    return out


def affine(f: FamilySpec, A, b) -> FamilySpec:
    """Family of ``A xi + b``: mean ``A x + b``, covariance ``A V A^T``."""
    m = f.dim
    A_arr = np.atleast_2d(np.asarray(A, dtype=float))
    b_arr = np.atleast_1d(np.asarray(b, dtype=float))
    if A_arr.shape != (m, m) or b_arr.shape != (m,):
        raise TransformError(f"A must be {m}x{m} and b of length {m}")
    scale = max(1.0, float(np.max(np.abs(A_arr)))) ** m
    if abs(np.linalg.det(A_arr)) <= 1e-12 * scale:
        raise TransformError("A is singular")
    Aq = [[_to_fraction(A_arr[i, j]) for j in range(m)] for i in range(m)]
    bq = [_to_fraction(b_arr[i]) for i in range(m)]
    Ainv = _exact_inverse(Aq)
    if Ainv is None:
        raise TransformError("A is singular")

    X = [ex.var(v) for v in f.mean_vars]

    def congruence(M):
        return tuple(
            tuple(
                _sum(_c(Aq[i][r]) * M[r][k] * _c(Aq[j][k]) for r in range(m) for k in range(m)
                     if Aq[i][r] != 0 and Aq[j][k] != 0)
                for j in range(m)
            )
            for i in range(m)
        )

    if f.chart is not None:
        # V and the mean live in chart coordinates: no substitution needed
        mean = tuple(_sum(_c(Aq[i][j]) * f.chart.mean[j] for j in range(m)) + _c(bq[i]) for i in range(m))
        chart = Chart(f.chart.vars, mean, f.chart.box, f.chart.constraints)
        V = congruence(f.V)
        back = {}
        laplace = None
        if f.laplace is not None:
            laplace = _shift_laplace(f, Aq, bq, {})
        s_char = None if f.s_char is None else _transform_s(f.s_char, Ainv, {})
    else:
        chart = None
        back = {f.mean_vars[j]: _sum(_c(Ainv[j][i]) * (X[i] - _c(bq[i])) for i in range(m)) for j in range(m)}
        V_src = tuple(tuple(ex.substitute(v, back) for v in row) for row in f.V)
        V = congruence(V_src)
        laplace = None if f.laplace is None else _shift_laplace(f, Aq, bq, back)
        s_char = None if f.s_char is None else _transform_s(f.s_char, Ainv, back)

    box = _image_box(f.domain.box, f.mean_vars, Aq, bq)
    constraints = tuple(ex.substitute(c, back) for c in f.domain.constraints) if back else ()
    x0 = None
    if f.x0 is not None:
        x0 = tuple(float(A_arr[i] @ np.asarray(f.x0, dtype=float) + b_arr[i]) for i in range(m))
    return FamilySpec(
        name=f"affine({f.name})", dim=m, mean_vars=f.mean_vars, V=V,
        domain=Domain(box, constraints, approximate=True), constants=dict(f.constants),
        laplace=laplace, z_vars=f.z_vars, s_char=s_char, chart=chart, x0=x0,
        verified=f.verified, notes=f.notes + ("affine image: domain box is an over-approximation",),
    )


def _sum(terms):
    total = ex.ZERO
    for t in terms:
        total = total + t
    return total


def _shift_laplace(f, Aq, bq, back):
    """phi_eta(z, y) = exp(-z.b) phi(A^T z, A^{-1}(y - b))."""
    m = f.dim
    Z = [ex.var(z) for z in f.z_vars]
    sub = dict(back)
    for j in range(m):
        sub[f.z_vars[j]] = _sum(_c(Aq[i][j]) * Z[i] for i in range(m) if Aq[i][j] != 0)
    phi = ex.substitute(f.laplace, sub)
    shift = _sum(_c(bq[i]) * Z[i] for i in range(m) if bq[i] != 0)
    return ex.exp(-shift) * phi


def _transform_s(s_char, Ainv, back):
    """s_eta(y) = A^{-T} s(A^{-1}(y - b))."""
    m = len(s_char)
    s_sub = [ex.substitute(s, back) for s in s_char]
    return tuple(_sum(_c(Ainv[k][i]) * s_sub[k] for k in range(m) if Ainv[k][i] != 0) for i in range(m))


def convolve_iid(f: FamilySpec, n: int) -> FamilySpec:
    """Family of xi_1 + ... + xi_n: mean n x, covariance n V(y/n)."""
    n = _count(n)
    if n == 1:
        return f
    m = f.dim
    N = _c(n)
    if f.chart is not None:
        chart = Chart(f.chart.vars, tuple(N * mu for mu in f.chart.mean), f.chart.box, f.chart.constraints)
        back = {}
        V = tuple(tuple(N * v for v in row) for row in f.V)
    else:
        chart = None
        back = {v: ex.var(v) / N for v in f.mean_vars}
        V = tuple(tuple(N * ex.substitute(v, back) for v in row) for row in f.V)
    laplace = None if f.laplace is None else ex.substitute(f.laplace, back) ** N
    s_char = None if f.s_char is None else tuple(ex.substitute(s, back) for s in f.s_char)
    box = {k: (n * lo, n * hi) for k, (lo, hi) in f.domain.box.items()}
    return FamilySpec(
        name=f"sum{n}({f.name})", dim=m, mean_vars=f.mean_vars, V=V,
        domain=Domain(box, tuple(ex.substitute(c, back) for c in f.domain.constraints) if back else ()),
        constants=dict(f.constants), laplace=laplace, z_vars=f.z_vars, s_char=s_char, chart=chart,
        x0=None if f.x0 is None else tuple(n * float(v) for v in f.x0),
        verified=f.verified, notes=f.notes,
    )


def sample_mean(f: FamilySpec, n: int) -> FamilySpec:
    """Family of (xi_1 + ... + xi_n)/n: same mean, covariance V(x)/n."""
    n = _count(n)
    if n == 1:
        return f
    N = _c(n)
    laplace = None
    if f.laplace is not None:
        laplace = ex.substitute(f.laplace, {z: ex.var(z) / N for z in f.z_vars}) ** N
    s_char = None if f.s_char is None else tuple(N * s for s in f.s_char)
    return FamilySpec(
        name=f"mean{n}({f.name})", dim=f.dim, mean_vars=f.mean_vars,
        V=tuple(tuple(v / N for v in row) for row in f.V),
        domain=f.domain, constants=dict(f.constants), laplace=laplace, z_vars=f.z_vars,
        s_char=s_char, chart=f.chart, x0=f.x0, verified=f.verified, notes=f.notes,
    )


def _count(n):
    if isinstance(n, float) and n.is_integer():
        n = int(n)
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise TransformError(f"n must be a positive integer, got {n!r}")
    return int(n)
