"""Exponential tail bounds for class-B families.

Two routes to the same exponent:

* ``exponent_A``: A(y) = (y-x) [int_0^1 (1-t) V^{-1}(x + t(y-x)) dt] (y-x)^T
  by Gauss-Legendre quadrature along the segment from x to y.
* ``dual_exponent``: sup_a [a y - ln phi(-a, x)], the Chernoff exponent
  from the Laplace transform (univariate).

The bound is P(xi >= y) <= exp(-A(y)) whenever s(x) >= s(y).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import expr as ex
from . import oracle
from .errors import DomainError, FamilyError, OracleError, TailError
from .families import FamilySpec

__all__ = ["TailReport", "exponent_A", "tail_bound", "dual_exponent", "tail_grid", "GL_NODES"]

GL_NODES = 32
_GL_T, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)

EXPONENT_NOTE = "exponent integrates V^{-1} along the segment from x to y"


@dataclass
class TailReport:
    x: list
    y: list
    exponent_A: float
    bound: float
    quadrature_error: float
    dual_exponent: float | None = None
    oracle_tail: float | None = None
    applicable: bool | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _vec(v, dim):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.shape != (dim,):
        raise TailError(f"expected a point of dimension {dim}, got {v!r}")
    return arr


def _gl(g, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return half * sum(w * g(mid + half * t) for t, w in zip(_GL_T, _GL_W))


def exponent_A(f: FamilySpec, x, y) -> tuple[float, float]:
    """(A, err): A from 32-node Gauss-Legendre on both halves of [0, 1],
    err = |A - (32 nodes on the whole interval)|."""
    x = _vec(x, f.dim)
    y = _vec(y, f.dim)
    d = y - x
    if not np.any(d):
        return 0.0, 0.0

    def g(t):
        p = x + t * d
        try:
            env = f.bindings(p)
            v = f.V_at(bindings=env)
        except (DomainError, FamilyError) as err:
            raise TailError(f"segment leaves the domain at {p.tolist()}: {err}") from None
        if not f.domain.contains(env):
            raise TailError(f"segment leaves the domain at {p.tolist()}")
        try:
            if np.linalg.cond(v) > 1e12:
                raise np.linalg.LinAlgError
            w = np.linalg.solve(v, d)
        except np.linalg.LinAlgError:
            raise TailError(f"V is singular at {p.tolist()}") from None
        q = float(d @ w)
        if not q > 0:
            raise TailError(f"V is not positive definite at {p.tolist()}")
        return (1.0 - t) * q

    coarse = _gl(g, 0.0, 1.0)
    fine = _gl(g, 0.0, 0.5) + _gl(g, 0.5, 1.0)
    return float(fine), float(abs(fine - coarse))


def _laplace_parts(f):
    cache = f.__dict__.get("_dual_parts")
    if cache is None:
        z = f.z_vars[0]
        memo = {}
        d1 = ex.diff(f.laplace, z, memo)
        d2 = ex.diff(d1, z, memo)
        cache = (f.laplace, d1, d2)
        object.__setattr__(f, "_dual_parts", cache)
    return cache


def dual_exponent(f: FamilySpec, x, y, tol: float = 1e-10) -> float:
    """sup over a of beta(a) = a y - ln phi(-a, x), searched on the side of a
    matching the sign of y - x."""
    if f.dim != 1:
        raise TailError("the dual exponent is univariate only")
    if f.laplace is None:
        raise TailError(f"family {f.name!r} has no Laplace transform")
    x = float(_vec(x, 1)[0])
    y = float(_vec(y, 1)[0])
    if y == x:
        return 0.0
    phi, d1, d2 = _laplace_parts(f)
    env = f.bindings((x,))
    z = f.z_vars[0]
    sign = 1.0 if y > x else -1.0

    def at(a):
        e = dict(env)
        e[z] = -a
        return e

    def beta(a):
        try:
            v = ex.evaluate(phi, at(a))
        except DomainError:
            return -math.inf
        if not v > 0:
            return -math.inf
        return a * y - math.log(v)

    def slope_curv(a):
        p, p1, p2 = ex.evaluate_many([phi, d1, d2], at(a))
        # d/da ln phi(-a) = -phi_z/phi, d2/da2 = phi_zz/phi - (phi_z/phi)^2
        r = p1 / p
        return y + r, -(p2 / p - r * r)

    # bracket: walk out until beta stops increasing
    lo, h = 0.0, 1.0
    prev = beta(0.0)
    for _ in range(80):
        cur = beta(sign * h)
        if not math.isfinite(cur) or cur <= prev:
            break
        lo, prev = h, cur
        h *= 2.0
    else:
        raise TailError("the dual maximization does not bracket; beta keeps increasing")
    a, b = (0.0 if lo <= 1.0 else lo / 2.0), h

    # golden-section on [a, b] in |a|
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv * (b - a)
    dd = a + inv * (b - a)
    fc, fd = beta(sign * c), beta(sign * dd)
    while b - a > 1e-8 * max(1.0, b):
        if fc >= fd:
            b, dd, fd = dd, c, fc
            c = b - inv * (b - a)
            fc = beta(sign * c)
        else:
            a, c, fc = c, dd, fd
            dd = a + inv * (b - a)
            fd = beta(sign * dd)
    t = 0.5 * (a + b)

    # Newton on beta'(a) = 0 kept inside the final bracket
    lo_b, hi_b = max(0.0, a - (b - a)), b + (b - a)
    for _ in range(50):
        try:
            g1, g2 = slope_curv(sign * t)
        except DomainError:
            break
        if not (math.isfinite(g1) and math.isfinite(g2)) or g2 >= 0:
            break
        step = -g1 / g2 * sign
        nt = t + step
        if not lo_b <= nt <= hi_b:
            break
        t = nt
        if abs(step) <= tol * max(1.0, abs(t)):
            break
    return beta(sign * t)


def _applicable(f, x, y):
    if f.dim == 1:
        return bool(y[0] >= x[0])
    if f.s_char is None:
        return None
    try:
        sx = ex.evaluate_many(f.s_char, f.bindings(x))
        sy = ex.evaluate_many(f.s_char, f.bindings(y))
    except (DomainError, FamilyError):
        return None
    return all(a >= b for a, b in zip(sx, sy))


def _oracle_params(f, x):
    if f.oracle is None:
        return None
    if f.param_map is not None:
        return f.param_map(x)
    if f.params is not None and f.x0 is not None and np.allclose(x, f.x0, rtol=1e-12, atol=0):
        return f.params
    return None


def tail_bound(f: FamilySpec, x, y) -> TailReport:
    x = _vec(x, f.dim)
    y = _vec(y, f.dim)
    A, err = exponent_A(f, x, y)
    notes = [EXPONENT_NOTE]
    applicable = _applicable(f, x, y)
    if applicable is None:
        notes.append("applicability unknown: no s-characteristic available")
    elif not applicable:
        notes.append("s(x) >= s(y) fails: the bound does not apply to this tail")
    dual = None
    if f.dim == 1 and f.laplace is not None:
        try:
            dual = dual_exponent(f, x, y)
        except (TailError, DomainError) as e:
            notes.append(f"dual exponent unavailable: {e}")
    oracle_tail = None
    if f.dim == 1:
        params = _oracle_params(f, x)
        if params is not None:
            try:
                oracle_tail = oracle.exact_tail(f.oracle, params, float(y[0]))
            except OracleError as e:
                notes.append(f"oracle tail unavailable: {e}")
    return TailReport(
        x=x.tolist(), y=y.tolist(), exponent_A=A, bound=math.exp(-A), quadrature_error=err,
        dual_exponent=dual, oracle_tail=oracle_tail, applicable=applicable, notes=notes,
    )


def tail_grid(f: FamilySpec, x, ys, workers: int = 1) -> list:
    """tail_bound at every y in ``ys``; ``workers > 1`` evaluates in threads."""
    if workers <= 1:
        return [tail_bound(f, x, y) for y in ys]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda y: tail_bound(f, x, y), ys))
