"""Class-B families described by their variance function V(x).

A family is keyed by its mean x.  The covariance matrix V(x) is a matrix of
:class:`~classb.expr.Expr` in the mean variables, plus auxiliary constants
(``n``, ``sigma2``, ``lambda``...) that are held fixed under differentiation.

Some families have no closed-form inverse from mean to natural parameter
(the logarithmic ones).  Those carry a :class:`Chart`: V and the mean are
written in chart variables and derivatives in x are taken through the
inverse Jacobian of the chart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate, optimize

from . import expr as ex
from .errors import DomainError, FamilyError
from .expr import Expr

__all__ = [
    "Chart",
    "Domain",
    "FamilySpec",
    "ResidualReport",
    "BUILTIN_NAMES",
    "PARAMETER_TABLE",
    "builtin",
    "from_variance",
    "load_family_file",
    "verify_eq1",
    "s_characteristic_numeric",
    "laplace_eval",
    "check_positive_definite",
]


@dataclass(frozen=True)
class Domain:
    """Open box for the mean variables plus optional ``expr > 0`` constraints.

    ``approximate`` marks boxes that over-approximate the true domain (affine
    images of boxes).
    """

    box: Mapping[str, tuple]
    constraints: tuple = ()
    approximate: bool = False

    def contains(self, bindings, margin=0.0):
        for name, (lo, hi) in self.box.items():
            v = bindings[name]
            if not (lo + margin < v < hi - margin):
                return False
        for c in self.constraints:
            try:
                if ex.evaluate(c, bindings) <= 0:
                    return False
            except DomainError:
                return False
        return True

    def to_dict(self):
        return {
            # unbounded ends become null so the dict stays strict JSON
            "box": {k: [_finite_or_none(lo), _finite_or_none(hi)] for k, (lo, hi) in self.box.items()},
            "constraints": [str(c) + " > 0" for c in self.constraints],
            "approximate": self.approximate,
        }


def _finite_or_none(v):
    return float(v) if math.isfinite(v) else None


@dataclass(frozen=True)
class Chart:
    """Coordinates in which the mean has a closed form but V(x) does not."""

    vars: tuple
    mean: tuple
    box: Mapping[str, tuple]
    constraints: tuple = ()


@dataclass(frozen=True, eq=False)
class FamilySpec:
    name: str
    dim: int
    mean_vars: tuple
    V: tuple
    domain: Domain
    constants: Mapping[str, float] = field(default_factory=dict)
    laplace: Expr | None = None
    z_vars: tuple = ()
    s_char: tuple | None = None
    params: Mapping | None = None
    oracle: str | None = None
    param_map: Callable | None = None
    chart: Chart | None = None
    x0: tuple | None = None
    verified: bool = True
    notes: tuple = ()

    # -- symbolic helpers ----------------------------------------------------

    def mean_expr(self, i: int) -> Expr:
        if self.chart is not None:
            return self.chart.mean[i]
        return ex.var(self.mean_vars[i])

    @cached_property
    def _chart_jinv(self):
        c = self.chart
        jac = [[ex.diff(c.mean[i], t) for t in c.vars] for i in range(self.dim)]
        return ex.matrix_inverse(jac)

    def d(self, e: Expr, j: int, memo: dict | None = None) -> Expr:
        """Partial derivative with respect to the j-th mean coordinate."""
        if memo is None:
            memo = {}
        if self.chart is None:
            return ex.diff(e, self.mean_vars[j], memo)
        total = ex.ZERO
        for l, t in enumerate(self.chart.vars):
            total = total + self._chart_jinv[l][j] * ex.diff(e, t, memo)
        return total

    # -- numeric helpers -----------------------------------------------------

    def bindings(self, x=None) -> dict:
        """Variable bindings at mean point ``x`` (default: the family's own point)."""
        if x is None:
            if self.x0 is None:
                raise FamilyError(f"family {self.name!r} has no default mean point; pass x")
            x = self.x0
        x = _as_vector(x, self.dim)
        env = dict(self.constants)
        env.update(zip(self.mean_vars, x))
        if self.chart is not None:
            env.update(self._solve_chart(x))
        return env

    def _solve_chart(self, x):
        c = self.chart
        base = dict(self.constants)

        def mean_at(theta):
            env = dict(base)
            env.update(zip(c.vars, theta))
            return np.array(ex.evaluate_many(c.mean, env))

        if self.dim == 1:
            (t,) = c.vars
            lo, hi = c.box[t]
            span = hi - lo
            a, b = lo + 1e-12 * span, hi - 1e-12 * span

            def g(th):
                try:
                    return mean_at([th])[0] - x[0]
                except DomainError:
                    return math.nan

            ga, gb = g(a), g(b)
            if not (np.isfinite(ga) and np.isfinite(gb)) or ga * gb > 0:
                raise FamilyError(f"mean {x[0]} is outside the range of family {self.name!r}")
            return {t: optimize.brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)}
        lo = np.array([c.box[t][0] for t in c.vars])
        hi = np.array([c.box[t][1] for t in c.vars])
        start = lo + (hi - lo) / (2 * self.dim)

        def resid(th):
            try:
                return (mean_at(th) - x) / (1 + np.abs(x))
            except DomainError:
                return np.full(self.dim, 1e6)

        eps = 1e-12 * (hi - lo)
        sol = optimize.least_squares(resid, start, bounds=(lo + eps, hi - eps),
                                     xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if np.max(np.abs(resid(sol.x))) > 1e-11:
            raise FamilyError(f"could not invert chart of {self.name!r} at x={list(x)}")
        return dict(zip(c.vars, sol.x))

    def V_at(self, x=None, bindings=None) -> np.ndarray:
        env = bindings if bindings is not None else self.bindings(x)
        flat = ex.evaluate_many([v for row in self.V for v in row], env)
        return np.array(flat).reshape(self.dim, self.dim)

    def mean_at(self, bindings) -> np.ndarray:
        return np.array(ex.evaluate_many([self.mean_expr(i) for i in range(self.dim)], bindings))

    def sampling_box(self, shrink=0.05):
        """Finite box for the sampled coordinates (chart vars for charted families)."""
        box = self.chart.box if self.chart is not None else self.domain.box
        out = {}
        for k, (lo, hi) in box.items():
            w = hi - lo
            out[k] = (lo + shrink * w, hi - shrink * w)
        return out

    def sample_bindings(self, count: int, seed: int = 0, shrink=0.05, max_tries=200) -> list:
        """Seeded in-domain bindings, uniformly drawn from the sampling box."""
        rng = np.random.default_rng(seed)
        box = self.sampling_box(shrink)
        names = list(box)
        constraints = self.chart.constraints if self.chart is not None else self.domain.constraints
        out = []
        tries = 0
        while len(out) < count:
            tries += 1
            if tries > count * max_tries:
                raise FamilyError(f"could not sample {count} points inside the domain of {self.name!r}")
            env = dict(self.constants)
            for n in names:
                env[n] = float(rng.uniform(*box[n]))
            ok = True
            for c in constraints:
                try:
                    ok = ok and ex.evaluate(c, env) > 0
                except DomainError:
                    ok = False
            if not ok:
                continue
            if self.chart is not None:
                try:
                    env.update(zip(self.mean_vars, self.mean_at(env)))
                except DomainError:
                    continue
            out.append(env)
        return out

    def sample_points(self, count: int, seed: int = 0, shrink=0.05) -> list:
        return [tuple(b[v] for v in self.mean_vars) for b in self.sample_bindings(count, seed, shrink)]

    def describe(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "mean_vars": list(self.mean_vars),
            "V": [[str(v) for v in row] for row in self.V],
            "domain": self.domain.to_dict(),
            "constants": {k: float(v) for k, v in self.constants.items()},
            "laplace": None if self.laplace is None else str(self.laplace),
            "z_vars": list(self.z_vars),
            "s_char": None if self.s_char is None else [str(s) for s in self.s_char],
            "chart": None if self.chart is None else {
                "vars": list(self.chart.vars),
                "mean": [str(m) for m in self.chart.mean],
            },
            "params": _jsonable(self.params),
            "x0": None if self.x0 is None else [float(v) for v in self.x0],
            "verified": self.verified,
            "notes": list(self.notes),
        }


def _jsonable(obj):
    if obj is None:
        return None
    if isinstance(obj, Mapping):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (Fraction, np.floating, np.integer)):
        return float(obj)
    return obj


def _as_vector(x, dim):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (dim,):
        raise FamilyError(f"expected a point of dimension {dim}, got {x!r}")
    return arr


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def check_positive_definite(f: FamilySpec, count: int = 64, seed: int = 0) -> None:
    """Raise FamilyError at the first sampled point where V is not PD."""
    for env in f.sample_bindings(count, seed):
        try:
            v = f.V_at(bindings=env)
        except DomainError as err:
            raise FamilyError(f"V cannot be evaluated at {_point(f, env)}: {err}") from None
        eig = np.linalg.eigvalsh(0.5 * (v + v.T))
        if not np.all(eig > 0):
            raise FamilyError(f"V is not positive definite at {_point(f, env)} (eigenvalues {eig.tolist()})")


def _point(f, env):
    return {k: env[k] for k in f.mean_vars}


def _check_symmetric(f: FamilySpec, tol=1e-9):
    box = f.sampling_box()
    for i in range(f.dim):
        for j in range(i + 1, f.dim):
            a, b = f.V[i][j], f.V[j][i]
            if a is b:
                continue
            if not ex.equiv_numeric(a, b, box, trials=64, tol=tol, fixed=f.constants):
                raise FamilyError(f"V is not symmetric: entry ({i},{j}) = {a} but ({j},{i}) = {b}")


# ---------------------------------------------------------------------------
# user-defined families
# ---------------------------------------------------------------------------


def _mean_names(dim):
    return ("x",) if dim == 1 else tuple(f"x{i + 1}" for i in range(dim))


def _z_names(dim):
    return ("z",) if dim == 1 else tuple(f"z{i + 1}" for i in range(dim))


def from_variance(V_text, mean_vars: Sequence[str], domain: Mapping[str, Sequence[float]],
                  constants: Mapping[str, float] | None = None, name: str = "custom") -> FamilySpec:
    """Build a family from its variance function only.

    ``V_text`` is an m x m matrix of expression strings (a flat list of one
    string is accepted for m = 1).  Symmetry and positive definiteness are
    checked at seeded points of ``domain``.
    """
    mean_vars = tuple(mean_vars)
    dim = len(mean_vars)
    if dim == 0:
        raise FamilyError("at least one mean variable is required")
    if isinstance(V_text, str):
        V_text = [[V_text]]
    elif dim == 1 and len(V_text) == 1 and isinstance(V_text[0], (str, Expr)):
        V_text = [[V_text[0]]]
    if len(V_text) != dim or any(len(row) != dim for row in V_text):
        raise FamilyError(f"V must be a {dim}x{dim} matrix")
    V = tuple(tuple(ex.as_expr(v) for v in row) for row in V_text)
    constants = {k: float(v) for k, v in (constants or {}).items()}
    box = {}
    for v in mean_vars:
        if v not in domain:
            raise FamilyError(f"domain is missing a range for {v!r}")
        lo, hi = domain[v]
        if not hi > lo or not (math.isfinite(lo) and math.isfinite(hi)):
            raise FamilyError(f"domain for {v!r} must be a finite non-empty interval")
        box[v] = (float(lo), float(hi))
    free = set().union(*(e.free for row in V for e in row))
    unknown = free - set(mean_vars) - constants.keys()
    if unknown:
        raise FamilyError(f"V uses unbound symbols {sorted(unknown)}; supply them as constants")
    f = FamilySpec(name=name, dim=dim, mean_vars=mean_vars, V=V, domain=Domain(box),
                   constants=constants, z_vars=_z_names(dim))
    _check_symmetric(f)
    check_positive_definite(f)
    return f


def load_family_file(path) -> FamilySpec:
    """Read ``{name, dim, mean_vars, V, domain[, constants]}`` from JSON."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        mean_vars = doc["mean_vars"]
        if "dim" in doc and doc["dim"] != len(mean_vars):
            raise FamilyError("dim does not match the number of mean_vars")
        return from_variance(doc["V"], mean_vars, doc["domain"], doc.get("constants"),
                             name=doc.get("name", "custom"))
    except KeyError as err:
        raise FamilyError(f"family file is missing key {err}") from None


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

BUILTIN_NAMES = (
    "binomial", "poisson", "negative_binomial", "normal", "gamma", "mvnormal",
    "multinomial", "negative_multinomial", "logarithmic", "mv_logarithmic",
    "random_walk", "borel_tanner",
)

PARAMETER_TABLE = {
    "binomial": {"n": "number of trials (positive integer)", "p": "success probability, 0<p<1"},
    "poisson": {"lambda": "rate, lambda>0"},
    "negative_binomial": {"n": "number of successes (positive integer)", "p": "success probability, 0<p<1"},
    "normal": {"alpha": "mean", "sigma2": "variance, sigma2>0"},
    "gamma": {"alpha": "rate, alpha>0", "lambda": "shape, lambda>0"},
    "mvnormal": {"alpha": "mean vector", "sigma": "covariance matrix (symmetric positive definite)"},
    "multinomial": {"n": "number of trials", "p": "category probabilities p_1..p_m, sum<1"},
    "negative_multinomial": {"n": "shape (positive integer)", "p": "p_1..p_m > 0"},
    "logarithmic": {"theta": "0<theta<1"},
    "mv_logarithmic": {"theta": "theta_1..theta_m > 0, sum<1"},
    "random_walk": {"n": "starting position (positive integer)",
                    "p": "left-step probability 0.5<p<1 (list for the multivariate form)"},
    "borel_tanner": {"n": "number of ancestors (positive integer)",
                     "alpha": "offspring mean 0<alpha<1 (list for the multivariate form)"},
}


def _exact(v):
    if isinstance(v, float):
        return Fraction(repr(v))
    return Fraction(v)


def _need(params, *names):
    missing = [n for n in names if n not in params]
    if missing:
        raise FamilyError(f"missing parameter(s): {', '.join(missing)}")
    return [params[n] for n in names]


def _pos_int(name, v):
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    if not isinstance(v, (int, np.integer)) or v < 1:
        raise FamilyError(f"{name} must be a positive integer, got {v!r}")
    return int(v)


def _in_open(name, v, lo, hi):
    v = float(v)
    if not (lo < v < hi):
        raise FamilyError(f"{name} must lie in ({lo}, {hi}), got {v}")
    return v


def _vec(name, v):
    if not isinstance(v, (list, tuple, np.ndarray)) or len(v) == 0:
        raise FamilyError(f"{name} must be a non-empty list")
    return [float(t) for t in v]


P = ex.parse


def builtin(name: str, params: Mapping) -> FamilySpec:
    """One of the built-in class-B families, in its mean parametrization."""
    try:
        make = _BUILDERS[name]
    except KeyError:
        raise FamilyError(f"unknown family {name!r}; choose from {', '.join(BUILTIN_NAMES)}") from None
    return make(dict(params))


def _binomial(params):
    n, p = _need(params, "n", "p")
    n = _pos_int("n", n)
    p = _in_open("p", p, 0, 1)
    return FamilySpec(
        name="binomial", dim=1, mean_vars=("x",), V=((P("x*(1 - x/n)"),),),
        domain=Domain({"x": (0.0, float(n))}), constants={"n": float(n)},
        laplace=P("(1 + x/n*(exp(-z) - 1))^n"), z_vars=("z",),
        s_char=(P("log(n - x) - log(x)"),),
        params={"n": n, "p": p}, oracle="binomial",
        param_map=lambda x: {"n": n, "p": float(x[0]) / n}, x0=(n * p,),
    )


def _poisson(params):
    (lam,) = _need(params, "lambda")
    lam = _in_open("lambda", lam, 0, math.inf)
    return FamilySpec(
        name="poisson", dim=1, mean_vars=("x",), V=((P("x"),),),
        domain=Domain({"x": (0.0, max(20.0, 4 * lam))}),
        laplace=P("exp(x*(exp(-z) - 1))"), z_vars=("z",), s_char=(P("-log(x)"),),
        params={"lambda": lam}, oracle="poisson",
        param_map=lambda x: {"lambda": float(x[0])}, x0=(lam,),
    )


def _negative_binomial(params):
    n, p = _need(params, "n", "p")
    n = _pos_int("n", n)
    p = _in_open("p", p, 0, 1)
    mean = n * (1 - p) / p
    return FamilySpec(
        name="negative_binomial", dim=1, mean_vars=("x",), V=((P("x*(1 + x/n)"),),),
        domain=Domain({"x": (0.0, max(4 * mean, 2.0 * n))}), constants={"n": float(n)},
        laplace=P("(1 + x/n*(1 - exp(-z)))^(-n)"), z_vars=("z",),
        s_char=(P("log(n + x) - log(x)"),),
        params={"n": n, "p": p}, oracle="negative_binomial",
        param_map=lambda x: {"n": n, "p": n / (n + float(x[0]))}, x0=(mean,),
    )


def _normal(params):
    alpha, sigma2 = _need(params, "alpha", "sigma2")
    alpha = float(alpha)
    sigma2 = _in_open("sigma2", sigma2, 0, math.inf)
    half = 10 * math.sqrt(sigma2) + 10
    return FamilySpec(
        name="normal", dim=1, mean_vars=("x",), V=((P("sigma2"),),),
        domain=Domain({"x": (alpha - half, alpha + half)}), constants={"sigma2": sigma2},
        laplace=P("exp(-z*x + z^2*sigma2/2)"), z_vars=("z",), s_char=(P("-x/sigma2"),),
        params={"alpha": alpha, "sigma2": sigma2}, oracle="normal",
        param_map=lambda x: {"alpha": float(x[0]), "sigma2": sigma2}, x0=(alpha,),
    )


def _gamma(params):
    alpha, lam = _need(params, "alpha", "lambda")
    alpha = _in_open("alpha", alpha, 0, math.inf)
    lam = _in_open("lambda", lam, 0, math.inf)
    mean = lam / alpha
    return FamilySpec(
        name="gamma", dim=1, mean_vars=("x",), V=((P("x^2/lambda"),),),
        domain=Domain({"x": (0.0, max(10.0, 4 * mean))}), constants={"lambda": lam},
        laplace=P("(1 + z*x/lambda)^(-lambda)"), z_vars=("z",), s_char=(P("lambda/x"),),
        params={"alpha": alpha, "lambda": lam}, oracle="gamma",
        param_map=lambda x: {"alpha": lam / float(x[0]), "lambda": lam}, x0=(mean,),
    )


def _mvnormal(params):
    alpha, sigma = _need(params, "alpha", "sigma")
    alpha = _vec("alpha", alpha)
    m = len(alpha)
    sig = np.asarray(sigma, dtype=float)
    if sig.shape != (m, m):
        raise FamilyError(f"sigma must be {m}x{m}")
    if not np.allclose(sig, sig.T, rtol=0, atol=1e-12):
        raise FamilyError("sigma must be symmetric")
    if np.any(np.linalg.eigvalsh(sig) <= 0):
        raise FamilyError("sigma must be positive definite")
    xs, zs = _mean_names(m), _z_names(m)
    S = [[ex.const(_exact(float(sig[i, j]))) for j in range(m)] for i in range(m)]
    lap_exp = ex.ZERO
    for i in range(m):
        lap_exp = lap_exp - ex.var(zs[i]) * ex.var(xs[i])
        for j in range(m):
            lap_exp = lap_exp + S[i][j] * ex.var(zs[i]) * ex.var(zs[j]) / 2
    Sinv = _fraction_inverse([[_exact(float(sig[i, j])) for j in range(m)] for i in range(m)])
    s_char = tuple(
        ex.neg(sum((ex.const(Sinv[i][j]) * ex.var(xs[j]) for j in range(m)), ex.ZERO))
        for i in range(m)
    )
    half = 10 * float(np.sqrt(np.max(np.diag(sig)))) + 10
    return FamilySpec(
        name="mvnormal", dim=m, mean_vars=xs, V=tuple(tuple(row) for row in S),
        domain=Domain({xs[i]: (alpha[i] - half, alpha[i] + half) for i in range(m)}),
        laplace=ex.exp(lap_exp), z_vars=zs, s_char=s_char,
        params={"alpha": alpha, "sigma": sig.tolist()}, oracle="mvnormal",
        param_map=lambda x: {"alpha": [float(t) for t in x], "sigma": sig.tolist()},
        x0=tuple(alpha),
    )


def _fraction_inverse(a):
    n = len(a)
    m = [list(map(Fraction, row)) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(a)]
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            raise FamilyError("matrix is singular")
        m[col], m[piv] = m[piv], m[col]
        pv = m[col][col]
        m[col] = [v / pv for v in m[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                fac = m[r][col]
                m[r] = [a_ - fac * b_ for a_, b_ in zip(m[r], m[col])]
    return [row[n:] for row in m]


def _sum_expr(terms):
    total = ex.ZERO
    for t in terms:
        total = total + t
    return total


def _multinomial_like(name, params, sign):
    n, p = _need(params, "n", "p")
    n = _pos_int("n", n)
    p = _vec("p", p)
    m = len(p)
    if any(not (0 < pi < 1) for pi in p):
        raise FamilyError("each p_i must lie in (0, 1)")
    if sign < 0 and sum(p) >= 1:
        raise FamilyError("multinomial probabilities p_1..p_m must sum to less than 1")
    xs, zs = _mean_names(m), _z_names(m)
    X = [ex.var(v) for v in xs]
    N = ex.var("n")
    V = tuple(
        tuple(X[i] * (ex.const(int(i == j)) + sign * X[j] / N) for j in range(m))
        for i in range(m)
    )
    S = _sum_expr(X)
    if sign < 0:
        inner = ex.ONE + _sum_expr(X[i] / N * (ex.exp(-ex.var(zs[i])) - 1) for i in range(m))
        laplace = inner ** N
        s_char = tuple(ex.log(N - S) - ex.log(X[i]) for i in range(m))
        constraints = (N - S,)
        box = {v: (0.0, float(n)) for v in xs}
    else:
        inner = ex.ONE + _sum_expr(X[i] / N * (1 - ex.exp(-ex.var(zs[i]))) for i in range(m))
        laplace = inner ** (-N)
        s_char = tuple(ex.log(N + S) - ex.log(X[i]) for i in range(m))
        constraints = ()
        box = {v: (0.0, max(4.0 * n * max(p), float(n))) for v in xs}
    return FamilySpec(
        name=name, dim=m, mean_vars=xs, V=V, domain=Domain(box, constraints),
        constants={"n": float(n)}, laplace=laplace, z_vars=zs, s_char=s_char,
        params={"n": n, "p": p}, oracle=name,
        param_map=lambda x: {"n": n, "p": [float(t) / n for t in x]},
        x0=tuple(n * pi for pi in p),
    )


def _multinomial(params):
    return _multinomial_like("multinomial", params, -1)


def _negative_multinomial(params):
    return _multinomial_like("negative_multinomial", params, +1)


def _logarithmic(params):
    (theta,) = _need(params, "theta")
    theta = _in_open("theta", theta, 0, 1)
    mean = P("-theta/((1 - theta)*log(1 - theta))")
    V = P("-theta/((1 - theta)^2*log(1 - theta))*(1 + theta/log(1 - theta))")
    chart = Chart(vars=("theta",), mean=(mean,), box={"theta": (0.0, 1.0)})
    x0 = ex.evaluate(mean, {"theta": theta})
    return FamilySpec(
        name="logarithmic", dim=1, mean_vars=("x",), V=((V,),),
        domain=Domain({"x": (1.0, math.inf)}),
        laplace=P("log(1 - theta*exp(-z))/log(1 - theta)"), z_vars=("z",),
        s_char=(P("-log(theta)"),),
        params={"theta": theta}, oracle="logarithmic", chart=chart,
        param_map=None, x0=(x0,),
        notes=("V is written in the natural coordinate theta; d/dx is taken through the chart",),
    )


def _mv_logarithmic(params):
    (theta,) = _need(params, "theta")
    theta = _vec("theta", theta)
    m = len(theta)
    if any(t <= 0 for t in theta) or sum(theta) >= 1:
        raise FamilyError("theta_i must be positive with sum < 1")
    ts = tuple(f"theta{i + 1}" for i in range(m))
    T = [ex.var(t) for t in ts]
    tot = _sum_expr(T)
    L = ex.log(1 - tot)
    k = (1 - tot) * L
    mean = tuple(-T[i] / k for i in range(m))
    V = tuple(
        tuple(-T[i] / k * (ex.const(int(i == j)) + T[j] * (1 + L) / k) for j in range(m))
        for i in range(m)
    )
    zs = _z_names(m)
    lap = ex.log(1 - _sum_expr(T[i] * ex.exp(-ex.var(zs[i])) for i in range(m))) / L
    chart = Chart(vars=ts, mean=mean, box={t: (0.0, 1.0) for t in ts}, constraints=(1 - tot,))
    x0 = tuple(ex.evaluate_many(mean, dict(zip(ts, theta))))
    xs = _mean_names(m)
    return FamilySpec(
        name="mv_logarithmic", dim=m, mean_vars=xs, V=V,
        domain=Domain({v: (0.0, math.inf) for v in xs}),
        laplace=lap, z_vars=zs, s_char=tuple(-ex.log(t) for t in T),
        params={"theta": theta}, oracle="mv_logarithmic", chart=chart, x0=x0,
        verified=False,
        notes=("multivariate V implemented as printed; unverified",),
    )


def _random_walk(params):
    n, p = _need(params, "n", "p")
    n = _pos_int("n", n)
    if isinstance(p, (list, tuple, np.ndarray)):
        return _random_walk_mv(n, _vec("p", p))
    p = _in_open("p", p, 0.5, 1)
    mean = n / (2 * p - 1)
    lap = P("((1 - sqrt(1 - (1 - n^2/x^2)*exp(-2*z)))/((1 - n/x)*exp(-z)))^n")
    return FamilySpec(
        name="random_walk", dim=1, mean_vars=("x",), V=((P("x^3/n^2 - x"),),),
        domain=Domain({"x": (float(n), max(20.0 * n, 4 * mean))}), constants={"n": float(n)},
        laplace=lap, z_vars=("z",), s_char=(P("-log(1 - n^2/x^2)/2 + log(2)"),),
        params={"n": n, "p": p}, oracle="random_walk",
        param_map=lambda x: {"n": n, "p": 0.5 * (1 + n / float(x[0]))}, x0=(mean,),
    )


def _random_walk_mv(n, p):
    if any(not (0.5 < pi < 1) for pi in p):
        raise FamilyError("each p_i must lie in (0.5, 1)")
    m = len(p)
    xs = _mean_names(m)
    X = [ex.var(v) for v in xs]
    N = ex.var("n")
    S = _sum_expr(X)
    tail = 2 * N / S - S / N
    V = tuple(tuple(X[i] * (ex.const(int(i == j)) - X[j] / N) * tail for j in range(m)) for i in range(m))
    return FamilySpec(
        name="random_walk", dim=m, mean_vars=xs, V=V,
        domain=Domain({v: (float(n), 20.0 * n) for v in xs}), constants={"n": float(n)},
        z_vars=_z_names(m), params={"n": n, "p": p}, oracle=None,
        x0=tuple(n / (2 * pi - 1) for pi in p), verified=False,
        notes=("multivariate V implemented as printed; unverified; no pmf or sampler",),
    )


def _borel_tanner(params):
    n, alpha = _need(params, "n", "alpha")
    n = _pos_int("n", n)
    if isinstance(alpha, (list, tuple, np.ndarray)):
        return _borel_tanner_mv(n, _vec("alpha", alpha))
    alpha = _in_open("alpha", alpha, 0, 1)
    mean = n / (1 - alpha)
    return FamilySpec(
        name="borel_tanner", dim=1, mean_vars=("x",), V=((P("x^3/n^2 - x^2/n"),),),
        domain=Domain({"x": (float(n), max(20.0 * n, 4 * mean))}), constants={"n": float(n)},
        z_vars=("z",), s_char=(P("1 - n/x - log(1 - n/x)"),),
        params={"n": n, "alpha": alpha}, oracle="borel_tanner",
        param_map=lambda x: {"n": n, "alpha": 1 - n / float(x[0])}, x0=(mean,),
    )


def _borel_tanner_mv(n, alpha):
    if any(not (0 < a < 1) for a in alpha):
        raise FamilyError("each alpha_i must lie in (0, 1)")
    m = len(alpha)
    xs = _mean_names(m)
    X = [ex.var(v) for v in xs]
    N = ex.var("n")
    S = _sum_expr(X)
    # (1-alpha)^{-1} = S/n and alpha = 1 - n/S for the pooled alpha
    bracket = 2 - (S / N - (1 - N / S))
    V = tuple(tuple(X[j] * (ex.const(int(i == j)) - X[j] / N * bracket) for j in range(m)) for i in range(m))
    return FamilySpec(
        name="borel_tanner", dim=m, mean_vars=xs, V=V,
        domain=Domain({v: (float(n), 20.0 * n) for v in xs}), constants={"n": float(n)},
        z_vars=_z_names(m), params={"n": n, "alpha": alpha}, oracle=None,
        x0=tuple(n / (1 - a) for a in alpha), verified=False,
        notes=("multivariate V implemented as printed (not symmetric); unverified; no pmf or sampler",),
    )


_BUILDERS = {
    "binomial": _binomial,
    "poisson": _poisson,
    "negative_binomial": _negative_binomial,
    "normal": _normal,
    "gamma": _gamma,
    "mvnormal": _mvnormal,
    "multinomial": _multinomial,
    "negative_multinomial": _negative_multinomial,
    "logarithmic": _logarithmic,
    "mv_logarithmic": _mv_logarithmic,
    "random_walk": _random_walk,
    "borel_tanner": _borel_tanner,
}


# ---------------------------------------------------------------------------
# Laplace transform checks
# ---------------------------------------------------------------------------


@dataclass
class ResidualReport:
    grid: list
    residuals: list
    max_abs: float
    tol: float
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.max_abs <= self.tol

    def to_dict(self):
        return {
            "grid": [{"z": list(z), "x": list(x)} for z, x in self.grid],
            "residuals": self.residuals,
            "max_abs": self.max_abs,
            "tol": self.tol,
            "skipped": self.skipped,
            "passed": self.passed,
        }


def eq1_residuals(f: FamilySpec) -> list:
    """Left-hand sides of the coordinate equations, as expressions.

    ``dphi/dz_i + sum_j V_ij dphi/dx_j + x_i phi`` for each i.
    """
    if f.laplace is None:
        raise FamilyError(f"family {f.name!r} has no Laplace transform")
    phi = f.laplace
    memo = {}
    dphi = [f.d(phi, j, memo) for j in range(f.dim)]
    out = []
    for i in range(f.dim):
        r = ex.diff(phi, f.z_vars[i], memo)
        for j in range(f.dim):
            r = r + f.V[i][j] * dphi[j]
        out.append(r + f.mean_expr(i) * phi)
    return out


def _cyclic_grid(ranges, points):
    """``points`` vectors; coordinate c walks its range shifted by c."""
    out = []
    for k in range(points):
        vec = []
        for c, (lo, hi) in enumerate(ranges):
            t = ((k + c) % points) / (points - 1) if points > 1 else 0.5
            vec.append(lo + t * (hi - lo))
        out.append(tuple(vec))
    return out


def default_grid(f: FamilySpec, points: int = 5) -> dict:
    if f.chart is not None:
        sample = f.sample_bindings(points, seed=1, shrink=0.2)
        xs = sorted(tuple(b[v] for v in f.mean_vars) for b in sample)
        ranges = [(min(x[c] for x in xs), max(x[c] for x in xs)) for c in range(f.dim)]
        if f.dim > 1:
            return {"z": [-0.5, 0.5], "points": points, "x_points": xs}
        return {"z": [-0.5, 0.5], "x": {f.mean_vars[0]: list(ranges[0])}, "points": points}
    box = f.sampling_box(shrink=0.2)
    ranges = {}
    for i, v in enumerate(f.mean_vars):
        lo, hi = box[v]
        if f.x0 is not None:
            c = float(f.x0[i])
            half = 0.5 * abs(c) if c != 0 else 1.0
            lo, hi = max(lo, c - half), min(hi, c + half)
        ranges[v] = [lo, hi]
    return {"z": [-0.5, 0.5], "x": ranges, "points": points}


def verify_eq1(f: FamilySpec, grid_spec: Mapping | None = None, tol: float = 1e-8) -> ResidualReport:
    """Residuals of the Laplace-transform equation on a z-by-x grid.

    ``grid_spec`` is ``{"z": [lo, hi], "x": {var: [lo, hi]}, "points": k}``
    (k points per axis; multivariate axes are walked cyclically so all
    coordinates vary).  Points outside the family's domain are skipped.
    """
    spec = dict(default_grid(f) if grid_spec is None else grid_spec)
    k = int(spec.get("points", 5))
    zlo, zhi = spec.get("z", (-0.5, 0.5))
    zs = _cyclic_grid([(zlo, zhi)] * f.dim, k)
    if "x_points" in spec:
        xs = [tuple(p) for p in spec["x_points"]]
    else:
        xr = spec.get("x") or default_grid(f)["x"]
        xs = _cyclic_grid([tuple(xr[v]) for v in f.mean_vars], k)
    res_exprs = eq1_residuals(f)
    grid, residuals, skipped = [], [], 0
    max_abs = 0.0
    for x in xs:
        try:
            env = f.bindings(x)
        except FamilyError:
            skipped += len(zs)
            continue
        if not f.domain.contains(env):
            skipped += len(zs)
            continue
        for z in zs:
            env_z = dict(env)
            env_z.update(zip(f.z_vars, z))
            try:
                vals = ex.evaluate_many(res_exprs, env_z)
            except DomainError:
                skipped += 1
                continue
            grid.append((tuple(float(t) for t in z), tuple(float(t) for t in x)))
            residuals.append(vals)
            max_abs = max(max_abs, max(abs(v) for v in vals))
    if not grid:
        raise DomainError("no grid point lies inside the domain of the Laplace transform")
    return ResidualReport(grid=grid, residuals=residuals, max_abs=max_abs, tol=tol, skipped=skipped)


def laplace_eval(f: FamilySpec, z, x=None) -> float:
    """phi(z, x) = E exp(-z . xi) from the stored closed form."""
    if f.laplace is None:
        raise FamilyError(f"family {f.name!r} has no Laplace transform")
    env = f.bindings(x)
    env.update(zip(f.z_vars, _as_vector(z, f.dim)))
    return ex.evaluate(f.laplace, env)


def s_characteristic_numeric(f: FamilySpec, x_ref: float, x_query: float) -> float:
    """s(x_query) normalised by s(x_ref) = 0, from ds/dx = -1/V(x)."""
    if f.dim != 1:
        raise FamilyError("the numeric s-characteristic is univariate only")
    x_ref, x_query = float(x_ref), float(x_query)
    if x_ref == x_query:
        return 0.0
    lo, hi = min(x_ref, x_query), max(x_ref, x_query)
    blo, bhi = f.domain.box[f.mean_vars[0]]
    if not (blo < lo and hi < bhi):
        raise FamilyError(f"interval [{lo}, {hi}] leaves the domain ({blo}, {bhi})")

    def inv_v(t):
        v = f.V_at((t,))[0, 0]
        if not v > 0:
            raise FamilyError(f"V is not positive at x={t}")
        return 1.0 / v

    val, _err = integrate.quad(inv_v, x_ref, x_query, epsabs=1e-10, epsrel=1e-12, limit=200)
    return -val
