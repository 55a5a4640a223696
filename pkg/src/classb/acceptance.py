"""The acceptance suite: thirteen end-to-end checks at fixed tolerances.

Each check returns a :class:`Outcome`; ``run_all`` prints one PASS/FAIL line
per check.  Shared by ``tests/test_acceptance.py`` and ``classb selftest``.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass
from math import factorial

import numpy as np

from . import closedforms, expr as ex, families as F, inference, moments as M, oracle, tails
from . import transforms as T
from .rng import default_seed

__all__ = ["Outcome", "CRITERIA", "run_all", "run_one"]


@dataclass
class Outcome:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} [{self.number:2d}] {self.name} ({self.seconds:.2f}s): {self.detail}"


def _rel(a, b, floor=0.0):
    return abs(a - b) / max(abs(b), floor, 1e-300)


class _Worst:
    """Tracks the largest error seen and where."""

    def __init__(self):
        self.value = 0.0
        self.where = ""

    def add(self, err, where):
        if not err <= self.value or not self.where:
            self.value = err
            self.where = where


def poisson_cumulant_flatness():
    w = _Worst()
    for lam in (0.5, 2.0, 7.0):
        f = F.builtin("poisson", {"lambda": lam})
        vals = M.evaluate_table(M.cumulants(f, 12))
        for k in range(1, 13):
            w.add(_rel(vals[(k,)], lam), f"lambda={lam}, k={k}")
    return w.value <= 1e-10, f"max rel err {w.value:.2e} (tol 1e-10) at {w.where}"


def gamma_cumulants():
    w = _Worst()
    for lam in (1.0, 3.0):
        for rate in (0.5, 2.0):
            f = F.builtin("gamma", {"alpha": rate, "lambda": lam})
            vals = M.evaluate_table(M.cumulants(f, 10))
            for k in range(1, 11):
                w.add(_rel(vals[(k,)], factorial(k - 1) * lam * rate ** (-k)), f"lambda={lam}, rate={rate}, k={k}")
    return w.value <= 1e-9, f"max rel err {w.value:.2e} (tol 1e-9) at {w.where}"


def quadratic_closed_form():
    f = F.from_variance("x*(a*x + b)", ["x"], {"x": (0.05, 5.0)}, {"a": 1.0, "b": 1.0}, name="quadratic")
    table = M.cumulants(f, 11)
    rng = np.random.default_rng(7)
    points = []
    while len(points) < 16:
        a, b, x = rng.uniform(-1, 1), rng.uniform(0, 2), rng.uniform(0.1, 3)
        if x * (a * x + b) > 0.05:
            points.append((a, b, x))
    w = _Worst()
    for a, b, x in points:
        vals = M.evaluate_table(table, {"x": x, "a": a, "b": b})
        for k in range(1, 11):
            ref = closedforms.cumulant_quadratic(a, b, x, k)
            w.add(_rel(vals[(k + 1,)], ref), f"a={a:.3f}, b={b:.3f}, x={x:.3f}, order {k + 1}")
    return w.value <= 1e-9, f"16 points, orders 2..11, max rel err {w.value:.2e} (tol 1e-9) at {w.where}"


ORACLE_CASES = (
    ("binomial", {"n": 5, "p": 0.3}),
    ("poisson", {"lambda": 2.0}),
    ("negative_binomial", {"n": 3, "p": 0.4}),
    ("normal", {"alpha": 0.0, "sigma2": 1.0}),
    ("gamma", {"alpha": 2.0, "lambda": 3.0}),
)


def oracle_moment_equivalence():
    w = _Worst()
    for name, params in ORACLE_CASES:
        f = F.builtin(name, params)
        vals = M.evaluate_table(M.raw_moments(f, 6))
        ref = oracle.oracle_moments(name, params, 6)
        for k in range(1, 7):
            # unit floor: odd normal moments are exactly zero
            w.add(_rel(vals[(k,)], ref[(k,)], floor=1.0), f"{name}, k={k}")
    return w.value <= 1e-8, f"max rel err {w.value:.2e} (tol 1e-8) at {w.where}"


EQ1_CASES = (
    ("poisson", {"lambda": 2.0}),
    ("binomial", {"n": 5, "p": 0.3}),
    ("negative_binomial", {"n": 3, "p": 0.4}),
    ("normal", {"alpha": 0.0, "sigma2": 1.0}),
    ("gamma", {"alpha": 2.0, "lambda": 3.0}),
    ("multinomial", {"n": 6, "p": [0.2, 0.3]}),
)


def laplace_residuals():
    parts = []
    ok = True
    for name, params in EQ1_CASES:
        rep = F.verify_eq1(F.builtin(name, params), tol=1e-8)
        ok = ok and rep.passed and len(rep.grid) == 25
        parts.append(f"{name} {rep.max_abs:.1e}/{len(rep.grid)}pts")
    return ok, "max |residual| on 5x5 grids (tol 1e-8): " + ", ".join(parts)


def cumulant_additivity():
    w = _Worst()
    for name, params in (("poisson", {"lambda": 2.0}), ("binomial", {"n": 5, "p": 0.3})):
        f = F.builtin(name, params)
        base = M.evaluate_table(M.cumulants(f, 6))
        x = f.x0[0]
        for n in (2, 5):
            g = T.convolve_iid(f, n)
            vals = M.evaluate_table(M.cumulants(g, 6), {"x": n * x})
            for k in range(1, 7):
                w.add(_rel(vals[(k,)], n * base[(k,)]), f"{name}, n={n}, k={k}")
    return w.value <= 1e-9, f"max rel err {w.value:.2e} (tol 1e-9) at {w.where}"


def _seeded_matrix(seed):
    rng = np.random.default_rng(seed)
    while True:
        A = np.round(rng.uniform(-2, 2, size=(2, 2)), 3)
        if abs(np.linalg.det(A)) > 0.5:
            return A, np.round(rng.uniform(-1, 1, size=2), 3)


def affine_round_trip():
    A, b = _seeded_matrix(11)
    Ainv = np.linalg.inv(A)
    w = _Worst()
    ok = True
    for name, params in (("mvnormal", {"alpha": [0.5, -1.0], "sigma": [[2.0, 0.3], [0.3, 1.0]]}),
                         ("multinomial", {"n": 6, "p": [0.2, 0.3]})):
        f = F.builtin(name, params)
        g = T.affine(f, A, b)
        back = T.affine(g, Ainv, -Ainv @ b)
        box = f.sampling_box()
        for i in range(2):
            for j in range(2):
                ok = ok and ex.equiv_numeric(back.V[i][j], f.V[i][j], box, tol=1e-9, fixed=f.constants)
        y = A @ np.asarray(f.x0) + b
        vals = M.evaluate_table(M.central_moments(g, 2), dict(zip(g.mean_vars, y)))
        want = A @ f.V_at() @ A.T
        got = np.array([[vals[(2, 0)], vals[(1, 1)]], [vals[(1, 1)], vals[(0, 2)]]])
        for i in range(2):
            for j in range(2):
                w.add(_rel(got[i, j], want[i, j], floor=1.0), f"{name} entry ({i},{j})")
    ok = ok and w.value <= 1e-9
    return ok, f"A={A.tolist()}, b={b.tolist()}; round trip equiv {'ok' if ok else 'FAILED'}; " \
               f"covariance max rel err {w.value:.2e} (tol 1e-9) at {w.where}"


FISHER_CASES = (
    ("binomial", {"n": 5, "p": 0.3}),
    ("poisson", {"lambda": 2.0}),
    ("negative_binomial", {"n": 3, "p": 0.4}),
    ("normal", {"alpha": 0.0, "sigma2": 1.0}),
    ("gamma", {"alpha": 2.0, "lambda": 3.0}),
    ("mvnormal", {"alpha": [0.5, -1.0], "sigma": [[2.0, 0.3], [0.3, 1.0]]}),
    ("multinomial", {"n": 6, "p": [0.2, 0.3]}),
    ("negative_multinomial", {"n": 3, "p": [0.2, 0.3]}),
    ("logarithmic", {"theta": 0.4}),
    ("mv_logarithmic", {"theta": [0.2, 0.3]}),
    ("random_walk", {"n": 1, "p": 0.75}),
    ("random_walk", {"n": 2, "p": [0.7, 0.8]}),
    ("borel_tanner", {"n": 1, "alpha": 0.3}),
    ("borel_tanner", {"n": 2, "alpha": [0.3, 0.5]}),
)


def _mc_fisher(name, params, count, seed):
    f = F.builtin(name, params)
    est, se = inference.score_covariance_mc(f, count, seed)
    want = inference.fisher_info(f)
    z = np.abs(est - want) / se
    return float(np.max(z)), est, want


def fisher_information(mc_count=1_000_000):
    w = _Worst()
    for name, params in FISHER_CASES:
        f = F.builtin(name, params)
        for x in f.sample_points(3, seed=3, shrink=0.2):
            I = inference.fisher_info(f, x)
            err = float(np.max(np.abs(I @ f.V_at(x) - np.eye(f.dim))))
            w.add(err, f"{name} dim {f.dim} at {np.round(x, 4).tolist()}")
    seed = default_seed()
    zs = {}
    for name, params in (("poisson", {"lambda": 2.0}), ("binomial", {"n": 5, "p": 0.3})):
        zs[name], _, _ = _mc_fisher(name, params, mc_count, seed)
    ok = w.value <= 1e-9 and all(z <= 3 for z in zs.values())
    mc = ", ".join(f"{k} {v:.2f} s.e." for k, v in zs.items())
    return ok, f"max |I V - Id| {w.value:.1e} (tol 1e-9) at {w.where}; MC score covariance: {mc} (tol 3)"


def poisson_tail():
    f = F.builtin("poisson", {"lambda": 1.0})
    A, _ = tails.exponent_A(f, 1.0, 2.0)
    target = 2 * math.log(2) - 1
    dual = tails.dual_exponent(f, 1.0, 2.0)
    exact = 1 - 2 * math.exp(-1)
    ok = abs(A - target) <= 1e-8 and abs(dual - A) <= 1e-7 and exact <= math.exp(-A)
    margins = []
    for y in (1.5, 2.0, 3.0, 5.0):
        rep = tails.tail_bound(f, 1.0, y)
        ok = ok and rep.oracle_tail <= rep.bound
        margins.append(f"y={y}: {rep.oracle_tail:.4g}<={rep.bound:.4g}")
    return ok, f"|A-(2ln2-1)| {abs(A - target):.1e}, |dual-A| {abs(dual - A):.1e}; " + "; ".join(margins)


def gaussian_tail():
    sigma2, x = 2.0, 0.5
    f = F.builtin("normal", {"alpha": x, "sigma2": sigma2})
    w = _Worst()
    for y in (-2.0, 0.0, 1.0, 2.5, 4.0):
        A, _ = tails.exponent_A(f, x, y)
        w.add(abs(A - (y - x) ** 2 / (2 * sigma2)), f"y={y}")
    return w.value <= 1e-8, f"sigma2={sigma2}, x={x}: max abs err {w.value:.1e} (tol 1e-8) at {w.where}"


def random_walk_stack(mc_count=1_000_000):
    notes = []
    f = F.builtin("random_walk", {"n": 1, "p": 0.75})
    form = ex.parse("x^3/n^2 - x")
    same = ex.equiv_numeric(f.V[0][0], form, {"x": (1.01, 20.0), "n": (1.0, 5.0)}, tol=1e-12)
    sigma2 = M.evaluate_table(M.cumulants(f, 2))[(2,)]
    ok = same and abs(sigma2 - 6) <= 1e-12
    notes.append(f"V equiv x^3/n^2 - x: {same}; sigma_2(n=1,p=0.75)={sigma2:.12g}")
    w = _Worst()
    for n, p in ((1, 0.75), (3, 0.6)):
        g = F.builtin("random_walk", {"n": n, "p": p})
        vals = M.evaluate_table(M.cumulants(g, 8))
        for k in range(0, 7):
            w.add(_rel(vals[(k + 2,)], closedforms.randomwalk_cumulant(n, p, k)), f"n={n}, p={p}, order {k + 2}")
    ok = ok and w.value <= 1e-9
    notes.append(f"closed form vs recursion max rel err {w.value:.1e} at {w.where}")
    s = oracle.mc_sample("random_walk", {"n": 1, "p": 0.75}, mc_count, default_seed()).ravel()
    N = s.size
    mean, var = s.mean(), s.var(ddof=1)
    mu4 = np.mean((s - mean) ** 4)
    z_mean = abs(mean - 2.0) / math.sqrt(var / N)
    z_var = abs(var - 6.0) / math.sqrt((mu4 - var**2) / N)
    ok = ok and z_mean <= 4 and z_var <= 4
    notes.append(f"MC mean {mean:.4f} ({z_mean:.2f} s.e.), variance {var:.4f} ({z_var:.2f} s.e.)")
    return ok, "; ".join(notes)


def borel_tanner_oracle():
    w = _Worst()
    for n, a in ((1, 0.3), (2, 0.5)):
        m = oracle.enumerate_moments("borel_tanner", {"n": n, "alpha": a}, 2)
        mean = m[(1,)]
        var = m[(2,)] - mean**2
        w.add(_rel(mean, n / (1 - a)), f"mean at n={n}, alpha={a}")
        w.add(_rel(var, n * a / (1 - a) ** 3), f"variance at n={n}, alpha={a}")
    return w.value <= 1e-8, f"max rel err {w.value:.1e} (tol 1e-8) at {w.where}"


def multivariate_recursion():
    params = {"n": 4, "p": [0.2, 0.3]}
    f = F.builtin("multinomial", params)
    vals = M.evaluate_table(M.raw_moments(f, 4))
    ref = oracle.enumerate_moments("multinomial", params, 4)
    w = _Worst()
    for k, v in ref.items():
        w.add(_rel(vals[k], v, floor=1.0), f"k={k}")
    box = f.sampling_box()
    paths_ok = all(
        ex.equiv_numeric(M.raw_moment_along(f, p), M.raw_moment_along(f, paths[0]), box, tol=1e-12,
                         fixed=f.constants)
        for paths in ([(0, 1), (1, 0)], [(0, 0, 1), (0, 1, 0), (1, 0, 0)])
        for p in paths
    )
    ok = w.value <= 1e-10 and paths_ok
    return ok, f"max rel err {w.value:.1e} (tol 1e-10) at {w.where}; path independence {paths_ok}"


CRITERIA = (
    (1, "poisson cumulant flatness", poisson_cumulant_flatness),
    (2, "gamma cumulants", gamma_cumulants),
    (3, "quadratic-variance closed form", quadratic_closed_form),
    (4, "oracle moment equivalence", oracle_moment_equivalence),
    (5, "laplace-transform equation residuals", laplace_residuals),
    (6, "iid-sum cumulant additivity", cumulant_additivity),
    (7, "affine round trip and covariance", affine_round_trip),
    (8, "fisher information", fisher_information),
    (9, "poisson tail exponent", poisson_tail),
    (10, "gaussian tail exponent", gaussian_tail),
    (11, "random-walk first passage", random_walk_stack),
    (12, "borel-tanner oracle", borel_tanner_oracle),
    (13, "multivariate recursion vs enumeration", multivariate_recursion),
)


def run_one(number: int) -> Outcome:
    for num, name, fn in CRITERIA:
        if num == number:
            start = time.perf_counter()
            try:
                passed, detail = fn()
            except Exception as err:  # a crash is a failure, reported with its cause
                passed, detail = False, f"{type(err).__name__}: {err}"
            return Outcome(num, name, bool(passed), detail, time.perf_counter() - start)
    raise KeyError(number)


def run_all(stream=None) -> list:
    stream = sys.stdout if stream is None else stream
    outcomes = []
    for num, _, _ in CRITERIA:
        out = run_one(num)
        print(out.line(), file=stream, flush=True)
        outcomes.append(out)
    passed = sum(o.passed for o in outcomes)
    print(f"{passed}/{len(outcomes)} criteria passed", file=stream)
    return outcomes


if __name__ == "__main__":
    sys.exit(0 if all(o.passed for o in run_all()) else 1)
