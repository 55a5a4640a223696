"""Ground truth straight from the distributions.

Moments by direct pmf summation or density quadrature, exact tail
probabilities, log-densities and seeded samplers.  Nothing here touches the
variance-function machinery, so agreement with the recursions is a genuine
cross-check.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from typing import Mapping

import numpy as np
from scipy import integrate, special

from .errors import OracleError
from .rng import Xoshiro, default_seed

__all__ = [
    "DISCRETE",
    "CONTINUOUS",
    "SAMPLERS",
    "pmf_support",
    "enumerate_moments",
    "quadrature_moments",
    "oracle_moments",
    "exact_tail",
    "logpdf",
    "mc_sample",
    "samples_to_csv",
    "STEP_CAP",
]

DISCRETE = ("binomial", "poisson", "negative_binomial", "logarithmic", "random_walk", "borel_tanner",
            "multinomial", "negative_multinomial", "mv_logarithmic")
CONTINUOUS = ("normal", "gamma", "mvnormal")
STEP_CAP = 10_000_000
MAX_SUPPORT = 10_000_000


# ---------------------------------------------------------------------------
# log-pmfs, vectorized over integer arrays
# ---------------------------------------------------------------------------


def _is_list(v):
    return isinstance(v, (list, tuple, np.ndarray))


def _univariate_logpmf(name, params):
    """(log pmf callable on an int array, first support point, support step)."""
    if name == "binomial":
        n, p = int(params["n"]), float(params["p"])
        def lp(k):
            return (special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)
                    + k * math.log(p) + (n - k) * math.log1p(-p))
        return lp, 0, 1
    if name == "poisson":
        lam = float(params["lambda"])
        return (lambda k: k * math.log(lam) - lam - special.gammaln(k + 1)), 0, 1
    if name == "negative_binomial":
        # failures before the n-th success
        n, p = int(params["n"]), float(params["p"])
        def lp(k):
            return (special.gammaln(n + k) - special.gammaln(n) - special.gammaln(k + 1)
                    + n * math.log(p) + k * math.log1p(-p))
        return lp, 0, 1
    if name == "logarithmic":
        th = float(params["theta"])
        c = -math.log(-math.log1p(-th))
        return (lambda k: k * math.log(th) - np.log(k) + c), 1, 1
    if name == "random_walk":
        n, p = int(params["n"]), float(params["p"])
        if _is_list(params["p"]):
            raise OracleError("no pmf for the multivariate random walk")
        q = 1.0 - p
        def lp(k):
            left, right = (k + n) // 2, (k - n) // 2
            return (math.log(n) - np.log(k) + special.gammaln(k + 1) - special.gammaln(left + 1)
                    - special.gammaln(right + 1) + left * math.log(p) + right * math.log(q))
        return lp, n, 2
    if name == "borel_tanner":
        if _is_list(params["alpha"]):
            raise OracleError("no pmf for the multivariate Borel-Tanner family")
        n, a = int(params["n"]), float(params["alpha"])
        def lp(k):
            return (math.log(n) - np.log(k) - a * k + (k - n) * np.log(a * k) - special.gammaln(k - n + 1))
        return lp, n, 1
    raise OracleError(f"no univariate pmf for family {name!r}")


def _finite_max(name, params):
    if name == "binomial":
        return int(params["n"])
    return None


def pmf_support(name: str, params: Mapping, tail_tol: float = 1e-13, weight_power: int = 0):
    """Support points and pmf values, truncated once the omitted mass is below ``tail_tol``.

    With ``weight_power = K`` the walk also continues until k^K pmf(k) is
    negligible against the running K-th moment, so truncated moment sums
    keep full relative accuracy.
    """
    if tail_tol <= 0:
        raise OracleError("tail_tol must be positive")
    lp, start, step = _univariate_logpmf(name, params)
    top = _finite_max(name, params)
    if top is not None:
        k = np.arange(start, top + 1, step)
        return k, np.exp(lp(k))
    ks, ps = [], []
    mass = 0.0
    moment = 0.0
    block = 256
    k0 = start
    while True:
        k = np.arange(k0, k0 + block * step, step)
        pk = np.exp(lp(k.astype(float)))
        ks.append(k)
        ps.append(pk)
        mass += math.fsum(pk)
        w = pk * k.astype(float) ** weight_power
        moment += math.fsum(w)
        last = pk[-1]
        decreasing = pk[-1] <= pk[-2]
        if decreasing and 1.0 - mass < tail_tol and last < tail_tol * 1e-3 \
                and w[-1] < 1e-18 * max(moment, 1e-300):
            break
        k0 += block * step
        if (k0 - start) // step > MAX_SUPPORT:
            raise OracleError(f"support of {name!r} did not converge within {MAX_SUPPORT} points")
        block = min(block * 2, 1 << 16)
    return np.concatenate(ks), np.concatenate(ps)


def _check_moment_order(K):
    if not isinstance(K, (int, np.integer)) or K < 0:
        raise OracleError("K must be a non-negative integer")


def enumerate_moments(name: str, params: Mapping, K: int, tail_tol: float = 1e-13) -> dict:
    """Raw moments {k: E xi^k} for |k| <= K by summing the pmf."""
    _check_moment_order(K)
    if name in ("multinomial", "negative_multinomial", "mv_logarithmic"):
        return _enumerate_multivariate(name, params, K, tail_tol)
    if name not in DISCRETE:
        raise OracleError(f"{name!r} is not a discrete family with a pmf")
    k, p = pmf_support(name, params, tail_tol, weight_power=K)
    kf = k.astype(float)
    return {(j,): math.fsum(p * kf**j) for j in range(K + 1)}


def _multi_indices(m, K):
    out = []
    for total in range(K + 1):
        for combo in itertools.product(range(total + 1), repeat=m):
            if sum(combo) == total:
                out.append(combo)
    return out


def _enumerate_multivariate(name, params, K, tail_tol):
    if name == "mv_logarithmic":
        theta = [float(t) for t in params["theta"]]
        m = len(theta)
        tot = sum(theta)
        # the total T is logarithmic(tot); given T the split is multinomial(T, theta/tot)
        Tk, Tp = pmf_support("logarithmic", {"theta": tot}, tail_tol, weight_power=K)
        probs = [t / tot for t in theta]
    elif name == "multinomial":
        n = int(params["n"])
        p = [float(t) for t in params["p"]]
        m = len(p)
        rest = 1.0 - sum(p)
        if rest <= 0:
            raise OracleError("multinomial probabilities must sum to less than 1")
        Tk = np.array([n])
        Tp = np.array([1.0])
        probs = p + [rest]
    else:
        n = int(params["n"])
        p = [float(t) for t in params["p"]]
        m = len(p)
        q0 = 1.0 / (1.0 + sum(p))
        # total successes is negative binomial(n, q0); split multinomial(T, p/sum p)
        Tk, Tp = pmf_support("negative_binomial", {"n": n, "p": q0}, tail_tol, weight_power=K)
        s = sum(p)
        probs = [t / s for t in p]
    idx = _multi_indices(m, K)
    acc = {k: [] for k in idx}
    logs = [math.log(t) for t in probs]
    cats = len(probs)
    for T, pt in zip(Tk.tolist(), Tp.tolist()):
        if pt == 0.0:
            continue
        for counts in _compositions(T, cats):
            lw = math.lgamma(T + 1) + sum(c * l - math.lgamma(c + 1) for c, l in zip(counts, logs))
            w = pt * math.exp(lw)
            for k in idx:
                term = w
                for c, e in zip(counts[:m], k):
                    term *= c**e
                acc[k].append(term)
    return {k: math.fsum(v) for k, v in acc.items()}


def _compositions(T, parts):
    if parts == 1:
        yield (T,)
        return
    for first in range(T + 1):
        for rest in _compositions(T - first, parts - 1):
            yield (first,) + rest


def _density(name, params):
    if name == "normal":
        a, s2 = float(params["alpha"]), float(params["sigma2"])
        sd = math.sqrt(s2)
        return (lambda t: math.exp(-0.5 * (t - a) ** 2 / s2) / math.sqrt(2 * math.pi * s2)), (-math.inf, math.inf), a, sd
    if name == "gamma":
        rate, shape = float(params["alpha"]), float(params["lambda"])
        c = shape * math.log(rate) - math.lgamma(shape)

        def pdf(t):
            if t <= 0:
                return 0.0
            return math.exp(c + (shape - 1) * math.log(t) - rate * t)
        return pdf, (0.0, math.inf), shape / rate, math.sqrt(shape) / rate
    raise OracleError(f"no univariate density for family {name!r}")


def quadrature_moments(name: str, params: Mapping, K: int) -> dict:
    """Raw moments {k: E xi^k} for k <= K by adaptive quadrature of the density."""
    _check_moment_order(K)
    pdf, (lo, hi), centre, scale = _density(name, params)
    out = {}
    # split at the mode region so the adaptive rule sees the bulk
    pts = sorted({max(lo, centre - 8 * scale), centre, min(hi, centre + 8 * scale)})
    for k in range(K + 1):
        total = 0.0
        edges = [lo] + [p for p in pts if lo < p < hi] + [hi]
        for a, b in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(lambda t: t**k * pdf(t), a, b, epsabs=0.0, epsrel=1e-12, limit=400)
            total += val
        out[(k,)] = total
    return out


def oracle_moments(name: str, params: Mapping, K: int) -> dict:
    if name in CONTINUOUS:
        return quadrature_moments(name, params, K)
    return enumerate_moments(name, params, K)


def exact_tail(name: str, params: Mapping, y: float) -> float:
    """P(xi >= y) for a univariate family."""
    y = float(y)
    if name == "normal":
        a, s2 = float(params["alpha"]), float(params["sigma2"])
        return 0.5 * math.erfc((y - a) / math.sqrt(2 * s2))
    if name == "gamma":
        if y <= 0:
            return 1.0
        return float(special.gammaincc(float(params["lambda"]), float(params["alpha"]) * y))
    lp, start, step = _univariate_logpmf(name, params)
    if y <= start:
        return 1.0
    first = start + step * math.ceil((y - start) / step)
    top = _finite_max(name, params)
    if top is not None:
        if first > top:
            return 0.0
        k = np.arange(first, top + 1, step)
        return math.fsum(np.exp(lp(k)))
    terms = []
    k0 = first
    block = 256
    while True:
        k = np.arange(k0, k0 + block * step, step).astype(float)
        pk = np.exp(lp(k))
        terms.append(math.fsum(pk))
        total = math.fsum(terms)
        if pk[-1] <= pk[0] and pk[-1] <= 1e-17 * total:
            return total
        k0 += block * step
        if (k0 - first) // step > MAX_SUPPORT:
            raise OracleError("tail sum did not converge")
        block = min(block * 2, 1 << 16)


# ---------------------------------------------------------------------------
# log densities of samples
# ---------------------------------------------------------------------------


def logpdf(name: str, params: Mapping, samples) -> np.ndarray:
    """Log pmf / pdf of each row of ``samples``."""
    x = np.asarray(samples, dtype=float)
    if name in ("normal", "gamma") or name in DISCRETE and name not in (
            "multinomial", "negative_multinomial", "mv_logarithmic"):
        x = x.reshape(-1)
    if name == "normal":
        a, s2 = float(params["alpha"]), float(params["sigma2"])
        return -0.5 * (x - a) ** 2 / s2 - 0.5 * math.log(2 * math.pi * s2)
    if name == "gamma":
        rate, shape = float(params["alpha"]), float(params["lambda"])
        return shape * math.log(rate) - math.lgamma(shape) + (shape - 1) * np.log(x) - rate * x
    if name == "mvnormal":
        a = np.asarray(params["alpha"], dtype=float)
        S = np.asarray(params["sigma"], dtype=float)
        L = np.linalg.cholesky(S)
        d = np.linalg.solve(L, (x - a).T)
        return -0.5 * np.sum(d * d, axis=0) - np.sum(np.log(np.diag(L))) - 0.5 * len(a) * math.log(2 * math.pi)
    if name in ("multinomial", "negative_multinomial"):
        n = float(params["n"])
        p = np.asarray(params["p"], dtype=float)
        tot = x.sum(axis=1)
        if name == "multinomial":
            rest = 1.0 - p.sum()
            return (special.gammaln(n + 1) - special.gammaln(x + 1).sum(axis=1) - special.gammaln(n - tot + 1)
                    + (x * np.log(p)).sum(axis=1) + (n - tot) * math.log(rest))
        q0 = 1.0 / (1.0 + p.sum())
        return (special.gammaln(n + tot) - special.gammaln(n) - special.gammaln(x + 1).sum(axis=1)
                + n * math.log(q0) + (x * np.log(p * q0)).sum(axis=1))
    if name == "mv_logarithmic":
        th = np.asarray(params["theta"], dtype=float)
        tot = x.sum(axis=1)
        return (special.gammaln(tot) - special.gammaln(x + 1).sum(axis=1) + (x * np.log(th)).sum(axis=1)
                - math.log(-math.log1p(-th.sum())))
    lp, _, _ = _univariate_logpmf(name, params)
    return lp(x)


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def _inverse_cdf(rng, name, params, count):
    k, p = pmf_support(name, params, tail_tol=1e-15)
    cdf = np.cumsum(p)
    u = rng.uniform(count) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    return k[np.minimum(idx, len(k) - 1)].astype(float)


def _random_walk(rng, params, count):
    n, p = int(params["n"]), float(params["p"])
    pos = np.full(count, n, dtype=np.int64)
    steps = np.zeros(count, dtype=np.int64)
    active = np.arange(count)
    t = 0
    while active.size:
        t += 1
        if t > STEP_CAP:
            raise OracleError(f"{active.size} walks did not reach 0 within {STEP_CAP} steps")
        u = rng.uniform(active.size)
        pos[active] += np.where(u < p, -1, 1)
        steps[active] += 1
        active = active[pos[active] > 0]
    return steps.astype(float)


def _borel_tanner(rng, params, count):
    # each queued individual draws Poisson(alpha) children; stop when the queue empties
    n, a = int(params["n"]), float(params["alpha"])
    cdf = np.cumsum(np.exp(_univariate_logpmf("poisson", {"lambda": a})[0](np.arange(64.0))))
    queue = np.full(count, n, dtype=np.int64)
    total = np.zeros(count, dtype=np.int64)
    active = np.arange(count)
    t = 0
    while active.size:
        t += 1
        if t > STEP_CAP:
            raise OracleError(f"{active.size} branching processes still alive after {STEP_CAP} steps")
        u = rng.uniform(active.size) * cdf[-1]
        kids = np.searchsorted(cdf, u, side="right")
        total[active] += 1
        queue[active] += kids - 1
        active = active[queue[active] > 0]
    return total.astype(float)


def _categorical(rng, probs, count):
    cdf = np.cumsum(probs)
    u = rng.uniform(count) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(probs) - 1)


def _multinomial(rng, params, count):
    n = int(params["n"])
    p = [float(t) for t in params["p"]]
    probs = p + [1.0 - sum(p)]
    m = len(p)
    out = np.zeros((count, m))
    for _ in range(n):
        c = _categorical(rng, probs, count)
        for i in range(m):
            out[:, i] += c == i
    return out


def _negative_multinomial(rng, params, count):
    # trials until the n-th failure; category m is the failure
    n = int(params["n"])
    p = [float(t) for t in params["p"]]
    q0 = 1.0 / (1.0 + sum(p))
    probs = [t * q0 for t in p] + [q0]
    m = len(p)
    out = np.zeros((count, m))
    fails = np.zeros(count, dtype=np.int64)
    active = np.arange(count)
    t = 0
    while active.size:
        t += 1
        if t > STEP_CAP:
            raise OracleError("negative multinomial sampler exceeded the step cap")
        c = _categorical(rng, probs, active.size)
        for i in range(m):
            out[active[c == i], i] += 1
        fails[active[c == m]] += 1
        active = active[fails[active] < n]
    return out


def _normal(rng, params, count):
    return float(params["alpha"]) + math.sqrt(float(params["sigma2"])) * rng.normal(count)


def _gamma(rng, params, count):
    return rng.gamma(float(params["lambda"]), count) / float(params["alpha"])


def _mvnormal(rng, params, count):
    a = np.asarray(params["alpha"], dtype=float)
    L = np.linalg.cholesky(np.asarray(params["sigma"], dtype=float))
    z = rng.normal(count * len(a)).reshape(count, len(a))
    return a + z @ L.T


SAMPLERS = {
    "binomial": lambda r, p, c: _inverse_cdf(r, "binomial", p, c),
    "poisson": lambda r, p, c: _inverse_cdf(r, "poisson", p, c),
    "negative_binomial": lambda r, p, c: _inverse_cdf(r, "negative_binomial", p, c),
    "logarithmic": lambda r, p, c: _inverse_cdf(r, "logarithmic", p, c),
    "random_walk": _random_walk,
    "borel_tanner": _borel_tanner,
    "multinomial": _multinomial,
    "negative_multinomial": _negative_multinomial,
    "normal": _normal,
    "gamma": _gamma,
    "mvnormal": _mvnormal,
}


def mc_sample(name: str, params: Mapping, count: int, seed: int | None = None) -> np.ndarray:
    """``count`` draws as a (count, m) array; identical for identical seeds."""
    if count < 1:
        raise OracleError("count must be at least 1")
    if name not in SAMPLERS:
        raise OracleError(f"no sampler for family {name!r}")
    for key in ("p", "alpha"):
        if name in ("random_walk", "borel_tanner") and key in params and _is_list(params[key]):
            raise OracleError(f"no sampler for the multivariate {name} family")
    rng = Xoshiro(default_seed() if seed is None else seed)
    out = SAMPLERS[name](rng, params, int(count))
    return out.reshape(int(count), -1)


def samples_to_csv(samples) -> str:
    arr = np.asarray(samples)
    if arr.ndim == 1:
        arr = arr[:, None]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"xi{i + 1}" for i in range(arr.shape[1])] if arr.shape[1] > 1 else ["xi"])
    for row in arr:
        w.writerow([repr(float(v)) if not float(v).is_integer() else int(v) for v in row])
    return buf.getvalue()
