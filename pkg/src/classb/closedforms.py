"""Exact combinatorial closed forms for cumulants.

* Stirling numbers of the second kind (explicit alternating sum, checked
  against the triangle recurrence).
* Cumulants of the quadratic-variance family V(x) = x(a x + b).
* Cumulants of the first-passage time of a biased walk, V(x) = x^3/n^2 - x.

All functions are generic over the numeric type: pass Fractions for exact
results, floats for speed, or :class:`~classb.expr.Expr` for a symbolic
formula.
"""

from __future__ import annotations

import threading
from fractions import Fraction
from math import comb, factorial

__all__ = [
    "StirlingCache",
    "stirling2",
    "stirling2_sum",
    "double_factorial_odd",
    "cumulant_quadratic",
    "quadratic_coefficients",
    "randomwalk_cumulant",
    "randomwalk_cumulant_at",
    "randomwalk_c",
]

STIRLING_MAX = 64


class StirlingCache:
    """Lazily grown triangle S(k, m), 0 <= m <= k, by S(k+1,m) = m S(k,m) + S(k,m-1)."""

    def __init__(self):
        self._rows = [[1]]
        self._lock = threading.Lock()

    def row(self, k):
        with self._lock:
            while len(self._rows) <= k:
                prev = self._rows[-1]
                kk = len(self._rows)
                new = [0] * (kk + 1)
                for m in range(1, kk + 1):
                    new[m] = m * (prev[m] if m < kk else 0) + prev[m - 1]
                self._rows.append(new)
            return self._rows[k]

    def __call__(self, k, m):
        return self.row(k)[m]


_TRIANGLE = StirlingCache()


def stirling2_sum(k: int, m: int) -> int:
    """(1/m!) sum_j C(m,j) (-1)^j (m-j)^k, exactly."""
    total = sum(comb(m, j) * (-1) ** j * (m - j) ** k for j in range(m + 1))
    q, r = divmod(total, factorial(m))
    assert r == 0
    return q


def stirling2(k: int, m: int) -> int:
    """Number of partitions of a k-set into m non-empty blocks."""
    if not (isinstance(k, int) and isinstance(m, int)) or not (0 <= m <= k <= STIRLING_MAX):
        raise ValueError(f"stirling2 needs integers 0 <= m <= k <= {STIRLING_MAX}, got ({k}, {m})")
    value = stirling2_sum(k, m)
    if value != _TRIANGLE(k, m):
        raise ArithmeticError(f"Stirling sum and recurrence disagree at ({k}, {m})")
    return value


def double_factorial_odd(r: int) -> int:
    """(2r+1)!! = (2r+1)! / (2^r r!)."""
    if r < 0:
        raise ValueError("r must be non-negative")
    return factorial(2 * r + 1) // (2**r * factorial(r))


def cumulant_quadratic(a, b, x, k: int):
    """kappa_{k+1} for the family with V(x) = x(a x + b), k >= 1.

    ``kappa_{k+1} = x(ax+b) sum_{m=1}^k m! b^{k-m} S(k,m) (ax)^{m-1}``
    (with 0^0 = 1).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    ax = a * x
    total = 0
    for m in range(1, k + 1):
        total = total + factorial(m) * stirling2(k, m) * b ** (k - m) * ax ** (m - 1)
    return x * (ax + b) * total


def quadratic_coefficients(family: str, params: dict):
    """(a, b, x) placing a built-in NEF-QVF family on V(x) = x(ax+b).

    Binomial: a = -1/n, b = 1, x = np.  Negative binomial: a = 1/n, b = 1,
    x = n(1-p)/p.  Poisson: a = 0, b = 1, x = lambda.  Gamma (rate alpha,
    shape lambda): a = 1/lambda, b = 0, x = lambda/alpha.
    """
    if family == "binomial":
        n, p = params["n"], params["p"]
        return Fraction(-1, n), 1, n * p
    if family == "negative_binomial":
        n, p = params["n"], params["p"]
        return Fraction(1, n), 1, n * (1 - p) / p
    if family == "poisson":
        return 0, 1, params["lambda"]
    if family == "gamma":
        lam = params["lambda"]
        return 1 / lam, 0, lam / params["alpha"]
    raise ValueError(f"{family!r} is not a quadratic-variance built-in")


def randomwalk_c(k: int, r: int) -> int:
    """c_{k,r} = sum_{m=r}^k C(k,m) 2^{m-r} S(m,r)."""
    return sum(comb(k, m) * 2 ** (m - r) * stirling2(m, r) for m in range(r, k + 1))


def randomwalk_cumulant_at(x, n, k: int):
    """kappa_{k+2} at mean x for the walk started at n.

    ``(x^3/n^2 - x) sum_{r=0}^{k} (-1)^{k+r} (2r+1)!! c_{k,r} (x/n)^{2r}``.
    The sum stops at r = k since c_{k,r} vanishes beyond it.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    u = x / n
    total = 0
    for r in range(k + 1):
        sign = -1 if (k + r) % 2 else 1
        total = total + sign * double_factorial_odd(r) * randomwalk_c(k, r) * u ** (2 * r)
    return (x**3 / n**2 - x) * total


def randomwalk_cumulant(n: int, p, k: int):
    """kappa_{k+2} of the first-passage time from n, left-step probability p."""
    if not isinstance(n, int) or n < 1:
        raise ValueError("n must be a positive integer")
    if not 0.5 < p < 1:
        raise ValueError("p must lie in (0.5, 1)")
    if isinstance(p, Fraction):
        x = Fraction(n) / (2 * p - 1)
    else:
        x = n / (2 * p - 1)
    return randomwalk_cumulant_at(x, n, k)
