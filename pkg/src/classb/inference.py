"""Fisher information in the mean parametrization: I(x) = V(x)^{-1}."""

from __future__ import annotations

import numpy as np

from . import expr as ex
from . import oracle
from .errors import DomainError, InferenceError
from .families import FamilySpec

__all__ = ["fisher_info", "fisher_info_symbolic", "score_covariance_mc", "COND_LIMIT"]

COND_LIMIT = 1e12


def fisher_info(f: FamilySpec, x=None) -> np.ndarray:
    """Inverse of V evaluated at the mean point ``x``."""
    try:
        env = f.bindings(x)
        v = f.V_at(bindings=env)
    except DomainError as err:
        raise InferenceError(f"V cannot be evaluated at x={x}: {err}") from None
    if not f.domain.contains(env):
        raise InferenceError(f"x={list(x) if x is not None else f.x0} lies outside the domain of {f.name!r}")
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise InferenceError(f"V is singular or ill-conditioned at x (condition number {cond:.3g})")
    if f.verified and np.any(np.linalg.eigvalsh(0.5 * (v + v.T)) <= 0):
        raise InferenceError("V is not positive definite at x")
    # LAPACK gesv: LU with partial pivoting
    return np.linalg.solve(v, np.eye(f.dim))


def fisher_info_symbolic(f: FamilySpec):
    """V^{-1} as a matrix of expressions (adjugate over determinant, m <= 3)."""
    if f.dim > 3:
        raise InferenceError("symbolic inversion is limited to m <= 3")
    if f.dim == 1:
        return ((ex.ONE / f.V[0][0],),)
    inv = ex.matrix_inverse([list(row) for row in f.V])
    return tuple(tuple(row) for row in inv)


def score_covariance_mc(f: FamilySpec, count: int = 1_000_000, seed: int = 0, x=None, h=None):
    """Monte Carlo covariance of the score d/dx log p(xi; x).

    The score is taken by central differences of the oracle log-density in
    the mean parameter.  Returns ``(estimate, standard_error)`` matrices.
    """
    if f.oracle is None or f.param_map is None:
        raise InferenceError(f"family {f.name!r} has no oracle density")
    x = np.atleast_1d(np.asarray(f.x0 if x is None else x, dtype=float))
    samples = oracle.mc_sample(f.oracle, f.param_map(x), count, seed)
    scores = np.empty((samples.shape[0], f.dim))
    for j in range(f.dim):
        step = (h or 1e-5) * max(1.0, abs(x[j]))
        up, down = x.copy(), x.copy()
        up[j] += step
        down[j] -= step
        lp = oracle.logpdf(f.oracle, f.param_map(up), samples)
        lm = oracle.logpdf(f.oracle, f.param_map(down), samples)
        scores[:, j] = (lp - lm) / (2 * step)
    n = scores.shape[0]
    centered = scores - scores.mean(axis=0)
    prods = centered[:, :, None] * centered[:, None, :]
    est = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / np.sqrt(n)
    return est, se
