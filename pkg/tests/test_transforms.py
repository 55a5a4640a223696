import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from classb import expr as ex
from classb import families as F
from classb import moments as M
from classb import oracle
from classb import transforms as T
from classb.errors import TransformError

from .cases import CASES, ids

UNIVARIATE = [c for c in CASES if F.builtin(*c).dim == 1]


def same_V(f, g, tol=1e-9):
    box = f.sampling_box(0.2) if f.chart is None else f.chart.box
    return all(
        ex.equiv_numeric(f.V[i][j], g.V[i][j], box, trials=32, tol=tol, fixed=f.constants)
        for i in range(f.dim) for j in range(f.dim)
    )


def test_identity_map():
    f = F.builtin("multinomial", {"n": 6, "p": [0.2, 0.3]})
    g = T.affine(f, np.eye(2), [0, 0])
    assert same_V(f, g)
    assert g.x0 == pytest.approx(f.x0)


def test_normal_affine_image_matches_transformed_oracle_moments():
    c, d = -1.5, 0.25
    f = F.builtin("normal", {"alpha": 0.5, "sigma2": 2.0})
    g = T.affine(f, [[c]], [d])
    raw = oracle.oracle_moments("normal", f.params, 2)
    mean = c * raw[(1,)] + d
    second = c * c * raw[(2,)] + 2 * c * d * raw[(1,)] + d * d
    vals = M.evaluate_table(M.raw_moments(g, 2))
    assert vals[(1,)] == pytest.approx(mean, rel=1e-12)
    assert vals[(2,)] == pytest.approx(second, rel=1e-10)
    assert g.V_at()[0, 0] == pytest.approx(c * c * 2.0, rel=1e-15)


def test_binomial_affine_image():
    f = F.builtin("binomial", {"n": 5, "p": 0.3})
    g = T.affine(f, [[2]], [1])
    assert g.x0 == pytest.approx((2 * 1.5 + 1,))
    y = 3.2
    assert g.V_at((y,))[0, 0] == pytest.approx(4 * f.V_at(((y - 1) / 2,))[0, 0], rel=1e-14)
    assert F.verify_eq1(g).max_abs <= 1e-8


@pytest.mark.parametrize("name,params", [c for c in CASES if F.builtin(*c).laplace is not None], ids=ids)
def test_affine_images_keep_the_laplace_equation(name, params):
    f = F.builtin(name, params)
    m = f.dim
    A = np.array([[1.5, 0.5], [-0.25, 1.0]])[:m, :m] if m == 2 else np.array([[-0.75]])
    g = T.affine(f, A, np.full(m, 0.5))
    grid = F.default_grid(f)
    if "x_points" in grid:
        grid["x_points"] = [tuple(A @ np.array(p) + 0.5) for p in grid["x_points"]]
    else:
        pts = F._cyclic_grid([tuple(grid["x"][v]) for v in f.mean_vars], grid["points"])
        grid = {"z": grid["z"], "points": grid["points"],
                "x_points": [tuple(A @ np.array(p) + 0.5) for p in pts]}
    report = F.verify_eq1(g, grid)
    assert report.passed, report.max_abs


def test_singular_matrix_is_rejected():
    f = F.builtin("multinomial", {"n": 6, "p": [0.2, 0.3]})
    with pytest.raises(TransformError, match="singular"):
        T.affine(f, [[1, 2], [2, 4]], [0, 0])
    with pytest.raises(TransformError):
        T.affine(f, [[1]], [0])


def test_poisson_is_closed_under_convolution():
    g = T.convolve_iid(F.builtin("poisson", {"lambda": 2.0}), 3)
    assert ex.equiv_numeric(g.V[0][0], "x", {"x": (0.1, 20)})
    assert g.x0 == pytest.approx((6.0,))


def test_bernoulli_convolution_is_binomial():
    n = 7
    g = T.convolve_iid(F.builtin("binomial", {"n": 1, "p": 0.3}), n)
    h = F.builtin("binomial", {"n": n, "p": 0.3})
    gv = ex.substitute(g.V[0][0], g.constants)
    hv = ex.substitute(h.V[0][0], h.constants)
    assert ex.equiv_numeric(gv, hv, {"x": (0.05, n - 0.05)})


def test_single_copy_is_the_family_itself():
    f = F.builtin("gamma", {"alpha": 2.0, "lambda": 3.0})
    assert T.convolve_iid(f, 1) is f
    assert T.sample_mean(f, 1) is f
    with pytest.raises(TransformError):
        T.convolve_iid(f, 0)
    with pytest.raises(TransformError):
        T.sample_mean(f, 2.5)


def test_poisson_sample_mean_cumulants():
    g = T.sample_mean(F.builtin("poisson", {"lambda": 2.0}), 4)
    vals = M.evaluate_table(M.cumulants(g, 6))
    for k in range(1, 7):
        assert vals[(k,)] == pytest.approx(2.0 * 4.0 ** (1 - k), rel=1e-12)


@pytest.mark.parametrize("name,params", CASES, ids=ids)
def test_sample_mean_is_a_scaled_sum(name, params):
    f = F.builtin(name, params)
    n = 3
    g = T.sample_mean(f, n)
    h = T.affine(T.convolve_iid(f, n), np.eye(f.dim) / n, np.zeros(f.dim))
    x = f.x0
    assert np.allclose(g.V_at(x), h.V_at(x), rtol=1e-12, atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(UNIVARIATE), st.integers(2, 6))
def test_cumulants_add_under_convolution(case, n):
    f = F.builtin(*case)
    g = T.convolve_iid(f, n)
    base = M.evaluate_table(M.cumulants(f, 6))
    summed = M.evaluate_table(M.cumulants(g, 6), {"x": n * f.x0[0]})
    for k in range(1, 7):
        assert summed[(k,)] == pytest.approx(n * base[(k,)], rel=1e-9, abs=1e-12)


matrices = st.lists(st.floats(-3, 3), min_size=4, max_size=4).map(lambda v: np.array(v).reshape(2, 2))


@settings(max_examples=25, deadline=None)
@given(matrices, st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_affine_covariance_and_mean_map(A, b):
    assume(abs(np.linalg.det(A)) > 0.1)
    f = F.builtin("negative_multinomial", {"n": 3, "p": [0.2, 0.3]})
    g = T.affine(f, A, b)
    y = A @ np.array(f.x0) + np.array(b)
    cen = M.evaluate_table(M.central_moments(g, 2), dict(zip(g.mean_vars, y)))
    beta2 = np.array([[cen[(2, 0)], cen[(1, 1)]], [cen[(1, 1)], cen[(0, 2)]]])
    want = A @ f.V_at() @ A.T
    assert np.allclose(beta2, want, rtol=1e-9, atol=1e-9 * np.max(np.abs(want)))
    raw = M.evaluate_table(M.raw_moments(g, 1), dict(zip(g.mean_vars, y)))
    assert [raw[(1, 0)], raw[(0, 1)]] == pytest.approx(list(y), rel=1e-12, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(matrices, st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_affine_round_trip(A, b):
    assume(abs(np.linalg.det(A)) > 0.1)
    f = F.builtin("multinomial", {"n": 6, "p": [0.2, 0.3]})
    Ainv = np.linalg.inv(A)
    back = T.affine(T.affine(f, A, b), Ainv, -Ainv @ np.array(b))
    box = f.sampling_box(0.2)
    for i in range(2):
        for j in range(2):
            # the composed inverse is a float inverse, so compare at the
            # tolerance of the double-precision round trip
            assert ex.equiv_numeric(back.V[i][j], f.V[i][j], box, trials=16, tol=1e-9,
                                    fixed=f.constants)


def test_chart_family_affine():
    f = F.builtin("logarithmic", {"theta": 0.4})
    g = T.affine(f, [[3]], [-1])
    assert g.x0[0] == pytest.approx(3 * f.x0[0] - 1)
    assert g.V_at()[0, 0] == pytest.approx(9 * f.V_at()[0, 0], rel=1e-12)
    vals = M.evaluate_table(M.cumulants(g, 3))
    base = M.evaluate_table(M.cumulants(f, 3))
    assert vals[(3,)] == pytest.approx(27 * base[(3,)], rel=1e-10)


def test_affine_domain_is_flagged_approximate():
    g = T.affine(F.builtin("binomial", {"n": 5, "p": 0.3}), [[-2]], [1])
    assert g.domain.approximate
    assert g.domain.box["x"] == pytest.approx((-9.0, 1.0))
