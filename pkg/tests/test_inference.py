import numpy as np
import pytest

from classb import expr as ex
from classb import families as F
from classb import inference as I
from classb import transforms as T
from classb.errors import InferenceError

from .cases import CASES, ids


def test_poisson():
    f = F.builtin("poisson", {"lambda": 2.0})
    assert I.fisher_info(f)[0, 0] == pytest.approx(0.5, rel=1e-15)


def test_normal_is_constant():
    f = F.builtin("normal", {"alpha": 0.0, "sigma2": 1.0})
    for a in (-3.0, 0.0, 7.5):
        assert I.fisher_info(f, [a])[0, 0] == pytest.approx(1.0)


def test_multinomial():
    f = F.builtin("multinomial", {"n": 6, "p": [0.2, 0.3]})
    got = I.fisher_info(f, [1.2, 1.8])
    assert np.allclose(got, [[7 / 6, 1 / 3], [1 / 3, 8 / 9]], rtol=1e-13)


@pytest.mark.parametrize("name,params", CASES, ids=ids)
def test_information_inverts_the_variance(name, params):
    f = F.builtin(name, params)
    for x in f.sample_points(4, seed=9, shrink=0.2):
        info = I.fisher_info(f, x)
        assert np.max(np.abs(info @ f.V_at(x) - np.eye(f.dim))) <= 1e-9
        if f.verified:
            assert np.allclose(info, info.T, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("name,params", [c for c in CASES if F.builtin(*c).dim <= 3], ids=ids)
def test_symbolic_agrees_with_numeric(name, params):
    f = F.builtin(name, params)
    sym = I.fisher_info_symbolic(f)
    for env in f.sample_bindings(3, seed=4, shrink=0.2):
        x = [env[v] for v in f.mean_vars]
        num = I.fisher_info(f, x)
        vals = np.array([[ex.evaluate(e, env) for e in row] for row in sym])
        assert np.allclose(vals, num, rtol=1e-9, atol=1e-12)


def test_symbolic_binomial_and_diagonal():
    f = F.builtin("binomial", {"n": 5, "p": 0.3})
    (e,), = I.fisher_info_symbolic(f)
    assert ex.equiv_numeric(e, "1/(x*(1 - x/n))", {"x": (0.1, 4.9)}, fixed=f.constants)
    g = F.from_variance([["x1", "0"], ["0", "x2"]], ["x1", "x2"], {"x1": (0.1, 5), "x2": (0.1, 5)})
    sym = I.fisher_info_symbolic(g)
    assert ex.equiv_numeric(sym[0][0], "1/x1", g.domain.box)
    assert ex.equiv_numeric(sym[1][1], "1/x2", g.domain.box)
    assert ex.equiv_numeric(sym[0][1], "0", g.domain.box)


def test_symbolic_dimension_limit():
    names = ["x1", "x2", "x3", "x4"]
    V = [[names[i] if i == j else "0" for j in range(4)] for i in range(4)]
    f = F.from_variance(V, names, {v: (0.5, 2) for v in names})
    with pytest.raises(InferenceError, match="m <= 3"):
        I.fisher_info_symbolic(f)
    assert np.allclose(I.fisher_info(f, [1, 1.6, 0.8, 1]), np.diag([1, 0.625, 1.25, 1]))


def test_outside_domain_and_ill_conditioned():
    f = F.builtin("binomial", {"n": 5, "p": 0.3})
    with pytest.raises(InferenceError):
        I.fisher_info(f, [6.0])
    g = F.from_variance([["1", "0"], ["0", "x^2"]], ["y", "x"], {"y": (0.5, 2), "x": (1e-8, 2)})
    # condition number 1/x^2 = 2.5e13
    with pytest.raises(InferenceError, match="ill-conditioned"):
        I.fisher_info(g, [1.0, 2e-7])


def test_sample_mean_adds_information():
    for name, params in CASES:
        f = F.builtin(name, params)
        g = T.sample_mean(f, 5)
        assert np.allclose(I.fisher_info(g), 5 * I.fisher_info(f), rtol=1e-12)


@pytest.mark.parametrize("name,params", [
    ("poisson", {"lambda": 2.0}),
    ("binomial", {"n": 5, "p": 0.3}),
    ("gamma", {"alpha": 2.0, "lambda": 3.0}),
    ("multinomial", {"n": 6, "p": [0.2, 0.3]}),
], ids=ids)
def test_score_covariance_monte_carlo(name, params):
    f = F.builtin(name, params)
    est, se = I.score_covariance_mc(f, 200_000, seed=17)
    want = I.fisher_info(f)
    assert np.all(np.abs(est - want) <= 4 * se)


def test_score_covariance_needs_an_oracle():
    f = F.builtin("random_walk", {"n": 2, "p": [0.7, 0.8]})
    with pytest.raises(InferenceError):
        I.score_covariance_mc(f, 10)
