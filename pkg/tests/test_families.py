import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from classb import expr as ex
from classb import families as F
from classb import oracle
from classb.errors import FamilyError

from .cases import CASES, ids


def test_binomial_builtin():
    f = F.builtin("binomial", {"n": 5, "p": 0.3})
    assert f.dim == 1
    assert str(f.V[0][0]) == "x*(1 - x/n)"
    assert f.x0 == pytest.approx((1.5,))
    assert f.V_at()[0, 0] == pytest.approx(1.05, rel=1e-15)


def test_unknown_family_and_bad_parameters():
    with pytest.raises(FamilyError, match="unknown family"):
        F.builtin("cauchy", {})
    with pytest.raises(FamilyError):
        F.builtin("binomial", {"n": 5, "p": 1.2})
    with pytest.raises(FamilyError, match="missing"):
        F.builtin("poisson", {})
    with pytest.raises(FamilyError):
        F.builtin("binomial", {"n": 2.5, "p": 0.3})


def test_negative_variance_is_rejected():
    with pytest.raises(FamilyError, match="positive definite"):
        F.from_variance("-x", ["x"], {"x": (0.1, 1)})


def test_asymmetric_variance_is_rejected():
    with pytest.raises(FamilyError, match="symmetric"):
        F.from_variance([["x1", "0.1"], ["0", "x2"]], ["x1", "x2"], {"x1": (1, 2), "x2": (1, 2)})


def test_unbound_symbol_is_rejected():
    with pytest.raises(FamilyError, match="unbound"):
        F.from_variance("x*(a*x+b)", ["x"], {"x": (0.1, 1)}, {"a": 1})


def test_product_poisson_from_variance():
    f = F.from_variance([["x1", "0"], ["0", "x2"]], ["x1", "x2"], {"x1": (0.01, 10), "x2": (0.01, 10)})
    assert f.dim == 2
    # E exp(-z.xi) for independent Poisson coordinates, checked by hand
    phi = ex.parse("exp(x1*(exp(-z1) - 1) + x2*(exp(-z2) - 1))")
    f = F.FamilySpec(**{**f.__dict__, "laplace": phi})
    report = F.verify_eq1(f)
    assert report.passed and report.max_abs < 1e-12


def test_load_family_file(tmp_path):
    path = tmp_path / "fam.json"
    path.write_text(json.dumps({
        "name": "quad", "dim": 1, "mean_vars": ["x"], "V": [["x*(a*x + 1)"]],
        "domain": {"x": [0.1, 3]}, "constants": {"a": 0.5},
    }))
    f = F.load_family_file(path)
    assert f.name == "quad"
    assert f.V_at((2.0,))[0, 0] == pytest.approx(4.0)


def test_load_family_file_missing_key(tmp_path):
    path = tmp_path / "fam.json"
    path.write_text(json.dumps({"mean_vars": ["x"], "V": [["x"]]}))
    with pytest.raises(FamilyError, match="missing"):
        F.load_family_file(path)


@pytest.mark.parametrize("name,params", [c for c in CASES if F.builtin(*c).laplace is not None], ids=ids)
def test_laplace_equation_holds_for_builtins(name, params):
    report = F.verify_eq1(F.builtin(name, params))
    assert len(report.grid) + report.skipped == 25
    assert len(report.grid) >= 10
    assert report.passed, report.max_abs


def test_corrupted_variance_fails_the_laplace_equation():
    f = F.builtin("poisson", {"lambda": 2.0})
    bad = F.FamilySpec(**{**f.__dict__, "V": ((ex.parse("1.1*x"),),)})
    assert F.verify_eq1(bad).max_abs > 0.01


def test_residual_report_dict():
    d = F.verify_eq1(F.builtin("gamma", {"alpha": 2, "lambda": 3})).to_dict()
    assert d["passed"] is True
    assert len(d["grid"]) == len(d["residuals"])


ORACLE_CASES = [c for c in CASES if F.builtin(*c).oracle and c[0] != "mvnormal"]


@pytest.mark.parametrize("name,params", ORACLE_CASES, ids=ids)
def test_variance_matches_oracle_variance(name, params):
    f = F.builtin(name, params)
    mom = oracle.oracle_moments(f.oracle, f.params, 2)
    if f.dim == 1:
        var = mom[(2,)] - mom[(1,)] ** 2
        assert f.V_at()[0, 0] == pytest.approx(var, rel=1e-9)
        assert f.x0[0] == pytest.approx(mom[(1,)], rel=1e-10)
    else:
        m = f.dim
        e = [tuple(int(i == j) for i in range(m)) for j in range(m)]
        cov = np.empty((m, m))
        for i in range(m):
            for j in range(m):
                k = tuple(a + b for a, b in zip(e[i], e[j]))
                cov[i, j] = mom[k] - mom[e[i]] * mom[e[j]]
        assert np.allclose(f.V_at(), cov, rtol=1e-9, atol=1e-12)


def test_mvnormal_variance_is_the_covariance():
    f = F.builtin("mvnormal", {"alpha": [0.5, -1.0], "sigma": [[2.0, 0.3], [0.3, 1.0]]})
    assert np.array_equal(f.V_at(), [[2.0, 0.3], [0.3, 1.0]])


def test_multinomial_variance_rows_sum_to_last_category_covariance():
    f = F.builtin("multinomial", {"n": 6, "p": [0.2, 0.3]})
    v = f.V_at()
    assert np.allclose(v, [[0.96, -0.36], [-0.36, 1.26]], atol=1e-14)
    # Var(x1 + x2) = n q (1 - q) with q = p1 + p2
    assert v.sum() == pytest.approx(6 * 0.5 * 0.5)


def test_s_characteristics():
    f = F.builtin("poisson", {"lambda": 2.0})
    assert ex.evaluate(f.s_char[0], f.bindings((2.0,))) == pytest.approx(-math.log(2.0))
    g = F.builtin("binomial", {"n": 5, "p": 0.3})
    assert ex.evaluate(g.s_char[0], g.bindings((1.5,))) == pytest.approx(math.log(3.5 / 1.5))


@pytest.mark.parametrize("name,params", [c for c in CASES if F.builtin(*c).dim == 1], ids=ids)
def test_s_characteristic_agrees_with_integral_of_inverse_variance(name, params):
    f = F.builtin(name, params)
    pts = sorted(p[0] for p in f.sample_points(4, seed=2, shrink=0.1))
    ref = pts[0]
    for q in pts[1:]:
        num = F.s_characteristic_numeric(f, ref, q)
        assert num < 0
        if f.s_char is not None:
            sym = ex.evaluate(f.s_char[0], f.bindings((q,))) - ex.evaluate(f.s_char[0], f.bindings((ref,)))
            assert num == pytest.approx(sym, rel=1e-8, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 4.9), st.floats(0.05, 4.9))
def test_binomial_s_is_antitone(a, b):
    f = F.builtin("binomial", {"n": 5, "p": 0.3})
    sa = ex.evaluate(f.s_char[0], f.bindings((a,)))
    sb = ex.evaluate(f.s_char[0], f.bindings((b,)))
    if a < b:
        assert sa >= sb
    elif a > b:
        assert sa <= sb


def test_laplace_eval():
    f = F.builtin("binomial", {"n": 5, "p": 0.3})
    assert F.laplace_eval(f, 0.0) == pytest.approx(1.0)
    assert F.laplace_eval(f, 1.0) == pytest.approx((0.7 + 0.3 * math.exp(-1)) ** 5, rel=1e-14)
    g = F.builtin("poisson", {"lambda": 2.0})
    assert F.laplace_eval(g, -0.5) == pytest.approx(math.exp(2 * (math.exp(0.5) - 1)), rel=1e-14)


def test_chart_families_recover_their_mean():
    f = F.builtin("logarithmic", {"theta": 0.4})
    env = f.bindings((1.3050767926474784579,))
    assert env["theta"] == pytest.approx(0.4, rel=1e-12)
    with pytest.raises(FamilyError):
        f.bindings((0.5,))


def test_describe_is_json_serialisable():
    for name, params in CASES:
        json.dumps(F.builtin(name, params).describe(), allow_nan=False)


def test_parameter_table_covers_all_builtins():
    assert set(F.PARAMETER_TABLE) == set(F.BUILTIN_NAMES)
