import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from classb import families as F
from classb import oracle
from classb import tails as TL
from classb.errors import TailError

from .cases import CASES, ids

# Independent high-precision values, frozen here.
BINOMIAL_10_03_A6 = 1.9204199316179811114
BINOMIAL_10_03_TAIL6 = 0.0473489874
NB_3_04_TAIL8 = 0.1672897536

WITH_LAPLACE = [c for c in CASES if F.builtin(*c).dim == 1 and F.builtin(*c).laplace is not None]
UNIVARIATE = [c for c in CASES if F.builtin(*c).dim == 1]


def test_poisson_exponent_closed_form():
    f = F.builtin("poisson", {"lambda": 1.0})
    A, err = TL.exponent_A(f, [1.0], [2.0])
    assert A == pytest.approx(2 * math.log(2) - 1, abs=1e-14)
    assert err <= 1e-12


def test_exponent_vanishes_at_the_mean():
    f = F.builtin("binomial", {"n": 10, "p": 0.3})
    assert TL.exponent_A(f, [3.0], [3.0]) == (0.0, 0.0)
    assert TL.dual_exponent(f, [3.0], [3.0]) == 0.0


def test_normal_exponent():
    f = F.builtin("normal", {"alpha": 0.0, "sigma2": 1.0})
    A, _ = TL.exponent_A(f, [0.0], [3.0])
    assert A == pytest.approx(4.5, rel=1e-14)
    assert TL.dual_exponent(f, [0.0], [3.0]) == pytest.approx(4.5, rel=1e-10)


def test_poisson_report():
    f = F.builtin("poisson", {"lambda": 1.0})
    r = TL.tail_bound(f, [1.0], [2.0])
    assert r.bound == pytest.approx(0.6796, abs=5e-5)
    assert r.oracle_tail == pytest.approx(1 - 2 / math.e, rel=1e-12)
    assert r.applicable is True
    assert r.dual_exponent == pytest.approx(r.exponent_A, abs=1e-9)
    assert r.oracle_tail <= r.bound


def test_binomial_report_against_frozen_values():
    f = F.builtin("binomial", {"n": 10, "p": 0.3})
    r = TL.tail_bound(f, [3.0], [6.0])
    assert r.exponent_A == pytest.approx(BINOMIAL_10_03_A6, rel=1e-12)
    assert r.oracle_tail == pytest.approx(BINOMIAL_10_03_TAIL6, rel=1e-9)
    assert r.oracle_tail <= r.bound


def test_negative_binomial_oracle_tail():
    f = F.builtin("negative_binomial", {"n": 3, "p": 0.4})
    r = TL.tail_bound(f, f.x0, [8.0])
    assert r.oracle_tail == pytest.approx(NB_3_04_TAIL8, rel=1e-9)
    assert r.oracle_tail <= r.bound


def test_lower_tail_is_flagged():
    f = F.builtin("poisson", {"lambda": 2.0})
    r = TL.tail_bound(f, [2.0], [1.0])
    assert r.applicable is False
    assert 0 < r.bound < 1
    assert any("does not apply" in n for n in r.notes)


def test_segment_leaving_the_domain():
    f = F.builtin("binomial", {"n": 10, "p": 0.3})
    with pytest.raises(TailError, match="domain"):
        TL.exponent_A(f, [3.0], [11.0])
    g = F.builtin("borel_tanner", {"n": 1, "alpha": 0.3})
    with pytest.raises(TailError):
        TL.dual_exponent(g, g.x0, [3.0])
    h = F.builtin("multinomial", {"n": 6, "p": [0.2, 0.3]})
    with pytest.raises(TailError):
        TL.dual_exponent(h, h.x0, [2.0, 2.0])


@pytest.mark.parametrize("name,params", WITH_LAPLACE, ids=ids)
def test_two_routes_agree(name, params):
    f = F.builtin(name, params)
    x = f.x0[0]
    scale = math.sqrt(f.V_at()[0, 0])
    for t in np.linspace(0.2, 2.0, 5):
        y = x + t * scale
        A, _ = TL.exponent_A(f, [x], [y])
        assert TL.dual_exponent(f, [x], [y]) == pytest.approx(A, abs=1e-7)


@pytest.mark.parametrize("name,params", UNIVARIATE, ids=ids)
def test_exponent_is_monotone_and_quadratic_near_the_mean(name, params):
    f = F.builtin(name, params)
    x = f.x0[0]
    scale = math.sqrt(f.V_at()[0, 0])
    values = [TL.exponent_A(f, [x], [x + t * scale])[0] for t in np.linspace(0, 2, 9)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    h = 1e-3 * scale
    A, _ = TL.exponent_A(f, [x], [x + h])
    assert A / (h * h / (2 * f.V_at()[0, 0])) == pytest.approx(1.0, abs=0.01)


@pytest.mark.parametrize("name,params", UNIVARIATE, ids=ids)
def test_quadrature_is_converged(name, params):
    f = F.builtin(name, params)
    x = f.x0[0]
    scale = math.sqrt(f.V_at()[0, 0])
    for t in (0.5, 1.0, 2.0):
        _, err = TL.exponent_A(f, [x], [x + t * scale])
        assert err <= 1e-10


@pytest.mark.parametrize("name,params", [c for c in UNIVARIATE if c[0] in oracle.DISCRETE], ids=ids)
def test_bound_dominates_exact_tail(name, params):
    f = F.builtin(name, params)
    x = f.x0[0]
    top = f.domain.box["x"][1]
    for y in np.arange(math.floor(x) + 1, min(x + 8, top), 1.0):
        r = TL.tail_bound(f, [x], [y])
        assert r.oracle_tail is not None
        assert r.oracle_tail <= r.bound + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 9.8), st.floats(0.2, 9.8))
def test_report_invariants(x, y):
    f = F.builtin("binomial", {"n": 10, "p": x / 10})
    r = TL.tail_bound(f, [x], [y])
    assert r.exponent_A >= 0
    assert r.bound == math.exp(-r.exponent_A)
    assert 0 < r.bound <= 1
    assert r.applicable == (y >= x)
    if r.applicable and r.oracle_tail is not None:
        assert r.oracle_tail <= r.bound + 1e-9


def test_multivariate_bound_uses_s_characteristic():
    f = F.builtin("multinomial", {"n": 6, "p": [0.2, 0.3]})
    up = TL.tail_bound(f, f.x0, [2.0, 2.5])
    assert up.applicable is True and up.dual_exponent is None
    mixed = TL.tail_bound(f, f.x0, [2.0, 1.0])
    assert mixed.applicable is False
    g = F.builtin("random_walk", {"n": 2, "p": [0.7, 0.8]})
    r = TL.tail_bound(g, g.x0, [6.0, 4.0])
    assert r.applicable is None
    assert r.exponent_A > 0


def test_grid_is_order_preserving_with_threads():
    f = F.builtin("poisson", {"lambda": 3.0})
    ys = [[3.5 + 0.5 * i] for i in range(12)]
    serial = TL.tail_grid(f, [3.0], ys)
    threaded = TL.tail_grid(f, [3.0], ys, workers=4)
    assert [r.to_dict() for r in serial] == [r.to_dict() for r in threaded]


def test_report_serialises():
    r = TL.tail_bound(F.builtin("gamma", {"alpha": 2.0, "lambda": 3.0}), [1.5], [3.0])
    d = r.to_dict()
    assert set(d) == {"x", "y", "exponent_A", "bound", "quadrature_error", "dual_exponent",
                      "oracle_tail", "applicable", "notes"}
    assert d["oracle_tail"] <= d["bound"]
