import json
import math

import numpy as np
import pytest

from confbounds.exactfn import N, rf_eval
from confbounds.numint import (
    DivergentTail, ReducedIntegrand, check_adjointness, closed_integrand, compute_C_numeric, quad1d, quad2d,
    richardson,
)
from confbounds.profile import ProfileFn

S = ProfileFn.s_power
OPS = ProfileFn.one_plus_s


def linear_v1(n):
    return ReducedIntegrand(lambda r, s: s**4 / (4 * n * (1 + s)) * (r * r + (1 + s) ** 2) ** (-(n + 2.0)))


def test_linear_v1_example():
    v = quad2d(linear_v1(9), 9)
    assert math.isclose(v.value, 9 / (4 * 100 * 729 * 8 * 7 * 6), rel_tol=1e-10)
    assert v.error < 1e-10 * v.value


def test_zero_integrand():
    v = quad2d(ReducedIntegrand.zero(), 9)
    assert v.value == 0.0 and v.error == 0.0


def test_closed_integrand_matches_hand_written():
    f = S(4) * OPS(-1) / (4 * N)
    a = quad2d(closed_integrand([(f, 2 * N + 4)], 9), 9)
    b = quad2d(linear_v1(9), 9)
    assert math.isclose(a.value, b.value, rel_tol=1e-12)


def test_divergent_tail():
    with pytest.raises(DivergentTail):
        quad2d(ReducedIntegrand(lambda r, s: np.ones(np.broadcast(r, s).shape)), 9)


@pytest.mark.parametrize("n", [7, 9, 11])
def test_error_monotone_under_halving_tol(n):
    ig = linear_v1(n)
    errs = [quad2d(ig, n, tol).error for tol in (1e-6, 5e-7, 2.5e-7, 1.25e-7, 6.25e-8)]
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_quad1d():
    v = quad1d(lambda s: (1 + s) ** -3.0)
    assert math.isclose(v.value, 0.5, rel_tol=1e-12)


def test_richardson():
    # f(h) = 1 + h^2 sampled at h = 0.1, 0.2 extrapolates exactly
    val, corr = richardson(1.01, 1.04)
    assert math.isclose(val, 1.0, rel_tol=1e-14)
    assert math.isclose(corr, 0.01, rel_tol=1e-12)


# adjointness -------------------------------------------------------------------

@pytest.fixture(scope="module")
def adj_u1v1():
    return check_adjointness("u1", "v1", 9)


def test_adjointness_u1_v1(adj_u1v1):
    assert adj_u1v1.discrepancy < 1e-5
    assert adj_u1v1.decreasing


def test_adjointness_u2_v2():
    r = check_adjointness("u2", "v2", 9)
    assert r.discrepancy < 1e-5
    assert r.decreasing


def test_adjointness_V_v1():
    assert check_adjointness("V", "v1", 9).discrepancy < 1e-5


def test_adjointness_symmetric():
    r = check_adjointness("v1", "v1", 9)
    assert r.discrepancy < 1e-14


def test_adjointness_json(adj_u1v1):
    d = adj_u1v1.to_json()
    json.dumps(d)
    assert list(d["tags"]) == ["u1", "v1"]


# numerical constants -----------------------------------------------------------

@pytest.fixture(scope="module")
def c1_n9():
    return compute_C_numeric("nonumbilic", 9)


def test_c1_contained_n9(c1_n9):
    assert c1_n9.contained
    lo, hi = 1 / 42240, float(rf_eval((3 * N**2 - 11 * N - 6) / (8 * (N + 1) * N * (N - 1) * (N - 2) * (N - 3)), 9))
    assert c1_n9.value + c1_n9.error >= lo
    assert c1_n9.value - c1_n9.error <= hi
    assert c1_n9.lower_bound_exact == pytest.approx(lo, rel=1e-15)


def test_c1_record_schema(c1_n9):
    d = c1_n9.to_json()
    json.dumps(d)
    for key in ("case", "n", "value", "error", "units", "lower_bound_exact", "upper_bound_exact", "contained"):
        assert key in d


def test_c2_above_lower_n7():
    rec = compute_C_numeric("umbilic", 7)
    assert rec.value + rec.error >= 19 / 155520
    assert rec.upper_bound_exact is None


def test_c1_exploratory_n8():
    rec = compute_C_numeric("nonumbilic", 8)
    assert math.isfinite(rec.value) and rec.error >= 0
