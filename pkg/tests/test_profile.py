import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from confbounds.exactfn import N, Poly, RationalFn
from confbounds.profile import (
    DegenerateError, InexpressibleError, NonIntegrableError, ProfileFn, ReductionError, convexity_certificate,
    moment_integral, neg_laplacian_bracket, nonnegativity_certificate, ode_solve, radial_moment,
)

S = ProfileFn.s_power
OPS = ProfileFn.one_plus_s
LOG = ProfileFn.log1p()
H1 = OPS(3) / 3 - OPS(2) * RationalFn(3, 2) + OPS(1) * 3 - LOG - RationalFn(11, 6)
H2 = OPS(2) / 2 - OPS(1) * 3 + LOG * 3 + OPS(-1) + RationalFn(3, 2)
F_V = S(2) * OPS(-1) / (4 * N)
F_L = S(3) * OPS(-1) / (6 * N)


def mp_eval(f: ProfileFn, n: int):
    terms = [(mp.mpf(c(n).numerator) / c(n).denominator, int(a(n)), lg) for (a, lg), c in f.terms]

    def g(s):
        t = 1 + s
        return sum(c * t**a * (mp.log(t) if lg else 1) for c, a, lg in terms)

    return g


# derivative --------------------------------------------------------------------

def test_derivative_examples():
    assert OPS(2).derivative() == OPS(1) * 2
    assert LOG.derivative() == OPS(-1)
    assert F_V.derivative() == (1 - OPS(-2)) / (4 * N)


def test_canonical_form_of_s_polynomials():
    assert F_V == (OPS(1) - 2 + OPS(-1)) / (4 * N)


# bracket -----------------------------------------------------------------------

def test_bracket_harmonic_kernel():
    br = neg_laplacian_bracket(ProfileFn.const(1), N + 2)
    assert br.A.is_zero() and br.B.is_zero()


def test_bracket_V_profile():
    br = neg_laplacian_bracket(F_V, N)
    assert br.A == S(1)
    assert br.B == OPS(-3) / (2 * N)


def test_bracket_Lambda_profile():
    br = neg_laplacian_bracket(F_L, N)
    assert br.A == S(2)
    assert br.B == (1 - OPS(-3)) / (3 * N)


def _random_profile(rng):
    terms = []
    for _ in range(rng.integers(1, 4)):
        c = RationalFn(int(rng.integers(-5, 6)), int(rng.integers(1, 5)))
        a = Poly((int(rng.integers(-4, 3)),))
        terms.append((c, a, bool(rng.integers(0, 2))))
    return ProfileFn(terms)


@pytest.mark.parametrize("alpha_shift", [0, 2])
def test_bracket_against_finite_differences(alpha_shift):
    mp.mp.dps = 40
    n = 9
    alpha = n + alpha_shift
    rng = np.random.default_rng(20 + alpha_shift)
    h = mp.mpf("1e-10")
    worst = 0.0
    for _ in range(20):
        f = _random_profile(rng)
        if f.is_zero():
            continue
        br = neg_laplacian_bracket(f, N + alpha_shift)
        fe, A, B = mp_eval(f, n), mp_eval(br.A, n), mp_eval(br.B, n)
        r = mp.mpf(float(rng.uniform(0.05, 3.0)))
        s = mp.mpf(float(rng.uniform(0.0, 3.0)))

        def phi(r, s):
            return fe(s) * (r * r + (1 + s) ** 2) ** (-mp.mpf(alpha) / 2)

        c = phi(r, s)
        prr = (phi(r + h, s) - 2 * c + phi(r - h, s)) / h**2
        pss = (phi(r, s + h) - 2 * c + phi(r, s - h)) / h**2
        pr = (phi(r + h, s) - phi(r - h, s)) / (2 * h)
        fd = -(prr + (n + 2) / r * pr + pss)
        rho2 = r * r + (1 + s) ** 2
        exact = (A(s) - B(s) * rho2) * rho2 ** (-mp.mpf(alpha + 2) / 2)
        scale = max(abs(exact), abs(c) / rho2)
        worst = max(worst, float(abs(fd - exact) / scale))
    assert worst < 1e-6


# ODE ---------------------------------------------------------------------------

K2 = 1 / (2 * (N + 2))
ODE_CASES = [
    (N, S(1), F_V),
    (N + 2, S(2), (S(2) / 2 - S(1) + LOG) * K2),
    (N + 2, S(2) * OPS(-1), (OPS(1) - LOG * 2 - OPS(-1)) * K2),
    (N, S(2), F_L),
    (N + 2, S(3), H1 * K2),
    (N + 2, S(3) * OPS(-1), H2 * K2),
]


@pytest.mark.parametrize("alpha,g,expected", ODE_CASES)
def test_ode_solutions(alpha, g, expected):
    f = ode_solve(alpha, g)
    assert str(f) == str(expected)
    residual = f * (alpha * (N + 2 - alpha)) + f.derivative().shift(1) * (2 * alpha) - g
    assert residual.is_zero()
    assert f.value_at_zero().is_zero()


def test_ode_errors():
    with pytest.raises(DegenerateError):
        ode_solve(RationalFn(0), S(1))
    with pytest.raises(InexpressibleError) as exc:
        ode_solve(N + 2, LOG)  # antiderivative of log(1+s)/(1+s) is a log^2 term
    assert "log" in str(exc.value)


def test_ode_non_integer_exponent():
    with pytest.raises(InexpressibleError):
        ode_solve(N + 1, S(1))


def test_log_squared_product_rejected():
    with pytest.raises(InexpressibleError):
        LOG * LOG


# certificates ------------------------------------------------------------------

def test_convexity_examples():
    assert convexity_certificate(F_V, 9).verdict == "convex"
    bad = convexity_certificate(-S(2), 9)
    assert bad.verdict == "nonconvex" and bad.witness is not None
    assert convexity_certificate(H1, 7).verdict == "convex"


@pytest.mark.parametrize("alpha,g,expected", ODE_CASES)
def test_all_ode_solutions_convex(alpha, g, expected):
    for n in (7, 9, 12):
        assert convexity_certificate(expected, n).verdict == "convex"


def test_nonnegativity_inconclusive_at_infinity():
    # positive on the whole sample but eventually negative
    f = ProfileFn.const(10**15) - OPS(1)
    cert = nonnegativity_certificate(f, 9)
    assert cert.verdict in ("negative", "inconclusive")
    assert cert.limit_inf == "-"


def test_certificate_pole():
    with pytest.raises(ZeroDivisionError):
        convexity_certificate(S(3) / (N - 9), 9)


# moments -----------------------------------------------------------------------

def test_moment_examples():
    assert moment_integral(S(4) * OPS(-N - 2)) == RationalFn(24) / ((N + 1) * N * (N - 1) * (N - 2) * (N - 3))
    assert moment_integral((S(2) / 2 - S(1) + LOG) * OPS(-N - 2)) == RationalFn(2) / ((N + 1) ** 2 * N * (N - 1))
    assert moment_integral((1 + S(1) - LOG * 2 - OPS(-1)) * OPS(-N - 2)) == RationalFn(2) / (N * (N + 2) * (N + 1) ** 2)
    expected = 18 * (5 * N**3 - 24 * N**2 + 51 * N - 40) / (
        (N - 5) * (N - 4) * (N - 3) * (N - 2) ** 2 * (N - 1) * N * (N + 1) ** 2)
    assert moment_integral(H1 * (1 - OPS(-3)) * OPS(1 - N)) == expected


def test_moment_non_integrable():
    with pytest.raises(NonIntegrableError) as exc:
        moment_integral(OPS(-1))
    assert "not integrable" in str(exc.value)


CHAIN_INTEGRANDS = [
    S(4) * OPS(-N - 2),
    (S(2) / 2 - S(1) + LOG) * OPS(-N - 2),
    (1 + S(1) - LOG * 2 - OPS(-1)) * OPS(-N - 2),
    H1 * (1 - OPS(-3)) * OPS(1 - N),
    H2 * OPS(-N - 1),
    S(2) * F_V * OPS(-N - 1),
]


@pytest.mark.parametrize("f", CHAIN_INTEGRANDS, ids=range(len(CHAIN_INTEGRANDS)))
def test_moment_against_quadrature(f):
    g = f.at(9)
    val, _ = quad(lambda s: float(g(s)), 0, np.inf, epsabs=0, epsrel=1e-13, limit=500)
    assert math.isclose(val, float(moment_integral(f)(9)), rel_tol=1e-10)


def test_radial_moment_examples():
    assert radial_moment(N + 2, N + 1).coeff == (N + 1) / (4 * N)
    assert radial_moment(N + 2, N + 2).coeff == (N - 1) / (8 * N)
    rm = radial_moment(0, 1)
    assert math.isclose(rm.numeric(5), math.pi / 2, rel_tol=1e-14)
    assert math.isclose(rm.numeric(11), math.pi / 2, rel_tol=1e-14)


@pytest.mark.parametrize("p,m", [(Poly((2, 1)), Poly((1, 1))), (Poly((2, 1)), Poly((2, 1))), (Poly((0, 1)), Poly((2, 1)))])
def test_radial_moment_against_quadrature(p, m):
    n = 9
    rm = radial_moment(p, m)
    pv, mv = p(n), m(n)
    val, _ = quad(lambda r: r**pv * (1 + r * r) ** (-mv), 0, np.inf, epsabs=0, epsrel=1e-13, limit=500)
    assert math.isclose(rm.numeric(n), val, rel_tol=1e-10)


def test_radial_moment_half_integer_mismatch():
    with pytest.raises(ReductionError):
        radial_moment(N + 3, N + 2)


# properties --------------------------------------------------------------------

exps = st.integers(-8, -2).map(lambda a: Poly((a,))) | st.integers(-3, -1).map(lambda c: Poly((c, -1)))
term = st.tuples(st.integers(-5, 5).map(RationalFn), exps, st.booleans())
profiles = st.lists(term, min_size=1, max_size=4).map(ProfileFn)


@settings(max_examples=50, deadline=None)
@given(profiles, profiles)
def test_moment_linear(f, g):
    assert moment_integral(f + g) == moment_integral(f) + moment_integral(g)


@settings(max_examples=50, deadline=None)
@given(profiles)
def test_profile_serialization_round_trip(f):
    assert ProfileFn.parse(str(f)) == f


@settings(max_examples=40, deadline=None)
@given(profiles, st.integers(4, 12))
def test_substitution_commutes_with_eval(f, n):
    s = Fraction(3, 7)
    assert f.substitute_n(n).exact_at(n, s) == f.exact_at(n, s)
    assert math.isclose(float(f.at(n)(np.array([3 / 7]))[0]), float(f.exact_at(n, s)), rel_tol=1e-9, abs_tol=1e-12)
