import json
from fractions import Fraction

import pytest

from confbounds import bounds as bnd
from confbounds.exactfn import N, RationalFn, rf_eval
from confbounds.profile import ProfileFn, moment_integral, radial_moment

S = ProfileFn.s_power
OPS = ProfileFn.one_plus_s
LOG = ProfileFn.log1p()
W = RationalFn(3) / ((N - 1) * (N + 1))


def sep(f, m):
    """w * moment(f (1+s)^{n+3-2m}) * radial(n+2, m), written out term by term."""
    return W * moment_integral(f * OPS(N + 3 - 2 * m)) * radial_moment(N + 2, m).coeff


# assemblies --------------------------------------------------------------------

def test_c1_lower_identity():
    a = bnd.assemble_C1_lower()
    assert (a.total.coeff - (N**2 - 8 * N - 5) / (4 * (N + 2) * (N + 1) * (N - 1) ** 2 * (N - 3))).is_zero()
    assert a.identity_ok
    assert a.total.unit_value(9) == Fraction(1, 42240)


def test_c2_lower_identity():
    a = bnd.assemble_C2_lower()
    closed = (3 * N**3 - 24 * N**2 + 27 * N + 34) / (
        2 * (N - 5) * (N - 4) * (N - 3) * (N - 2) * (N - 1) ** 2 * (N + 1) * (N + 2))
    assert (a.total.coeff - closed).is_zero()
    assert a.total.unit_value(7) == Fraction(19, 155520)


def test_c1_upper_identity():
    a = bnd.assemble_C1_upper()
    assert (a.total.coeff - (3 * N**2 - 11 * N - 6) / (8 * (N + 1) * N * (N - 1) * (N - 2) * (N - 3))).is_zero()
    v = a.total.unit_value(4)
    assert v < 0
    assert v == Fraction(-2, 8 * 5 * 4 * 3 * 2 * 1)


def test_contribution_labels_and_anchors():
    a = bnd.assemble_C1_lower()
    labels = [c.label for c in a.contributions]
    assert labels == ["leading", "linear, main", "linear, correction", "quadratic, square",
                      "quadratic, cross", "quadratic, remainder"]
    assert a.contribution("quadratic, remainder").value.coeff.is_zero()
    assert all(c.anchor for c in a.contributions)


def test_assembly_error_reports_difference():
    items = bnd.lower_contributions(bnd.NONUMBILIC)
    with pytest.raises(bnd.AssemblyError) as exc:
        bnd._build("C1_lower", items, bnd.NONUMBILIC.lower_closed_form + 1, True)
    assert exc.value.difference == RationalFn(-1)


@pytest.mark.parametrize("case", ["nonumbilic", "umbilic"])
def test_contributions_reproduced_independently(case):
    c = bnd.get_case(case)
    k = c.weight_power
    f = S(k) * OPS(-1) / ((2 * k) * N)
    h = ode_closed(case)
    w = cross_closed(case, f)
    f2 = f.derivative().derivative()
    expected = {
        "linear, main": c.p_lin * sep(S(k) * f, N + 2),
        "linear, correction": c.p_lin * sep(h * f2, N + 1),
        "quadratic, square": c.p_quad * sep(f * f, N + 2),
        "quadratic, cross": c.p_quad * sep(w * f2, N + 1),
    }
    a = bnd.assemble_C1_lower() if case == "nonumbilic" else bnd.assemble_C2_lower()
    for label, value in expected.items():
        assert a.contribution(label).value.coeff == value, label


def ode_closed(case):
    k2 = 1 / (2 * (N + 2))
    if case == "nonumbilic":
        return (S(2) / 2 - S(1) + LOG) * k2
    return (OPS(3) / 3 - OPS(2) * RationalFn(3, 2) + OPS(1) * 3 - LOG - RationalFn(11, 6)) * k2


def cross_closed(case, f):
    k2 = 1 / (2 * (N + 2))
    if case == "nonumbilic":
        return (OPS(1) - LOG * 2 - OPS(-1)) * k2 / (2 * N)
    return (OPS(2) / 2 - OPS(1) * 3 + LOG * 3 + OPS(-1) + RationalFn(3, 2)) * k2 / (3 * N)


def test_json_schema():
    from confbounds.exactfn import DimensionRange

    d = bnd.assemble_C1_lower().to_json(DimensionRange(6, 12))
    assert set(d) == {"target", "contributions", "total_coeff", "closed_form_coeff", "identity_ok", "sign_scan"}
    assert set(d["contributions"][0]) == {"label", "coeff", "anchor"}
    assert RationalFn.parse(d["total_coeff"]) == bnd.NONUMBILIC.lower_closed_form
    json.dumps(d)


def test_ordering_lower_below_upper():
    lo = bnd.assemble_C1_lower().total.coeff
    up = bnd.assemble_C1_upper().total.coeff
    for n in range(9, 51):
        assert rf_eval(lo, n) < rf_eval(up, n)


def test_supersolution_valid():
    for n in (5, 9, 20):
        assert bnd.supersolution_is_valid(n)


# thresholds --------------------------------------------------------------------

def test_thresholds():
    rep = bnd.threshold_report()
    assert rep["C1_lower"]["first_positive"] == 9
    assert rep["C2_lower"]["first_positive"] == 7
    assert 4 in rep["C1_upper"]["negative_at"]
    assert rep["C1_upper"]["pole_at"] == [3]
    assert rep["C1_upper"]["first_positive"] == 5


# optimizer ---------------------------------------------------------------------

def test_reference_basis_reproduces_c1():
    cand = bnd.optimize_subsolution("nonumbilic", 9, [bnd.NONUMBILIC.reference_profile])
    assert cand.certified_lower_bound.unit_value(9) == Fraction(1, 42240)


def test_reference_basis_reproduces_c2():
    cand = bnd.optimize_subsolution("umbilic", 7, [bnd.UMBILIC.reference_profile])
    assert cand.certified_lower_bound.unit_value(7) == Fraction(19, 155520)


def test_empty_basis_infeasible():
    with pytest.raises(bnd.InfeasibleBasis):
        bnd.optimize_subsolution("nonumbilic", 9, [])


def test_enlarged_basis_dominates():
    ref = bnd.NONUMBILIC.reference_profile
    extra = S(3) * OPS(-2)
    cand = bnd.optimize_subsolution("nonumbilic", 9, [ref, extra])
    assert cand.certified_lower_bound.unit_value(9) >= Fraction(1, 42240)


def test_optimizer_monotone_in_basis():
    names = ["reference", "s3_over_1ps2", "s2"]
    prev = None
    for k in range(1, len(names) + 1):
        basis = [bnd.BUILTIN_BASIS[x]("nonumbilic") for x in names[:k]]
        v = bnd.optimize_subsolution("nonumbilic", 9, basis).certified_lower_bound.unit_value(9)
        if prev is not None:
            assert v >= prev
        prev = v


def test_candidate_json():
    cand = bnd.optimize_subsolution("nonumbilic", 9, [bnd.NONUMBILIC.reference_profile])
    d = cand.to_json()
    json.dumps(d)
    assert d["reference_bound"] == "1/42240"
