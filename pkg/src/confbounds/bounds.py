"""Lower and upper bounds for the expansion constants C1(n) and C2(n).

Both constants have the shape

    C(n) = leading(n) + P_lin(n) * int x_n^k |x+e_n|^{-n-4} V x_1^4
                      + P_quad(n) * int |x+e_n|^{-4} V^2 x_1^4,

where V solves -Lap V = s^(k-1) |x+e|^{-n-2} in the upper half space of
dimension n+4 (k = 2 for the nonumbilic case C1, k = 3 for the umbilic case
C2). A convex profile f with f(0) = 0 and A(f) <= g = s^(k-1) gives a
subsolution phi = f rho^-n, so V = phi + u with u >= 0 solving

    -Lap u = (g - A) rho^{-n-2} + f'' rho^{-n}.

The u-dependent integrals are moved onto the sources by the adjointness
identity and bounded below with explicit subsolutions of the adjoint problems.
Everything is exact and expressed in units of omega_{n-2} B((n-1)/2, (n+1)/2).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from confbounds.exactfn import (
    N,
    BetaConstant,
    DimensionRange,
    PoleError,
    RationalFn,
    eventual_sign_from,
    rf_eval,
    rf_sign_scan,
)
from confbounds.profile import (
    DEFAULT_SAMPLE,
    InexpressibleError,
    NonIntegrableError,
    ProfileFn,
    convexity_certificate,
    neg_laplacian_bracket,
    nonnegativity_certificate,
    ode_solve,
    separable_integral,
)

log = logging.getLogger(__name__)

S = ProfileFn.s_power


class AssemblyError(ArithmeticError):
    def __init__(self, target: str, difference: RationalFn):
        self.target = target
        self.difference = difference
        super().__init__(f"{target}: contributions differ from the closed form by {difference}")


class InfeasibleBasis(ValueError):
    """No nonnegative combination of the basis passes the subsolution constraints."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


# ---------------------------------------------------------------------------
# the two cases
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Case:
    name: str
    weight_power: int  # k in x_n^k |x+e_n|^{-n-4}
    p_lin: RationalFn
    p_quad: RationalFn
    leading: RationalFn
    lower_closed_form: RationalFn
    source_label: str

    @property
    def source(self) -> ProfileFn:
        """g(s): -Lap V = g(s) |x+e|^{-n-2}."""
        return S(self.weight_power - 1)

    @property
    def adjoint_sub(self) -> ProfileFn:
        """Subsolution profile for -Lap v = s^k |x+e|^{-n-4}, kernel |x+e|^{-n-2}."""
        return ode_solve(N + 2, S(self.weight_power))

    @property
    def reference_profile(self) -> ProfileFn:
        """Exact solution of the alpha = n profile ODE with right-hand side g."""
        return ode_solve(N, self.source)


NONUMBILIC = Case(
    name="nonumbilic",
    weight_power=2,
    p_lin=8 * N**2 * (N + 2) / 3,
    p_quad=8 * N**3 * (N + 2) / 3,
    leading=(N - 12) / (4 * N * (N - 1) * (N - 2) * (N - 3)),
    lower_closed_form=(N**2 - 8 * N - 5) / (4 * (N + 2) * (N + 1) * (N - 1) ** 2 * (N - 3)),
    source_label="x_n |x+e_n|^{-n-2}",
)

UMBILIC = Case(
    name="umbilic",
    weight_power=3,
    p_lin=2 * N**2 * (N + 2) / 3,
    p_quad=2 * N**3 * (N + 2) / 3,
    leading=3 * (N - 10) / (2 * N * (N - 1) * (N - 2) * (N - 3) * (N - 4) * (N - 5)),
    lower_closed_form=(3 * N**3 - 24 * N**2 + 27 * N + 34)
    / (2 * (N - 5) * (N - 4) * (N - 3) * (N - 2) * (N - 1) ** 2 * (N + 1) * (N + 2)),
    source_label="x_n^2 |x+e_n|^{-n-2}",
)

CASES = {c.name: c for c in (NONUMBILIC, UMBILIC)}

C1_UPPER_CLOSED_FORM = (3 * N**2 - 11 * N - 6) / (8 * (N + 1) * N * (N - 1) * (N - 2) * (N - 3))
C1_SUPERSOLUTION = S(1) / (4 * N)


def get_case(case: "str | Case") -> Case:
    if isinstance(case, Case):
        return case
    try:
        return CASES[case]
    except KeyError:
        raise ValueError(f"unknown case {case!r}; expected one of {sorted(CASES)}") from None


# ---------------------------------------------------------------------------
# term integrals for a single subsolution profile
# ---------------------------------------------------------------------------

_M_OUTER = N + 2  # |x+e|^{-2n-4}
_M_INNER = N + 1  # |x+e|^{-2n-2}


def linear_main(case: Case, f: ProfileFn) -> RationalFn:
    """int x_n^k |x+e|^{-n-4} (f |x+e|^{-n}) x_1^4."""
    return separable_integral(S(case.weight_power) * f, _M_OUTER)


def residual_pairing(h: ProfileFn, case: Case, f: ProfileFn) -> RationalFn:
    """int (h |x+e|^{-n-2}) * [(g - A(f)) |x+e|^{-n-2} + f'' |x+e|^{-n}] x_1^4."""
    br = neg_laplacian_bracket(f, N)
    gap = case.source - br.A
    return separable_integral(h * gap, _M_OUTER) + separable_integral(h * br.B, _M_INNER)


def quadratic_square(f1: ProfileFn, f2: ProfileFn | None = None) -> RationalFn:
    """int |x+e|^{-4} (f1 |x+e|^{-n}) (f2 |x+e|^{-n}) x_1^4."""
    return separable_integral(f1 * (f1 if f2 is None else f2), _M_OUTER)


def cross_sub(f: ProfileFn) -> ProfileFn:
    """Subsolution profile for -Lap w = 2 f |x+e|^{-n-4} (kernel |x+e|^{-n-2})."""
    return ode_solve(N + 2, f * 2)


def subsolution_terms(case: Case, f: ProfileFn) -> dict[str, RationalFn]:
    """Four lower-bound pieces (before prefactors) generated by the profile f."""
    return {
        "linear, main": linear_main(case, f),
        "linear, correction": residual_pairing(case.adjoint_sub, case, f),
        "quadratic, square": quadratic_square(f),
        "quadratic, cross": residual_pairing(cross_sub(f), case, f),
    }


# ---------------------------------------------------------------------------
# assemblies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Contribution:
    label: str
    value: BetaConstant
    anchor: str


@dataclass(frozen=True)
class BoundAssembly:
    target: str
    contributions: tuple[Contribution, ...]
    total: BetaConstant
    closed_form: RationalFn

    def __post_init__(self):
        s = sum((c.value.coeff for c in self.contributions), RationalFn(0))
        if s != self.total.coeff:
            raise AssemblyError(self.target, s - self.total.coeff)
        for c in self.contributions:
            if not c.anchor:
                raise ValueError(f"contribution {c.label!r} has no anchor")

    @property
    def residual(self) -> RationalFn:
        return self.total.coeff - self.closed_form

    @property
    def identity_ok(self) -> bool:
        return self.residual.is_zero()

    def contribution(self, label: str) -> Contribution:
        for c in self.contributions:
            if c.label == label:
                return c
        raise KeyError(label)

    def validity_start(self) -> int:
        """Smallest n from which no contribution has a pole."""
        last = 2
        for c in self.contributions:
            for n in range(3, 64):
                if c.value.coeff.den(n) == 0:
                    last = max(last, n)
        return last + 1

    def to_json(self, scan: DimensionRange | None = None) -> dict:
        out = {
            "target": self.target,
            "contributions": [
                {"label": c.label, "coeff": str(c.value.coeff), "anchor": c.anchor}
                for c in self.contributions
            ],
            "total_coeff": str(self.total.coeff),
            "closed_form_coeff": str(self.closed_form),
            "identity_ok": self.identity_ok,
            "sign_scan": [],
        }
        if scan is not None:
            out["sign_scan"] = [{"n": n, "sign": s} for n, s in rf_sign_scan(self.total.coeff, scan)]
        return out


def _build(target: str, items: Sequence[tuple[str, RationalFn, str]], closed_form: RationalFn,
           check: bool) -> BoundAssembly:
    contributions = tuple(Contribution(lbl, BetaConstant(v), a) for lbl, v, a in items)
    total = BetaConstant(sum((c.value.coeff for c in contributions), RationalFn(0)))
    asm = BoundAssembly(target, contributions, total, closed_form)
    if check and not asm.identity_ok:
        raise AssemblyError(target, asm.residual)
    return asm


_ANCHORS = {
    "nonumbilic": {
        "leading": "first term of C1(n): (n-12)/(4n(n-1)(n-2)(n-3))",
        "linear, main": "8n^2(n+2)/3 * (1/4n) int x_n^4/(1+x_n) |x+e_n|^{-2n-4} x_1^4",
        "linear, correction": "8n^2(n+2)/3 * (1/2n) int v1 (1+x_n)^{-3} |x+e_n|^{-n} x_1^4, "
        "v1 >= [x^2/2 - x + log(1+x)]/(2(n+2)) |x+e|^{-n-2}",
        "quadratic, square": "8n^3(n+2)/3 * I1 = int |x+e_n|^{-4} (x_n^2/(4n(1+x_n)) |x+e_n|^{-n})^2 x_1^4",
        "quadratic, cross": "8n^3(n+2)/3 * I2 = (1/4n^2) int w1 (1+x_n)^{-3} |x+e_n|^{-n} x_1^4, "
        "w1 >= [1+x-2log(1+x)-1/(1+x)]/(2(n+2)) |x+e|^{-n-2}",
        "quadratic, remainder": "8n^3(n+2)/3 * I3 = int |x+e_n|^{-4} u1^2 x_1^4 >= 0 (discarded)",
    },
    "umbilic": {
        "leading": "first term of C2(n): 3(n-10)/(2n(n-1)(n-2)(n-3)(n-4)(n-5))",
        "linear, main": "2n^2(n+2)/3 * (1/6n) int x_n^6/(1+x_n) |x+e_n|^{-2n-4} x_1^4",
        "linear, correction": "2n^2(n+2)/3 * (1/3n) int v2 (1-(1+x_n)^{-3}) |x+e_n|^{-n} x_1^4, "
        "v2 >= h1/(2(n+2)) |x+e|^{-n-2}",
        "quadratic, square": "2n^3(n+2)/3 * II1 = int |x+e_n|^{-4} (x_n^3/(6n(1+x_n)) |x+e_n|^{-n})^2 x_1^4",
        "quadratic, cross": "2n^3(n+2)/3 * II2 = (1/9n^2) int w2 (1-(1+x_n)^{-3}) |x+e_n|^{-n} x_1^4, "
        "w2 >= h2/(2(n+2)) |x+e|^{-n-2}",
        "quadratic, remainder": "2n^3(n+2)/3 * II3 = int |x+e_n|^{-4} u2^2 x_1^4 >= 0 (discarded)",
    },
}


def lower_contributions(case: "str | Case") -> list[tuple[str, RationalFn, str]]:
    case = get_case(case)
    anchors = _ANCHORS[case.name]
    t = subsolution_terms(case, case.reference_profile)
    items = [("leading", case.leading, anchors["leading"])]
    for label in ("linear, main", "linear, correction"):
        items.append((label, case.p_lin * t[label], anchors[label]))
    for label in ("quadratic, square", "quadratic, cross"):
        items.append((label, case.p_quad * t[label], anchors[label]))
    items.append(("quadratic, remainder", RationalFn(0), anchors["quadratic, remainder"]))
    return items


def upper_contributions() -> list[tuple[str, RationalFn, str]]:
    case = NONUMBILIC
    sup = C1_SUPERSOLUTION
    return [
        ("leading", case.leading, _ANCHORS["nonumbilic"]["leading"]),
        ("linear upper", case.p_lin * linear_main(case, sup),
         "8n^2(n+2)/3 * (1/4n) int x_n^3 |x+e_n|^{-2n-4} x_1^4 (V <= x_n/(4n) |x+e|^{-n})"),
        ("quadratic upper", case.p_quad * quadratic_square(sup),
         "8n^3(n+2)/3 * int |x+e_n|^{-4} (x_n/(4n) |x+e_n|^{-n})^2 x_1^4"),
    ]


def assemble_C1_lower(check: bool = True) -> BoundAssembly:
    return _build("C1_lower", lower_contributions(NONUMBILIC), NONUMBILIC.lower_closed_form, check)


def assemble_C2_lower(check: bool = True) -> BoundAssembly:
    return _build("C2_lower", lower_contributions(UMBILIC), UMBILIC.lower_closed_form, check)


def assemble_C1_upper(check: bool = True) -> BoundAssembly:
    return _build("C1_upper", upper_contributions(), C1_UPPER_CLOSED_FORM, check)


ASSEMBLERS = {
    "C1_lower": assemble_C1_lower,
    "C1_upper": assemble_C1_upper,
    "C2_lower": assemble_C2_lower,
}


def supersolution_is_valid(nval: int) -> bool:
    """Check A(f) >= g and f'' = 0-or-less for the C1 supersolution x_n/(4n)."""
    br = neg_laplacian_bracket(C1_SUPERSOLUTION, N)
    gap = br.A - NONUMBILIC.source
    ok_gap = nonnegativity_certificate(gap, nval).verdict == "nonnegative"
    ok_curv = nonnegativity_certificate(-br.B, nval).verdict == "nonnegative"
    return ok_gap and ok_curv


# ---------------------------------------------------------------------------
# thresholds
# ---------------------------------------------------------------------------


def first_positive(a: RationalFn, start: int) -> int | None:
    """Smallest n >= start with a(n) > 0 for that n and every larger integer."""
    m, sign = eventual_sign_from(a, start)
    return m if sign == "+" else None


def threshold_report() -> dict:
    c1 = assemble_C1_lower()
    c2 = assemble_C2_lower()
    up = assemble_C1_upper()
    c1_start, c2_start = c1.validity_start(), c2.validity_start()
    upper_scan = rf_sign_scan(up.total.coeff, DimensionRange(3, 12))
    upper_first = first_positive(up.total.coeff, up.validity_start())
    return {
        "C1_lower": {
            "valid_from": c1_start,
            "first_positive": first_positive(c1.total.coeff, c1_start),
            "sign_scan": [{"n": n, "sign": s} for n, s in rf_sign_scan(c1.total.coeff, DimensionRange(3, 12))],
        },
        "C2_lower": {
            "valid_from": c2_start,
            "first_positive": first_positive(c2.total.coeff, c2_start),
            "sign_scan": [{"n": n, "sign": s} for n, s in rf_sign_scan(c2.total.coeff, DimensionRange(3, 12))],
        },
        "C1_upper": {
            "negative_at": [n for n, s in upper_scan if s == "-"],
            "pole_at": [n for n, s in upper_scan if s == "pole"],
            "first_positive": upper_first,
            "note": "no lower-bound subsolution can certify C1 > 0 where the upper total is <= 0",
        },
        "umbilic_note": "numerical C2 values for n <= 6 are exploratory output only",
    }


# ---------------------------------------------------------------------------
# subsolution optimizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubsolutionCandidate:
    case: str
    n: int
    alpha: RationalFn
    f: ProfileFn
    coefficients: tuple[Fraction, ...]
    certified_lower_bound: BetaConstant
    linear_part: Fraction
    quadratic_part: Fraction
    reference_bound: Fraction
    lp_objective: float
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_json(self) -> dict:
        return {
            "case": self.case,
            "n": self.n,
            "alpha": str(self.alpha),
            "profile": str(self.f),
            "coefficients": [str(c) for c in self.coefficients],
            "certified_bound": str(self.certified_lower_bound.coeff),
            "certified_bound_float": float(self.certified_lower_bound.unit_value(self.n)),
            "linear_part": str(self.linear_part),
            "quadratic_part": str(self.quadratic_part),
            "reference_bound": str(self.reference_bound),
            "improves_reference": self.certified_lower_bound.unit_value(self.n) > self.reference_bound,
            "lp_objective": self.lp_objective,
            "notes": list(self.notes),
        }


@dataclass
class _BasisData:
    lin: list[Fraction]
    lin0: Fraction
    quad: list[list[Fraction]]  # symmetric part of the quadratic form
    quad_lin: list[Fraction]  # linear part of the cross term: int w_i g
    brackets: list
    crosses: list[ProfileFn]


def _basis_data(case: Case, basis: Sequence[ProfileFn], nval: int) -> _BasisData:
    v = case.adjoint_sub
    g = case.source
    brackets = [neg_laplacian_bracket(b, N) for b in basis]
    crosses = [cross_sub(b) for b in basis]

    def ev(x: RationalFn) -> Fraction:
        return rf_eval(x, nval)

    lin0 = ev(separable_integral(v * g, _M_OUTER))
    lin = []
    for b, br in zip(basis, brackets):
        val = linear_main(case, b) - separable_integral(v * br.A, _M_OUTER) + separable_integral(
            v * br.B, _M_INNER
        )
        lin.append(ev(val))
    k = len(basis)
    quad = [[Fraction(0)] * k for _ in range(k)]
    quad_lin = []
    for i in range(k):
        quad_lin.append(ev(separable_integral(crosses[i] * g, _M_OUTER)))
        for j in range(k):
            q = quadratic_square(basis[i], basis[j])
            q = q - separable_integral(crosses[i] * brackets[j].A, _M_OUTER)
            q = q + separable_integral(crosses[i] * brackets[j].B, _M_INNER)
            quad[i][j] = ev(q)
    return _BasisData(lin, lin0, quad, quad_lin, brackets, crosses)


def _bound_value(case: Case, nval: int, data: _BasisData, c: Sequence[Fraction]) -> tuple[Fraction, Fraction, Fraction]:
    lin = data.lin0 + sum(ci * li for ci, li in zip(c, data.lin))
    quad = sum(ci * qi for ci, qi in zip(c, data.quad_lin))
    quad += sum(c[i] * c[j] * data.quad[i][j] for i in range(len(c)) for j in range(len(c)))
    pl, pq = rf_eval(case.p_lin, nval), rf_eval(case.p_quad, nval)
    total = rf_eval(case.leading, nval) + pl * lin + pq * quad
    return total, pl * lin, pq * quad


def _combine(basis: Sequence[ProfileFn], c: Sequence[Fraction]) -> ProfileFn:
    out = ProfileFn.zero()
    for ci, b in zip(c, basis):
        if ci:
            out = out + b * ci
    return out


def _certify(case: Case, basis, c, nval: int, sample) -> str | None:
    """None when the combination is certified, else the reason it is not."""
    f = _combine(basis, c)
    if not f.value_at_zero().is_zero():
        return "f(0) != 0"
    if convexity_certificate(f, nval, sample).verdict != "convex":
        return "combination is not certified convex"
    gap = case.source - neg_laplacian_bracket(f, N).A
    if nonnegativity_certificate(gap, nval, sample).verdict != "nonnegative":
        return "A(f) <= g fails on the sample"
    w = cross_sub(f)
    if convexity_certificate(w, nval, sample).verdict != "convex":
        return "cross-term subsolution is not convex"
    return None


_SHRINK = (Fraction(1), Fraction(999, 1000), Fraction(9, 10))


def _rational(x: float, max_den: int = 10**6) -> Fraction:
    return Fraction(max(x, 0.0)).limit_denominator(max_den)


def optimize_subsolution(
    case: "str | Case",
    n: int,
    basis: Sequence[ProfileFn],
    budget: int = 10_000,
    safety: float = 1e-6,
    sample: Sequence[Fraction] = DEFAULT_SAMPLE,
    max_coeff: float = 1e6,
) -> SubsolutionCandidate:
    """Best certified lower bound from nonnegative combinations of ``basis``.

    A linear program over the sample maximizes the linear-in-V contribution
    subject to ``A(f) <= g (1 - safety)`` pointwise; the quadratic contribution
    is evaluated afterwards. Single-element candidates at their largest
    certified scale are also considered, and the best certified total wins.
    """
    case = get_case(case)
    ref = assemble_C1_lower() if case is NONUMBILIC else assemble_C2_lower()
    ref_bound = ref.total.unit_value(n)
    basis = list(basis)
    if not basis:
        raise InfeasibleBasis("empty basis: no subsolution profile to optimize",
                              {"case": case.name, "n": n, "certified_bound": "0"})
    for i, b in enumerate(basis):
        if not b.value_at_zero().is_zero():
            raise InfeasibleBasis(f"basis element {i} does not vanish at s = 0", {"element": str(b)})
        cert = convexity_certificate(b, n, sample)
        if cert.verdict != "convex":
            raise InfeasibleBasis(f"basis element {i} is not certified convex at n = {n}",
                                  {"element": str(b), "verdict": cert.verdict, "witness": cert.witness})
    try:
        data = _basis_data(case, basis, n)
    except (InexpressibleError, NonIntegrableError, PoleError) as exc:
        raise InfeasibleBasis(f"closed-form bound unavailable for this basis: {exc}") from exc

    svals = np.array([float(s) for s in sample])
    g_s = case.source.at(n)(svals)
    A_rows = np.stack([br.A.at(n)(svals) for br in data.brackets], axis=1)
    curv_rows = np.stack([br.B.at(n)(svals) for br in data.brackets], axis=1)
    A_ub = np.vstack([A_rows, -curv_rows])
    b_ub = np.concatenate([g_s - safety * np.abs(g_s), np.zeros(len(svals))])
    # rows span many orders of magnitude at large s; normalize each one
    scale = np.maximum(np.abs(A_ub).max(axis=1), np.abs(b_ub))
    scale[scale == 0] = 1.0
    A_ub, b_ub = A_ub / scale[:, None], b_ub / scale
    obj = -np.array([float(x) for x in data.lin])
    res = linprog(obj, A_ub=A_ub, b_ub=b_ub, bounds=[(0, max_coeff)] * len(basis),
                  method="highs", options={"maxiter": budget})
    notes = []
    candidates: list[list[Fraction]] = []
    if res.status == 0:
        x = res.x
        candidates.append([_rational(xi / (1 - safety)) for xi in x])
        candidates.append([_rational(xi) for xi in x])
        candidates.append([_rational(xi * (1 - 10 * safety), 10**9) for xi in x])
        lp_obj = float(-res.fun)
    else:
        notes.append(f"linear program status {res.status}: {res.message}")
        lp_obj = float("nan")
    # single-element candidates at the largest sampled-feasible scale
    for i in range(len(basis)):
        col = A_rows[:, i]
        pos = col > 0
        scale = float(np.min(g_s[pos] / col[pos])) if np.any(pos) else max_coeff
        scale = min(scale, max_coeff)
        c = [Fraction(0)] * len(basis)
        c[i] = _rational(scale)
        candidates.append(c)

    best = None
    for c0 in candidates:
        if not any(c0):
            continue
        for shrink in _SHRINK:
            c = [x * shrink for x in c0]
            reason = _certify(case, basis, c, n, sample)
            if reason is None:
                break
        if reason is not None:
            notes.append(f"candidate {[str(x) for x in c0]} rejected: {reason}")
            continue
        total, lin, quad = _bound_value(case, n, data, c)
        if best is None or total > best[0]:
            best = (total, lin, quad, c)
    if best is None:
        raise InfeasibleBasis("no certified nonnegative combination of the basis",
                              {"case": case.name, "n": n, "notes": notes, "certified_bound": "0"})
    total, lin, quad, c = best
    return SubsolutionCandidate(
        case=case.name,
        n=n,
        alpha=N,
        f=_combine(basis, c),
        coefficients=tuple(c),
        certified_lower_bound=BetaConstant(RationalFn(total)),
        linear_part=lin,
        quadratic_part=quad,
        reference_bound=ref_bound,
        lp_objective=lp_obj,
        notes=tuple(notes),
    )


BUILTIN_BASIS = {
    "reference": lambda case: get_case(case).reference_profile,
    "s3_over_1ps2": lambda case: S(3).shift(-2),
    "s2": lambda case: S(2),
    "s4_over_1ps3": lambda case: S(4).shift(-3),
}
