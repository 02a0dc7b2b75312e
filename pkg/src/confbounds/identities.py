"""Catalogue of the exact identities behind the bounds.

Each item pairs a value produced by the calculus (ode_solve, moments, radial
Beta reductions, assemblies) with the closed form it must equal. The expected
forms are typed in directly from their displayed formulas, so the two sides are
independent routes to the same object.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from confbounds import bounds as bnd
from confbounds.exactfn import N, RationalFn
from confbounds.profile import ProfileFn, moment_integral, ode_solve

S = ProfileFn.s_power
OPS = ProfileFn.one_plus_s
LOG = ProfileFn.log1p()


@dataclass(frozen=True)
class Identity:
    name: str
    kind: str  # assembly | ode | integral
    case: str  # nonumbilic | umbilic
    computed: Callable[[], object]
    expected: Callable[[], object]


@dataclass(frozen=True)
class IdentityResult:
    name: str
    kind: str
    case: str
    ok: bool
    residual: str

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind, "case": self.case, "ok": self.ok, "residual": self.residual}


# closed forms of the profile solutions --------------------------------------

def h1() -> ProfileFn:
    return OPS(3) / 3 - OPS(2) * RationalFn(3, 2) + OPS(1) * 3 - LOG - RationalFn(11, 6)


def h2() -> ProfileFn:
    return OPS(2) / 2 - OPS(1) * 3 + LOG * 3 + OPS(-1) + RationalFn(3, 2)


def _ode_items() -> list[Identity]:
    k2 = 1 / (2 * (N + 2))
    return [
        Identity("ode: alpha=n, g=s", "ode", "nonumbilic",
                 lambda: ode_solve(N, S(1)), lambda: S(2) * OPS(-1) / (4 * N)),
        Identity("ode: alpha=n+2, g=s^2", "ode", "nonumbilic",
                 lambda: ode_solve(N + 2, S(2)), lambda: (S(2) / 2 - S(1) + LOG) * k2),
        Identity("ode: alpha=n+2, g=s^2/(1+s)", "ode", "nonumbilic",
                 lambda: ode_solve(N + 2, S(2) * OPS(-1)), lambda: (OPS(1) - LOG * 2 - OPS(-1)) * k2),
        Identity("ode: alpha=n, g=s^2", "ode", "umbilic",
                 lambda: ode_solve(N, S(2)), lambda: S(3) * OPS(-1) / (6 * N)),
        Identity("ode: alpha=n+2, g=s^3", "ode", "umbilic",
                 lambda: ode_solve(N + 2, S(3)), lambda: h1() * k2),
        Identity("ode: alpha=n+2, g=s^3/(1+s)", "ode", "umbilic",
                 lambda: ode_solve(N + 2, S(3) * OPS(-1)), lambda: h2() * k2),
    ]


# integral-chain constants -----------------------------------------------------

def _terms(case):
    c = bnd.get_case(case)
    return bnd.subsolution_terms(c, c.reference_profile)


DISPLAYED = {
    "V linear, subsolution term": (
        "nonumbilic", 9 / (4 * (N + 1) ** 2 * N**3 * (N - 1) * (N - 2) * (N - 3))),
    "V linear, correction term": (
        "nonumbilic", RationalFn(3) / (8 * (N + 2) * (N + 1) ** 2 * N**3 * (N - 1) ** 2)),
    "V quadratic, square term": (
        "nonumbilic", 9 / (16 * (N + 2) * (N + 1) ** 2 * N**4 * (N - 1) * (N - 2))),
    "V quadratic, cross term": (
        "nonumbilic", RationalFn(3) / (16 * N**4 * (N + 2) ** 2 * (N + 1) ** 2 * (N - 1))),
    "Lambda linear, subsolution term": (
        "umbilic", 45 / ((N + 1) ** 2 * N**3 * (N - 1) * (N - 2) * (N - 3) * (N - 4) * (N - 5))),
    "Lambda linear, correction term": (
        "umbilic", 9 * (5 * N**3 - 24 * N**2 + 51 * N - 40)
        / (4 * N**2 * (N + 2) * (N - 1) * (N - 5) * (N - 4) * (N - 3) * (N - 2) ** 2 * (N - 1) * N * (N + 1) ** 2)),
    "Lambda quadratic, square term": (
        "umbilic", 15 / (2 * (N + 2) * (N + 1) ** 2 * N**4 * (N - 1) * (N - 2) * (N - 3) * (N - 4))),
    "Lambda quadratic, cross term": (
        "umbilic", 3 * (5 * N**3 - 13 * N**2 + 26 * N - 16)
        / (4 * (N - 4) * (N - 3) * (N - 2) ** 2 * (N - 1) ** 2 * N**4 * (N + 1) ** 2 * (N + 2) ** 2)),
    "h1 moment": (
        "umbilic", 18 * (5 * N**3 - 24 * N**2 + 51 * N - 40)
        / ((N - 5) * (N - 4) * (N - 3) * (N - 2) ** 2 * (N - 1) * N * (N + 1) ** 2)),
    "V upper, linear term": (
        "nonumbilic", 9 / (16 * (N + 1) * N**3 * (N - 1) * (N - 2) * (N - 3))),
    "V upper, quadratic term": (
        "nonumbilic", RationalFn(3) / (64 * (N + 1) * N**4 * (N - 1) * (N - 2))),
    "Lambda partial sum": (
        "umbilic", (3 * N**5 - 33 * N**4 + 106 * N**3 - 119 * N**2 + 59 * N - 40)
        / (2 * (N + 1) ** 2 * N * (N - 1) ** 2 * (N - 2) ** 2 * (N - 3) * (N - 4) * (N - 5))),
}


def _computed_integrals() -> dict[str, Callable[[], RationalFn]]:
    def lam_partial():
        a = bnd.assemble_C2_lower()
        labels = ("leading", "linear, main", "linear, correction", "quadratic, square")
        return sum((a.contribution(x).value.coeff for x in labels), RationalFn(0))

    return {
        "V linear, subsolution term": lambda: _terms("nonumbilic")["linear, main"],
        "V linear, correction term": lambda: _terms("nonumbilic")["linear, correction"],
        "V quadratic, square term": lambda: _terms("nonumbilic")["quadratic, square"],
        "V quadratic, cross term": lambda: _terms("nonumbilic")["quadratic, cross"],
        "Lambda linear, subsolution term": lambda: _terms("umbilic")["linear, main"],
        "Lambda linear, correction term": lambda: _terms("umbilic")["linear, correction"],
        "Lambda quadratic, square term": lambda: _terms("umbilic")["quadratic, square"],
        "Lambda quadratic, cross term": lambda: _terms("umbilic")["quadratic, cross"],
        "h1 moment": lambda: moment_integral(h1() * (1 - OPS(-3)) * OPS(1 - N)),
        "V upper, linear term": lambda: bnd.linear_main(bnd.NONUMBILIC, bnd.C1_SUPERSOLUTION),
        "V upper, quadratic term": lambda: bnd.quadratic_square(bnd.C1_SUPERSOLUTION),
        "Lambda partial sum": lam_partial,
    }


def _integral_items() -> list[Identity]:
    comp = _computed_integrals()
    out = []
    for name, (case, value) in DISPLAYED.items():
        out.append(Identity(name, "integral", case, comp[name], (lambda v=value: v)))
    return out


def _assembly_items() -> list[Identity]:
    return [
        Identity("C1 lower assembly", "assembly", "nonumbilic",
                 lambda: bnd.assemble_C1_lower(check=False).total.coeff, lambda: bnd.NONUMBILIC.lower_closed_form),
        Identity("C1 upper assembly", "assembly", "nonumbilic",
                 lambda: bnd.assemble_C1_upper(check=False).total.coeff, lambda: bnd.C1_UPPER_CLOSED_FORM),
        Identity("C2 lower assembly", "assembly", "umbilic",
                 lambda: bnd.assemble_C2_lower(check=False).total.coeff, lambda: bnd.UMBILIC.lower_closed_form),
    ]


def all_identities() -> list[Identity]:
    return _assembly_items() + _ode_items() + _integral_items()


def check_identity(item: Identity, corrupt: bool = False) -> IdentityResult:
    got = item.computed()
    if corrupt:
        got = got * 2
    diff = got - item.expected()
    ok = diff.is_zero()
    return IdentityResult(item.name, item.kind, item.case, ok, "0" if ok else str(diff))


def verify_all(case: str | None = None, corrupt: str | None = None) -> list[IdentityResult]:
    """Check every identity (optionally one case only); ``corrupt`` doubles one computed value."""
    items = all_identities()
    names = {i.name for i in items}
    if corrupt is not None and corrupt not in names:
        raise KeyError(f"unknown identity {corrupt!r}")
    out = []
    for item in items:
        if case is not None and item.case != case:
            continue
        out.append(check_identity(item, corrupt=(item.name == corrupt)))
    return out
