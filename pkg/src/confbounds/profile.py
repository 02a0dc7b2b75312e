"""Exact one-variable calculus for profile functions f(s), s >= 0.

A :class:`ProfileFn` is a finite sum of ``c * (1+s)^a`` and
``c * (1+s)^a * log(1+s)`` with rational-function coefficients ``c(n)`` and
exponents ``a`` that are integer-affine in ``n`` (``a = a0 + a1*n``). The
class is closed under d/ds, under multiplication by powers of (1+s), and under
the integrating factor used to solve the first-order ODEs

    alpha (n+2-alpha) f + 2 alpha (1+s) f' = g,  f(0) = 0.

Exponents are stored as :class:`~confbounds.exactfn.Poly` of degree <= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import mpmath
import numpy as np

from confbounds.exactfn import N, Poly, PoleError, RationalFn, log_beta, rf_eval

__all__ = [
    "ProfileFn",
    "LaplacianBracket",
    "RadialMoment",
    "Certificate",
    "InexpressibleError",
    "DegenerateError",
    "NonIntegrableError",
    "ReductionError",
    "pf_derivative",
    "neg_laplacian_bracket",
    "ode_solve",
    "convexity_certificate",
    "nonnegativity_certificate",
    "moment_integral",
    "radial_moment",
    "separable_integral",
    "ANGULAR_WEIGHT",
    "DEFAULT_SAMPLE",
]


class InexpressibleError(ValueError):
    """The requested operation leaves the (1+s)^a [log(1+s)] class."""


class DegenerateError(ValueError):
    pass


class NonIntegrableError(ValueError):
    pass


class ReductionError(ValueError):
    pass


_ZERO_EXP = Poly()
_MINUS_ONE = Poly((-1,))


def _as_exp(a) -> Poly:
    if isinstance(a, Poly):
        e = a
    elif isinstance(a, int):
        e = Poly((a,))
    elif isinstance(a, RationalFn):
        e = a.as_int_poly()
        if e is None:
            raise InexpressibleError(f"exponent {a} is not an integer polynomial in n")
    else:
        raise TypeError(f"cannot use {type(a).__name__} as an exponent")
    if e.degree > 1:
        raise InexpressibleError(f"exponent {e} is not affine in n")
    return e


def _exp_sort_key(e: Poly) -> tuple[int, int]:
    return (e.coeff(1), e.coeff(0))


def _fmt_exp(e: Poly) -> str:
    return f"({e.to_str()})"


Key = tuple[Poly, bool]


class ProfileFn:
    """Canonical sum of ``coeff * (1+s)^a [* log(1+s)]`` terms (immutable)."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Iterable[tuple[object, object, bool]] = ()):
        acc: dict[Key, RationalFn] = {}
        for coeff, a, has_log in terms:
            c = coeff if isinstance(coeff, RationalFn) else RationalFn(coeff)
            key = (_as_exp(a), bool(has_log))
            acc[key] = acc.get(key, RationalFn(0)) + c
        items = [(k, c) for k, c in acc.items() if not c.is_zero()]
        items.sort(key=lambda kc: (_exp_sort_key(kc[0][0]), kc[0][1]), reverse=True)
        object.__setattr__(self, "_terms", tuple(items))

    def __setattr__(self, key, value):
        raise AttributeError("ProfileFn is immutable")

    # constructors ------------------------------------------------------
    @classmethod
    def zero(cls) -> "ProfileFn":
        return cls()

    @classmethod
    def const(cls, c) -> "ProfileFn":
        return cls([(c, 0, False)])

    @classmethod
    def one_plus_s(cls, a=1) -> "ProfileFn":
        return cls([(1, a, False)])

    @classmethod
    def log1p(cls) -> "ProfileFn":
        return cls([(1, 0, True)])

    @classmethod
    def s_power(cls, k: int) -> "ProfileFn":
        """``s**k`` rewritten in the (1+s) basis, ``s = (1+s) - 1``."""
        if k < 0:
            raise InexpressibleError("negative powers of s are not in the profile class")
        return cls([(math.comb(k, j) * (-1) ** (k - j), j, False) for j in range(k + 1)])

    @classmethod
    def parse(cls, text: str) -> "ProfileFn":
        from confbounds._parse import parse_profile_terms

        return cls(parse_profile_terms(text))

    # access ------------------------------------------------------------
    @property
    def terms(self) -> tuple[tuple[Key, RationalFn], ...]:
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    def has_log(self) -> bool:
        return any(k[1] for k, _ in self._terms)

    def __eq__(self, other):
        if not isinstance(other, ProfileFn):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(self._terms)

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for (a, lg), c in self._terms:
            t = f"{c} * (1+s)^{_fmt_exp(a)}"
            if lg:
                t += " * log(1+s)"
            parts.append(t)
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"ProfileFn({self})"

    # algebra -----------------------------------------------------------
    def _triples(self):
        return [(c, a, lg) for (a, lg), c in self._terms]

    def __add__(self, other) -> "ProfileFn":
        if not isinstance(other, ProfileFn):
            other = ProfileFn.const(other)
        return ProfileFn(self._triples() + other._triples())

    __radd__ = __add__

    def __neg__(self) -> "ProfileFn":
        return ProfileFn([(-c, a, lg) for c, a, lg in self._triples()])

    def __sub__(self, other) -> "ProfileFn":
        if not isinstance(other, ProfileFn):
            other = ProfileFn.const(other)
        return self + (-other)

    def __rsub__(self, other) -> "ProfileFn":
        return ProfileFn.const(other) - self

    def __mul__(self, other) -> "ProfileFn":
        if isinstance(other, ProfileFn):
            out = []
            for (a, la), ca in self._terms:
                for (b, lb), cb in other._terms:
                    if la and lb:
                        raise InexpressibleError(
                            f"product of log terms (1+s)^{_fmt_exp(a)} log(1+s) and "
                            f"(1+s)^{_fmt_exp(b)} log(1+s) needs log^2"
                        )
                    out.append((ca * cb, a + b, la or lb))
            return ProfileFn(out)
        return ProfileFn([(c * other, a, lg) for c, a, lg in self._triples()])

    __rmul__ = __mul__

    def __truediv__(self, k) -> "ProfileFn":
        return self * (RationalFn(1) / k)

    def shift(self, a) -> "ProfileFn":
        """Multiply by ``(1+s)^a``."""
        e = _as_exp(a)
        return ProfileFn([(c, x + e, lg) for c, x, lg in self._triples()])

    def derivative(self) -> "ProfileFn":
        out = []
        for (a, lg), c in self._terms:
            ca = c * RationalFn(a)
            if not ca.is_zero():
                out.append((ca, a - Poly((1,)), lg))
            if lg:
                out.append((c, a - Poly((1,)), False))
        return ProfileFn(out)

    def value_at_zero(self) -> RationalFn:
        """Exact f(0); log(1) = 0 drops every log term."""
        return sum((c for (a, lg), c in self._terms if not lg), RationalFn(0))

    def substitute_n(self, nval: int) -> "ProfileFn":
        """Specialize the coefficients and exponents at a concrete integer n."""
        out = []
        for (a, lg), c in self._terms:
            out.append((RationalFn(rf_eval(c, nval)), a(nval), lg))
        return ProfileFn(out)

    # numeric evaluation ------------------------------------------------
    def numeric_terms(self, nval: int) -> list[tuple[float, int, bool]]:
        out = []
        for (a, lg), c in self._terms:
            out.append((float(rf_eval(c, nval)), int(a(nval)), lg))
        return out

    def at(self, nval: int) -> Callable[[np.ndarray], np.ndarray]:
        """Vectorized float evaluator ``s -> f(s)`` at dimension ``nval``."""
        terms = self.numeric_terms(nval)

        def f(s):
            s = np.asarray(s, dtype=float)
            t = 1.0 + s
            lg = np.log1p(s)
            out = np.zeros_like(t)
            for c, a, has_log in terms:
                v = c * t ** float(a)
                out = out + (v * lg if has_log else v)
            return out

        return f

    def exact_at(self, nval: int, s: Fraction):
        """Value at rational ``s``: a Fraction without logs, else a high-precision mpf."""
        exact = Fraction(0)
        logpart = Fraction(0)
        for (a, lg), c in self._terms:
            v = rf_eval(c, nval) * (1 + s) ** int(a(nval))
            if lg:
                logpart += v
            else:
                exact += v
        if logpart == 0 or s == 0:
            return exact
        with mpmath.workdps(60):
            L = mpmath.log(mpmath.mpf(1 + s.numerator / mpmath.mpf(s.denominator)))
            return mpmath.mpf(exact.numerator) / exact.denominator + (
                mpmath.mpf(logpart.numerator) / logpart.denominator
            ) * L


def pf_derivative(f: ProfileFn) -> ProfileFn:
    return f.derivative()


# ---------------------------------------------------------------------------
# Laplacian bracket
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaplacianBracket:
    """-Lap[f(s) rho^-alpha] = [A(s) - B(s) rho^2] rho^-(alpha+2), rho^2 = r^2 + (1+s)^2."""

    A: ProfileFn
    B: ProfileFn
    alpha: RationalFn


def neg_laplacian_bracket(f: ProfileFn, alpha) -> LaplacianBracket:
    alpha = alpha if isinstance(alpha, RationalFn) else RationalFn(alpha)
    fp = f.derivative()
    A = f * (alpha * (N + 2 - alpha)) + fp.shift(1) * (2 * alpha)
    return LaplacianBracket(A=A, B=fp.derivative(), alpha=alpha)


# ---------------------------------------------------------------------------
# ODE solving by integrating factor
# ---------------------------------------------------------------------------


def _antiderivative(h: ProfileFn) -> ProfileFn:
    out = []
    for (b, lg), c in h.terms:
        if b == _MINUS_ONE:
            if lg:
                raise InexpressibleError(
                    f"antiderivative of ({c}) * (1+s)^(-1) * log(1+s) is a log^2 term"
                )
            out.append((c, 0, True))
            continue
        b1 = RationalFn(b + Poly((1,)))
        if lg:
            out.append((c / b1, b + Poly((1,)), True))
            out.append((-c / (b1 * b1), b + Poly((1,)), False))
        else:
            out.append((c / b1, b + Poly((1,)), False))
    return ProfileFn(out)


def ode_solve(alpha, g: ProfileFn) -> ProfileFn:
    """Solve ``alpha(n+2-alpha) f + 2 alpha (1+s) f' = g`` with ``f(0) = 0``.

    With ``k = (n+2-alpha)/2`` the equation is ``d/ds[(1+s)^k f] = (1+s)^(k-1) g / (2 alpha)``,
    so ``f = (1+s)^-k * int_0^s (1+t)^(k-1) g(t) dt / (2 alpha)``. ``k`` must be
    integer-affine in n for the result to stay in the profile class.
    """
    alpha = alpha if isinstance(alpha, RationalFn) else RationalFn(alpha)
    if alpha.is_zero():
        raise DegenerateError("alpha = 0 makes the ODE degenerate")
    k_rf = (N + 2 - alpha) / 2
    k = k_rf.as_int_poly()
    if k is None or k.degree > 1:
        raise InexpressibleError(f"integrating-factor exponent {k_rf} is not integer-affine in n")
    integrand = g.shift(k - Poly((1,))) / (2 * alpha)
    F = _antiderivative(integrand)
    F = F - F.value_at_zero()
    f = F.shift(-k)
    residual = f * (alpha * (N + 2 - alpha)) + f.derivative().shift(1) * (2 * alpha) - g
    if not residual.is_zero():  # pragma: no cover - algebraic invariant
        raise AssertionError(f"ODE residual is not zero: {residual}")
    return f


# ---------------------------------------------------------------------------
# sign certification on a geometric sample
# ---------------------------------------------------------------------------

DEFAULT_SAMPLE: tuple[Fraction, ...] = (Fraction(0),) + tuple(
    Fraction(2**k, 1000) for k in range(41)
)


@dataclass(frozen=True)
class Certificate:
    verdict: str
    witness: float | None = None
    limit_zero: str = "0"
    limit_inf: str = "0"
    min_sample: float | None = None


def _sgn(x) -> str:
    return "+" if x > 0 else ("-" if x < 0 else "0")


def _sign_near_zero(f: ProfileFn, max_order: int = 24) -> str:
    g = f
    for _ in range(max_order + 1):
        v = g.value_at_zero()
        if not v.is_zero():
            return v
        g = g.derivative()
    return RationalFn(0)


def _check_poles(f: ProfileFn, nval: int):
    for (a, lg), c in f.terms:
        if c.den(nval) == 0:
            raise PoleError(nval, c)


def _leading_at_infinity(f: ProfileFn, nval: int) -> Fraction:
    groups: dict[tuple[int, bool], Fraction] = {}
    for (a, lg), c in f.terms:
        key = (int(a(nval)), lg)
        groups[key] = groups.get(key, Fraction(0)) + rf_eval(c, nval)
    for key in sorted(groups, reverse=True):
        if groups[key] != 0:
            return groups[key]
    return Fraction(0)


def nonnegativity_certificate(
    f: ProfileFn, nval: int, sample: Sequence[Fraction] = DEFAULT_SAMPLE
) -> Certificate:
    """Sampled sign check of ``f`` at dimension ``nval`` with exact endpoint analysis.

    Verdicts: ``nonnegative`` (every sample and both limits >= 0), ``negative``
    (a sample is strictly negative; its location is the witness) or
    ``inconclusive`` (samples pass but a limit is negative).
    """
    if nval < 3:
        raise ValueError(f"certification needs n >= 3, got {nval}")
    _check_poles(f, nval)
    fn = f.substitute_n(nval)
    lim0 = _sgn(rf_eval(_sign_near_zero(fn), nval))
    liminf = _sgn(_leading_at_infinity(fn, nval))
    lowest = None
    for s in sample:
        v = fn.exact_at(nval, Fraction(s))
        lowest = float(v) if lowest is None else min(lowest, float(v))
        if v < 0:
            return Certificate("negative", float(s), lim0, liminf, float(v))
    if lim0 == "-" or liminf == "-":
        return Certificate("inconclusive", None, lim0, liminf, lowest)
    return Certificate("nonnegative", None, lim0, liminf, lowest)


_CONVEX = {"nonnegative": "convex", "negative": "nonconvex", "inconclusive": "inconclusive"}


def convexity_certificate(
    f: ProfileFn, nval: int, sample: Sequence[Fraction] = DEFAULT_SAMPLE
) -> Certificate:
    """Certify f'' >= 0 on the sample plus the exact s -> 0+ and s -> inf signs."""
    c = nonnegativity_certificate(f.derivative().derivative(), nval, sample)
    return Certificate(_CONVEX[c.verdict], c.witness, c.limit_zero, c.limit_inf, c.min_sample)


# ---------------------------------------------------------------------------
# closed-form integrals
# ---------------------------------------------------------------------------


def _integrable_generic(a: Poly) -> bool:
    a1, a0 = a.coeff(1), a.coeff(0)
    return a1 < 0 or (a1 == 0 and a0 <= -2)


def moment_integral(f: ProfileFn) -> RationalFn:
    """``int_0^inf f(s) ds`` from ``int (1+s)^a = -1/(a+1)`` and ``int (1+s)^a log(1+s) = 1/(a+1)^2``."""
    total = RationalFn(0)
    for (a, lg), c in f.terms:
        if not _integrable_generic(a):
            kind = " * log(1+s)" if lg else ""
            raise NonIntegrableError(f"term ({c}) * (1+s)^{_fmt_exp(a)}{kind} is not integrable on [0, inf)")
        a1 = RationalFn(a + Poly((1,)))
        total = total + (c / (a1 * a1) if lg else -c / a1)
    return total


def _half_affine(p: Poly) -> tuple[Fraction, Fraction]:
    return Fraction(p.coeff(0), 2), Fraction(p.coeff(1), 2)


_UNIT = ((Fraction(-1, 2), Fraction(1, 2)), (Fraction(1, 2), Fraction(1, 2)))


@dataclass(frozen=True)
class RadialMoment:
    """``int_0^inf r^p (1+r^2)^-m dr = coeff * B(unit)``."""

    p: Poly
    m: Poly
    coeff: RationalFn
    unit: tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]] = _UNIT

    @property
    def canonical_unit(self) -> bool:
        return self.unit == _UNIT

    def unit_args(self, nval: float) -> tuple[float, float]:
        (x0, x1), (y0, y1) = self.unit
        return float(x0 + x1 * nval), float(y0 + y1 * nval)

    def numeric(self, nval: int) -> float:
        x, y = self.unit_args(nval)
        return float(rf_eval(self.coeff, nval)) * math.exp(log_beta(x, y))


def _affine_rf(x: tuple[Fraction, Fraction]) -> RationalFn:
    x0, x1 = x
    return RationalFn(x0) + N * x1


def _beta_steps(x: RationalFn, y: RationalFn, di: int, dj: int) -> RationalFn:
    """Ratio B(x+di, y+dj) / B(x, y) by repeated B(x+1,y) = x/(x+y) B(x,y)."""
    ratio = RationalFn(1)
    for _ in range(abs(di)):
        if di > 0:
            ratio = ratio * x / (x + y)
            x = x + 1
        else:
            x = x - 1
            ratio = ratio * (x + y) / x
    for _ in range(abs(dj)):
        if dj > 0:
            ratio = ratio * y / (x + y)
            y = y + 1
        else:
            y = y - 1
            ratio = ratio * (x + y) / y
    return ratio


def radial_moment(p, m) -> RadialMoment:
    """``int_0^inf r^p (1+r^2)^-m dr = B((p+1)/2, m-(p+1)/2) / 2``, in Beta units.

    When p and m grow like n the value is reduced to a rational multiple of
    B((n-1)/2, (n+1)/2); constant p and m reduce to B(x, y) with x, y in (0, 1].
    """
    p, m = _as_exp(p), _as_exp(m)
    x = _half_affine(p + Poly((1,)))
    mx = (Fraction(m.coeff(0)), Fraction(m.coeff(1)))
    y = (mx[0] - x[0], mx[1] - x[1])
    if x[1] < 0 or y[1] < 0 or (x[1] == 0 and x[0] <= 0) or (y[1] == 0 and y[0] <= 0):
        raise NonIntegrableError(f"int r^({p}) (1+r^2)^-({m}) dr diverges for large n")
    if x[1] == Fraction(1, 2) and y[1] == Fraction(1, 2):
        di, dj = x[0] - _UNIT[0][0], y[0] - _UNIT[1][0]
        if di.denominator != 1 or dj.denominator != 1:
            raise ReductionError(
                f"B({x[0]} + n/2, {y[0]} + n/2) is a half-integer shift away from B((n-1)/2, (n+1)/2)"
            )
        base = (_affine_rf(_UNIT[0]), _affine_rf(_UNIT[1]))
        ratio = _beta_steps(base[0], base[1], int(di), int(dj))
        return RadialMoment(p, m, ratio / 2, _UNIT)
    if x[1] == 0 and y[1] == 0:
        bx = x[0] - math.ceil(x[0]) + 1
        by = y[0] - math.ceil(y[0]) + 1
        ratio = _beta_steps(RationalFn(bx), RationalFn(by), int(x[0] - bx), int(y[0] - by))
        return RadialMoment(p, m, ratio / 2, ((bx, Fraction(0)), (by, Fraction(0))))
    raise ReductionError(f"B(({p}+1)/2, ...) cannot be reduced to the unit B((n-1)/2, (n+1)/2)")


ANGULAR_WEIGHT = RationalFn(3) / ((N - 1) * (N + 1))
"""``int_{S^{n-2}} xi_1^4 / omega_{n-2} = 3 / ((n-1)(n+1))``."""

_RADIAL_POWER = Poly((2, 1))


def separable_integral(f: ProfileFn, m, p=None) -> RationalFn:
    """Coefficient (in omega_{n-2} B units) of ``int_{R^n_+} f(x_n) |x+e_n|^{-2m} x_1^4 dx``.

    Scaling ``r = (1+s) rho`` splits the reduced integral
    ``w(n) int int f(s) (r^2+(1+s)^2)^-m r^p dr ds`` into
    ``moment(f (1+s)^(p+1-2m)) * radial_moment(p, m)``.
    """
    m = _as_exp(m)
    p = _RADIAL_POWER if p is None else _as_exp(p)
    rm = radial_moment(p, m)
    if not rm.canonical_unit:
        raise ReductionError("separable integral does not reduce to the Beta unit")
    mom = moment_integral(f.shift(p + Poly((1,)) - m * 2))
    return ANGULAR_WEIGHT * mom * rm.coeff
