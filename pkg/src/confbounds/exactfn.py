"""Exact rational functions of the dimension parameter ``n``.

Polynomials carry arbitrary-precision integer coefficients stored low degree
first, ``(a_0, a_1, ..., a_d)``, with the zero polynomial represented by ``()``.
A :class:`RationalFn` is a reduced quotient of two such polynomials; every
constant that multiplies ``omega_{n-2} * B((n-1)/2, (n+1)/2)`` lives in this
class, so identities between constants are decided by comparing canonical
forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

__all__ = [
    "Poly",
    "RationalFn",
    "BetaConstant",
    "DimensionRange",
    "PoleError",
    "rf_arith",
    "rf_eval",
    "rf_sign_scan",
    "eventual_sign_from",
    "sphere_volume",
    "beta_value",
    "N",
]


class PoleError(ZeroDivisionError):
    """Raised when a rational function is evaluated at a root of its denominator."""

    def __init__(self, n: int, fn: "RationalFn | None" = None):
        self.n = n
        self.fn = fn
        super().__init__(f"pole at n = {n}" + (f" of {fn}" if fn is not None else ""))


# ---------------------------------------------------------------------------
# integer polynomials
# ---------------------------------------------------------------------------


def _trim(coeffs: Iterable[int]) -> tuple[int, ...]:
    c = list(coeffs)
    while c and c[-1] == 0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class Poly:
    """Integer-coefficient polynomial in ``n``."""

    coeffs: tuple[int, ...] = ()

    def __post_init__(self):
        for c in self.coeffs:
            if not isinstance(c, int):
                raise TypeError(f"polynomial coefficients must be int, got {type(c).__name__}")
        object.__setattr__(self, "coeffs", _trim(self.coeffs))

    @classmethod
    def const(cls, c: int) -> "Poly":
        return cls((c,))

    @classmethod
    def affine(cls, c0: int, c1: int) -> "Poly":
        """The polynomial ``c0 + c1*n``."""
        return cls((c0, c1))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1  # -1 for the zero polynomial

    @property
    def lc(self) -> int:
        return self.coeffs[-1] if self.coeffs else 0

    def is_zero(self) -> bool:
        return not self.coeffs

    def __bool__(self) -> bool:
        return bool(self.coeffs)

    def coeff(self, k: int) -> int:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else 0

    def __add__(self, other: "Poly") -> "Poly":
        m = max(len(self.coeffs), len(other.coeffs))
        return Poly(tuple(self.coeff(k) + other.coeff(k) for k in range(m)))

    def __neg__(self) -> "Poly":
        return Poly(tuple(-c for c in self.coeffs))

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other: "Poly | int") -> "Poly":
        if isinstance(other, int):
            return Poly(tuple(c * other for c in self.coeffs))
        if not self.coeffs or not other.coeffs:
            return Poly()
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a:
                for j, b in enumerate(other.coeffs):
                    out[i + j] += a * b
        return Poly(tuple(out))

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        out = Poly((1,))
        for _ in range(k):
            out = out * self
        return out

    def __call__(self, x):
        """Horner evaluation; exact for int and Fraction arguments."""
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def content(self) -> int:
        return math.gcd(*self.coeffs) if self.coeffs else 0

    def primitive(self) -> "Poly":
        """Primitive part with positive leading coefficient."""
        if not self.coeffs:
            return self
        g = self.content()
        if self.lc < 0:
            g = -g
        return Poly(tuple(c // g for c in self.coeffs))

    def exact_div_int(self, d: int) -> "Poly":
        out = []
        for c in self.coeffs:
            q, r = divmod(c, d)
            if r:
                raise ArithmeticError(f"{self} not divisible by {d}")
            out.append(q)
        return Poly(tuple(out))

    def prem(self, other: "Poly") -> "Poly":
        """Pseudo-remainder of ``lc(other)**(deg self - deg other + 1) * self`` by ``other``."""
        if other.is_zero():
            raise ZeroDivisionError("pseudo-division by the zero polynomial")
        r = list(self.coeffs)
        db, lb = other.degree, other.lc
        e = len(r) - 1 - db + 1
        while len(r) - 1 >= db and r:
            shift = len(r) - 1 - db
            top = r[-1]
            r = [c * lb for c in r]
            for k, b in enumerate(other.coeffs):
                r[k + shift] -= top * b
            r = list(_trim(r))
            e -= 1
        return Poly(tuple(c * lb**e for c in r)) if e > 0 else Poly(tuple(r))

    def divexact(self, other: "Poly") -> "Poly":
        """Quotient of an exact division over Z[n]."""
        if other.is_zero():
            raise ZeroDivisionError("division by the zero polynomial")
        r = [Fraction(c) for c in self.coeffs]
        q = [Fraction(0)] * max(len(r) - other.degree, 0)
        while r and len(r) - 1 >= other.degree:
            shift = len(r) - 1 - other.degree
            t = r[-1] / other.lc
            q[shift] = t
            for k, b in enumerate(other.coeffs):
                r[k + shift] -= t * b
            while r and r[-1] == 0:
                r.pop()
        if r or any(c.denominator != 1 for c in q):
            raise ArithmeticError(f"{other} does not divide {self} in Z[n]")
        return Poly(tuple(int(c) for c in q))

    def derivative(self) -> "Poly":
        return Poly(tuple(k * c for k, c in enumerate(self.coeffs) if k))

    def to_str(self, var: str = "n") -> str:
        """Descending-degree text with explicit integer coefficients, e.g. ``1*n^2 - 8*n - 5``."""
        if not self.coeffs:
            return "0"
        parts = []
        for k in range(self.degree, -1, -1):
            c = self.coeffs[k]
            if c == 0:
                continue
            mono = "" if k == 0 else (f"*{var}" if k == 1 else f"*{var}^{k}")
            sign = "-" if c < 0 else "+"
            body = f"{abs(c)}{mono}"
            if not parts:
                parts.append(f"-{body}" if c < 0 else body)
            else:
                parts.append(f" {sign} {body}")
        return "".join(parts)

    def __str__(self) -> str:
        return self.to_str()

    def __repr__(self) -> str:
        return f"Poly({self.to_str()})"


def poly_gcd(a: Poly, b: Poly) -> Poly:
    """Primitive gcd over Q[n] via the subresultant remainder sequence."""
    if a.degree < b.degree:
        a, b = b, a
    if b.is_zero():
        return a.primitive()
    a, b = a.primitive(), b.primitive()
    g = h = 1
    while True:
        delta = a.degree - b.degree
        r = a.prem(b)
        if r.is_zero():
            return b.primitive()
        if r.degree == 0:
            return Poly((1,))
        a, b = b, r.exact_div_int(g * h**delta)
        g = a.lc
        # h <- g^delta / h^(delta-1), exact in Z
        if delta == 1:
            h = g
        elif delta > 1:
            h = g**delta // h ** (delta - 1)


# ---------------------------------------------------------------------------
# rational functions
# ---------------------------------------------------------------------------

Scalar = Union[int, Fraction]


def _as_poly_pair(x) -> tuple[Poly, Poly]:
    if isinstance(x, RationalFn):
        return x.num, x.den
    if isinstance(x, Poly):
        return x, Poly((1,))
    if isinstance(x, bool):
        raise TypeError("bool is not a valid coefficient")
    if isinstance(x, int):
        return Poly((x,)), Poly((1,))
    if isinstance(x, Fraction):
        return Poly((x.numerator,)), Poly((x.denominator,))
    raise TypeError(f"cannot interpret {type(x).__name__} as a rational function")


class RationalFn:
    """Canonical quotient ``num(n) / den(n)`` of integer polynomials.

    Canonical means: gcd(num, den) = 1 over Q, the integer contents share no
    common factor, and ``den`` has a positive leading coefficient. The zero
    function is stored as ``0 / 1``.
    """

    __slots__ = ("_num", "_den")

    def __init__(self, num=0, den=1):
        pn, qn = _as_poly_pair(num)
        pd, qd = _as_poly_pair(den)
        p, q = pn * qd, qn * pd
        if q.is_zero():
            raise ZeroDivisionError("rational function with zero denominator")
        p, q = _canonical(p, q)
        object.__setattr__(self, "_num", p)
        object.__setattr__(self, "_den", q)

    def __setattr__(self, key, value):
        raise AttributeError("RationalFn is immutable")

    @classmethod
    def _raw(cls, p: Poly, q: Poly) -> "RationalFn":
        obj = object.__new__(cls)
        object.__setattr__(obj, "_num", p)
        object.__setattr__(obj, "_den", q)
        return obj

    @property
    def num(self) -> Poly:
        return self._num

    @property
    def den(self) -> Poly:
        return self._den

    def is_zero(self) -> bool:
        return self._num.is_zero()

    def is_constant(self) -> bool:
        return self._num.degree <= 0 and self._den.degree == 0

    def as_fraction(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        return Fraction(self._num.coeff(0), self._den.coeff(0))

    def as_int_poly(self) -> Poly | None:
        """The numerator if this function is an integer polynomial, else None."""
        if self._den.coeffs == (1,):
            return self._num
        return None

    # arithmetic ----------------------------------------------------------
    def _coerce(self, other) -> "RationalFn":
        return other if isinstance(other, RationalFn) else RationalFn(other)

    def __add__(self, other):
        o = self._coerce(other)
        return RationalFn(self._num * o._den + o._num * self._den, self._den * o._den)

    __radd__ = __add__

    def __neg__(self):
        return RationalFn._raw(-self._num, self._den)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        return RationalFn(self._num * o._num, self._den * o._den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o.is_zero():
            raise ZeroDivisionError("division by the zero rational function")
        return RationalFn(self._num * o._den, self._den * o._num)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, k: int):
        if k < 0:
            return RationalFn(1) / (self ** (-k))
        return RationalFn(self._num**k, self._den**k)

    def __eq__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        # canonical forms make this equivalent to cross-multiplication
        return self._num == o._num and self._den == o._den

    def __hash__(self):
        return hash((self._num.coeffs, self._den.coeffs))

    # evaluation ----------------------------------------------------------
    def __call__(self, n: int | Fraction) -> Fraction:
        return rf_eval(self, n)

    def to_float(self, n: float) -> float:
        d = self._den(n)
        if d == 0:
            raise PoleError(n, self)
        return float(self._num(n)) / float(d)

    def derivative(self) -> "RationalFn":
        p, q = self._num, self._den
        return RationalFn(p.derivative() * q - p * q.derivative(), q * q)

    # text ----------------------------------------------------------------
    def __str__(self) -> str:
        return f"({self._num.to_str()}) / ({self._den.to_str()})"

    def __repr__(self) -> str:
        return f"RationalFn({self})"

    @classmethod
    def parse(cls, text: str) -> "RationalFn":
        from confbounds._parse import parse_rational

        return parse_rational(text)


def _canonical(p: Poly, q: Poly) -> tuple[Poly, Poly]:
    if p.is_zero():
        return Poly(), Poly((1,))
    g = poly_gcd(p, q)
    if g.degree > 0:
        p, q = p.divexact(g), q.divexact(g)
    c = math.gcd(p.content(), q.content())
    if q.lc < 0:
        c = -c
    if c != 1:
        p, q = p.exact_div_int(c), q.exact_div_int(c)
    return p, q


N = RationalFn(Poly((0, 1)))
"""The indeterminate ``n`` as a rational function."""


def rf_arith(a: RationalFn, b: RationalFn, op: str) -> RationalFn:
    """Exact ``a op b`` for ``op`` in ``{"add", "sub", "mul", "div"}``."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown operation {op!r}")


def rf_eval(a: RationalFn, n: int | Fraction) -> Fraction:
    """Exact value of ``a`` at ``n``; raises :class:`PoleError` at denominator roots."""
    d = a.den(n)
    if d == 0:
        raise PoleError(n, a)
    return Fraction(a.num(n)) / Fraction(d)


# ---------------------------------------------------------------------------
# dimension scans
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DimensionRange:
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo < 3:
            raise ValueError(f"dimension range must start at n >= 3, got {self.lo}")
        if self.hi < self.lo:
            raise ValueError(f"empty dimension range [{self.lo}, {self.hi}]")

    def __iter__(self):
        return iter(range(self.lo, self.hi + 1))

    def __len__(self):
        return self.hi - self.lo + 1


def _sign(x) -> str:
    return "+" if x > 0 else ("-" if x < 0 else "0")


def rf_sign_scan(a: RationalFn, rng: DimensionRange) -> list[tuple[int, str]]:
    """Sign of ``a`` at each integer of ``rng``; denominator roots report ``"pole"``."""
    out = []
    for n in rng:
        try:
            out.append((n, _sign(rf_eval(a, n))))
        except PoleError:
            out.append((n, "pole"))
    return out


def _cauchy_bound(p: Poly) -> Fraction:
    if p.degree <= 0:
        return Fraction(0)
    lc = abs(p.lc)
    return 1 + max(Fraction(abs(c), lc) for c in p.coeffs[:-1])


def eventual_sign_from(a: RationalFn, start: int) -> tuple[int | None, str]:
    """Smallest integer ``m >= start`` after which the sign of ``a`` never changes.

    Beyond the Cauchy root bound of numerator and denominator the sign equals the
    sign of the leading-coefficient ratio, so only finitely many integers need an
    exact evaluation. Returns ``(m, sign)``; ``m`` is None for the zero function.
    """
    if a.is_zero():
        return None, "0"
    bound = max(_cauchy_bound(a.num), _cauchy_bound(a.den))
    final = _sign(a.num.lc * a.den.lc)
    top = max(start, math.floor(bound) + 1)
    m = top
    for n in range(top - 1, start - 1, -1):
        try:
            s = _sign(rf_eval(a, n))
        except PoleError:
            break
        if s != final:
            break
        m = n
    return m, final


# ---------------------------------------------------------------------------
# sphere volumes and the Beta normalization
# ---------------------------------------------------------------------------


def sphere_volume(k: int) -> float:
    """Volume of the unit sphere S^k: ``2 pi^{(k+1)/2} / Gamma((k+1)/2)``."""
    if k < 0:
        raise ValueError(f"sphere dimension must be >= 0, got {k}")
    return math.exp(math.log(2.0) + 0.5 * (k + 1) * math.log(math.pi) - math.lgamma(0.5 * (k + 1)))


def log_beta(x: float, y: float) -> float:
    return math.lgamma(x) + math.lgamma(y) - math.lgamma(x + y)


def beta_value(n: int) -> float:
    """``omega_{n-2} * B((n-1)/2, (n+1)/2)``, the unit of every bound constant."""
    if n < 3:
        raise ValueError(f"beta_value requires n >= 3, got {n}")
    k = n - 2
    log_omega = math.log(2.0) + 0.5 * (k + 1) * math.log(math.pi) - math.lgamma(0.5 * (k + 1))
    return math.exp(log_omega + log_beta(0.5 * (n - 1), 0.5 * (n + 1)))


@dataclass(frozen=True)
class BetaConstant:
    """The exact value ``coeff(n) * omega_{n-2} * B((n-1)/2, (n+1)/2)``."""

    coeff: RationalFn

    def __post_init__(self):
        if not isinstance(self.coeff, RationalFn):
            object.__setattr__(self, "coeff", RationalFn(self.coeff))

    def __add__(self, other: "BetaConstant") -> "BetaConstant":
        return BetaConstant(self.coeff + other.coeff)

    def __sub__(self, other: "BetaConstant") -> "BetaConstant":
        return BetaConstant(self.coeff - other.coeff)

    def __mul__(self, k) -> "BetaConstant":
        return BetaConstant(self.coeff * k)

    __rmul__ = __mul__

    def unit_value(self, n: int) -> Fraction:
        """Exact coefficient at ``n`` (value in BetaConstant units)."""
        return rf_eval(self.coeff, n)

    def numeric(self, n: int) -> float:
        return float(self.unit_value(n)) * beta_value(n)

    def __str__(self) -> str:
        return f"{self.coeff} * omega_(n-2) * B((n-1)/2, (n+1)/2)"
