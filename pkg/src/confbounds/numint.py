"""Quadrature for the reduced half-space integrals.

Integrals over R^n_+ of functions radial in x' = (x_1, ..., x_{n-1}) against
x_1^4 reduce to

    int_{R^n_+} F(|x'|, x_n) x_1^4 dx = w(n) int_0^inf int_0^inf F(r, s) r^{n+2} dr ds,

with w(n) = 3 omega_{n-2} / ((n-1)(n+1)). Values are reported in units of
omega_{n-2} B((n-1)/2, (n+1)/2), the unit used by the exact bounds.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cubature, quad

from confbounds import bounds as bnd
from confbounds.exactfn import N, RationalFn, beta_value, log_beta, rf_eval
from confbounds.pde import (
    HalfPlaneField,
    Problem,
    RadialGrid,
    get_problem,
    solve_profile,
)
from confbounds.profile import ProfileFn

log = logging.getLogger(__name__)

CLOSED_TOL = 1e-10
FIELD_TOL = 1e-6


class QuadratureError(RuntimeError):
    pass


class DivergentTail(QuadratureError):
    pass


@dataclass(frozen=True)
class NumericConstant:
    value: float
    error: float
    normalization: str = "beta-units"  # or "raw"

    def __post_init__(self):
        if not self.error >= 0:
            raise ValueError("error estimate must be nonnegative")

    def raw(self, n: int) -> "NumericConstant":
        """Convert beta-units to a raw number (omega_{n-2} B factor included)."""
        if self.normalization == "raw":
            return self
        from confbounds.exactfn import sphere_volume

        u = sphere_volume(n - 2) * beta_value(n)
        return NumericConstant(self.value * u, self.error * u, "raw")


@dataclass(frozen=True)
class ReducedIntegrand:
    """F(r, s) with radial power p (r^p dr ds); optional fields for panel quadrature.

    For field-based integrands ``fn`` receives (r, s, *field_values) where the
    field values come from bilinear interpolation of ``fields`` on their grid.
    """

    fn: Callable
    p: RationalFn = N + 2
    fields: tuple[HalfPlaneField, ...] = ()
    label: str = ""

    @classmethod
    def zero(cls) -> "ReducedIntegrand":
        return cls(lambda r, s: np.zeros(np.broadcast(r, s).shape), label="0")

    def power(self, n: int) -> float:
        return float(rf_eval(self.p, n))


def angular_weight(n: int) -> float:
    """w(n) in omega_{n-2} units."""
    return 3.0 / ((n - 1) * (n + 1))


def _to_units(raw: float, n: int) -> float:
    """Reduced integral times w(n), divided by omega_{n-2} B((n-1)/2, (n+1)/2)."""
    return angular_weight(n) * raw / math.exp(log_beta(0.5 * (n - 1), 0.5 * (n + 1)))


def _safe_product(fval: np.ndarray, r: np.ndarray, p: float) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        out = fval * np.power(r, p)
    return np.where(np.isfinite(out), out, 0.0)


def _tail_check(ig: ReducedIntegrand, n: int):
    """Crude divergence test: integrand mass on a far shell must shrink."""
    p = ig.power(n)
    vals = []
    for R in (1e3, 1e4):
        th = np.linspace(0.05, np.pi / 2 - 0.05, 7)
        r, s = R * np.cos(th), R * np.sin(th)
        with np.errstate(all="ignore"):
            v = np.abs(_safe_product(np.asarray(ig.fn(r, s), float), r, p)).max() * R * R
        vals.append(v)
    if vals[1] > vals[0] and vals[1] > 1e-300:
        raise DivergentTail(f"integrand of {ig.label or 'integral'} does not decay: shell mass {vals}")


def quad2d_closed(ig: ReducedIntegrand, n: int, tol: float = CLOSED_TOL, max_subdivisions: int = 20000) -> NumericConstant:
    """Compactified adaptive cubature of a closed-form integrand."""
    _tail_check(ig, n)
    p = ig.power(n)

    def g(x):
        t, u = x[:, 0], x[:, 1]
        r = t / (1.0 - t)
        s = u / (1.0 - u)
        jac = 1.0 / ((1.0 - t) ** 2 * (1.0 - u) ** 2)
        return _safe_product(np.asarray(ig.fn(r, s), float), r, p) * jac

    res = cubature(g, [0.0, 0.0], [1.0, 1.0], rule="gk21", rtol=tol, atol=0.0,
                   max_subdivisions=max_subdivisions)
    val = float(res.estimate)
    err = float(res.error)
    if res.status != "converged" and err > tol * abs(val):
        raise QuadratureError(f"tolerance {tol:g} not reached: estimate {val:.6e} +- {err:.2e}")
    return NumericConstant(_to_units(val, n), _to_units(err, n))


_GL = {q: np.polynomial.legendre.leggauss(q) for q in (3, 5)}


def _panel_sum(ig: ReducedIntegrand, n: int, q: int) -> float:
    grid = ig.fields[0].grid
    p = ig.power(n)
    x, w = _GL[q]
    x01, w01 = 0.5 * (x + 1.0), 0.5 * w
    r0, dr = grid.r[:-1], np.diff(grid.r)
    s0, ds = grid.s[:-1], np.diff(grid.s)
    total = 0.0
    # rows of r-panels at a time keep memory bounded
    rq = (r0[:, None] + dr[:, None] * x01[None, :])  # (nr-1, q)
    wr = dr[:, None] * w01[None, :]
    sq = (s0[:, None] + ds[:, None] * x01[None, :]).ravel()
    ws = (ds[:, None] * w01[None, :]).ravel()
    for i in range(len(r0)):
        R, Sg = np.meshgrid(rq[i], sq, indexing="ij")
        fv = [f(R, Sg) for f in ig.fields]
        vals = _safe_product(np.asarray(ig.fn(R, Sg, *fv), float), R, p)
        total += float(wr[i] @ vals @ ws)
    return total


def quad2d_field(ig: ReducedIntegrand, n: int, tol: float = FIELD_TOL) -> NumericConstant:
    """Panel Gauss-Legendre on the grid cells of the interpolated fields (box [0, R]^2)."""
    grids = {id(f.grid) for f in ig.fields}
    if len(grids) != 1:
        g0 = ig.fields[0].grid
        for f in ig.fields[1:]:
            if f.grid.shape != g0.shape or not np.array_equal(f.grid.r, g0.r):
                raise ValueError("field-based integrands must share one grid")
    hi = _panel_sum(ig, n, 5)
    lo = _panel_sum(ig, n, 3)
    return NumericConstant(_to_units(hi, n), _to_units(abs(hi - lo), n))


def quad2d(ig: ReducedIntegrand, n: int, tol: float | None = None) -> NumericConstant:
    if ig.fields:
        return quad2d_field(ig, n, FIELD_TOL if tol is None else tol)
    return quad2d_closed(ig, n, CLOSED_TOL if tol is None else tol)


def quad1d(f: Callable[[float], float], tol: float = CLOSED_TOL) -> NumericConstant:
    """int_0^inf f(s) ds by adaptive quadrature (raw units)."""
    val, err = quad(f, 0.0, np.inf, epsabs=0.0, epsrel=tol, limit=500)
    return NumericConstant(float(val), float(err), "raw")


def profile_moment_numeric(f: ProfileFn, n: int, tol: float = CLOSED_TOL) -> NumericConstant:
    g = f.at(n)
    return quad1d(lambda s: float(g(s)), tol)


def closed_integrand(terms: Sequence[tuple[ProfileFn, object]], n: int, label: str = "") -> ReducedIntegrand:
    """sum_i g_i(s) rho^{-b_i} as a ReducedIntegrand, rho^2 = r^2 + (1+s)^2."""
    prepared = [(g.at(n), float(RationalFn(b)(n)) if not isinstance(b, (int, float)) else float(b))
                for g, b in terms]

    def fn(r, s):
        lr = np.log(r * r + (1.0 + s) ** 2)
        out = 0.0
        for g, b in prepared:
            out = out + g(s) * np.exp(-0.5 * b * lr)
        return out

    return ReducedIntegrand(fn, label=label)


def quad2d_outside(ig: ReducedIntegrand, n: int, R: float, tol: float = 1e-8) -> NumericConstant:
    """Integral of a closed-form integrand over the quadrant minus the box [0, R]^2."""
    p = ig.power(n)

    def piece(kind):
        def g(x):
            t, u = x[:, 0], x[:, 1]
            if kind == 0:
                r, s, jac = R + t / (1 - t), R * u, R / (1 - t) ** 2
            elif kind == 1:
                r, s, jac = R * t, R + u / (1 - u), R / (1 - u) ** 2
            else:
                r, s, jac = R + t / (1 - t), R + u / (1 - u), 1.0 / ((1 - t) ** 2 * (1 - u) ** 2)
            return _safe_product(np.asarray(ig.fn(r, s), float), r, p) * jac

        return g

    val = err = 0.0
    for kind in range(3):
        res = cubature(piece(kind), [0.0, 0.0], [1.0, 1.0], rule="gk21", rtol=tol, atol=0.0)
        val += float(res.estimate)
        err += float(res.error)
    return NumericConstant(_to_units(val, n), _to_units(err, n))


def richardson(fine: float, coarse: float, order: float = 2.0) -> tuple[float, float]:
    """Extrapolated value and the size of the correction."""
    corr = (fine - coarse) / (2.0**order - 1.0)
    return fine + corr, abs(corr)


def doubled_pair(grid: RadialGrid) -> tuple[RadialGrid, RadialGrid]:
    """The grid continued to twice its radius, and the nested half-resolution grid."""
    fine = grid.extend(2.0, multiple=4)
    return fine, fine.coarsen()


# ---------------------------------------------------------------------------
# adjointness
# ---------------------------------------------------------------------------


def _source_fn(prob: Problem, n: int):
    return lambda r, s: prob.source_at(n, r, s)


def _far(prob: Problem) -> str:
    return "lower" if prob.lower is not None else "zero"


def adjoint_sides(p1: Problem, p2: Problem, n: int, grid: RadialGrid) -> tuple[NumericConstant, NumericConstant]:
    """(int phi1 u2, int phi2 u1) with both fields solved on ``grid``."""
    u1 = solve_profile(p1, n, grid, _far(p1))
    u2 = u1 if p2 is p1 else solve_profile(p2, n, grid, _far(p2))
    f1, f2 = _source_fn(p1, n), _source_fn(p2, n)
    lhs = quad2d(ReducedIntegrand(lambda r, s, v: f1(r, s) * v, fields=(u2,), label="phi1 u2"), n)
    rhs = quad2d(ReducedIntegrand(lambda r, s, v: f2(r, s) * v, fields=(u1,), label="phi2 u1"), n)
    return lhs, rhs


def _rel(a: float, b: float) -> float:
    den = max(abs(a), abs(b))
    return abs(a - b) / den if den > 0 else 0.0


@dataclass(frozen=True)
class AdjointnessResult:
    tags: tuple[str, str]
    n: int
    lhs: float
    rhs: float
    discrepancy: float
    raw_discrepancy: float
    coarse_discrepancy: float
    grid: dict

    @property
    def decreasing(self) -> bool:
        return self.discrepancy < self.coarse_discrepancy

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["decreasing"] = self.decreasing
        return d


def check_adjointness(phi1, phi2, n: int, grid: RadialGrid | None = None) -> AdjointnessResult:
    """Relative discrepancy between int phi1 u2 and int phi2 u1, -Lap u_i = phi_i.

    Both sides are integrated over the grid continued to twice its radius (the
    far-field mass of slowly decaying fields is not negligible at R = 40) and
    Richardson-extrapolated against the nested half-resolution grid. The same
    procedure one level coarser gives ``coarse_discrepancy``, so refinement can
    be judged. ``raw_discrepancy`` is the unextrapolated value on the grid.
    """
    p1, p2 = get_problem(phi1), get_problem(phi2)
    grid = grid or RadialGrid.graded()
    fine, mid = doubled_pair(grid)
    coarse = mid.coarsen()
    sides = [adjoint_sides(p1, p2, n, g) for g in (coarse, mid, fine)]
    (lc, rc), (lm, rm), (lf, rf) = [(a.value, b.value) for a, b in sides]
    le, _ = richardson(lf, lm)
    re, _ = richardson(rf, rm)
    lce, _ = richardson(lm, lc)
    rce, _ = richardson(rm, rc)
    return AdjointnessResult(
        tags=(p1.tag, p2.tag),
        n=n,
        lhs=le,
        rhs=re,
        discrepancy=_rel(le, re),
        raw_discrepancy=_rel(lf, rf),
        coarse_discrepancy=_rel(lce, rce),
        grid=fine.spec(),
    )


# ---------------------------------------------------------------------------
# numerical C1, C2
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NumericRecord:
    case: str
    n: int
    value: float
    error: float
    units: str
    lower_bound_exact: float | None
    upper_bound_exact: float | None
    contained: bool
    components: dict

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _field_terms(case: bnd.Case, fld: HalfPlaneField, n: int) -> tuple[NumericConstant, NumericConstant]:
    k = case.weight_power
    lin = ReducedIntegrand(lambda r, s, v: s**k * (r * r + (1 + s) ** 2) ** (-(n + 4) / 2) * v,
                           fields=(fld,), label="linear")
    qd = ReducedIntegrand(lambda r, s, v: (r * r + (1 + s) ** 2) ** -2 * v * v, fields=(fld,), label="quadratic")
    return quad2d(lin, n), quad2d(qd, n)


def _closed_terms(case: bnd.Case, bound, n: int) -> tuple[ReducedIntegrand, ReducedIntegrand]:
    k = case.weight_power

    def lin(r, s):
        return s**k * (r * r + (1 + s) ** 2) ** (-(n + 4) / 2) * bound.evaluate(n, r, s)

    def qd(r, s):
        return (r * r + (1 + s) ** 2) ** -2 * bound.evaluate(n, r, s) ** 2

    return ReducedIntegrand(lin), ReducedIntegrand(qd)


def _assemble(case: bnd.Case, n: int, lin: float, qd: float) -> float:
    return float(rf_eval(case.leading, n)) + float(rf_eval(case.p_lin, n)) * lin + float(rf_eval(case.p_quad, n)) * qd


def compute_C_numeric(case, n: int, grid: RadialGrid | None = None) -> NumericRecord:
    """C1(n) or C2(n) with the solved profile in place of its subsolution.

    The error bar adds the Richardson correction, the quadrature estimates,
    the spread between far-field choices (sub- vs supersolution data, when a
    supersolution is known), and the closed-form tail beyond the doubled box.
    """
    case = bnd.get_case(case)
    if n < 6:
        raise ValueError("numerical constants are computed for n >= 6")
    prob = get_problem("V" if case is bnd.NONUMBILIC else "Lambda")
    grid = grid or RadialGrid.graded()
    fine, coarse = doubled_pair(grid)

    vals = {}
    qerr = 0.0
    for name, g in (("fine", fine), ("coarse", coarse)):
        fld = solve_profile(prob, n, g, "lower")
        a, b = _field_terms(case, fld, n)
        qerr = max(qerr, abs(float(rf_eval(case.p_lin, n))) * a.error + abs(float(rf_eval(case.p_quad, n))) * b.error)
        vals[name] = (a.value, b.value)
    c_f = _assemble(case, n, *vals["fine"])
    c_c = _assemble(case, n, *vals["coarse"])
    value, rich = richardson(c_f, c_c)

    spread = 0.0
    if prob.upper is not None:
        fld = solve_profile(prob, n, fine, "upper")
        spread = abs(_assemble(case, n, *(x.value for x in _field_terms(case, fld, n))) - c_f)

    # mass beyond the doubled box: the subsolution gives a lower estimate,
    # the supersolution (if known) an upper one
    def tail(bound):
        a, b = _closed_terms(case, bound, n)
        ta, tb = quad2d_outside(a, n, fine.R), quad2d_outside(b, n, fine.R)
        return float(rf_eval(case.p_lin, n)) * ta.value + float(rf_eval(case.p_quad, n)) * tb.value

    t_lo = tail(prob.lower)
    t_hi = tail(prob.upper) if prob.upper is not None else 2.0 * t_lo
    value += t_lo
    error = rich + qerr + spread + abs(t_hi - t_lo)

    lower = float(bnd.assemble_C1_lower().total.unit_value(n) if case is bnd.NONUMBILIC
                  else bnd.assemble_C2_lower().total.unit_value(n))
    upper = float(bnd.assemble_C1_upper().total.unit_value(n)) if case is bnd.NONUMBILIC else None
    contained = value + error >= lower and (upper is None or value - error <= upper)
    return NumericRecord(
        case=case.name,
        n=n,
        value=value,
        error=error,
        units="omega_{n-2} B((n-1)/2,(n+1)/2)",
        lower_bound_exact=lower,
        upper_bound_exact=upper,
        contained=bool(contained),
        components={"richardson": rich, "quadrature": qerr, "far_field_spread": spread,
                    "tail_bracket": abs(t_hi - t_lo), "fine_grid": fine.spec()},
    )
