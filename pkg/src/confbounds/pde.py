"""Radially reduced Poisson problems on the (r, s) quarter plane.

Fields on R^{n+4}_+ that are radial in x' = (x_1, ..., x_{n+3}) reduce to
functions u(r, s), r = |x'|, s = x_{n+4}, with

    -(u_rr + (n+2)/r u_r + u_ss) = source(r, s),   u(r, 0) = 0.

The discretization is vertex-centred finite volumes with the exact radial
measure r^{n+2} dr on each dual cell. The resulting matrix is an M-matrix, so
the discrete solution obeys the maximum principle, and the r = 0 row reduces
to the (n+3) u_rr limit of the axis. The box [0, R]^2 is closed with Dirichlet
data from a known sub- or supersolution of the problem.
"""

from __future__ import annotations

import dataclasses
import functools
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu

from confbounds.exactfn import N, RationalFn
from confbounds.profile import ProfileFn, ode_solve

S = ProfileFn.s_power

DEFAULT_R = 40.0
DEFAULT_NODES = 257
DEFAULT_BETA = 4.2
SOLVER_TOL = 1e-10


class SolverError(RuntimeError):
    """The linear solve did not reach the residual tolerance."""


class GridError(ValueError):
    pass


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


def _graded_nodes(count: int, R: float, beta: float) -> np.ndarray:
    xi = np.linspace(0.0, 1.0, count)
    a = R / np.expm1(beta)
    x = a * np.expm1(beta * xi)
    x[0], x[-1] = 0.0, R
    return x


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Tensor grid with nodes x = a (exp(beta xi) - 1), xi uniform on [0, xi_max].

    Grids built from the same (R, beta) with node counts 2^k + 1 are nested.
    """

    r: np.ndarray
    s: np.ndarray
    R: float
    beta: float
    a: float = 0.0  # mapping scale, x = a (exp(beta xi) - 1)

    def __post_init__(self):
        for name, x in (("r", self.r), ("s", self.s)):
            if x.ndim != 1 or len(x) < 3:
                raise GridError(f"{name}-nodes must be a 1-d array with at least 3 entries")
            if x[0] != 0.0:
                raise GridError(f"first {name}-node must be 0")
            if not np.all(np.diff(x) > 0):
                raise GridError(f"{name}-nodes must be strictly increasing")
        if self.R < 10:
            raise GridError("truncation radius must be at least 10")
        self.r.flags.writeable = False
        self.s.flags.writeable = False

    @classmethod
    def graded(cls, nodes: int = DEFAULT_NODES, R: float = DEFAULT_R, beta: float = DEFAULT_BETA) -> "RadialGrid":
        x = _graded_nodes(nodes, R, beta)
        return cls(x, x.copy(), float(R), float(beta), float(R / np.expm1(beta)))

    @classmethod
    def uniform(cls, nodes: int, R: float = DEFAULT_R) -> "RadialGrid":
        x = np.linspace(0.0, R, nodes)
        return cls(x, x.copy(), float(R), 0.0)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.r), len(self.s)

    @property
    def n_r(self) -> int:
        return len(self.r)

    @property
    def n_s(self) -> int:
        return len(self.s)

    def spacing_at(self, x: float) -> float:
        """Local s-spacing near the point x."""
        i = int(np.clip(np.searchsorted(self.s, x), 1, len(self.s) - 1))
        return float(self.s[i] - self.s[i - 1])

    def spacing_summary(self) -> dict:
        return {
            "h_min": float(min(np.diff(self.r).min(), np.diff(self.s).min())),
            "h_max": float(max(np.diff(self.r).max(), np.diff(self.s).max())),
            "h_at_1": self.spacing_at(1.0),
            "R": self.R,
            "shape": list(self.shape),
        }

    def spec(self) -> dict:
        return {"R": self.R, "beta": self.beta, "a": self.a, "n_r": self.n_r, "n_s": self.n_s}

    def coarsen(self) -> "RadialGrid":
        """Every other node; requires an even number of intervals in each direction."""
        if (self.n_r - 1) % 2 or (self.n_s - 1) % 2:
            raise GridError("coarsening needs an even number of intervals")
        return RadialGrid(np.array(self.r[::2]), np.array(self.s[::2]), self.R, self.beta, self.a)

    def extend(self, factor: float = 2.0, multiple: int = 1) -> "RadialGrid":
        """Same nodes on [0, R], continued with the same mapping out to factor * R.

        The number of added intervals is rounded up to ``multiple`` so that the
        extension of a grid and of its coarsening end at the same radius.
        """
        target = factor * self.R

        def ext(x):
            if self.beta == 0:
                h = x[-1] - x[-2]
                k = int(np.ceil((target - x[-1]) / h - 1e-9))
                k = -(-k // multiple) * multiple
                extra = np.arange(1, k + 1) * h + x[-1]
            else:
                a = self.a
                xi_last = np.log1p(x[-1] / a) / self.beta
                dxi = xi_last - np.log1p(x[-2] / a) / self.beta
                xi_end = np.log1p(target / a) / self.beta
                k = int(np.ceil((xi_end - xi_last) / dxi - 1e-9))
                k = -(-k // multiple) * multiple
                extra = a * np.expm1(self.beta * (xi_last + dxi * np.arange(1, k + 1)))
            return np.concatenate([x, extra])

        r, s = ext(np.array(self.r)), ext(np.array(self.s))
        return RadialGrid(r, s, float(r[-1]), self.beta, self.a)

    def contains_nodes_of(self, coarse: "RadialGrid") -> bool:
        return _subset_index(coarse.r, self.r) is not None and _subset_index(coarse.s, self.s) is not None


def _subset_index(sub: np.ndarray, full: np.ndarray) -> np.ndarray | None:
    idx = np.searchsorted(full, sub)
    idx = np.clip(idx, 0, len(full) - 1)
    lo = np.clip(idx - 1, 0, len(full) - 1)
    pick = np.where(np.abs(full[lo] - sub) < np.abs(full[idx] - sub), lo, idx)
    tol = 1e-9 * max(1.0, float(full[-1]))
    if np.all(np.abs(full[pick] - sub) <= tol):
        return pick
    return None


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------

Term = tuple[ProfileFn, RationalFn]  # g(s) * rho^{-beta}, rho^2 = r^2 + (1+s)^2


@dataclass(frozen=True)
class Bound:
    label: str
    profile: ProfileFn
    power: RationalFn  # bound = profile(s) * rho^{-power}

    def evaluate(self, n: int, r: np.ndarray, s: np.ndarray) -> np.ndarray:
        return _eval_terms([(self.profile, self.power)], n, r, s)


@dataclass(frozen=True)
class Problem:
    tag: str
    source: tuple[Term, ...]
    lower: Bound | None = None
    upper: Bound | None = None
    description: str = ""

    def source_at(self, n: int, r: np.ndarray, s: np.ndarray) -> np.ndarray:
        return _eval_terms(self.source, n, r, s)

    def scaled(self, c, tag: str | None = None) -> "Problem":
        terms = tuple((g * c, b) for g, b in self.source)
        return Problem(tag or f"{self.tag}*{c}", terms, description=self.description)

    def plus(self, other: "Problem", tag: str | None = None) -> "Problem":
        return Problem(tag or f"{self.tag}+{other.tag}", self.source + other.source)


def _eval_terms(terms: Sequence[Term], n: int, r, s) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    log_rho2 = np.log(r * r + (1.0 + s) ** 2)
    out = np.zeros(np.broadcast(r, s).shape)
    for g, power in terms:
        b = float(power(n))
        out = out + g.at(n)(s) * np.exp(-0.5 * b * log_rho2)
    return out


def _rho(power) -> RationalFn:
    return power if isinstance(power, RationalFn) else RationalFn(power)


@functools.lru_cache(maxsize=None)
def problem_registry() -> dict[str, Problem]:
    inv_1ps = ProfileFn.one_plus_s(-1)
    v_lower = S(2) * inv_1ps / (4 * N)
    v_upper = S(1) / (4 * N)
    lam_lower = S(3) * inv_1ps / (6 * N)
    probs = [
        Problem("V", ((S(1), N + 2),),
                Bound("s^2/(4n(1+s)) rho^-n", v_lower, N),
                Bound("s/(4n) rho^-n", v_upper, N),
                "-Lap V = s rho^{-n-2}"),
        Problem("Lambda", ((S(2), N + 2),),
                Bound("s^3/(6n(1+s)) rho^-n", lam_lower, N), None,
                "-Lap Lambda = s^2 rho^{-n-2}"),
        Problem("u1", ((ProfileFn.one_plus_s(-3) / (2 * N), N),),
                Bound("0 (maximum principle)", ProfileFn.zero(), N),
                Bound("s/(4n(1+s)) rho^-n", S(1) * inv_1ps / (4 * N), N),
                "-Lap u1 = (1+s)^{-3}/(2n) rho^{-n}"),
        Problem("u2", (((1 - ProfileFn.one_plus_s(-3)) / (3 * N), N),),
                Bound("0 (maximum principle)", ProfileFn.zero(), N), None,
                "-Lap u2 = (1-(1+s)^{-3})/(3n) rho^{-n}"),
        Problem("v1", ((S(2), N + 4),),
                Bound("ode(n+2, s^2) rho^-(n+2)", ode_solve(N + 2, S(2)), N + 2), None,
                "-Lap v1 = s^2 rho^{-n-4}"),
        Problem("v2", ((S(3), N + 4),),
                Bound("ode(n+2, s^3) rho^-(n+2)", ode_solve(N + 2, S(3)), N + 2), None,
                "-Lap v2 = s^3 rho^{-n-4}"),
        Problem("w1", ((S(2) * inv_1ps, N + 4),),
                Bound("ode(n+2, s^2/(1+s)) rho^-(n+2)", ode_solve(N + 2, S(2) * inv_1ps), N + 2), None,
                "-Lap w1 = s^2/(1+s) rho^{-n-4}"),
        Problem("w2", ((S(3) * inv_1ps, N + 4),),
                Bound("ode(n+2, s^3/(1+s)) rho^-(n+2)", ode_solve(N + 2, S(3) * inv_1ps), N + 2), None,
                "-Lap w2 = s^3/(1+s) rho^{-n-4}"),
    ]
    return {p.tag: p for p in probs}


TAG_ALIASES = {
    "Λ": "Lambda", "lambda": "Lambda", "L": "Lambda",
    "ũ₁": "u1", "ũ₂": "u2", "ṽ₁": "v1", "ṽ₂": "v2", "w̃₁": "w1", "w̃₂": "w2",
}


def get_problem(tag: "str | Problem") -> Problem:
    if isinstance(tag, Problem):
        return tag
    reg = problem_registry()
    key = TAG_ALIASES.get(tag, tag)
    if key not in reg:
        raise KeyError(f"unknown problem tag {tag!r}; known: {sorted(reg)}")
    return reg[key]


def custom_problem(tag: str, terms: Sequence[tuple[ProfileFn, object]]) -> Problem:
    """Problem with source sum g_i(s) rho^{-beta_i} and no registered bounds."""
    return Problem(tag, tuple((g, _rho(b)) for g, b in terms))


# ---------------------------------------------------------------------------
# discretization and solve
# ---------------------------------------------------------------------------


def _radial_volumes(r: np.ndarray, d: float) -> tuple[np.ndarray, np.ndarray]:
    """Dual-cell measures int r^d dr and face fluxes r_f^d / dr for the interior r-rows."""
    faces = 0.5 * (r[1:] + r[:-1])
    lo = np.concatenate([[0.0], faces[:-1]])
    hi = faces
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lo > 0, np.log(hi / np.where(lo > 0, lo, 1.0)), 0.0)
        vol = np.where(
            lo > 0,
            np.exp((d + 1) * np.log(np.where(lo > 0, lo, 1.0))) * np.expm1((d + 1) * ratio) / (d + 1),
            hi ** (d + 1) / (d + 1),
        )
    trans = faces**d / np.diff(r)
    return vol, trans


def assemble_operator(grid: RadialGrid, n: int) -> tuple[sp.csc_matrix, Callable[[np.ndarray], np.ndarray]]:
    """Pointwise discrete operator on interior unknowns and the boundary lifting.

    Unknowns are nodes i = 0..n_r-2, j = 1..n_s-2. Returns (L, lift) where
    lift(boundary_values) gives the right-hand side contribution of Dirichlet
    data at r = R and s = R (the s = 0 data is zero).
    """
    d = n + 2
    r, s = grid.r, grid.s
    nr, ns = len(r) - 1, len(s) - 2
    vol_r, tr = _radial_volumes(r, d)  # vol_r[i], i < nr; tr[i] couples i, i+1
    vol_s = 0.5 * (s[2:] - s[:-2])  # interior j = 1..ns
    ts = 1.0 / np.diff(s)  # ts[j] couples j, j+1

    I, J = np.meshgrid(np.arange(nr), np.arange(1, ns + 1), indexing="ij")
    k = (I * ns + (J - 1)).ravel()
    Ii, Jj = I.ravel(), J.ravel()
    cr_p = tr[Ii] / vol_r[Ii]  # coupling to i+1
    cr_m = np.where(Ii > 0, tr[np.maximum(Ii - 1, 0)] / vol_r[Ii], 0.0)
    cs_p = ts[Jj] / vol_s[Jj - 1]
    cs_m = ts[Jj - 1] / vol_s[Jj - 1]
    diag = cr_p + cr_m + cs_p + cs_m

    rows, cols, vals = [k], [k], [diag]
    m = Ii + 1 < nr
    rows.append(k[m]); cols.append(k[m] + ns); vals.append(-cr_p[m])
    m = Ii > 0
    rows.append(k[m]); cols.append(k[m] - ns); vals.append(-cr_m[m])
    m = Jj < ns
    rows.append(k[m]); cols.append(k[m] + 1); vals.append(-cs_p[m])
    m = Jj > 1
    rows.append(k[m]); cols.append(k[m] - 1); vals.append(-cs_m[m])
    L = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nr * ns, nr * ns)
    )

    def lift(bvals: np.ndarray) -> np.ndarray:
        # bvals is a full (n_r+1... ) node array; only the far rows are read
        out = np.zeros((nr, ns))
        out[-1, :] += (tr[nr - 1] / vol_r[nr - 1]) * bvals[nr, 1:ns + 1]
        out[:, -1] += (ts[ns] / vol_s[ns - 1]) * bvals[:nr, ns + 1]
        return out.ravel()

    return L, lift


@dataclass(frozen=True, eq=False)
class HalfPlaneField:
    grid: RadialGrid
    values: np.ndarray
    n: int
    tag: str
    boundary: dict = field(default_factory=dict)
    residual: float = 0.0

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        self.values.flags.writeable = False

    def invariant_violations(self) -> list[str]:
        out = []
        v = self.values
        if not np.all(np.isfinite(v)):
            out.append("non-finite values")
        if np.any(v[:, 0] != 0):
            out.append("bottom row is not zero")
        if np.any(v < 0):
            out.append(f"negative values (min {v.min():.3e})")
        return out

    def nearest(self, r: float, s: float) -> tuple[float, float, float]:
        i = int(np.abs(self.grid.r - r).argmin())
        j = int(np.abs(self.grid.s - s).argmin())
        return float(self.grid.r[i]), float(self.grid.s[j]), float(self.values[i, j])

    @functools.cached_property
    def interpolator(self) -> RegularGridInterpolator:
        return RegularGridInterpolator((self.grid.r, self.grid.s), self.values, method="linear",
                                       bounds_error=False, fill_value=0.0)

    def __call__(self, r, s) -> np.ndarray:
        r, s = np.broadcast_arrays(np.asarray(r, float), np.asarray(s, float))
        pts = np.stack([r.ravel(), s.ravel()], axis=-1)
        return self.interpolator(pts).reshape(r.shape)

    def with_values(self, values: np.ndarray) -> "HalfPlaneField":
        return dataclasses.replace(self, values=np.array(values, dtype=float))

    def header(self) -> dict:
        return {"tag": self.tag, "n": self.n, "grid": self.grid.spec(), "boundary": self.boundary,
                "residual": self.residual, "solver_tol": SOLVER_TOL}


def solve_profile(
    tag: "str | Problem",
    n: int,
    grid: RadialGrid | None = None,
    far_field: str = "lower",
    tol: float = SOLVER_TOL,
) -> HalfPlaneField:
    """Solve the reduced problem for ``tag`` at dimension n on ``grid``.

    far_field selects the Dirichlet data on r = R and s = R: "lower" or
    "upper" use the registered sub- or supersolution, "zero" uses 0.
    """
    prob = get_problem(tag)
    grid = grid or RadialGrid.graded()
    if n < 6:
        raise ValueError("the reduced problems are solved for n >= 6")
    if grid.s[1] > 1.0 / (n + 2) or grid.r[1] > 1.0 / (n + 2):
        raise GridError(f"grid too coarse for the source peak near (0,0): first spacing {grid.s[1]:.3g} "
                        f"exceeds 1/(n+2) = {1.0 / (n + 2):.3g}")
    bound = {"lower": prob.lower, "upper": prob.upper, "zero": None}
    if far_field not in bound:
        raise ValueError(f"far_field must be one of {sorted(bound)}")
    if far_field == "upper" and prob.upper is None:
        raise ValueError(f"no supersolution registered for {prob.tag}")
    fb = bound[far_field]

    Rg, Sg = np.meshgrid(grid.r, grid.s, indexing="ij")
    bvals = fb.evaluate(n, Rg, Sg) if fb is not None else np.zeros(grid.shape)
    bvals[:, 0] = 0.0
    L, lift = assemble_operator(grid, n)
    f = prob.source_at(n, Rg, Sg)
    rhs = f[:-1, 1:-1].ravel() + lift(bvals)

    lu = splu(L)
    x = lu.solve(rhs)
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    res = np.linalg.norm(L @ x - rhs) / scale
    for _ in range(3):
        if res <= tol:
            break
        x = x + lu.solve(rhs - L @ x)
        res = np.linalg.norm(L @ x - rhs) / scale
    if not res <= tol:
        raise SolverError(f"relative residual {res:.3e} above tolerance {tol:.1e}")

    u = bvals.copy()
    u[:-1, 1:-1] = x.reshape(len(grid.r) - 1, len(grid.s) - 2)
    boundary = {
        "bottom": "dirichlet 0 on s = 0",
        "far_field": far_field if fb is None else f"{far_field}: {fb.label}",
        "axis": "symmetry, (n+3) u_rr limit",
    }
    return HalfPlaneField(grid, u, n, prob.tag, boundary, float(res))


def apply_operator(fld: HalfPlaneField) -> np.ndarray:
    """Discrete -Lap applied to the field at interior unknowns (r < R, 0 < s < R)."""
    L, lift = assemble_operator(fld.grid, fld.n)
    x = fld.values[:-1, 1:-1].ravel()
    bvals = np.array(fld.values)
    return (L @ x - lift(bvals)).reshape(fld.grid.n_r - 1, fld.grid.n_s - 2)


# ---------------------------------------------------------------------------
# sandwich checks
# ---------------------------------------------------------------------------

SANDWICH_C = 0.15  # tolerance C h^2, h the local spacing at (1, 1)


def default_sandwich_tol(grid: RadialGrid) -> float:
    return SANDWICH_C * grid.spacing_at(1.0) ** 2


@dataclass(frozen=True)
class SandwichReport:
    tag: str
    n: int
    lower_violation: float
    lower_at: tuple[float, float]
    upper_violation: float
    upper_at: tuple[float, float]
    spacing: dict
    tolerance: float
    scale: float
    bounds: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return self.lower_violation <= self.tolerance and self.upper_violation <= self.tolerance

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["passed"] = self.passed
        return d


def sandwich_check(fld: HalfPlaneField, tol: float | None = None) -> SandwichReport:
    """Worst violations of the registered closed-form bounds, relative to max |u|.

    The Dirichlet condition u(r, 0) = 0 is always part of the check.
    """
    try:
        prob = get_problem(fld.tag)
    except KeyError:
        raise KeyError(f"no bounds registered for tag {fld.tag!r}") from None
    if prob.lower is None and prob.upper is None:
        raise KeyError(f"no bounds registered for tag {fld.tag!r}")
    g = fld.grid
    Rg, Sg = np.meshgrid(g.r, g.s, indexing="ij")
    u = fld.values
    scale = float(np.abs(u).max()) or 1.0
    lower = prob.lower.evaluate(fld.n, Rg, Sg) if prob.lower else np.full(u.shape, -np.inf)
    upper = prob.upper.evaluate(fld.n, Rg, Sg) if prob.upper else np.full(u.shape, np.inf)
    lower[:, 0] = 0.0
    upper[:, 0] = 0.0
    lo_gap = np.maximum(lower - u, 0.0) / scale
    up_gap = np.maximum(u - upper, 0.0) / scale
    il = np.unravel_index(int(lo_gap.argmax()), u.shape)
    iu = np.unravel_index(int(up_gap.argmax()), u.shape)
    labels = tuple(b.label for b in (prob.lower, prob.upper) if b is not None) + ("u = 0 on s = 0",)
    return SandwichReport(
        tag=fld.tag,
        n=fld.n,
        lower_violation=float(lo_gap[il]),
        lower_at=(float(g.r[il[0]]), float(g.s[il[1]])),
        upper_violation=float(up_gap[iu]),
        upper_at=(float(g.r[iu[0]]), float(g.s[iu[1]])),
        spacing=g.spacing_summary(),
        tolerance=float(default_sandwich_tol(g) if tol is None else tol),
        scale=scale,
        bounds=labels,
    )


# ---------------------------------------------------------------------------
# convergence and truncation studies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    tag: str
    n: int
    order: float
    differences: tuple[float, ...]
    probe_orders: dict
    inconclusive: bool
    richardson_error: float

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


PROBES = ((0.0, 1.0), (1.0, 1.0), (0.5, 0.5), (2.0, 2.0))


def convergence_study(tag, n: int, grids: Sequence[RadialGrid], far_field: str = "lower") -> ConvergenceReport:
    """Observed order from three or more nested grids (coarse to fine)."""
    if len(grids) < 3:
        raise GridError("need at least three nested grids")
    grids = sorted(grids, key=lambda g: g.n_r * g.n_s)
    for a, b in zip(grids, grids[1:]):
        if a.shape == b.shape or not b.contains_nodes_of(a):
            raise GridError("grids are not nested")
    coarse = grids[0]
    fields = [solve_profile(tag, n, g, far_field) for g in grids]
    samples = []
    for g, fld in zip(grids, fields):
        ir = _subset_index(coarse.r, g.r)
        js = _subset_index(coarse.s, g.s)
        samples.append(fld.values[np.ix_(ir, js)])
    scale = np.abs(samples[-1]).max()
    diffs = [float(np.abs(b - a).max() / scale) for a, b in zip(samples, samples[1:])]
    inconclusive = any(d2 >= d1 for d1, d2 in zip(diffs, diffs[1:])) or diffs[-1] == 0
    order = float(np.log2(diffs[-2] / diffs[-1])) if not inconclusive else float("nan")
    probe_orders = {}
    for (pr, ps) in PROBES:
        i = int(np.abs(coarse.r - pr).argmin())
        j = int(np.abs(coarse.s - ps).argmin())
        vals = [smp[i, j] for smp in samples[-3:]]
        d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
        key = f"({coarse.r[i]:.4g},{coarse.s[j]:.4g})"
        probe_orders[key] = float(np.log2(d1 / d2)) if d2 > 0 and d1 > 0 else float("nan")
    rich = diffs[-1] / (2.0**order - 1.0) if not inconclusive else float("nan")
    return ConvergenceReport(get_problem(tag).tag, n, order, tuple(diffs), probe_orders, inconclusive, float(rich))


def truncation_estimate(tag, n: int, grid: RadialGrid, far_field: str = "lower", factor: float = 2.0) -> float:
    """max |u_R - u_{2R}| / max |u| on the common nodes (domain doubling)."""
    a = solve_profile(tag, n, grid, far_field)
    big = grid.extend(factor)
    b = solve_profile(tag, n, big, far_field)
    sub = b.values[: grid.n_r, : grid.n_s]
    return float(np.abs(sub - a.values).max() / np.abs(a.values).max())


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

MAGIC = b"HPF1"


def _atomic_write(path: Path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def field_to_csv(fld: HalfPlaneField) -> str:
    buf = io.StringIO()
    buf.write(f"# tag={fld.tag} n={fld.n} grid={json.dumps(fld.grid.spec(), sort_keys=True)}\n")
    buf.write("r,s,value\n")
    g = fld.grid
    for i, r in enumerate(g.r.tolist()):
        for j, s in enumerate(g.s.tolist()):
            buf.write(f"{r!r},{s!r},{float(fld.values[i, j])!r}\n")
    return buf.getvalue()


def write_field_csv(fld: HalfPlaneField, path):
    _atomic_write(Path(path), field_to_csv(fld).encode())


def field_to_bytes(fld: HalfPlaneField) -> bytes:
    header = json.dumps(fld.header(), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", len(header)), header]
    for arr in (fld.grid.r, fld.grid.s, fld.values):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def write_field_binary(fld: HalfPlaneField, path):
    _atomic_write(Path(path), field_to_bytes(fld))


def field_from_bytes(data: bytes) -> HalfPlaneField:
    if data[:4] != MAGIC:
        raise ValueError("not a half-plane field file (bad magic)")
    (hlen,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + hlen])
    g = header["grid"]
    nr, ns = g["n_r"], g["n_s"]
    body = np.frombuffer(data[8 + hlen :], dtype="<f8")
    if body.size != nr + ns + nr * ns:
        raise ValueError("field file is truncated")
    r, s = body[:nr].copy(), body[nr : nr + ns].copy()
    vals = body[nr + ns :].reshape(nr, ns).copy()
    grid = RadialGrid(r, s, float(g["R"]), float(g["beta"]), float(g.get("a", 0.0)))
    return HalfPlaneField(grid, vals, int(header["n"]), header["tag"], header.get("boundary", {}),
                          float(header.get("residual", 0.0)))


def read_field_binary(path) -> HalfPlaneField:
    return field_from_bytes(Path(path).read_bytes())
