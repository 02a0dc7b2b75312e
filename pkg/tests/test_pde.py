import numpy as np
import pytest

from confbounds.exactfn import RationalFn
from confbounds.pde import (
    GridError, RadialGrid, apply_operator, convergence_study, custom_problem, field_from_bytes, field_to_bytes,
    field_to_csv, get_problem, read_field_binary, sandwich_check, solve_profile, write_field_binary,
)
from confbounds.profile import ProfileFn

S = ProfileFn.s_power
OPS = ProfileFn.one_plus_s


@pytest.fixture(scope="module")
def grid():
    return RadialGrid.graded(257, 40.0)


@pytest.fixture(scope="module")
def V9(grid):
    return solve_profile("V", 9, grid)


def mesh(grid):
    return np.meshgrid(grid.r, grid.s, indexing="ij")


# grid --------------------------------------------------------------------------

def test_grid_grading(grid):
    assert grid.r[0] == 0 and grid.s[0] == 0
    assert np.isclose(grid.r[-1], 40.0)
    sp = np.diff(grid.r)
    assert sp[0] < 0.02 and np.all(np.diff(sp) > 0)


def test_coarsen_nested(grid):
    c = grid.coarsen()
    assert c.n_r == 129 and grid.contains_nodes_of(c)


def test_grid_too_coarse():
    with pytest.raises(GridError):
        solve_profile("V", 9, RadialGrid.uniform(17, 40.0))


def test_small_n_rejected(grid):
    with pytest.raises(ValueError):
        solve_profile("V", 5, grid)


# invariants --------------------------------------------------------------------

def test_maximum_principle(V9):
    assert V9.values.min() >= 0.0
    assert V9.invariant_violations() == []


def test_residual(V9, grid):
    R, Sg = mesh(grid)
    src = get_problem("V").source_at(9, R[:-1, 1:-1], Sg[:-1, 1:-1])
    res = apply_operator(V9)
    assert np.abs(res - src).max() / np.abs(src).max() < 1e-10


def test_monotone_in_source(grid):
    p = get_problem("V")
    full = solve_profile(p, 9, grid, far_field="zero")
    half = solve_profile(p.scaled(RationalFn(1, 2), "half"), 9, grid, far_field="zero")
    assert np.all(full.values >= half.values)


def test_superposition(grid):
    p, q = get_problem("V"), get_problem("Lambda")
    a = solve_profile(p, 9, grid, far_field="zero")
    b = solve_profile(q, 9, grid, far_field="zero")
    ab = solve_profile(p.plus(q, "sum"), 9, grid, far_field="zero")
    assert np.abs(ab.values - a.values - b.values).max() <= 1e-10 * np.abs(ab.values).max()


def test_decomposition_identity():
    # V - exact subsolution = u1, up to second-order discretization error
    n = 9
    gaps = []
    for nodes in (129, 257):
        g = RadialGrid.graded(nodes, 40.0)
        V = solve_profile("V", n, g)
        U = solve_profile("u1", n, g)
        R, Sg = mesh(g)
        sub = Sg**2 / (4 * n * (1 + Sg)) * (R**2 + (1 + Sg) ** 2) ** (-n / 2)
        gaps.append(np.abs(V.values - sub - U.values).max() / np.abs(V.values).max())
    assert gaps[1] < 2e-3
    assert 3.0 < gaps[0] / gaps[1] < 5.0


def test_deterministic(grid):
    a = solve_profile("V", 9, grid)
    b = solve_profile("V", 9, grid)
    assert np.array_equal(a.values, b.values)


# sandwich ----------------------------------------------------------------------

def test_sandwich_V(V9):
    rep = sandwich_check(V9)
    assert rep.passed
    assert rep.tolerance <= 1e-4 * 1.1


def test_sandwich_V_at_fixed_tolerance(V9):
    assert sandwich_check(V9, 1e-4).passed


def test_sandwich_Lambda_n7(grid):
    assert sandwich_check(solve_profile("Lambda", 7, grid)).passed


@pytest.mark.parametrize("tag", ["u1", "u2", "v1", "v2", "w1", "w2"])
def test_sandwich_other_tags(grid, tag):
    assert sandwich_check(solve_profile(tag, 9, grid)).passed


def test_sandwich_detects_bad_boundary(V9):
    vals = V9.values.copy()
    vals[:, 0] = 1.0
    rep = sandwich_check(V9.with_values(vals))
    assert not rep.passed
    assert rep.upper_at[1] == 0.0 or rep.lower_at[1] == 0.0


def test_sandwich_unknown_tag(grid):
    prob = custom_problem("mystery", [(S(1), 11)])
    fld = solve_profile(prob, 9, grid, far_field="zero")
    with pytest.raises(KeyError):
        sandwich_check(fld)


# convergence -------------------------------------------------------------------

@pytest.mark.parametrize("tag,n", [("V", 9), ("Lambda", 7)])
def test_convergence_order(grid, tag, n):
    gs = [grid.coarsen().coarsen(), grid.coarsen(), grid]
    rep = convergence_study(tag, n, gs)
    assert not rep.inconclusive
    assert 1.7 <= rep.order <= 2.3


def test_convergence_identical_grids(grid):
    with pytest.raises(GridError):
        convergence_study("V", 9, [grid, grid, grid])


# export ------------------------------------------------------------------------

def test_binary_round_trip(V9, tmp_path):
    back = field_from_bytes(field_to_bytes(V9))
    assert np.array_equal(back.values, V9.values)
    assert back.n == 9 and back.tag == V9.tag
    write_field_binary(V9, tmp_path / "v.hpf")
    assert np.array_equal(read_field_binary(tmp_path / "v.hpf").values, V9.values)


def test_bad_magic():
    with pytest.raises(ValueError):
        field_from_bytes(b"XXXX" + bytes(20))


def test_csv_header(V9):
    text = field_to_csv(V9)
    lines = text.splitlines()
    assert lines[0].startswith("# tag=V n=9")
    assert lines[1] == "r,s,value"
    assert len(lines) == 2 + V9.values.size
    r, s, v = (float(x) for x in lines[3].split(","))
    assert (r, s, v) == (V9.grid.r[0], V9.grid.s[1], V9.values[0, 1])
