"""Command-line front end: verify-identities, solve, scan, optimize.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from confbounds import __version__
from confbounds import bounds as bnd
from confbounds._parse import ParseError
from confbounds.exactfn import DimensionRange, PoleError, rf_eval
from confbounds.profile import DEFAULT_SAMPLE, ProfileFn

log = logging.getLogger("confbounds")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NONCONV = 0, 1, 2, 3


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    command: str = ""
    n: int | None = None
    range: tuple[int, int] | None = None
    case: str | None = None
    tag: str = "V"
    grid_nodes: int = 257
    grid_R: float = 40.0
    tol: float = 1e-10
    sandwich_tol: float | None = None
    out: str = "."
    format: str = "json"
    seed: int | None = None
    basis: str = "reference"
    numeric: bool = True
    inject_fault: str | None = None

    KEYS = ("command", "n", "range", "case", "tag", "grid_nodes", "grid_R", "tol", "sandwich_tol",
            "out", "format", "seed", "basis", "numeric", "inject_fault")

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        for name in ("tol", "grid_R"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.sandwich_tol is not None and not self.sandwich_tol > 0:
            raise UsageError("sandwich_tol must be positive")
        if self.grid_nodes < 5 or (self.grid_nodes - 1) % 2:
            raise UsageError("grid must have an odd number of nodes >= 5")
        if self.format not in ("json", "csv"):
            raise UsageError("format must be json or csv")
        if self.case is not None and self.case not in bnd.CASES:
            raise UsageError(f"case must be one of {sorted(bnd.CASES)}")
        if self.n is not None and self.n < 3:
            raise UsageError(f"n must be at least 3, got {self.n}")
        if self.range is not None:
            lo, hi = self.range
            if lo > hi:
                raise UsageError(f"empty range {lo}..{hi}")
            if lo < 3:
                raise UsageError("range must start at n >= 3")
        out = Path(self.out)
        if out.exists() and not out.is_dir():
            raise UsageError(f"output path {out} is not a directory")

    # key = value text form ---------------------------------------------------
    def to_text(self, with_out: bool = True) -> str:
        lines = []
        for k in self.KEYS:
            v = getattr(self, k)
            if v is None or (k == "out" and not with_out):
                continue
            if k == "range":
                v = f"{v[0]}..{v[1]}"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"config line {lineno}: expected 'key = value'")
            k, v = (x.strip() for x in line.split("=", 1))
            if k not in cls.KEYS:
                raise UsageError(f"config line {lineno}: unknown key {k!r}")
            cfg.set(k, v)
        return cfg

    def set(self, key: str, value: str):
        try:
            if key in ("n", "grid_nodes", "seed"):
                setattr(self, key, int(value))
            elif key in ("tol", "grid_R", "sandwich_tol"):
                setattr(self, key, float(value))
            elif key == "numeric":
                if value.lower() not in ("true", "false"):
                    raise ValueError(value)
                self.numeric = value.lower() == "true"
            elif key == "range":
                self.range = parse_range(value)
            else:
                setattr(self, key, value)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {value!r}") from exc

    def digest(self) -> str:
        # the output directory is a destination, not an input of the computation
        return hashlib.sha256(self.to_text(with_out=False).encode()).hexdigest()[:16]


def parse_range(text: str) -> tuple[int, int]:
    for sep in ("..", ":", "-", ","):
        if sep in text:
            a, b = text.split(sep, 1)
            return int(a), int(b)
    v = int(text)
    return v, v


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def atomic_write(path: Path, data: str | bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        data = data.encode()
    tmp.write_bytes(data)
    tmp.replace(path)


def _clean(x):
    if isinstance(x, float):
        if x != x or x in (float("inf"), float("-inf")):
            return str(x)
        return x
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return _clean(x.item())
    return x


def write_report(cfg: RunConfig, name: str, body: dict) -> Path:
    report = {"command": cfg.command, "version": __version__, "config_hash": cfg.digest(),
              "config": cfg.to_text(with_out=False), **body}
    path = Path(cfg.out) / f"{name}.json"
    atomic_write(path, json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(cfg: RunConfig, name: str, header: list[str], rows: list[list]) -> Path:
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg.digest()} version={__version__}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else v for v in row])
    path = Path(cfg.out) / f"{name}.csv"
    atomic_write(path, buf.getvalue())
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_verify_identities(cfg: RunConfig) -> int:
    from confbounds.identities import verify_all

    try:
        results = verify_all(cfg.case, cfg.inject_fault)
    except KeyError as exc:
        raise UsageError(str(exc)) from exc
    failures = [r.to_json() for r in results if not r.ok]
    counts = {}
    for r in results:
        counts[r.kind] = counts.get(r.kind, 0) + 1
    body = {"identities": [r.to_json() for r in results], "counts": counts,
            "passed": not failures, "failures": failures}
    write_report(cfg, "verify-identities", body)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  [{r.kind}] {r.name}" + ("" if r.ok else f"  residual {r.residual}"))
    return EXIT_OK if not failures else EXIT_FAIL


def _grid(cfg: RunConfig):
    from confbounds.pde import RadialGrid

    return RadialGrid.graded(cfg.grid_nodes, cfg.grid_R)


def cmd_solve(cfg: RunConfig) -> int:
    from confbounds.pde import get_problem, sandwich_check, solve_profile, write_field_binary, write_field_csv

    if cfg.n is None:
        raise UsageError("solve needs --n")
    if cfg.n < 6:
        raise UsageError("solve needs n >= 6")
    try:
        prob = get_problem(cfg.tag)
    except KeyError as exc:
        raise UsageError(str(exc)) from exc
    fld = solve_profile(prob, cfg.n, _grid(cfg), tol=cfg.tol)
    rep = sandwich_check(fld, cfg.sandwich_tol)
    stem = f"{prob.tag}_n{cfg.n}"
    out = Path(cfg.out)
    if cfg.format == "csv":
        write_field_csv(fld, out / f"{stem}.csv")
    else:
        out.mkdir(parents=True, exist_ok=True)
        write_field_binary(fld, out / f"{stem}.hpf")
    body = {"field": fld.header(), "sandwich": rep.to_json(), "passed": rep.passed,
            "invariant_violations": fld.invariant_violations()}
    write_report(cfg, f"solve-{stem}", body)
    print(f"{'PASS' if rep.passed else 'FAIL'}  {prob.tag} n={cfg.n}: lower violation {rep.lower_violation:.3e}, "
          f"upper violation {rep.upper_violation:.3e}, tolerance {rep.tolerance:.3e}")
    return EXIT_OK if rep.passed and not body["invariant_violations"] else EXIT_FAIL


def _exact_row(case: str, n: int) -> dict:
    lower = bnd.assemble_C1_lower() if case == "nonumbilic" else bnd.assemble_C2_lower()
    row = {"case": case, "n": n}
    try:
        v = rf_eval(lower.total.coeff, n)
        row["lower_exact"] = str(v)
        row["lower_float"] = float(v)
        row["lower_sign"] = "+" if v > 0 else "-" if v < 0 else "0"
    except PoleError:
        row["lower_exact"], row["lower_float"], row["lower_sign"] = None, None, "pole"
    if n < lower.validity_start() and row["lower_sign"] != "pole":
        row["lower_sign"] = "undefined"
    if case == "nonumbilic":
        try:
            u = rf_eval(bnd.assemble_C1_upper().total.coeff, n)
            row["upper_exact"], row["upper_float"] = str(u), float(u)
        except PoleError:
            row["upper_exact"], row["upper_float"] = None, None
    else:
        row["upper_exact"], row["upper_float"] = None, None
    return row


def cmd_scan(cfg: RunConfig) -> int:
    from confbounds.numint import compute_C_numeric

    if cfg.range is None:
        if cfg.n is None:
            raise UsageError("scan needs --range")
        cfg.range = (cfg.n, cfg.n)
    rng = DimensionRange(*cfg.range)
    cases = [cfg.case] if cfg.case else ["nonumbilic", "umbilic"]
    rows, worst = [], EXIT_OK
    for case in cases:
        for n in rng:
            row = _exact_row(case, n)
            row["numeric_value"] = row["numeric_error"] = row["numeric_sign"] = None
            row["status"] = "ok"
            if cfg.numeric and n >= 6:
                try:
                    rec = compute_C_numeric(case, n, _grid(cfg))
                    row["numeric_value"], row["numeric_error"] = rec.value, rec.error
                    row["numeric_sign"] = "+" if rec.value - rec.error > 0 else "-" if rec.value + rec.error < 0 else "?"
                    if not rec.contained:
                        row["status"] = "not contained"
                        worst = max(worst, EXIT_FAIL)
                except Exception as exc:  # recorded per row
                    row["status"] = f"error: {exc}"
                    worst = max(worst, EXIT_NONCONV)
            rows.append(row)
    flips = {}
    for case in cases:
        signs = [(r["n"], r["lower_sign"]) for r in rows if r["case"] == case]
        first = None
        for n, sgn in signs:
            if sgn == "+" and all(s == "+" for m, s in signs if m >= n):
                first = n
                break
        flips[case] = first
    header = ["case", "n", "lower_exact", "lower_float", "lower_sign", "upper_exact", "upper_float",
              "numeric_value", "numeric_error", "numeric_sign", "status"]
    write_csv(cfg, "scan", header, [[r[h] for h in header] for r in rows])
    write_report(cfg, "scan", {"rows": rows, "first_positive": flips, "thresholds": bnd.threshold_report()})
    for r in rows:
        num = "" if r["numeric_value"] is None else f"  numeric {r['numeric_value']:.6e} +- {r['numeric_error']:.1e}"
        print(f"{r['case']:>10} n={r['n']:>3}  lower {r['lower_sign']:>9}{num}  {r['status']}")
    for case, n in flips.items():
        print(f"{case}: exact lower bound positive from n = {n}")
    return worst


def _basis(cfg: RunConfig, case: str) -> list[ProfileFn]:
    out = []
    for item in [x.strip() for x in cfg.basis.split(";") if x.strip()]:
        if item in bnd.BUILTIN_BASIS:
            out.append(bnd.BUILTIN_BASIS[item](case))
        else:
            out.append(ProfileFn.parse(item))
    return out


def _sample(cfg: RunConfig):
    if cfg.seed is None:
        return DEFAULT_SAMPLE
    rng = np.random.default_rng(cfg.seed)
    extra = [Fraction(float(x)).limit_denominator(10**6) for x in np.exp(rng.uniform(-7, 20, size=16))]
    return tuple(sorted(set(DEFAULT_SAMPLE) | set(extra)))


def cmd_optimize(cfg: RunConfig) -> int:
    if cfg.n is None:
        raise UsageError("optimize needs --n")
    case = cfg.case or "nonumbilic"
    try:
        basis = _basis(cfg, case)
    except ParseError as exc:
        raise UsageError(f"malformed profile expression: {exc}") from exc
    try:
        cand = bnd.optimize_subsolution(case, cfg.n, basis, sample=_sample(cfg))
    except bnd.InfeasibleBasis as exc:
        write_report(cfg, "optimize", {"feasible": False, "reason": str(exc), "details": exc.report})
        print(f"INFEASIBLE  {exc}")
        return EXIT_FAIL
    body = {"feasible": True, "candidate": cand.to_json()}
    write_report(cfg, "optimize", body)
    d = cand.to_json()
    print(f"certified bound {d['certified_bound']} ({d['certified_bound_float']:.6e}); "
          f"reference bound {d['reference_bound']}; improves: {d['improves_reference']}")
    return EXIT_OK


COMMANDS = {
    "verify-identities": cmd_verify_identities,
    "solve": cmd_solve,
    "scan": cmd_scan,
    "optimize": cmd_optimize,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="confbounds", description="Exact and numerical bounds for the expansion constants C1(n), C2(n).")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value config file; flags override it")
        sp.add_argument("--n", type=int)
        sp.add_argument("--range", help="dimension range, e.g. 6..12")
        sp.add_argument("--case", choices=sorted(bnd.CASES))
        sp.add_argument("--grid", type=int, help="nodes per direction (odd)")
        sp.add_argument("--grid-R", type=float, dest="grid_R")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--out")
        sp.add_argument("--format", choices=["json", "csv"])
        sp.add_argument("--seed", type=int)
        if name == "verify-identities":
            sp.add_argument("--inject-fault", dest="inject_fault", help="test mode: corrupt the named identity")
        if name == "solve":
            sp.add_argument("--tag")
            sp.add_argument("--sandwich-tol", type=float, dest="sandwich_tol")
        if name == "scan":
            sp.add_argument("--no-numeric", action="store_true", dest="no_numeric")
        if name == "optimize":
            sp.add_argument("--basis", help="';'-separated built-in names or profile expressions")
    return p


def config_from_args(argv: list[str]) -> RunConfig:
    args = build_parser().parse_args(argv)
    if args.config:
        try:
            cfg = RunConfig.from_text(Path(args.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
    else:
        cfg = RunConfig()
    cfg.command = args.command
    for key in ("n", "case", "grid_R", "tol", "out", "format", "seed", "tag", "sandwich_tol", "basis",
                "inject_fault"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if args.grid is not None:
        cfg.grid_nodes = args.grid
    if args.range is not None:
        try:
            cfg.range = parse_range(args.range)
        except ValueError as exc:
            raise UsageError(f"bad range {args.range!r}") from exc
    if getattr(args, "no_numeric", False):
        cfg.numeric = False
    cfg.validate()
    return cfg


def main(argv: list[str] | None = None) -> int:
    from confbounds.numint import QuadratureError
    from confbounds.pde import GridError, SolverError

    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = config_from_args(argv)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GridError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, QuadratureError) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV


if __name__ == "__main__":
    sys.exit(main())
