"""Command-line harness: ``ccim {converge,solve,evolve,molecule,dump-matrix}``.

Settings come from an optional ``key=value`` config file (``--config``);
command-line flags override it.  Every command writes CSV tables and a
``summary.json`` into ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__

logger = logging.getLogger("ccim")

DEFAULTS = {
    "surface": "ellipsoid",
    "problem": "example1",
    "N": "20,30,40",
    "tol": 1e-9,
    "out": "ccim-out",
    "threads": 1,
    "verbose": 0,
    "T": 0.1,
    "cfl": 0.5,
    "pqr": None,
    "c": 0.25,
    "eta": 1.0 / 40,
}


@dataclass
class RunConfig:
    surface: str = "ellipsoid"
    problem: str = "example1"
    Ns: list = field(default_factory=lambda: [20, 30, 40])
    tol: float = 1e-9
    out: Path = Path("ccim-out")
    threads: int = 1
    verbose: int = 0
    T: float = 0.1
    cfl: float = 0.5
    pqr: str | None = None
    c: float = 0.25
    eta: float = 1.0 / 40

    def __post_init__(self):
        if not self.Ns:
            raise ValueError("at least one N is required")
        if any(b <= a for a, b in zip(self.Ns, self.Ns[1:])):
            raise ValueError(f"sweep Ns must be strictly increasing, got {self.Ns}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def echo(self) -> dict:
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in self.__dict__.items()}


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _parse_Ns(value) -> list[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(v) for v in str(value).replace(" ", "").split(",") if v]


def make_config(args: argparse.Namespace) -> RunConfig:
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        merged.update(read_config(args.config))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    return RunConfig(
        surface=str(merged["surface"]),
        problem=str(merged["problem"]),
        Ns=_parse_Ns(merged["N"]),
        tol=float(merged["tol"]),
        out=Path(merged["out"]),
        threads=int(merged["threads"]),
        verbose=int(merged["verbose"]),
        T=float(merged["T"]),
        cfl=float(merged["cfl"]),
        pqr=merged["pqr"],
        c=float(merged["c"]),
        eta=float(merged["eta"]),
    )


def _write_summary(cfg: RunConfig, payload: dict) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "summary.json"
    payload = {"version": __version__, "config": cfg.echo(), **payload}
    path.write_text(json.dumps(payload, indent=2, default=_json_default))
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


def _merge_histograms(hists) -> dict:
    out: dict = {}
    for h in hists:
        for k, v in h.items():
            out[k] = out.get(k, 0) + v
    return dict(sorted(out.items()))


def _surface(cfg: RunConfig):
    from .levelset import catalog_surface

    return catalog_surface(cfg.surface)


def _sweep(cfg: RunConfig, surface, problem):
    from .estimator import solve
    from .postproc import fit_slope, write_convergence_csv

    rows, hists = [], []
    for N in cfg.Ns:
        try:
            res = solve(N, surface, problem, tol=cfg.tol, threads=cfg.threads)
        except Exception as exc:
            raise RuntimeError(f"N={N}: {exc}") from exc
        rows.append(res.row())
        hists.append(res.assembly.scheme_histogram)
        logger.info("N=%d err_u=%.3e err_grad=%.3e iters=%d", N, res.errors.err_u_inf, res.errors.err_grad_inf,
                    res.solve_report.iterations)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_convergence_csv(cfg.out / "convergence.csv", rows)
    slopes = {}
    if len(rows) >= 3:
        slopes["slope_u"] = fit_slope([(r["N"], r["err_u_inf"]) for r in rows])
        if all(r["err_grad_inf"] > 0 for r in rows):
            slopes["slope_grad"] = fit_slope([(r["N"], r["err_grad_inf"]) for r in rows])
        slopes["slope_iterations"] = fit_slope([(r["N"], max(r["iterations"], 1)) for r in rows])
    return rows, slopes, _merge_histograms(hists)


def cmd_converge(cfg: RunConfig) -> int:
    from .problems import preset_problem

    t0 = time.perf_counter()
    rows, slopes, hist = _sweep(cfg, _surface(cfg), preset_problem(cfg.problem))
    _write_summary(cfg, {"rows": rows, "slopes": slopes, "scheme_histogram": hist,
                         "seconds": time.perf_counter() - t0})
    for r in rows:
        print(f"N={r['N']:4d}  err_u={r['err_u_inf']:.3e}  err_grad={r['err_grad_inf']:.3e}  iters={r['iterations']}")
    for k, v in slopes.items():
        print(f"{k} = {v:.3f}")
    return 0


def cmd_solve(cfg: RunConfig) -> int:
    if len(cfg.Ns) != 1:
        cfg.Ns = cfg.Ns[-1:]
    from .problems import preset_problem

    t0 = time.perf_counter()
    rows, _, hist = _sweep(cfg, _surface(cfg), preset_problem(cfg.problem))
    _write_summary(cfg, {"rows": rows, "scheme_histogram": hist, "seconds": time.perf_counter() - t0})
    r = rows[0]
    print(f"N={r['N']}  err_u={r['err_u_inf']:.3e}  err_grad={r['err_grad_inf']:.3e}  iters={r['iterations']}")
    return 0


def cmd_evolve(cfg: RunConfig) -> int:
    from .evolve import run_expanding_sphere, write_history_csv, write_radii_csv
    from .postproc import fit_slope

    cfg.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for N in cfg.Ns:
        rep = run_expanding_sphere(N, T=cfg.T, cfl=cfg.cfl, tol=cfg.tol)
        write_history_csv(cfg.out / f"evolve_history_N{N}.csv", rep)
        write_radii_csv(cfg.out / f"evolve_radii_N{N}.csv", rep)
        rows.append({"N": N, "steps": rep.steps, "reference": rep.reference, "max_error": rep.max_error,
                     "rmse": rep.rmse, "spread": float(np.ptp(rep.radii)), "seconds": rep.seconds})
        print(f"N={N:4d}  steps={rep.steps}  rmse={rep.rmse:.3e}  max={rep.max_error:.3e}")
    slopes = {}
    if len(rows) >= 3:
        slopes["slope_rmse"] = fit_slope([(r["N"], r["rmse"]) for r in rows])
        slopes["slope_max"] = fit_slope([(r["N"], r["max_error"]) for r in rows])
        for k, v in slopes.items():
            print(f"{k} = {v:.3f}")
    _write_summary(cfg, {"rows": rows, "slopes": slopes})
    return 0


def cmd_molecule(cfg: RunConfig) -> int:
    from .estimator import solve
    from .levelset import molecular_surface, parse_pqr, scale_to_box
    from .postproc import write_convergence_csv
    from .problems import preset_problem

    if not cfg.pqr:
        raise ValueError("molecule needs --pqr PATH")
    atoms = parse_pqr(cfg.pqr)
    surface = molecular_surface(scale_to_box(atoms), c=cfg.c, eta=cfg.eta)
    problem = preset_problem("molecule")
    rows = []
    cfg.out.mkdir(parents=True, exist_ok=True)
    for N in cfg.Ns:
        res = solve(N, surface, problem, tol=cfg.tol, threads=cfg.threads)
        rows.append({**res.row(), "interface_points": res.assembly.n_interface, "unresolvable": 0})
        print(f"N={N}  atoms={len(atoms)}  err_u={res.errors.err_u_inf:.3e}  iters={res.solve_report.iterations}")
    write_convergence_csv(cfg.out / "convergence.csv", rows)
    _write_summary(cfg, {"atoms": len(atoms), "rows": rows})
    return 0


def cmd_dump_matrix(cfg: RunConfig) -> int:
    from .coupling import assemble_system
    from .mesh import build_grid
    from .problems import preset_problem
    from .sparse import write_matrix_market

    N = cfg.Ns[-1]
    asm = assemble_system(build_grid(N), _surface(cfg), preset_problem(cfg.problem), threads=cfg.threads)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / f"matrix_N{N}.mtx"
    write_matrix_market(path, asm.matrix, asm.rhs, comment=f"surface={cfg.surface} problem={cfg.problem} N={N}")
    _write_summary(cfg, {"matrix": str(path), "n": asm.matrix.shape[0], "nnz": int(asm.matrix.nnz),
                         "scheme_histogram": asm.scheme_histogram})
    print(f"wrote {path} ({asm.matrix.shape[0]} rows, {asm.matrix.nnz} nonzeros)")
    return 0


COMMANDS = {
    "converge": cmd_converge,
    "solve": cmd_solve,
    "evolve": cmd_evolve,
    "molecule": cmd_molecule,
    "dump-matrix": cmd_dump_matrix,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccim", description="Compact coupling interface method for 3-D elliptic interface problems")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value settings file; flags take precedence")
        p.add_argument("--surface", help="catalog surface name")
        p.add_argument("--problem", help="preset problem name")
        p.add_argument("--N", help="grid size, or a comma-separated increasing sweep")
        p.add_argument("--tol", type=float, help="BiCGSTAB relative residual (default 1e-9)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="assembly worker threads")
        p.add_argument("-v", "--verbose", action="count", default=None)
        if name == "evolve":
            p.add_argument("--T", type=float, help="final time")
            p.add_argument("--cfl", type=float, help="CFL number")
        if name == "molecule":
            p.add_argument("--pqr", help="PQR file")
            p.add_argument("--c", type=float, help="level of the smoothed union")
            p.add_argument("--eta", type=float, help="smoothing width")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
    except (ValueError, OSError) as exc:
        print(f"ccim: config error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING - 10 * min(cfg.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if cfg.threads > 1:
        os.environ.setdefault("NUMBA_NUM_THREADS", str(cfg.threads))
    try:
        return COMMANDS[args.command](cfg)
    except Exception as exc:  # noqa: BLE001 - report any failure as a nonzero exit
        logger.debug("failure", exc_info=True)
        print(f"ccim {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
