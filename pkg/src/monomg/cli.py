"""Command-line driver: ``monomg {spectrum,verify,solve-heat,step-heat}``.

Every command writes CSV to ``--out`` (stdout by default). Options may also
come from a ``key=value`` file given with ``--config``; command-line flags
take precedence.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, heat, tableau
from .multigrid import MgConfig
from .smoothers import PrecKind

log = logging.getLogger("monomg")

FAMILIES = {"radauiia": "RadauIIA", "radau": "RadauIIA", "gausslegendre": "GaussLegendre", "gl": "GaussLegendre"}


def parse_family(text: str) -> str:
    key = text.replace("-", "").replace("_", "").lower()
    if key not in FAMILIES:
        raise argparse.ArgumentTypeError(f"unknown family {text!r} (use RadauIIA or GaussLegendre)")
    return FAMILIES[key]


def parse_stages(text: str) -> list[int]:
    """``"3"``, ``"1-3"`` or ``"1,2,5"``."""
    out: list[int] = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = part.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad stage list {text!r}") from None
    if not out or min(out) < 1 or max(out) > tableau.MAX_STAGES:
        raise argparse.ArgumentTypeError(f"stages must lie in 1..{tableau.MAX_STAGES}, got {text!r}")
    return out


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="key=value file; flags override it")
    p.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, help="cap BLAS worker threads")


def _solver_flags(p: argparse.ArgumentParser, smoother_default):
    p.add_argument("--degree", type=int, choices=[1, 2], default=1)
    p.add_argument("--base-n", type=_positive_int, default=4)
    p.add_argument("--levels", type=_positive_int, default=3)
    p.add_argument("--kappa", type=_positive_float, default=4.0, help="dt = kappa * h on the finest mesh")
    p.add_argument("--dt", type=_positive_float, help="fixed time step (overrides --kappa)")
    p.add_argument("--smoother", choices=[k.value for k in PrecKind], default=smoother_default)
    p.add_argument("--nu-pre", type=_nonneg_int, default=2)
    p.add_argument("--nu-post", type=_nonneg_int, default=2)
    p.add_argument("--gamma", type=int, choices=[1, 2], default=1)
    p.add_argument("--omega", type=float, default=2.0 / 3.0)
    p.add_argument("--tol", type=_positive_float, default=1e-8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="monomg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="Butcher eigenvalues and eigenvector conditioning")
    _common(p)
    p.add_argument("--family", type=parse_family, action="append", help="repeatable; default both")
    p.add_argument("--stages", type=parse_stages, default=parse_stages("1-6"))

    p = sub.add_parser("verify", help="monolithicity and spectral-radius sweep")
    _common(p)
    p.add_argument("--family", type=parse_family, action="append")
    p.add_argument("--stages", type=parse_stages)
    p.add_argument("--degree", type=int, choices=[1, 2], action="append")
    p.add_argument("--smoother", choices=[k.value for k in PrecKind], action="append")
    p.add_argument("--cycle", choices=analysis.VERIFY_CYCLES, action="append")
    p.add_argument("--base-n", type=_positive_int, default=2)
    p.add_argument("--dt", type=_positive_float, default=0.25)
    p.add_argument("--nu-pre", type=_nonneg_int, default=2)
    p.add_argument("--nu-post", type=_nonneg_int, default=2)
    p.add_argument("--gamma", type=int, choices=[1, 2], default=1)
    p.add_argument("--omega", type=float, default=2.0 / 3.0)
    p.add_argument("--tol", type=_positive_float, default=1e-8)

    p = sub.add_parser("solve-heat", help="MG-preconditioned GMRES on one heat time step")
    _common(p)
    _solver_flags(p, PrecKind.ASM.value)
    p.add_argument("--family", type=parse_family, default="RadauIIA")
    p.add_argument("--stages", type=parse_stages, default=parse_stages("1-3"))

    p = sub.add_parser("step-heat", help="several RK steps, L2 error at the final time")
    _common(p)
    _solver_flags(p, PrecKind.ASM.value)
    p.add_argument("--family", type=parse_family, default="RadauIIA")
    p.add_argument("--stages", type=parse_stages, default=parse_stages("1-2"))
    p.add_argument("--steps", type=_positive_int, default=4)
    return parser


def read_config(path: Path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        values = read_config(args.config)
    except OSError as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    except ValueError as exc:
        parser.error(str(exc))
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    for key in values:
        if key not in known or key in ("help", "config"):
            parser.error(f"unknown config key {key!r} for command {args.command}")
    defaults = {}
    for key, value in values.items():
        action = known[key]
        if isinstance(action, argparse._AppendAction):
            if getattr(args, key) is not None:
                continue  # given on the command line; appending would merge both
            defaults[key] = [action.type(v.strip()) if action.type else v.strip() for v in value.split(";")]
        else:
            defaults[key] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


@contextlib.contextmanager
def _output(path: Path | None):
    if path is None:
        yield sys.stdout
        return
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            yield fh
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _cfg(args) -> MgConfig:
    return MgConfig(nu_pre=args.nu_pre, nu_post=args.nu_post, gamma=args.gamma, omega=args.omega)


def _dt(args) -> float:
    if args.dt is not None:
        return args.dt
    return args.kappa * heat.mesh_size(args.base_n, args.levels)


def cmd_spectrum(args) -> int:
    families = args.family or ["RadauIIA", "GaussLegendre"]
    rows = []
    for fam in families:
        rows += tableau.spectrum_report(fam, args.stages)
    with _output(args.out) as fh:
        fh.write(tableau.spectrum_csv(rows))
    return 0


def cmd_verify(args) -> int:
    tabs = analysis.VERIFY_TABLEAUX
    if args.family:
        tabs = [t for t in tabs if t[0] in args.family]
    if args.stages:
        tabs = [t for t in tabs if t[1] in args.stages]
    rows = analysis.verify_sweep(
        tableaux=tabs,
        smoothers=args.smoother or analysis.VERIFY_SMOOTHERS,
        cycles=args.cycle or analysis.VERIFY_CYCLES,
        degrees=args.degree or analysis.VERIFY_DEGREES,
        base_n=args.base_n,
        dt=args.dt,
        cfg=_cfg(args),
        tol=args.tol,
    )
    with _output(args.out) as fh:
        fh.write(analysis.verify_csv(rows))
    failed = [r for r in rows if not r.passed]
    for r in failed:
        log.error("FAIL %s: %s", r.case, r.note)
    log.info("%d/%d cases passed", len(rows) - len(failed), len(rows))
    return 1 if failed else 0


SOLVE_COLUMNS = ["s", "degree", "levels", "dofs", "iterations", "final_residual", "solve_seconds", "converged"]


def cmd_solve_heat(args) -> int:
    dt = _dt(args)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SOLVE_COLUMNS)
    ok = True
    for s in args.stages:
        tab = tableau.make_tableau(args.family, s)
        res, _, _ = heat.solve_heat_step(
            tab, args.degree, args.base_n, args.levels, dt, args.smoother, _cfg(args), tol=args.tol
        )
        ok &= res.converged
        w.writerow([res.s, res.degree, res.levels, res.dofs, res.iterations, f"{res.final_residual:.6e}",
                    f"{res.solve_seconds:.4f}", str(res.converged).lower()])
    with _output(args.out) as fh:
        fh.write(buf.getvalue())
    return 0 if ok else 1


STEP_COLUMNS = ["s", "degree", "levels", "dt", "steps", "l2_error", "converged"]


def cmd_step_heat(args) -> int:
    dt = _dt(args)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STEP_COLUMNS)
    ok = True
    for s in args.stages:
        tab = tableau.make_tableau(args.family, s)
        _, err, conv = heat.step_heat(tab, args.degree, args.base_n, args.levels, dt, args.steps, args.smoother,
                                      _cfg(args), tol=args.tol)
        ok &= conv
        w.writerow([s, args.degree, args.levels, f"{dt:.17g}", args.steps, f"{err:.17g}", str(conv).lower()])
    with _output(args.out) as fh:
        fh.write(buf.getvalue())
    return 0 if ok else 1


COMMANDS = {
    "spectrum": cmd_spectrum,
    "verify": cmd_verify,
    "solve-heat": cmd_solve_heat,
    "step-heat": cmd_step_heat,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    args = parse_args(argv)
    np.random.seed(args.seed)
    limiter = contextlib.nullcontext()
    if args.threads:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=args.threads)
    try:
        with limiter:
            return COMMANDS[args.command](args)
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
