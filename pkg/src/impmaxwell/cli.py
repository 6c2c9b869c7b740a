"""Command-line entry point: ``impmaxwell {study,verify,infsup,plot}``.

Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .assembly import Variant, WaveParams
from .errors import InvalidArgumentError, SizeCapError
from .study import StudyConfig, emit_csv, emit_plot, read_csv, run_study
from . import verify

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
log = logging.getLogger("impmaxwell")


def _set_threads(n: int | None):
    # must happen before BLAS spins up its pool to have any effect
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _load_config(args) -> StudyConfig:
    if not args.config:
        raise InvalidArgumentError("--config is required")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config: {exc}") from exc
    try:
        return StudyConfig.from_json(
            text,
            out_dir=args.out,
            threads=args.threads,
            seed=args.seed,
            solver=args.solver,
            timing=False if args.no_timing else None,
        )
    except (json.JSONDecodeError, TypeError) as exc:
        raise InvalidArgumentError(f"invalid config: {exc}") from exc


def cmd_study(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = run_study(cfg)
    emit_csv(report, out / cfg.csv_name, timing=cfg.timing)
    if report.rows:
        emit_plot(report, out / cfg.svg_name)
    for k, p, level, msg in report.failures:
        print(f"cell k={k} p={p} level={level} failed: {msg}", file=sys.stderr)
    for k, p, level in report.t3_violations:
        print(f"cell k={k} p={p} level={level}: gradient orthogonality violated", file=sys.stderr)
    print(f"{len(report.rows)} rows written to {out / cfg.csv_name}")
    return EXIT_OK if report.ok else EXIT_NUMERIC


def cmd_verify(args) -> int:
    results = verify.run_all(seed=args.seed or 0)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def cmd_infsup(args) -> int:
    from .analysis import discrete_inf_sup
    from .mesh import build_cube_mesh

    cfg = _load_config(args)
    rows = []
    for n in cfg.mesh_sizes():
        mesh = build_cube_mesh(n)
        for k in cfg.k:
            for p in cfg.p:
                for variant in (Variant.STANDARD, Variant.GOOD_SIGN):
                    try:
                        g = discrete_inf_sup(mesh, WaveParams(k, p), variant)
                    except SizeCapError as exc:
                        print(f"n={n} k={k} p={p}: {exc}", file=sys.stderr)
                        return EXIT_NUMERIC
                    rows.append((n, k, p, variant.value, g))
                    print(f"n={n} k={k:g} p={p} {variant.value}: gamma={g!r}")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "infsup.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("n,k,p,variant,gamma_kh\n")
        for n, k, p, v, g in rows:
            fh.write(f"{n},{k!r},{p},{v},{g!r}\n")
    return EXIT_OK


def cmd_plot(args) -> int:
    if not args.csv:
        raise InvalidArgumentError("plot needs a CSV path")
    report = read_csv(args.csv)
    target = Path(args.out) if args.out else Path(args.csv).with_suffix(".svg")
    if target.is_dir():
        target = target / (Path(args.csv).stem + ".svg")
    emit_plot(report, target)
    print(f"wrote {target}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="impmaxwell", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON study configuration")
    common.add_argument("--out", help="output directory (plot: output file or directory)")
    common.add_argument("--threads", type=int, help="BLAS thread count")
    common.add_argument("--seed", type=int, help="seed for the randomized suites")
    common.add_argument("--solver", choices=("lu", "gmres"))
    common.add_argument("--no-timing", action="store_true", help="leave runtime_s empty")
    common.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("study", parents=[common], help="run a convergence study")
    sub.add_parser("verify", parents=[common], help="run the invariant suites")
    sub.add_parser("infsup", parents=[common], help="discrete inf-sup sweep on small meshes")
    p = sub.add_parser("plot", parents=[common], help="render a study CSV as SVG")
    p.add_argument("csv", nargs="?")
    return ap


COMMANDS = {"study": cmd_study, "verify": cmd_verify, "infsup": cmd_infsup, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _set_threads(args.threads)
    try:
        return COMMANDS[args.command](args)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
