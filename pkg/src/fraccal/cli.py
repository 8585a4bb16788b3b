"""Command-line entry point: ``fraccal <subcommand> [--config F] [--out D]``.

Every flag has an environment fallback (``FRACCAL_CONFIG``, ``FRACCAL_OUT``,
``FRACCAL_SEED``, ``FRACCAL_THREADS``); an explicit flag wins. Each run
writes one CSV per table plus ``manifest.json`` into the output directory.
The exit status is 0 when every hard assertion holds, 1 when one fails and 2
on bad input.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import platform
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .config import parse_config
from .experiments import RUNNERS, Report, run_all

log = logging.getLogger("fraccal")

COMMANDS = tuple(RUNNERS) + ("all",)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    return x


def write_table(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["%.12e" % v for v in r])


def versions() -> dict:
    return {"fraccal": __version__, "python": platform.python_version(), "numpy": np.__version__}


def tolerances() -> dict:
    from . import eigen, extension, fracop, inverse, specfun

    return {
        "eigen_off_tol": eigen.OFF_TOL,
        "eigen_residual_tol": eigen.RESIDUAL_TOL,
        "mean_tol": fracop.MEAN_TOL,
        "rank_rtol": fracop.RANK_RTOL,
        "reduction_tol": extension.REDUCTION_TOL,
        "runge_bound_slack": inverse.BOUND_SLACK,
        "simpson_tol": specfun.SIMPSON_TOL,
        "simpson_depth": specfun.SIMPSON_DEPTH,
    }


def write_outputs(out: Path, command: str, cfg, rep: Report, elapsed: float) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in sorted(rep.tables.items()):
        write_table(out / f"{name}.csv", header, rows)
    manifest = {
        "command": command,
        "config": cfg.echo(),
        "seed": cfg.seed,
        "backend": _backend.name,
        "versions": versions(),
        "tables": sorted(f"{n}.csv" for n in rep.tables),
        "summary": _jsonable(rep.summary),
        "hard": _jsonable(rep.hard),
        "soft": _jsonable(rep.soft),
        "ok": rep.ok,
        "timing": {"wall_seconds": elapsed},
        "tolerances": tolerances(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return manifest


def _failing_operation(exc: BaseException) -> str:
    """Innermost traceback frame outside numpy, i.e. the operation that failed."""
    lib = str(Path(np.__file__).resolve().parent)
    frames = traceback.extract_tb(exc.__traceback__)
    ours = [f for f in frames if not str(Path(f.filename).resolve()).startswith(lib)]
    return (ours or frames)[-1].name


def _env(name: str, value):
    return value if value is not None else os.environ.get(name)


def thread_limit(n):
    if n is None:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("threadpoolctl not installed; --threads ignored")
        return contextlib.nullcontext()
    return threadpool_limits(int(n))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fraccal", description="Fractional Calderon experiments.")
    p.add_argument("--version", action="version", version=f"fraccal {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="config file (env FRACCAL_CONFIG)")
        sp.add_argument("--out", default=None, help="output directory (env FRACCAL_OUT, default ./out)")
        sp.add_argument("--seed", type=int, default=None, help="overrides [general] seed (env FRACCAL_SEED)")
        sp.add_argument("--threads", type=int, default=None, help="BLAS thread cap (env FRACCAL_THREADS)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(_env("FRACCAL_CONFIG", args.config))
        seed = _env("FRACCAL_SEED", args.seed)
        if seed is not None:
            cfg.seed = int(seed)
            cfg.raw["general"]["seed"] = str(cfg.seed)
        threads = _env("FRACCAL_THREADS", args.threads)
    except (OSError, ValueError) as exc:
        print(f"fraccal: error: {exc}", file=sys.stderr)
        return 2
    out = Path(_env("FRACCAL_OUT", args.out) or "out")
    start = time.perf_counter()
    try:
        with thread_limit(threads):
            rep = run_all(cfg) if args.command == "all" else RUNNERS[args.command](cfg)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        where = _failing_operation(exc)
        print(f"fraccal: {args.command} failed in {where}: {exc}", file=sys.stderr)
        return 1
    elapsed = time.perf_counter() - start
    write_outputs(out, args.command, cfg, rep, elapsed)
    for key, ok in sorted(rep.soft.items()):
        if not ok:
            log.warning("soft check failed: %s", key)
    failed = sorted(k for k, ok in rep.hard.items() if not ok)
    for key in failed:
        print(f"fraccal: hard assertion failed: {key}", file=sys.stderr)
    log.info("%s finished in %.2f s", args.command, elapsed)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
