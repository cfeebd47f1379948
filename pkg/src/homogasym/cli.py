"""Command line entry point.

    homogasym run CONFIG [--out DIR] [--check]
    homogasym sweep CONFIG [--out DIR] [--jobs N]
    homogasym --print-defaults [KIND]

Exit status: 0 when every selected check passes, 2 when a check fails,
1 on any error (invalid config included).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from . import config as cfgmod
from .errors import ConfigInvalid, HomogError
from .experiments import dumps, run_experiment

log = logging.getLogger("homogasym")

OUT_ENV = "HOMOGASYM_OUT"
EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2


def output_root(cli_out: str | None, cfg: cfgmod.ExperimentConfig) -> Path:
    """--out beats the environment variable, which beats the config's output key."""
    return Path(cli_out or os.environ.get(OUT_ENV) or cfg["output"])


def write_outputs(outdir: Path, cfg: cfgmod.ExperimentConfig, outcome) -> dict:
    outdir.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(outcome.files.items()):
        (outdir / name).write_text(text)
    for k, st in enumerate(outcome.snapshots):
        st.save(outdir / f"state_{k:03d}.npz")
    checks = {k: ("skipped" if v is None else "pass" if v else "fail")
              for k, v in outcome.checks.items()}
    summary = {
        "tool": "homogasym",
        "version": __version__,
        "config_sha256": cfg.sha256,
        "config": cfg.data,
        "kind": cfg.kind,
        "checks": checks,
        "passed": all(v != "fail" for v in checks.values()),
        "report": outcome.report,
        "files": sorted(outcome.files),
    }
    (outdir / "summary.json").write_text(dumps(summary))
    return summary


def run_one(cfg: cfgmod.ExperimentConfig, outdir: Path) -> int:
    t0 = time.perf_counter()
    try:
        outcome = run_experiment(cfg)
    except HomogError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_ERROR
    except (ValueError, TypeError) as exc:
        # bad flux parameters and the like surface here
        log.error("run failed: %s", exc)
        return EXIT_ERROR
    summary = write_outputs(outdir, cfg, outcome)
    for name, status in summary["checks"].items():
        print(f"{name}: {status}")
    log.info("%s finished in %.1f s, outputs in %s", cfg.kind, time.perf_counter() - t0, outdir)
    return EXIT_OK if summary["passed"] else EXIT_CHECK


def _sweep_entry(args) -> int:
    data, outdir = args
    return run_one(cfgmod.validate(data), Path(outdir))


def run_sweep(cfg: cfgmod.ExperimentConfig, root: Path, jobs: int) -> int:
    entries = cfg["sweep"] or [{}]
    work = []
    for k, override in enumerate(entries):
        sub = cfg.with_overrides(override).data
        sub["sweep"] = []
        work.append((sub, str(root / f"run_{k:03d}")))
    if jobs <= 1:
        codes = [_sweep_entry(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            codes = list(pool.map(_sweep_entry, work))
    if any(c == EXIT_ERROR for c in codes):
        return EXIT_ERROR
    return EXIT_CHECK if any(c == EXIT_CHECK for c in codes) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homogasym", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"homogasym {__version__}")
    p.add_argument("--print-defaults", nargs="?", const="full_convergence", metavar="KIND",
                   help="print a default config template for KIND and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("config")
    run.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    run.add_argument("--check", action="store_true", help="validate the config and exit")
    sw = sub.add_parser("sweep", help="run every entry of the config's sweep list")
    sw.add_argument("config")
    sw.add_argument("--out")
    sw.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_defaults:
        try:
            sys.stdout.write(dumps(cfgmod.defaults(args.print_defaults)))
        except ConfigInvalid as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_ERROR
    try:
        cfg = cfgmod.load(args.config)
    except ConfigInvalid as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.command == "run":
        if args.check:
            print(f"config ok: kind={cfg.kind} sha256={cfg.sha256}")
            return EXIT_OK
        return run_one(cfg, output_root(args.out, cfg))
    try:
        return run_sweep(cfg, output_root(args.out, cfg), args.jobs)
    except ConfigInvalid as exc:
        print(f"invalid sweep entry: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
