"""Command line entry point: ``wwblowup run | resume | verify | describe-config``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ConfigError, RunConfig, describe, load_config

EXIT_CONFIG = 2


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "out", None):
        out["io.out"] = args.out
    if getattr(args, "until", None) is not None:
        out["integrator.t_end"] = args.until
    if getattr(args, "preset", None):
        out["initial.preset"] = args.preset
    return out


def cmd_run(args) -> int:
    from .runner import Simulation

    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = cfg.updated(_overrides(args))
    sim = Simulation(cfg)
    code = sim.run()
    print(sim.report.verdict)
    print(f"termination: {sim.report.termination}; records: {sim.emitted}; output: {sim.out_dir}")
    return code


def cmd_resume(args) -> int:
    from .runner import SNAPSHOT_NAME, ResumeRefused, resume
    from .snapshot import SnapshotError

    if args.preset:
        print("resume: --preset cannot change on resume", file=sys.stderr)
        return EXIT_CONFIG
    path = args.snapshot or os.path.join(args.out or "run", SNAPSHOT_NAME)
    ov = _overrides(args)
    try:
        code, sim = resume(path, ov, ov.get("io.out", os.path.dirname(path) or "."), args.config)
    except ResumeRefused as exc:
        print(f"resume refused: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, SnapshotError) as exc:
        print(f"resume: cannot read snapshot {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(sim.report.verdict)
    print(f"termination: {sim.report.termination}; records: {sim.emitted}; output: {sim.out_dir}")
    return code


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suite

    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = [run_suite(n, args.seed) for n in names]
    if args.json:
        print(json.dumps([r.as_dict() for r in results], indent=2))
    else:
        for r in results:
            print(r.table())
            print()
    return 0 if all(r.passed for r in results) else 1


def cmd_describe(args) -> int:
    if args.config:
        print(load_config(args.config).to_toml(), end="")
    else:
        print(describe())
    return 0


def build_parser() -> argparse.ArgumentParser:
    from .verify import SUITES

    p = argparse.ArgumentParser(prog="wwblowup", description="Water-wave simulation with continuation-criterion monitoring.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="TOML configuration file")
        sp.add_argument("--out", metavar="DIR", help="output directory (io.out)")
        sp.add_argument("--preset", metavar="NAME", help="initial condition preset (initial.preset)")
        sp.add_argument("--until", metavar="T", type=float, help="final time (integrator.t_end)")
        sp.add_argument("--seed", metavar="N", type=int, help="seed for randomized test corpora")

    r = sub.add_parser("run", help="run a simulation")
    common(r)
    r.set_defaults(fn=cmd_run)
    rs = sub.add_parser("resume", help="continue from a snapshot")
    common(rs)
    rs.add_argument("snapshot", nargs="?", help="snapshot file (default OUT/snapshot.wwbk)")
    rs.set_defaults(fn=cmd_resume)
    v = sub.add_parser("verify", help="run a verification suite")
    common(v)
    v.add_argument("suite", choices=list(SUITES) + ["all"])
    v.add_argument("--json", action="store_true", help="machine-readable output")
    v.set_defaults(fn=cmd_verify)
    d = sub.add_parser("describe-config", help="list configuration keys or show a resolved file")
    common(d)
    d.set_defaults(fn=cmd_describe)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
