"""Command-line entry point: ``stochtransport run | list | validate``.

Exit codes: 0 when every assertion passes, 1 when some assertion fails,
2 for an invalid configuration (nothing is written in that case).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import platform
import shutil
import sys
import tempfile
from importlib import metadata
from pathlib import Path

from .config import (
    EXPERIMENTS,
    MOLLIFIERS,
    ExperimentConfig,
    apply_overrides,
    load_config,
    validate_config,
)
from .errors import ConfigError
from .field import builtin_examples, drift_ids, initial_from_id, initial_ids

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

H_PROBES = (
    ("0", "h = 0 (F = 1)"),
    ("1", "constant h = 1"),
    ("const:c", "constant h = c"),
    ("switch", "h = +1 on [0, T/2), -1 after"),
    ("t0:v0;t1:v1", "piecewise constant, value v_i from time t_i"),
)


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="root seed")
    p.add_argument("--paths", type=int, help="Monte Carlo paths (expectation and noise suites)")
    p.add_argument("--grid", help="grid overrides, e.g. n_x=481,K=2048 (keys L, n_x, K, T)")
    p.add_argument("--eps-ladder", help="comma-separated decreasing eps ladder")
    p.add_argument("--drift", help="catalog drift id")
    p.add_argument("--u0", help="catalog initial datum id")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="any config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochtransport", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("config", nargs="?", help="config file (packaged default if omitted)")
    run.add_argument("--out", help="output directory (default runs/<experiment>-<hash>)")
    _add_overrides(run)
    sub.add_parser("list", help="list catalog ids")
    val = sub.add_parser("validate", help="validate a config without running")
    val.add_argument("targets", nargs="*", metavar="EXPERIMENT|CONFIG",
                     help="experiment ids and/or a config file (all experiments, packaged default if omitted)")
    _add_overrides(val)
    return parser


def override_pairs(args: argparse.Namespace) -> list[tuple[str, str]]:
    pairs = []
    if args.seed is not None:
        pairs.append(("run.seed", str(args.seed)))
    if args.paths is not None:
        pairs += [("expectation.paths", str(args.paths)), ("noise.paths", str(args.paths))]
    if args.grid:
        for item in args.grid.split(","):
            key, sep, val = item.partition("=")
            if not sep:
                raise ConfigError([f"--grid: expected key=value, got {item!r}"])
            pairs.append((f"grid.{key.strip()}", val))
    if args.eps_ladder:
        pairs.append(("field.eps_ladder", args.eps_ladder))
    if args.drift:
        pairs.append(("field.drift", args.drift))
    if args.u0:
        pairs.append(("field.u0", args.u0))
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError([f"--set: expected section.key=value, got {item!r}"])
        pairs.append((key.strip(), val))
    return pairs


def resolve_args(args: argparse.Namespace, experiment: str) -> ExperimentConfig:
    cfg = load_config(args.config, experiment)
    cfg = apply_overrides(cfg, override_pairs(args), "command line")
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _report_config_error(err: ConfigError) -> int:
    print("invalid configuration:", file=sys.stderr)
    for p in err.problems:
        print(f"  - {p}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_run(args: argparse.Namespace) -> int:
    from .experiments import run_experiment

    try:
        cfg = resolve_args(args, args.experiment)
    except ConfigError as err:
        return _report_config_error(err)
    out = Path(args.out) if args.out else Path("runs") / f"{cfg.experiment}-{cfg.config_hash()[:12]}"
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        verdict = run_experiment(cfg, tmp)
        (tmp / "config.json").write_text(json.dumps(cfg.as_dict(), indent=2, sort_keys=True) + "\n")
        code = EXIT_OK if verdict.passed else EXIT_FAILED
        manifest = {
            "config_path": args.config or "<packaged default.ini>",
            "config_hash": cfg.config_hash(),
            "output_dir": str(out),
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "versions": _versions(),
            "exit_code": code,
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if out.exists():
            shutil.rmtree(out)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    n = len(verdict.assertions)
    print(f"{cfg.experiment}: {'PASSED' if verdict.passed else 'FAILED'} "
          f"({n - len(verdict.failures())}/{n} assertions) -> {out}")
    for a in verdict.failures():
        print(f"  FAIL {a.name} [{a.invariant}]: measured {a.measured}, tolerance {a.tolerance}")
    return code


def cmd_list(args: argparse.Namespace | None = None) -> int:
    examples = builtin_examples()
    print("drifts (id, divergence, default u0, description):")
    for did in drift_ids():
        b, u0 = examples[did]
        print(f"  {did:<9} {b.divergence.kind:<15} {u0.name:<6} {b.description}")
    print("initial data:")
    for uid in initial_ids():
        u = initial_from_id(uid)
        print(f"  {uid:<9} {u.description or u.name}")
    print("mollifiers:")
    for kind in MOLLIFIERS:
        print(f"  {kind}")
    print("h probes:")
    for spec, text in H_PROBES:
        print(f"  {spec:<12} {text}")
    print("experiments:")
    for e in EXPERIMENTS:
        print(f"  {e}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    experiments = [t for t in args.targets if t in EXPERIMENTS]
    configs = [t for t in args.targets if t not in EXPERIMENTS]
    if len(configs) > 1:
        return _report_config_error(ConfigError([f"expected at most one config file, got {configs}"]))
    args.config = configs[0] if configs else None
    code = EXIT_OK
    for exp in experiments or EXPERIMENTS:
        try:
            cfg = resolve_args(args, exp)
        except ConfigError as err:
            print(f"{exp}: invalid", file=sys.stderr)
            for p in err.problems:
                print(f"  - {p}", file=sys.stderr)
            code = EXIT_CONFIG
            continue
        print(f"{exp}: ok (config hash {cfg.config_hash()[:12]})")
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "list":
            return cmd_list(args)
        return cmd_validate(args)
    except ConfigError as err:
        return _report_config_error(err)


if __name__ == "__main__":
    sys.exit(main())
