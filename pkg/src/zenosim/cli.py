"""Command-line entry point: ``zenosim <subcommand> [options]``.

Scan subcommands (``zeno``, ``pulse-width``, ``strength``, ``duration``,
``transport``) and ``snapshot`` read an optional JSON config; ``fit`` fits a
CSV of ``param, value[, stderr]`` rows; ``validate`` runs the oracle suite.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 fit non-convergence.  ``ZENOSIM_OUTPUT_DIR`` and ``ZENOSIM_WORKERS``
override the output directory and worker count.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import RunConfig, parse_config, serialize
from .errors import ConfigError, ConvergenceError, FitError, NumericalError
from .io import dumps, emit_results, read_xy_csv

log = logging.getLogger("zenosim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_FIT = 0, 2, 3, 4
SCAN_COMMANDS = ("zeno", "pulse-width", "strength", "duration", "transport")


def load_config(command: str, path: Optional[str]) -> RunConfig:
    """Read ``path`` (or start from an empty document) with ``protocol`` defaulting to ``command``."""
    data = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    data.setdefault("protocol", command)
    cfg = parse_config(data)
    if cfg.protocol.name != command:
        raise ConfigError(
            f"protocol: config is for {cfg.protocol.name!r}, not {command!r}")
    return cfg


def run_config(cfg: RunConfig, workers: Optional[int] = None):
    """Run the configured scan; returns a ScanResult or a dict of them."""
    from . import protocols as pr
    setup = cfg.setup(workers)
    p = cfg.protocol
    if p.name == "zeno":
        return pr.run_zeno_scan(p.N_list, p.T, p.tau, setup, placement=p.placement)
    if p.name == "pulse-width":
        return pr.run_pulse_width_scan(p.tau_list, p.T, p.N, p.intensity, setup,
                                       placement=p.placement)
    if p.name == "strength":
        res = pr.run_strength_scan(p.I_list, p.N_list, p.tau, p.T, setup,
                                   placement=p.placement, plateau_tol=p.plateau_tol)
        return {f"N{n}": sr for n, sr in res.items()}
    if p.name == "duration":
        res = pr.run_duration_scan(p.T_list, p.spacing, p.taus, setup)
        return {f"tau{t:g}": sr for t, sr in res.items()}
    if p.name == "transport":
        return pr.run_transport(p.N_list, p.tau, p.gap, p.delta_r, setup)
    raise ConfigError(f"protocol {p.name!r} is not a scan")


def _output_dir(cfg: Optional[RunConfig], override: Optional[str]) -> Path:
    if override:
        return Path(override)
    env = os.environ.get("ZENOSIM_OUTPUT_DIR")
    if env:
        return Path(env)
    return Path(cfg.output.directory if cfg is not None else ".")


def _workers(arg: Optional[int]) -> Optional[int]:
    if arg is not None:
        return arg
    env = os.environ.get("ZENOSIM_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"ZENOSIM_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("ZENOSIM_WORKERS must be at least 1")
        return n
    return None


def cmd_scan(args) -> int:
    cfg = load_config(args.command, args.config)
    out = _output_dir(cfg, args.output_dir)
    fmts = args.format or list(cfg.output.formats)
    results = run_config(cfg, _workers(args.workers))
    stem = args.command.replace("-", "_")
    paths = emit_results(results, fmts, out, stem, cfg)
    for path in paths:
        print(path)
    return EXIT_OK


def cmd_snapshot(args) -> int:
    from .potentials import pulse_train
    from .protocols import representative_trace
    from .units import depth_from_intensity
    cfg = load_config("snapshot", args.config)
    p = cfg.protocol
    setup = cfg.setup()
    depth = depth_from_intensity(setup.params, p.intensity)
    tl = pulse_train(p.T, p.N, p.tau, depth, placement=p.placement, profile=setup.profile)
    trace, state = representative_trace(tl, setup, p.dt, p.k0, return_state=True)
    out = _output_dir(cfg, args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    head = f"# config_hash={cfg.config_hash()} seed={cfg.seed}\n"
    files = {"timeline.csv": tl.to_csv(), "trace.csv": trace.to_csv(),
             "final_state.csv": state.to_csv(), "config.json": serialize(cfg)}
    for name, text in files.items():
        path = out / f"snapshot_{name}"
        with open(path, "w", newline="") as fh:
            fh.write(text if name.endswith(".json") else head + text)
        print(path)
    return EXIT_OK


def cmd_fit(args) -> int:
    from .fitting import fit_damped_sinusoid, fit_inverse_n, fit_quadratic_vertex
    try:
        x, y, sigma = read_xy_csv(args.csv, args.x_col, args.y_col)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc}") from None
    if args.no_sigma:
        sigma = None
    if args.family == "inverse_n":
        res = fit_inverse_n(x, y, sigma, args.bootstrap, args.seed)
    elif args.family == "quadratic_vertex":
        res = fit_quadratic_vertex(x, y, args.domain_max, sigma, args.bootstrap, args.seed)
    else:
        res = fit_damped_sinusoid(x, y, args.variant, sigma, bootstrap=args.bootstrap,
                                  seed=args.seed)
    text = dumps(res.to_dict())
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if not res.converged:
        log.error("fit did not converge: %s", res.flags)
        return EXIT_FIT
    return EXIT_OK


def cmd_validate(args) -> int:
    from .oracle import run_validation
    report = run_validation(only=args.check or None)
    text = dumps(report)
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        Path(args.output).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zenosim",
                                     description="Trapped-atom measurement simulations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCAN_COMMANDS + ("snapshot",):
        sp = sub.add_parser(name, help=f"run the {name} protocol")
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--output-dir", help="directory for result files")
        if name != "snapshot":
            sp.add_argument("--format", action="append", choices=("csv", "json", "svg"),
                            help="output format (repeatable; default from config)")
            sp.add_argument("--workers", type=int, help="concurrent scan points")
        sp.set_defaults(func=cmd_snapshot if name == "snapshot" else cmd_scan)
    sp = sub.add_parser("fit", help="fit a curve family to CSV data")
    sp.add_argument("csv", help="CSV with param, value[, stderr] columns")
    sp.add_argument("--family", required=True,
                    choices=("inverse_n", "damped_sinusoid", "quadratic_vertex"))
    sp.add_argument("--variant", default="tied", choices=("tied", "free"))
    sp.add_argument("--domain-max", type=float, help="quadratic fit domain I <= value")
    sp.add_argument("--x-col")
    sp.add_argument("--y-col")
    sp.add_argument("--no-sigma", action="store_true", help="ignore the stderr column")
    sp.add_argument("--bootstrap", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", help="write the FitResult JSON here")
    sp.set_defaults(func=cmd_fit)
    sp = sub.add_parser("validate", help="run the oracle validation suite")
    sp.add_argument("--check", action="append", help="run only this check (repeatable)")
    sp.add_argument("-o", "--output", help="write the JSON report here")
    sp.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConvergenceError as exc:
        log.error("%s", exc)
        return EXIT_FIT
    except FitError as exc:
        log.error("%s", exc)
        return EXIT_FIT
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
