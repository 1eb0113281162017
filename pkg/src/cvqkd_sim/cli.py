"""Command-line interface.

Data goes to ``--out`` (or stdout); progress and summaries go to stderr,
so CSV output can be piped.  Exit codes: 0 success, 1 configuration
error, 2 self-test failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .attack import Optics, achievable_region
from .errors import ConfigError
from .protocol import ScenarioConfig, load_config
from .security import loss_db_to_eta
from .selftest import run_selftest
from .sim import DEFAULT_EPS, DEFAULT_V, VNB_BOUND, bounds_report, run_scenario, sweep_figures

log = logging.getLogger("cvqkd_sim")

EXIT_OK, EXIT_CONFIG, EXIT_SELFTEST = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_loss_grid(spec):
    """``"0.5"``, ``"0.1,0.5,0.9"`` or ``"start:stop:num"`` (inclusive linspace)."""
    try:
        if ":" in spec:
            start, stop, num = spec.split(":")
            return np.linspace(float(start), float(stop), int(num)).tolist()
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad loss grid {spec!r}") from exc


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    raise TypeError(type(obj).__name__)


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _dump_json(obj, fh):
    json.dump(obj, fh, indent=2, default=_json_default)
    fh.write("\n")


def _common(p):
    p.add_argument("--config", help="YAML or JSON scenario file")
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--loss-db", help="single value, comma list, or start:stop:num")
    p.add_argument("--attack", action="store_true", help="enable the wavelength attack")
    p.add_argument("--filter-prob", type=float, help="per-shot probability the wavelength filter fires")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser():
    parser = _Parser(prog="cvqkd-sim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="Monte Carlo run of one scenario")
    _common(s)
    s.add_argument("--padding", action="store_true", help="Eve pads her targets to match normal noise")
    s.add_argument("--workers", type=int)

    s = sub.add_parser("sweep", help="conditional-variance curves against channel loss")
    _common(s)
    s.add_argument("--V", type=float, default=DEFAULT_V)
    s.add_argument("--eps", type=float, default=DEFAULT_EPS)
    s.add_argument("--vnb", type=float, default=VNB_BOUND)

    s = sub.add_parser("region", help="rasterized set of targets Eve can reach")
    _common(s)
    s.add_argument("--resolution", type=int, default=64)
    s.add_argument("--raster", type=int, default=201)

    s = sub.add_parser("bounds", help="residual-noise sweep, failure probability, identities")
    _common(s)

    s = sub.add_parser("selftest", help="run the invariant suite")
    _common(s)
    return parser


def scenario_from_args(args):
    cfg = load_config(args.config).to_dict() if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.shots is not None:
        cfg["shots"] = args.shots
    if args.attack:
        cfg["attack_enabled"] = True
    if args.filter_prob is not None:
        cfg["filter_enabled_probability"] = args.filter_prob
    if getattr(args, "padding", False):
        cfg["noise_padding_enabled"] = True
    if getattr(args, "workers", None):
        cfg["workers"] = args.workers
    if args.loss_db is not None:
        losses = parse_loss_grid(args.loss_db)
        if len(losses) != 1:
            raise ConfigError("simulate takes a single --loss-db value")
        if losses[0] < 0:
            raise ConfigError("loss must be non-negative")
        cfg["eta"] = loss_db_to_eta(losses[0])
    return ScenarioConfig.from_dict(cfg)


def cmd_simulate(args):
    config = scenario_from_args(args)
    result = run_scenario(config)
    for key, value in result.summary.items():
        log.info("%s: %s", key, value)
    with _output(args.out) as fh:
        if args.format == "csv":
            result.records.write_csv(fh)
        else:
            _dump_json({"config": config.to_dict(), "summary": result.summary,
                        "report": result.report.to_dict()}, fh)
    return EXIT_OK


def cmd_sweep(args):
    grid = parse_loss_grid(args.loss_db) if args.loss_db else None
    if grid is not None and any(v < 0 for v in grid):
        raise ConfigError("loss must be non-negative")
    table = sweep_figures(args.V, args.eps, args.vnb, grid)
    log.info("crossover DR %s dB, RR %s dB", table.crossover_dr_db, table.crossover_rr_db)
    with _output(args.out) as fh:
        if args.format == "csv":
            table.write_csv(fh)
        else:
            _dump_json(table.to_dict(), fh)
    return EXIT_OK


def cmd_region(args):
    config = ScenarioConfig.from_dict(load_config(args.config).to_dict() if args.config else {})
    losses = parse_loss_grid(args.loss_db) if args.loss_db else [config.loss_db]
    if len(losses) != 1:
        raise ConfigError("region takes a single --loss-db value")
    if args.resolution < 64:
        raise ConfigError("--resolution must be at least 64")
    region = achievable_region(loss_db_to_eta(losses[0]), config.lo_photons, config.intensity_cap,
                               Optics(), resolution=args.resolution, raster=args.raster)
    for key, value in region.summary().items():
        log.info("%s: %s", key, value)
    with _output(args.out) as fh:
        if args.format == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("x_target", "p_target", "covered"))
            for i, p in enumerate(region.p_axis):
                for j, x in enumerate(region.x_axis):
                    writer.writerow((repr(float(x)), repr(float(p)), int(region.covered[i, j])))
        else:
            _dump_json(region.to_dict(), fh)
    return EXIT_OK


def cmd_bounds(args):
    config = ScenarioConfig.from_dict(load_config(args.config).to_dict() if args.config else {})
    report = bounds_report(config.V, config.intensity_cap, config.lo_photons)
    with _output(args.out) as fh:
        if args.format == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("quantity", "value"))
            for section, values in report.items():
                for key, value in values.items():
                    writer.writerow((f"{section}.{key}", value))
        else:
            _dump_json(report, fh)
    return EXIT_OK


def cmd_selftest(args):
    results = run_selftest()
    failed = [name for name, ok, _ in results if not ok]
    with _output(args.out) as fh:
        if args.format == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("check", "passed", "detail"))
            writer.writerows(results)
        else:
            _dump_json([{"check": n, "passed": ok, "detail": d} for n, ok, d in results], fh)
    for name, ok, detail in results:
        log.info("%-22s %s  %s", name, "PASS" if ok else "FAIL", detail)
    return EXIT_SELFTEST if failed else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "region": cmd_region,
            "bounds": cmd_bounds, "selftest": cmd_selftest}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.cmd](args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
