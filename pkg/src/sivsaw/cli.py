"""``simulate`` command line.

    simulate run <config>            run an experiment, write CSV/JSON/SVG
    simulate validate <config>       schema and sanity check without running
    simulate plot <result> <out>     re-render a CSV/JSON result as SVG

Exit status: 0 on success, 1 on a runtime failure, 2 on a config error.
Failures also print a one-line JSON record to stderr.  Set
``SIMULATE_OUTPUT_DIR`` to redirect output files.  A bare config name such
as ``fig3c_odar`` resolves to the bundled copy.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings

import numpy as np

from . import saw_device
from .config import bundled_configs, load_config, resolve_path
from .errors import ConfigError, SimulationError

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("sivsaw")


def _error_record(kind, exc):
    rec = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        rec["field"] = exc.field
        rec["message"] = exc.message
    else:
        tb = exc.__traceback__
        while tb is not None and tb.tb_next is not None:
            tb = tb.tb_next
        if tb is not None:
            rec["module"] = tb.tb_frame.f_globals.get("__name__", "")
    print(json.dumps(rec), file=sys.stderr)


def validate(config_path):
    """Check a config without running it; returns ``{"errors": [...], "warnings": [...]}``."""
    report = {"errors": [], "warnings": []}
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        report["errors"].append({"field": exc.field, "message": exc.message})
        return report
    try:
        ctx = cfg.make_context()
    except SimulationError as exc:
        report["errors"].append({"field": "model", "message": str(exc)})
        return report

    e = cfg.experiment
    spec = cfg.device
    carriers = []
    if cfg.kind == "odar":
        carriers = [("experiment.freqs", f) for f in e["freqs"]]
    elif cfg.kind == "rabi":
        carriers = [("experiment.freq", ctx.qubit_freq if e["freq"] is None else e["freq"])]
    elif cfg.kind == "ramsey":
        carriers = [("experiment.detuning", ctx.qubit_freq + e["detuning"])]
    elif cfg.kind == "histogram":
        if e["pulses"] is not None:
            carriers = [(f"experiment.pulses[{i}].freq", float(p.get("freq", 0)))
                        for i, p in enumerate(e["pulses"]) if p.get("kind") == "acoustic"]
        else:
            carriers = [("experiment.acoustic_freq",
                         ctx.qubit_freq if e["acoustic_freq"] is None else e["acoustic_freq"])]
    out = [(path, f) for path, f in carriers if not saw_device.in_band(spec, f)]
    if out:
        path, f = out[0]
        report["warnings"].append({
            "field": path,
            "message": f"{len(out)} acoustic frequency value(s) outside 3x the transducer "
                       f"bandwidth around {spec.center_freq / 1e9:.3f} GHz (first: {f / 1e9:.3f} GHz)"})
    if not saw_device.in_band(spec, ctx.qubit_freq, widths=1.0):
        report["warnings"].append({"field": "model.qubit_freq",
                                   "message": "qubit frequency lies outside the transducer passband"})

    # building and compiling the sequences surfaces timing conflicts
    from . import experiments as exp
    from .runner import histogram_sequence
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if cfg.kind == "histogram":
                exp.compile_for(ctx, histogram_sequence(cfg, ctx))
            elif cfg.kind == "odar":
                exp.compile_for(ctx, exp.odar_sequence(ctx, e["freqs"][0], e["pulse_duration"], e["power"]))
            elif cfg.kind == "rabi":
                for p in e["powers"]:
                    exp.compile_for(ctx, exp.rabi_sequence(ctx, float(np.max(e["durations"])), p, e["freq"]))
            elif cfg.kind == "ramsey":
                exp.compile_for(ctx, exp.ramsey_sequence(ctx, float(np.max(e["delays"])),
                                                         e["detuning"], e["power"]))
    except SimulationError as exc:
        report["errors"].append({"field": "experiment", "message": f"{type(exc).__name__}: {exc}"})
    except (TypeError, KeyError, ValueError) as exc:
        report["errors"].append({"field": "experiment.pulses", "message": str(exc)})
    return report


def cmd_run(args):
    from .output import write_outputs
    from .runner import execute

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _error_record("config", exc)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        out = execute(cfg)
        paths = write_outputs(out, cfg.output)
    except ConfigError as exc:
        _error_record("config", exc)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("run failed", exc_info=True)
        _error_record("runtime", exc)
        return EXIT_RUNTIME
    print(f"{out.summary} [{time.perf_counter() - t0:.1f} s]")
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


def cmd_validate(args):
    try:
        resolve_path(args.config)
    except ConfigError as exc:
        _error_record("config", exc)
        return EXIT_CONFIG
    report = validate(args.config)
    print(json.dumps(report, indent=2))
    return EXIT_CONFIG if report["errors"] else EXIT_OK


def cmd_plot(args):
    from .output import emit_plot_data, load_result

    try:
        result = load_result(args.result)
        path = emit_plot_data(result, args.out)
    except (OSError, ValueError, KeyError) as exc:
        _error_record("runtime", exc)
        return EXIT_RUNTIME
    print(f"wrote {path} and {path.with_suffix('.csv')}")
    return EXIT_OK


def cmd_list(args):
    for p in bundled_configs():
        print(p.stem)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="simulate", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("plot", help="render a result file as SVG plus sidecar CSV")
    p.add_argument("result")
    p.add_argument("out")
    p.set_defaults(func=cmd_plot)
    p = sub.add_parser("list", help="list bundled configs")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
