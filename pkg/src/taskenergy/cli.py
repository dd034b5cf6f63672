"""Command-line entry point.

Exit status is 0 on success, 2 for usage errors and 1 for runtime errors.
Every failure prints one line starting with ``error[<category>]:``.
Settings resolve as flags, then ``PEAK_*`` environment variables, then
built-in defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading
from pathlib import Path

from . import synth
from .attribution import MODELS, MODES
from .config import DEFAULT_POLL_INTERVAL, DEFAULT_RAPL_INTERVAL, MonitorConfig
from .counters import DEFAULT_IDLE_WINDOW, POWERCAP_ROOT
from .dataset import Dataset
from .errors import TaskEnergyError, UsageError
from .evaluation import (
    DEFAULT_BETA,
    DEFAULT_SWEEP,
    EvalInputs,
    calibrate_gamma,
    compare_baseline,
    eval_inputs,
    mape,
    render_comparison,
    render_sweep,
)
from .pods import DEFAULT_POD_FILTER, FilePodSource
from .procfs import PROC_ROOT
from .report import FORMATS, render_report, rollup
from .trace import read_trace, write_trace

ENV_GAMMA = "PEAK_GAMMA"
ENV_RAPL_MS = "PEAK_RAPL_MS"
ENV_POLL_MS = "PEAK_POLL_MS"
ENV_POWERCAP_ROOT = "PEAK_POWERCAP_ROOT"
ENV_PROC_ROOT = "PEAK_PROC_ROOT"

log = logging.getLogger("taskenergy")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"error[usage]: {message}\n")


def _env(name: str, cast, default):
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except ValueError:
        raise UsageError(f"environment variable {name}={raw!r} is not a valid {cast.__name__}") from None


def _fmt_help(help_text: str) -> str:
    return help_text + " (default: %(default)s)"


def _add_config_flags(p: argparse.ArgumentParser, env: dict) -> None:
    g = p.add_argument_group("attribution settings")
    g.add_argument("--gamma", type=float, default=env["gamma"], help=_fmt_help(f"power-law exponent in [0, 1]; env {ENV_GAMMA}"))
    g.add_argument("--rapl-interval-ms", type=float, default=env["rapl_ms"],
                   help=_fmt_help(f"counter sampling interval; env {ENV_RAPL_MS}"))
    g.add_argument("--poll-interval-ms", type=float, default=env["poll_ms"],
                   help=_fmt_help(f"pod polling interval; env {ENV_POLL_MS}"))
    g.add_argument("--idle-window", type=float, default=DEFAULT_IDLE_WINDOW, help=_fmt_help("idle measurement window in seconds"))
    g.add_argument("--mode", choices=MODES, default=MODES[0], help=_fmt_help("faithful or credit-normalized attribution"))
    g.add_argument("--model", choices=MODELS, default=MODELS[0], help=_fmt_help("power-law model or the linear baseline"))
    g.add_argument("--pod-filter", default=DEFAULT_POD_FILTER, help=_fmt_help("regex on pod names; empty matches all"))
    g.add_argument("--short-task", type=float, default=15.0, help=_fmt_help("flag tasks observed for fewer seconds"))


def _config(args) -> MonitorConfig:
    try:
        return MonitorConfig(
            gamma=args.gamma,
            rapl_interval=args.rapl_interval_ms / 1000.0,
            poll_interval=args.poll_interval_ms / 1000.0,
            idle_window=args.idle_window,
            mode=args.mode,
            model=args.model,
            pod_filter=args.pod_filter or None,
            short_task=args.short_task,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write(data: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.write(data.decode())


def _sweep(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sweep must be a comma-separated list of numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("sweep set is empty")
    return values


def build_parser() -> argparse.ArgumentParser:
    env = {
        "gamma": _env(ENV_GAMMA, float, 0.3),
        "rapl_ms": _env(ENV_RAPL_MS, float, DEFAULT_RAPL_INTERVAL * 1000),
        "poll_ms": _env(ENV_POLL_MS, float, DEFAULT_POLL_INTERVAL * 1000),
        "powercap": os.environ.get(ENV_POWERCAP_ROOT) or POWERCAP_ROOT,
        "proc": os.environ.get(ENV_PROC_ROOT) or PROC_ROOT,
    }
    parser = _Parser(prog="taskenergy", description="Per-process and per-task CPU/DRAM energy attribution.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help=_fmt_help("more log output (repeatable)"))
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("monitor", help="attribute energy on this machine until interrupted")
    _add_config_flags(p, env)
    p.add_argument("--out", required=True, help="output directory for the dataset")
    p.add_argument("--duration", type=float, default=None, help=_fmt_help("seconds to monitor; runs until a signal if unset"))
    p.add_argument("--pods", default=None, help=_fmt_help("tagged-line pod list file, re-read on every poll"))
    p.add_argument("--node", default=None, help=_fmt_help("node name; the host name if unset"))
    p.add_argument("--powercap-root", default=env["powercap"], help=_fmt_help(f"powercap tree; env {ENV_POWERCAP_ROOT}"))
    p.add_argument("--proc-root", default=env["proc"], help=_fmt_help(f"procfs root; env {ENV_PROC_ROOT}"))

    p = sub.add_parser("replay", help="run the pipeline over a trace file")
    _add_config_flags(p, env)
    p.add_argument("--trace", required=True, help="trace file")
    p.add_argument("--out", required=True, help="output directory for the dataset")
    p.add_argument("--duration", type=float, default=None, help=_fmt_help("stop this many seconds after the idle window"))

    p = sub.add_parser("report", help="roll a dataset up to tasks and print a report")
    p.add_argument("--in", dest="input", required=True, help="dataset directory")
    p.add_argument("--format", choices=FORMATS, default="table", help=_fmt_help("report format"))
    p.add_argument("--output", default=None, help=_fmt_help("write to this file instead of stdout"))

    p = sub.add_parser("evaluate", help="error of the workflow estimate against node energy")
    p.add_argument("--in", dest="input", required=True, help="dataset directory")
    p.add_argument("--rapl-total", type=float, default=None, help=_fmt_help("node energy in J; from the dataset if unset"))
    p.add_argument("--static-total", type=float, default=None, help=_fmt_help("node static energy in J; from the dataset if unset"))
    p.add_argument("--beta", type=float, default=DEFAULT_BETA, help=_fmt_help("platform overhead discount in (0, 1]"))

    p = sub.add_parser("calibrate", help="sweep the exponent over a trace")
    _add_config_flags(p, env)
    p.add_argument("--trace", required=True, help="trace file")
    p.add_argument("--sweep", type=_sweep, default=list(DEFAULT_SWEEP), help=_fmt_help("comma-separated exponents"))
    p.add_argument("--beta", type=float, default=DEFAULT_BETA, help=_fmt_help("platform overhead discount in (0, 1]"))
    p.add_argument("--format", choices=FORMATS, default="table", help=_fmt_help("output format"))

    p = sub.add_parser("compare", help="power-law attribution against the linear baseline")
    _add_config_flags(p, env)
    p.add_argument("--trace", required=True, help="trace file (isolated run, or segments)")
    p.add_argument("--load-trace", default=None, help=_fmt_help("the same run under co-located load"))
    p.add_argument("--beta", type=float, default=DEFAULT_BETA, help=_fmt_help("platform overhead discount in (0, 1]"))
    p.add_argument("--format", choices=FORMATS, default="table", help=_fmt_help("output format"))

    p = sub.add_parser("generate", help="write a synthetic trace from a scenario")
    p.add_argument("--scenario", required=True,
                   help=f"scenario JSON file or a built-in name ({', '.join(sorted(synth.BUILDERS))})")
    p.add_argument("--out", required=True, help="trace file to write")
    p.add_argument("--truth", default=None, help=_fmt_help("also write ground truth to this file"))
    p.add_argument("--seed", type=int, default=None, help=_fmt_help("override the scenario seed"))

    return parser


# ---- commands -------------------------------------------------------------------


def cmd_monitor(args) -> int:
    from .live import LiveBackend
    from .monitor import Monitor, NullPodSource, run_live

    config = _config(args)
    backend = LiveBackend(
        node=args.node,
        proc_root=args.proc_root,
        powercap_root=args.powercap_root,
        sample_interval=min(config.rapl_interval, 1.0),
        idle_window=config.idle_window,
    )
    pods = FilePodSource(args.pods) if args.pods else NullPodSource()
    monitor = Monitor(config, backend, pods)
    stop = threading.Event()
    previous = {sig: signal.signal(sig, lambda *_: stop.set()) for sig in (signal.SIGINT, signal.SIGTERM)}
    try:
        dataset = run_live(monitor, args.duration, stop)
    finally:
        for sig, handler in previous.items():
            signal.signal(sig, handler)
    out = dataset.write(args.out)
    print(f"wrote {len(dataset.records)} records to {out}")
    return 0


def cmd_replay(args) -> int:
    from .monitor import run_replay

    config = _config(args)
    dataset = run_replay(read_trace(args.trace), config, args.duration)
    out = dataset.write(args.out)
    r = rollup(dataset)
    print(f"wrote {len(dataset.records)} records for {len(r.physical)} tasks to {out}")
    return 0


def cmd_report(args) -> int:
    r = rollup(Dataset.read(args.input))
    _write(render_report(r, args.format), args.output)
    return 0


def cmd_evaluate(args) -> int:
    r = rollup(Dataset.read(args.input))
    inputs = eval_inputs(r, args.beta)
    inputs = EvalInputs(
        inputs.a_total,
        inputs.a_static,
        inputs.e_rapl if args.rapl_total is None else args.rapl_total,
        inputs.e_static if args.static_total is None else args.static_total,
        args.beta,
    )
    value = mape(inputs)
    print(f"attributed   {inputs.a_total:.6f} J")
    print(f"estimate     {inputs.e_cmp:.6f} J")
    print(f"reference    {inputs.e_ref:.6f} J")
    print(f"mape         {value:.6f} %")
    return 0


def cmd_calibrate(args) -> int:
    result = calibrate_gamma(read_trace(args.trace), args.sweep, _config(args), args.beta)
    sys.stdout.write(render_sweep(result, args.format).decode())
    if args.format == "table":
        print(f"selected gamma {result.selected:g}")
    return 0


def cmd_compare(args) -> int:
    load = read_trace(args.load_trace) if args.load_trace else None
    cmp = compare_baseline(read_trace(args.trace), args.gamma, load, _config(args), args.beta)
    sys.stdout.write(render_comparison(cmp, args.format).decode())
    return 0


def load_scenario(spec: str) -> synth.Scenario:
    if spec in synth.BUILDERS:
        return synth.BUILDERS[spec]()
    if not Path(spec).is_file():
        raise UsageError(f"scenario {spec!r} is neither a file nor a built-in ({', '.join(sorted(synth.BUILDERS))})")
    try:
        return synth.Scenario.load(spec)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad scenario file {spec}: {exc}") from None


def cmd_generate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    trace, truth = synth.generate_synthetic(scenario)
    write_trace(trace, args.out)
    if args.truth:
        truth.write(args.truth)
    print(f"wrote {len(trace.events)} events to {args.out}")
    return 0


COMMANDS = {
    "monitor": cmd_monitor,
    "replay": cmd_replay,
    "report": cmd_report,
    "evaluate": cmd_evaluate,
    "calibrate": cmd_calibrate,
    "compare": cmd_compare,
    "generate": cmd_generate,
}


def main(argv: list[str] | None = None) -> int:
    try:
        parser = build_parser()
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        print("error[usage]: a subcommand is required", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return 2
    except TaskEnergyError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
