"""Accuracy metric, exponent calibration and comparison with the linear baseline.

The workflow estimate adds the node's unattributed static energy back to
the attributed total, ``E_cmp = A + (E_static - A_static)``, and compares
it with node-measured energy discounted for platform overhead,
``E_ref = beta * E_rapl``. The error is ``100 * |1 - E_cmp / E_ref|``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

from . import tagline
from .attribution import LINEAR, NONLINEAR
from .config import MonitorConfig
from .dataset import Dataset
from .errors import MetricError, UsageError
from .monitor import run_replay
from .report import FORMATS, PidResolver, TaskRollup, render_table, rollup
from .trace import Segment, Trace

DEFAULT_SWEEP = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_BETA = 1.0


@dataclass(frozen=True)
class EvalInputs:
    a_total: float
    a_static: float
    e_rapl: float
    e_static: float
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        for name in ("a_total", "a_static", "e_rapl", "e_static"):
            if getattr(self, name) < 0:
                raise MetricError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not 0 < self.beta <= 1:
            raise MetricError(f"beta must lie in (0, 1], got {self.beta}")

    @property
    def e_cmp(self) -> float:
        return self.a_total + (self.e_static - self.a_static)

    @property
    def e_ref(self) -> float:
        return self.beta * self.e_rapl


def mape(inputs: EvalInputs) -> float:
    e_ref = inputs.e_ref
    if e_ref == 0:
        raise MetricError("reference energy is zero; the error is undefined")
    return 100.0 * abs(1.0 - inputs.e_cmp / e_ref)


def eval_inputs(r: TaskRollup, beta: float = DEFAULT_BETA) -> EvalInputs:
    return EvalInputs(r.a_total, r.a_static, r.e_rapl, r.e_static, beta)


def window_inputs(ds: Dataset, start: float, end: float, beta: float = DEFAULT_BETA) -> EvalInputs:
    """Metric inputs restricted to intervals starting in ``[start, end)``."""
    resolver = PidResolver(ds)
    a = a_static = e_rapl = e_static = Fraction(0)
    for r in ds.records:
        if start <= r.interval_start < end and resolver.resolve(r.node, r.pid, r.interval_start) is not None:
            a += sum(map(Fraction, r.energies()), Fraction(0))
            a_static += Fraction(r.e_cpu_static) + Fraction(r.e_dram_static)
    for ledger in ds.ledgers:
        if start <= ledger.interval_start < end:
            for e in ledger.entries.values():
                e_rapl += Fraction(e.e_total)
                e_static += Fraction(e.e_static)
    return EvalInputs(float(a), float(a_static), float(e_rapl), float(e_static), beta)


# ---- calibration -----------------------------------------------------------------


@dataclass
class SweepResult:
    table: dict[float, float]
    selected: float

    @property
    def minimum(self) -> float:
        return self.table[self.selected]

    def is_unimodal(self) -> bool:
        """Strictly decreasing up to the selected exponent, strictly increasing after."""
        gammas = sorted(self.table)
        values = [self.table[g] for g in gammas]
        i = gammas.index(self.selected)
        down = all(a > b for a, b in zip(values[: i + 1], values[1 : i + 1]))
        up = all(a < b for a, b in zip(values[i:], values[i + 1 :]))
        return down and up


def select_gamma(table: dict[float, float]) -> float:
    """Argmin of the table; ties go to the smaller exponent."""
    if not table:
        raise UsageError("sweep set is empty")
    best = None
    for g in sorted(table):
        if best is None or table[g] < table[best]:
            best = g
    return best


def calibrate_gamma(
    trace: Trace,
    sweep=DEFAULT_SWEEP,
    config: MonitorConfig | None = None,
    beta: float = DEFAULT_BETA,
    reference: tuple[float, float] | None = None,
) -> SweepResult:
    """Replay the trace once per exponent and pick the one with the lowest error.

    ``reference`` optionally overrides the node totals ``(e_rapl, e_static)``
    taken from the replayed ledgers.
    """
    sweep = sorted({float(g) for g in sweep})
    if not sweep:
        raise UsageError("sweep set is empty")
    config = config or MonitorConfig()
    table = {}
    for g in sweep:
        r = rollup(run_replay(trace, config.replace(gamma=g)))
        inputs = eval_inputs(r, beta)
        if reference is not None:
            inputs = EvalInputs(inputs.a_total, inputs.a_static, reference[0], reference[1], beta)
        table[g] = mape(inputs)
    return SweepResult(table, select_gamma(table))


# ---- baseline comparison -------------------------------------------------------------


@dataclass
class ModelResult:
    model: str
    mape: dict[str, float] = field(default_factory=dict)
    deviation: dict[str, float] = field(default_factory=dict)
    tasks: dict[str, float] = field(default_factory=dict)


@dataclass
class Comparison:
    gamma: float
    segments: list[str]
    models: dict[str, ModelResult]

    @property
    def has_load(self) -> bool:
        return len(self.segments) > 1


def _run_label(trace: Trace, default: str, taken: list[str]) -> str:
    marks = trace.of_type(Segment)
    label = marks[0].name if marks else default
    return label if label not in taken else f"{label}_{len(taken)}"


def _segments(trace: Trace, ds: Dataset) -> list[tuple[str, float, float]]:
    marks = sorted((s.t, s.name) for s in trace.of_type(Segment))
    if not marks:
        return [("isolated", ds.start, float("inf"))]
    out = []
    for i, (t, name) in enumerate(marks):
        end = marks[i + 1][0] if i + 1 < len(marks) else float("inf")
        out.append((name, max(t, ds.start), end))
    return out


def compare_baseline(
    trace: Trace,
    gamma: float,
    load_trace: Trace | None = None,
    config: MonitorConfig | None = None,
    beta: float = DEFAULT_BETA,
) -> Comparison:
    """Error of the power-law attributor and the linear baseline per segment.

    Segments come from the trace's markers, or from a second trace holding
    the run under co-located load. The first segment is the isolated
    reference; each later one gets a signed deviation in percentage points.
    """
    config = (config or MonitorConfig()).replace(gamma=gamma)
    models = {NONLINEAR: ModelResult(NONLINEAR), LINEAR: ModelResult(LINEAR)}
    if load_trace is None:
        runs = [(trace, None)]
    else:
        first = _run_label(trace, "isolated", [])
        runs = [(trace, first), (load_trace, _run_label(load_trace, "loaded", [first]))]
    names: list[str] = []
    for run_index, (tr, label) in enumerate(runs):
        for model, result in models.items():
            ds = run_replay(tr, config.replace(model=model))
            # a labelled run is one segment spanning the whole monitored span
            segs = _segments(tr, ds) if label is None else [(label, ds.start, float("inf"))]
            for name, start, end in segs:
                result.mape[name] = mape(window_inputs(ds, start, end, beta))
            if run_index == 0:
                result.tasks = {uid: t.total for uid, t in rollup(ds).physical.items()}
        names.extend(name for name, _, _ in segs)
    base = names[0]
    for result in models.values():
        for name in names[1:]:
            result.deviation[name] = result.mape[name] - result.mape[base]
    return Comparison(gamma, names, models)


# ---- rendering ---------------------------------------------------------------------


def render_sweep(result: SweepResult, fmt: str = "table") -> bytes:
    rows = [(g, result.table[g], g == result.selected) for g in sorted(result.table)]
    if fmt == "table":
        text = render_table(
            ["gamma", "mape_pct", "selected"],
            [[f"{g:g}", f"{m:.6f}", "*" if sel else ""] for g, m, sel in rows],
            align_right=(0, 1),
        )
        return text.encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "mape_pct", "selected"])
        for g, m, sel in rows:
            w.writerow([repr(g), repr(m), int(sel)])
        return buf.getvalue().encode()
    if fmt == "tl":
        lines = [tagline.format_line("SWEEP", {"gamma": g, "mape": m, "selected": sel}) for g, m, sel in rows]
        return ("\n".join(lines) + "\n").encode()
    raise UsageError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")


def render_comparison(cmp: Comparison, fmt: str = "table") -> bytes:
    headers = ["model"] + [f"mape_{s}" for s in cmp.segments] + [f"deviation_{s}_pp" for s in cmp.segments[1:]]
    rows = []
    for model, res in cmp.models.items():
        rows.append([model] + [res.mape[s] for s in cmp.segments] + [res.deviation[s] for s in cmp.segments[1:]])
    if fmt == "table":
        body = [[r[0]] + [f"{v:+.4f}" if h.startswith("deviation") else f"{v:.4f}" for h, v in zip(headers[1:], r[1:])]
                for r in rows]
        return render_table(headers, body, align_right=range(1, len(headers))).encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(headers)
        for r in rows:
            w.writerow([r[0]] + [repr(v) for v in r[1:]])
        return buf.getvalue().encode()
    if fmt == "tl":
        lines = [tagline.format_line("COMPARE", {"model": r[0], **dict(zip(headers[1:], r[1:]))}) for r in rows]
        return ("\n".join(lines) + "\n").encode()
    raise UsageError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
