"""Roll process records up to physical tasks, logical tasks and the workflow.

Sums are exact: every float is converted to a :class:`fractions.Fraction`,
added without rounding and rounded once at the end. Totals are therefore
independent of summation order and the additivity identities
(workflow = sum of logical = sum of physical = sum of records) hold
bit-for-bit.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, fields
from fractions import Fraction

from . import tagline
from .attribution import Domain
from .dataset import Dataset
from .errors import ConsistencyError, CorruptRecordError, UsageError

FORMATS = ("table", "csv", "tl")
ENERGY_FIELDS = ("e_cpu_dynamic", "e_cpu_static", "e_dram_dynamic", "e_dram_static")


def exact_sum(values: Iterable[float]) -> float:
    return float(sum((Fraction(v) for v in values), Fraction(0)))


class _Acc:
    """Exact accumulator for the four energy components."""

    def __init__(self):
        self.parts = [Fraction(0)] * 4

    def add(self, energies: Sequence[float]):
        self.parts = [p + Fraction(e) for p, e in zip(self.parts, energies)]

    def merge(self, other: "_Acc"):
        self.parts = [a + b for a, b in zip(self.parts, other.parts)]

    @property
    def exact(self) -> Fraction:
        return sum(self.parts, Fraction(0))

    def values(self) -> dict[str, object]:
        out: dict[str, object] = {name: float(p) for name, p in zip(ENERGY_FIELDS, self.parts)}
        out["total"] = float(self.exact)
        out["exact"] = self.exact
        return out


@dataclass
class PhysicalTask:
    uid: str
    task_name: str
    name: str
    node: str
    start: float
    end: float
    e_cpu_dynamic: float = 0.0
    e_cpu_static: float = 0.0
    e_dram_dynamic: float = 0.0
    e_dram_static: float = 0.0
    total: float = 0.0
    records: int = 0
    short_task: bool = False
    # unrounded total, for exact additivity checks
    exact: Fraction = field(default=Fraction(0), compare=False, repr=False)

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class LogicalTask:
    task_name: str
    physical: int = 0
    e_cpu_dynamic: float = 0.0
    e_cpu_static: float = 0.0
    e_dram_dynamic: float = 0.0
    e_dram_static: float = 0.0
    total: float = 0.0
    short_tasks: int = 0
    exact: Fraction = field(default=Fraction(0), compare=False, repr=False)


@dataclass
class EnergyTotals:
    e_cpu_dynamic: float = 0.0
    e_cpu_static: float = 0.0
    e_dram_dynamic: float = 0.0
    e_dram_static: float = 0.0
    total: float = 0.0
    records: int = 0
    exact: Fraction = field(default=Fraction(0), compare=False, repr=False)

    @property
    def static(self) -> float:
        return exact_sum([self.e_cpu_static, self.e_dram_static])

    @property
    def dynamic(self) -> float:
        return exact_sum([self.e_cpu_dynamic, self.e_dram_dynamic])


RESIDUAL_REL_TOL = 1e-9


@dataclass
class NodeSummary:
    """Measured versus attributed energy on one node.

    ``residual_dynamic`` is node dynamic energy minus attributed dynamic
    energy; it goes negative when faithful attribution over-attributes.
    """

    node: str
    e_rapl_package: float = 0.0
    e_rapl_dram: float = 0.0
    e_static: float = 0.0
    e_dynamic: float = 0.0
    a_static: float = 0.0
    a_dynamic: float = 0.0
    unattributed_static: float = 0.0
    residual_dynamic: float = 0.0
    intervals: int = 0
    skipped: int = 0
    dram_available: bool = True

    @property
    def e_rapl(self) -> float:
        return exact_sum([self.e_rapl_package, self.e_rapl_dram])

    @property
    def over_attributed(self) -> bool:
        # float rounding of the per-record products is not over-attribution
        return self.residual_dynamic < -RESIDUAL_REL_TOL * max(self.e_dynamic, 1.0)


@dataclass
class TaskRollup:
    physical: dict[str, PhysicalTask] = field(default_factory=dict)
    logical: dict[str, LogicalTask] = field(default_factory=dict)
    workflow: EnergyTotals = field(default_factory=EnergyTotals)
    unassigned: EnergyTotals = field(default_factory=EnergyTotals)
    nodes: dict[str, NodeSummary] = field(default_factory=dict)
    mode: str = "faithful"
    short_threshold: float = 15.0

    @property
    def a_total(self) -> float:
        return self.workflow.total

    @property
    def a_static(self) -> float:
        return self.workflow.static

    @property
    def e_rapl(self) -> float:
        return exact_sum(n.e_rapl for n in self.nodes.values())

    @property
    def e_static(self) -> float:
        return exact_sum(n.e_static for n in self.nodes.values())


# ---- rollup -------------------------------------------------------------------


class PidResolver:
    """Map (node, pid, time) to the pod the pid belonged to at that time."""

    def __init__(self, dataset: Dataset):
        spans: dict[tuple[str, int], list[tuple[float, float, str]]] = defaultdict(list)
        for uid, b in dataset.bindings.items():
            for pid, pid_spans in b.spans.items():
                for since, until in pid_spans:
                    spans[(b.node, pid)].append((since, float("inf") if until is None else until, uid))
        for key, items in spans.items():
            items.sort()
            for (a0, a1, ua), (b0, b1, ub) in zip(items, items[1:]):
                if b0 < a1:
                    raise ConsistencyError(
                        f"pid {key[1]} on {key[0]} bound to pods {ua} and {ub} over overlapping spans"
                    )
        self.spans = dict(spans)

    def resolve(self, node: str, pid: int, at: float) -> str | None:
        for since, until, uid in self.spans.get((node, pid), ()):
            if since <= at < until:
                return uid
        return None


def rollup(dataset: Dataset) -> TaskRollup:
    resolver = PidResolver(dataset)
    threshold = dataset.config.short_task
    out = TaskRollup(mode=dataset.config.mode, short_threshold=threshold)

    per_pod: dict[str, _Acc] = defaultdict(_Acc)
    span: dict[str, list[float]] = {}
    counts: dict[str, int] = defaultdict(int)
    unassigned = _Acc()
    node_attr: dict[str, _Acc] = {}
    for r in dataset.records:
        for value in r.energies():
            if value < 0:
                raise CorruptRecordError(f"negative energy for pid {r.pid} in interval {r.interval}")
        uid = resolver.resolve(r.node, r.pid, r.interval_start)
        node_attr.setdefault(r.node, _Acc()).add(r.energies())
        if uid is None:
            unassigned.add(r.energies())
            out.unassigned.records += 1
            continue
        per_pod[uid].add(r.energies())
        counts[uid] += 1
        lo_hi = span.setdefault(uid, [r.interval_start, r.interval_end])
        lo_hi[0] = min(lo_hi[0], r.interval_start)
        lo_hi[1] = max(lo_hi[1], r.interval_end)

    logical_acc: dict[str, _Acc] = defaultdict(_Acc)
    workflow = _Acc()
    for uid in sorted(dataset.bindings):
        b = dataset.bindings[uid]
        acc = per_pod.get(uid, _Acc())
        start, end = span.get(uid, (b.first_seen, b.first_seen))
        task = PhysicalTask(uid, b.task_name, b.name, b.node, start, end, records=counts.get(uid, 0), **acc.values())
        task.short_task = task.duration < threshold
        out.physical[uid] = task
        logical_acc[b.task_name].merge(acc)
        workflow.merge(acc)
        lt = out.logical.setdefault(b.task_name, LogicalTask(b.task_name))
        lt.physical += 1
        lt.short_tasks += task.short_task
    for name, acc in logical_acc.items():
        lt = out.logical[name]
        for k, v in acc.values().items():
            setattr(lt, k, v)
    out.logical = dict(sorted(out.logical.items()))
    out.workflow = EnergyTotals(records=sum(counts.values()), **workflow.values())
    ua = unassigned.values()
    out.unassigned = EnergyTotals(records=out.unassigned.records, **ua)

    # node-level measured energy from complete ledgers only
    measured: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    intervals: dict[str, int] = defaultdict(int)
    for ledger in dataset.ledgers:
        intervals[ledger.node] += 1
        m = measured[ledger.node]
        for (_, domain), e in ledger.entries.items():
            m[domain.value].append(e.e_total)
            m["static"].append(e.e_static)
            m["dynamic"].append(e.e_dynamic)
    skipped: dict[str, int] = defaultdict(int)
    for s in dataset.skipped:
        skipped[s.node] += 1
    nodes = sorted(set(measured) | set(node_attr) | set(dataset.node_domains))
    for node in nodes:
        m = measured.get(node, {})
        acc = node_attr.get(node, _Acc()).values()
        ns = NodeSummary(
            node,
            e_rapl_package=exact_sum(m.get(Domain.CPU_PACKAGE.value, [])),
            e_rapl_dram=exact_sum(m.get(Domain.DRAM.value, [])),
            e_static=exact_sum(m.get("static", [])),
            e_dynamic=exact_sum(m.get("dynamic", [])),
            a_static=exact_sum([acc["e_cpu_static"], acc["e_dram_static"]]),
            a_dynamic=exact_sum([acc["e_cpu_dynamic"], acc["e_dram_dynamic"]]),
            intervals=intervals.get(node, 0),
            skipped=skipped.get(node, 0),
            dram_available=Domain.DRAM in dataset.node_domains.get(node, {Domain.DRAM}),
        )
        ns.unattributed_static = float(Fraction(ns.e_static) - Fraction(ns.a_static))
        ns.residual_dynamic = float(Fraction(ns.e_dynamic) - Fraction(ns.a_dynamic))
        out.nodes[node] = ns
    return out


def conservation_audit(r: TaskRollup) -> list[str]:
    """Human-readable findings about attributed versus measured energy."""
    notes = []
    for ns in r.nodes.values():
        if ns.over_attributed:
            note = (
                f"node {ns.node}: attributed dynamic energy exceeds measured by "
                f"{-ns.residual_dynamic:.6g} J (residual is negative)"
            )
            if r.mode == "conserving":
                raise ConsistencyError(note + " in conserving mode")
            notes.append(note)
    return notes


# ---- rendering -----------------------------------------------------------------

COLUMNS = (
    "kind", "key", "task", "name", "node", "start", "end",
    "e_cpu_dynamic", "e_cpu_static", "e_dram_dynamic", "e_dram_static", "total",
    "count", "short_task", "skipped",
    "e_rapl_package", "e_rapl_dram", "e_static", "e_dynamic", "a_static", "a_dynamic",
    "unattributed_static", "residual_dynamic", "dram_available",
)


def _energy(obj) -> dict[str, object]:
    return {k: getattr(obj, k) for k in (*ENERGY_FIELDS, "total")}


def report_rows(r: TaskRollup) -> list[dict[str, object]]:
    """One dict per report row, keyed by the union column set."""
    rows = []
    for uid, t in r.physical.items():
        rows.append({"kind": "physical", "key": uid, "task": t.task_name, "name": t.name, "node": t.node,
                     "start": t.start, "end": t.end, **_energy(t), "count": t.records, "short_task": t.short_task})
    for name, lt in r.logical.items():
        rows.append({"kind": "logical", "key": name, "task": name, **_energy(lt), "count": lt.physical,
                     "short_task": lt.short_tasks})
    if r.physical or r.unassigned.records:
        rows.append({"kind": "workflow", "key": "workflow", **_energy(r.workflow), "count": r.workflow.records})
    if r.unassigned.records:
        rows.append({"kind": "unassigned", "key": "unassigned", **_energy(r.unassigned), "count": r.unassigned.records})
    for node, ns in r.nodes.items():
        rows.append({
            "kind": "node", "key": node, "node": node, "count": ns.intervals, "skipped": ns.skipped,
            **{k: getattr(ns, k) for k in ("e_rapl_package", "e_rapl_dram", "e_static", "e_dynamic", "a_static",
                                           "a_dynamic", "unattributed_static", "residual_dynamic",
                                           "dram_available")},
        })
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]], align_right: Iterable[int] = ()) -> str:
    right = set(align_right)
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]

    def line(cells):
        return "  ".join(c.rjust(w) if i in right else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths))).rstrip()

    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(r) for r in rows)
    return "\n".join(out) + "\n"


def _fmt_j(v: float) -> str:
    return f"{v:.3f}"


def _render_human(r: TaskRollup) -> str:
    parts = []
    rows = [
        [t.uid, t.task_name, t.node, f"{t.duration:.1f}", _fmt_j(t.e_cpu_dynamic), _fmt_j(t.e_cpu_static),
         _fmt_j(t.e_dram_dynamic), _fmt_j(t.e_dram_static), _fmt_j(t.total), "short_task" if t.short_task else ""]
        for t in r.physical.values()
    ]
    parts.append("Physical tasks (J)\n")
    parts.append(render_table(
        ["pod_uid", "task", "node", "observed_s", "cpu_dyn", "cpu_static", "dram_dyn", "dram_static", "total", "flags"],
        rows, align_right=range(3, 9)))
    rows = [
        [lt.task_name, str(lt.physical), _fmt_j(lt.e_cpu_dynamic + lt.e_dram_dynamic),
         _fmt_j(lt.e_cpu_static + lt.e_dram_static), _fmt_j(lt.total), str(lt.short_tasks)]
        for lt in r.logical.values()
    ]
    parts.append("\nLogical tasks (J)\n")
    parts.append(render_table(["task", "physical", "dynamic", "static", "total", "short_tasks"], rows, align_right=range(1, 6)))
    if r.physical or r.nodes:
        parts.append("\nWorkflow\n")
        parts.append(f"  attributed total     {_fmt_j(r.a_total)} J\n")
        parts.append(f"  attributed static    {_fmt_j(r.a_static)} J\n")
        if r.unassigned.records:
            parts.append(f"  unassigned records   {r.unassigned.records} ({_fmt_j(r.unassigned.total)} J)\n")
        flagged = sum(t.short_task for t in r.physical.values())
        if flagged:
            parts.append(f"  short tasks          {flagged} observed < {r.short_threshold:g} s; their energy is unreliable\n")
    if r.nodes:
        rows = [
            [ns.node, _fmt_j(ns.e_rapl_package), _fmt_j(ns.e_rapl_dram), _fmt_j(ns.e_static),
             _fmt_j(ns.unattributed_static), _fmt_j(ns.residual_dynamic), str(ns.intervals), str(ns.skipped)]
            for ns in r.nodes.values()
        ]
        parts.append("\nNodes (J)\n")
        parts.append(render_table(
            ["node", "rapl_package", "rapl_dram", "static", "unattributed_static", "residual_dynamic", "intervals", "skipped"],
            rows, align_right=range(1, 8)))
        for ns in r.nodes.values():
            if not ns.dram_available:
                parts.append(f"  note: node {ns.node}: DRAM domain unavailable, memory energy not attributed\n")
        for note in conservation_audit(r):
            parts.append(f"  note: {note}\n")
    return "".join(parts)


def _render_csv(r: TaskRollup) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in report_rows(r):
        writer.writerow([_cell(row.get(c)) for c in COLUMNS])
    return buf.getvalue()


def _render_tl(r: TaskRollup) -> str:
    lines = [f"# taskenergy report mode={r.mode} short_task_threshold={r.short_threshold!r}"]
    for row in report_rows(r):
        kind = row.pop("kind")
        fields_ = {}
        for c in COLUMNS[1:]:
            if c in row and row[c] is not None and row[c] != "":
                v = row[c]
                fields_[c] = tagline.fmt_str(v) if isinstance(v, str) else v
        lines.append(tagline.format_line(kind.upper(), fields_))
    return "\n".join(lines) + "\n"


def render_report(r: TaskRollup, fmt: str = "table") -> bytes:
    if fmt == "table":
        return _render_human(r).encode()
    if fmt == "csv":
        return _render_csv(r).encode()
    if fmt == "tl":
        return _render_tl(r).encode()
    raise UsageError(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")


def parse_report_csv(data: bytes | str) -> TaskRollup:
    """Rebuild a rollup from delimited output; inverse of ``render_report(..., "csv")``."""
    text = data.decode() if isinstance(data, bytes) else data
    reader = csv.DictReader(io.StringIO(text))
    out = TaskRollup()

    def num(row, k, cast=float):
        return cast(row[k]) if row.get(k) not in (None, "") else cast(0)

    def energies(row):
        return {k: num(row, k) for k in (*ENERGY_FIELDS, "total")}

    for row in reader:
        kind = row["kind"]
        if kind == "physical":
            out.physical[row["key"]] = PhysicalTask(
                row["key"], row["task"], row["name"], row["node"], num(row, "start"), num(row, "end"),
                records=num(row, "count", int), short_task=row["short_task"] == "1", **energies(row))
        elif kind == "logical":
            out.logical[row["key"]] = LogicalTask(row["key"], physical=num(row, "count", int),
                                                  short_tasks=num(row, "short_task", int), **energies(row))
        elif kind == "workflow":
            out.workflow = EnergyTotals(records=num(row, "count", int), **energies(row))
        elif kind == "unassigned":
            out.unassigned = EnergyTotals(records=num(row, "count", int), **energies(row))
        elif kind == "node":
            ns = NodeSummary(row["key"], intervals=num(row, "count", int), skipped=num(row, "skipped", int))
            for f in fields(NodeSummary):
                if f.name == "dram_available":
                    ns.dram_available = row[f.name] == "1"
                elif f.name not in ("node", "intervals", "skipped"):
                    setattr(ns, f.name, num(row, f.name))
            out.nodes[row["key"]] = ns
        else:
            raise CorruptRecordError(f"unknown row kind {kind!r}")
    return out


def energy_histogram(r: TaskRollup) -> list[tuple[str, list[tuple[str, float]]]]:
    """Per-physical-task totals grouped by logical task, largest first within a group."""
    groups: dict[str, list[tuple[str, float]]] = defaultdict(list)
    for uid, t in r.physical.items():
        groups[t.task_name].append((uid, t.total))
    return [(name, sorted(groups[name], key=lambda x: (-x[1], x[0]))) for name in sorted(groups)]
