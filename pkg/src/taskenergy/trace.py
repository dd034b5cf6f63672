"""Trace files: a deterministic stand-in for RAPL hardware and a cluster.

Grammar (one tagged line per record, header first)::

    TRACE version=1 nodes=n0,n1 sockets=2 domains=package,dram
          wrap.package=<uJ> wrap.dram=<uJ> tick=<s> cpu_tick=<s>
    RAPL    t=<s> node=<n> socket=<i> domain=<package|dram> uj=<int>
    PROC    t=<s> node=<n> pid=<int> cpu=<sock>:<units>,... rss=<sock>:<bytes>,...
            [cgroup=<path>] [start=<s>]
    POD     t=<s> uid=<uid> task=<name> node=<n> [name=<pod name>]
    GONE    t=<s> uid=<uid>
    IDLE    start=<s> end=<s> node=<n>
    SEGMENT t=<s> name=<label>

Events are ordered by ``t`` (``end`` for IDLE). CPU values are in units of
``cpu_tick`` seconds. All RAPL and PROC lines of one node sharing a
timestamp form one sampling batch; the PROC lines of a batch are the
complete process table of the node at that instant.
"""

from __future__ import annotations

import bisect
import io
from collections import defaultdict
from collections.abc import Iterator
from dataclasses import dataclass, field
from typing import Union

from . import tagline
from .attribution import Domain, LedgerKey, SocketId
from .counters import DEFAULT_WRAP_UJ, CounterSample
from .errors import TraceParseError
from .pods import PodInfo
from .procfs import ProcessSample, TopologyMap

TRACE_VERSION = 1


def to_us(seconds: float) -> int:
    return round(seconds * 1_000_000)


def from_us(us: int) -> float:
    return us / 1_000_000


@dataclass
class TraceHeader:
    nodes: tuple[str, ...] = ("n0",)
    sockets: int = 1
    domains: tuple[Domain, ...] = (Domain.CPU_PACKAGE, Domain.DRAM)
    wrap_uj: dict[Domain, int] = field(default_factory=lambda: dict(DEFAULT_WRAP_UJ))
    tick: float = 2.0
    cpu_tick: float = 1.0
    version: int = TRACE_VERSION

    def __post_init__(self):
        if not self.tick > 0:
            raise ValueError("tick must be positive")
        if not self.cpu_tick > 0:
            raise ValueError("cpu_tick must be positive")
        for d in self.domains:
            if self.wrap_uj.get(d, 0) <= 0:
                raise ValueError(f"wrap value for {d} must be positive")


@dataclass(frozen=True)
class RaplReading:
    t: float
    node: str
    socket: int
    domain: Domain
    uj: int


@dataclass(frozen=True)
class ProcSample:
    t: float
    node: str
    pid: int
    cpu: dict[int, float]
    rss: dict[int, int]
    cgroup: str = ""
    start: float | None = None


@dataclass(frozen=True)
class PodSeen:
    t: float
    uid: str
    task: str
    node: str
    name: str = ""


@dataclass(frozen=True)
class PodGone:
    t: float
    uid: str


@dataclass(frozen=True)
class IdleMark:
    start: float
    end: float
    node: str

    @property
    def t(self) -> float:
        return self.end


@dataclass(frozen=True)
class Segment:
    t: float
    name: str


TraceEvent = Union[RaplReading, ProcSample, PodSeen, PodGone, IdleMark, Segment]


@dataclass
class Trace:
    header: TraceHeader
    events: list[TraceEvent] = field(default_factory=list)

    @property
    def end_time(self) -> float:
        return self.events[-1].t if self.events else 0.0

    def of_type(self, kind) -> list:
        return [e for e in self.events if isinstance(e, kind)]


# ---- parsing ----------------------------------------------------------------


def _header(fields: dict[str, str]) -> TraceHeader:
    domains = tuple(Domain(d) for d in fields.get("domains", "package").split(","))
    wrap = {d: int(fields.get(f"wrap.{d.value}", DEFAULT_WRAP_UJ[d])) for d in domains}
    return TraceHeader(
        nodes=tuple(fields.get("nodes", "n0").split(",")),
        sockets=int(fields.get("sockets", 1)),
        domains=domains,
        wrap_uj=wrap,
        tick=float(fields.get("tick", 2.0)),
        cpu_tick=float(fields.get("cpu_tick", 1.0)),
        version=int(fields.get("version", TRACE_VERSION)),
    )


def _event(tag: str, f: dict[str, str], header: TraceHeader) -> TraceEvent:
    if tag == "RAPL":
        ev = RaplReading(float(f["t"]), f["node"], int(f["socket"]), Domain(f["domain"]), int(f["uj"]))
        if ev.domain not in header.domains:
            raise ValueError(f"domain {ev.domain} not declared in header")
        if not 0 <= ev.uj < header.wrap_uj[ev.domain]:
            raise ValueError(f"counter value {ev.uj} outside [0, {header.wrap_uj[ev.domain]})")
        if not 0 <= ev.socket < header.sockets:
            raise ValueError(f"socket {ev.socket} outside header's {header.sockets} sockets")
        return ev
    if tag == "PROC":
        start = f.get("start")
        rss = tagline.parse_map(f.get("rss", "-"), int)
        cpu = tagline.parse_map(f.get("cpu", "-"), float)
        if any(v < 0 for v in rss.values()) or any(v < 0 for v in cpu.values()):
            raise ValueError("negative cpu or rss value")
        return ProcSample(
            float(f["t"]),
            f["node"],
            int(f["pid"]),
            cpu,
            rss,
            tagline.parse_str(f.get("cgroup", "-")),
            float(start) if start is not None else None,
        )
    if tag == "POD":
        return PodSeen(
            float(f["t"]),
            tagline.parse_str(f["uid"]),
            tagline.parse_str(f.get("task", "-")),
            f["node"],
            tagline.parse_str(f.get("name", "-")),
        )
    if tag == "GONE":
        return PodGone(float(f["t"]), tagline.parse_str(f["uid"]))
    if tag == "IDLE":
        return IdleMark(float(f["start"]), float(f["end"]), f["node"])
    if tag == "SEGMENT":
        return Segment(float(f["t"]), tagline.parse_str(f["name"]))
    raise TraceParseError(f"unknown record tag {tag!r}")


def parse_trace(stream) -> Trace:
    """Parse a trace from text, bytes or a file object.

    Raises :class:`TraceParseError` with the offending line number for
    unknown tags, malformed fields, out-of-order timestamps and counter
    values at or above the wrap value.
    """
    if isinstance(stream, bytes):
        stream = stream.decode()
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    header = None
    events: list[TraceEvent] = []
    last_t = None
    for number, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            tag, fields = tagline.parse_line(line)
        except ValueError as exc:
            raise TraceParseError(str(exc), number) from None
        if header is None:
            if tag != "TRACE":
                raise TraceParseError("trace must start with a TRACE header line", number)
            try:
                header = _header(fields)
            except (KeyError, ValueError) as exc:
                raise TraceParseError(f"bad header: {exc}", number) from None
            continue
        try:
            event = _event(tag, fields, header)
        except TraceParseError as exc:
            raise TraceParseError(str(exc), number) from None
        except KeyError as exc:
            raise TraceParseError(f"{tag} record lacks field {exc}", number) from None
        except ValueError as exc:
            raise TraceParseError(f"{tag} record: {exc}", number) from None
        if getattr(event, "node", None) is not None and event.node not in header.nodes:
            raise TraceParseError(f"node {event.node!r} not declared in header", number)
        if last_t is not None and event.t < last_t:
            raise TraceParseError(f"timestamp {event.t} is before previous {last_t}", number)
        last_t = event.t
        events.append(event)
    if header is None:
        raise TraceParseError("empty trace: missing TRACE header")
    return Trace(header, events)


def read_trace(path) -> Trace:
    with open(path) as fh:
        return parse_trace(fh)


# ---- serialization -------------------------------------------------------------


def format_header(h: TraceHeader) -> str:
    fields = {
        "version": h.version,
        "nodes": ",".join(h.nodes),
        "sockets": h.sockets,
        "domains": ",".join(d.value for d in h.domains),
    }
    for d in h.domains:
        fields[f"wrap.{d.value}"] = h.wrap_uj[d]
    fields["tick"] = float(h.tick)
    fields["cpu_tick"] = float(h.cpu_tick)
    return tagline.format_line("TRACE", fields)


def format_event(e: TraceEvent) -> str:
    t = tagline.fmt_time
    if isinstance(e, RaplReading):
        return tagline.format_line(
            "RAPL", {"t": t(e.t), "node": e.node, "socket": e.socket, "domain": e.domain.value, "uj": e.uj}
        )
    if isinstance(e, ProcSample):
        fields = {
            "t": t(e.t),
            "node": e.node,
            "pid": e.pid,
            "cpu": tagline.fmt_map(e.cpu),
            "rss": tagline.fmt_map(e.rss),
            "cgroup": tagline.fmt_str(e.cgroup),
        }
        if e.start is not None:
            fields["start"] = t(e.start)
        return tagline.format_line("PROC", fields)
    if isinstance(e, PodSeen):
        return tagline.format_line(
            "POD",
            {
                "t": t(e.t),
                "uid": tagline.fmt_str(e.uid),
                "task": tagline.fmt_str(e.task),
                "node": e.node,
                "name": tagline.fmt_str(e.name),
            },
        )
    if isinstance(e, PodGone):
        return tagline.format_line("GONE", {"t": t(e.t), "uid": tagline.fmt_str(e.uid)})
    if isinstance(e, IdleMark):
        return tagline.format_line("IDLE", {"start": t(e.start), "end": t(e.end), "node": e.node})
    if isinstance(e, Segment):
        return tagline.format_line("SEGMENT", {"t": t(e.t), "name": tagline.fmt_str(e.name)})
    raise TypeError(f"not a trace event: {e!r}")


def serialize_trace(trace: Trace) -> str:
    lines = [format_header(trace.header)]
    lines.extend(format_event(e) for e in trace.events)
    return "\n".join(lines) + "\n"


def write_trace(trace: Trace, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_trace(trace))


# ---- replay -----------------------------------------------------------------------


@dataclass(frozen=True)
class ReplayEvent:
    t: float
    node: str | None
    payload: object


def replay(trace: Trace) -> Iterator[ReplayEvent]:
    """Yield the samples a live backend would have produced, in trace order.

    RAPL lines become :class:`CounterSample`, PROC lines become
    :class:`ProcessSample`; pod, idle and segment events pass through.
    """
    h = trace.header
    for e in trace.events:
        if isinstance(e, RaplReading):
            sample = CounterSample(e.t, SocketId(e.node, e.socket), e.domain, e.uj, h.wrap_uj[e.domain])
            yield ReplayEvent(e.t, e.node, sample)
        elif isinstance(e, ProcSample):
            cpu = {s: v * h.cpu_tick for s, v in e.cpu.items()}
            sample = ProcessSample(
                timestamp=e.t,
                pid=e.pid,
                cpu_time=sum(cpu[s] for s in sorted(cpu)),
                rss=sum(e.rss.values()),
                cpu_by_socket=cpu,
                rss_by_socket=dict(e.rss),
                cgroup=e.cgroup,
                start=e.start,
            )
            yield ReplayEvent(e.t, e.node, sample)
        else:
            yield ReplayEvent(e.t, getattr(e, "node", None), e)


class TracePodSource:
    def __init__(self, trace: Trace):
        self._seen: list[tuple[int, PodInfo]] = []
        self._gone: dict[str, int] = {}
        for e in trace.events:
            if isinstance(e, PodSeen):
                self._seen.append((to_us(e.t), PodInfo(e.uid, e.name, e.task, e.node)))
            elif isinstance(e, PodGone):
                self._gone.setdefault(e.uid, to_us(e.t))

    def list_pods(self, timestamp: float) -> list[PodInfo]:
        now = to_us(timestamp)
        return [
            pod
            for seen, pod in self._seen
            if seen <= now and self._gone.get(pod.uid, now + 1) > now
        ]


class ReplayBackend:
    """Answers sampling requests from an indexed trace.

    A request at time ``t`` sees the latest reading at or before ``t``.
    """

    kind = "replay"

    def __init__(self, trace: Trace):
        self.trace = trace
        h = trace.header
        self.nodes = list(h.nodes)
        self.domains = set(h.domains)
        self._counters: dict[str, dict[LedgerKey, tuple[list[int], list[CounterSample]]]] = {
            n: defaultdict(lambda: ([], [])) for n in self.nodes
        }
        batches: dict[str, dict[int, dict[int, ProcessSample]]] = {n: {} for n in self.nodes}
        self._idle: dict[str, IdleMark] = {}
        self.segments: list[Segment] = []
        for ev in replay(trace):
            p = ev.payload
            if isinstance(p, CounterSample):
                times, samples = self._counters[ev.node][p.key]
                times.append(to_us(p.timestamp))
                samples.append(p)
                batches[ev.node].setdefault(to_us(p.timestamp), {})
            elif isinstance(p, ProcessSample):
                batches[ev.node].setdefault(to_us(p.timestamp), {})[p.pid] = p
            elif isinstance(p, IdleMark):
                self._idle.setdefault(p.node, p)
            elif isinstance(p, Segment):
                self.segments.append(p)
        self._batch_times = {n: sorted(b) for n, b in batches.items()}
        self._batches = batches
        self.pods = TracePodSource(trace)
        self.start_time = trace.events[0].t if trace.events else 0.0
        self.end_time = trace.end_time

    def topology(self, node: str) -> TopologyMap:
        return TopologyMap.single(self.trace.header.sockets)

    def counters(self, node: str, timestamp: float) -> dict[LedgerKey, CounterSample]:
        now = to_us(timestamp)
        out = {}
        for key, (times, samples) in self._counters[node].items():
            i = bisect.bisect_right(times, now)
            if i:
                out[key] = samples[i - 1]
        return out

    def processes(self, node: str, timestamp: float) -> dict[int, ProcessSample]:
        times = self._batch_times[node]
        i = bisect.bisect_right(times, to_us(timestamp))
        return dict(self._batches[node][times[i - 1]]) if i else {}

    def idle_window(self, node: str) -> IdleMark | None:
        return self._idle.get(node)

    def idle_samples(self, node: str) -> list[CounterSample]:
        mark = self._idle.get(node)
        if mark is None:
            return []
        lo, hi = to_us(mark.start), to_us(mark.end)
        out = []
        for key in sorted(self._counters[node]):
            times, samples = self._counters[node][key]
            out.extend(s for t, s in zip(times, samples) if lo <= t <= hi)
        return out
