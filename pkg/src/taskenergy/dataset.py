"""The raw attribution dataset and its on-disk layout.

An output directory holds four tagged-line files:

``static.tl``
    ``RUN`` (monitor configuration and monitored span), ``STATS``
    (skipped intervals, clamp events, poll failures, unreadable pids),
    ``NODE`` (available domains per node) and one ``STATIC`` line per
    socket and domain with the idle power estimate.
``pods.tl``
    ``POD`` per physical task and ``BIND`` per (pod, pid) with the span
    during which the pid belonged to the pod.
``ledgers.tl``
    ``LEDGER`` per interval, socket and domain; ``SKIP`` for intervals
    dropped because of a counter gap.
``records.tl``
    ``REC`` per process and interval with the four attributed energies.
"""

from __future__ import annotations

import os
from collections.abc import Iterable
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import tagline
from .attribution import AttributionRecord, Domain, IntervalLedger, LedgerEntry, SocketId
from .config import MonitorConfig
from .counters import StaticPower, StaticPowerProfile
from .errors import CorruptRecordError, FlushError
from .procfs import PodBinding

FILES = ("static.tl", "pods.tl", "ledgers.tl", "records.tl")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class SkippedInterval:
    node: str
    interval: int
    start: float
    end: float
    reason: str = "gap"


@dataclass
class Dataset:
    config: MonitorConfig
    profile: StaticPowerProfile
    bindings: dict[str, PodBinding] = field(default_factory=dict)
    ledgers: list[IntervalLedger] = field(default_factory=list)
    skipped: list[SkippedInterval] = field(default_factory=list)
    records: list[AttributionRecord] = field(default_factory=list)
    start: float = 0.0
    end: float = 0.0
    stats: dict[str, int] = field(default_factory=dict)
    node_domains: dict[str, set[Domain]] = field(default_factory=dict)
    backend: str = "replay"

    def write(self, directory: str | os.PathLike) -> Path:
        out = Path(directory)
        try:
            out.mkdir(parents=True, exist_ok=True)
            for name, lines in (
                ("static.tl", self._static_lines()),
                ("pods.tl", self._pod_lines()),
                ("ledgers.tl", self._ledger_lines()),
                ("records.tl", self._record_lines()),
            ):
                with open(out / name, "w") as fh:
                    for line in lines:
                        fh.write(line + "\n")
        except OSError as exc:
            raise FlushError(f"could not write dataset: {exc}", str(out)) from exc
        return out

    # -- writers

    def _static_lines(self) -> Iterable[str]:
        c = self.config
        yield f"# taskenergy dataset v{FORMAT_VERSION}"
        yield tagline.format_line(
            "RUN",
            {
                "version": FORMAT_VERSION,
                "backend": self.backend,
                "gamma": float(c.gamma),
                "mode": c.mode,
                "model": c.model,
                "rapl_interval": float(c.rapl_interval),
                "poll_interval": float(c.poll_interval),
                "idle_window": float(c.idle_window),
                "short_task": float(c.short_task),
                "pod_filter": tagline.fmt_str(c.pod_filter or ""),
                "start": tagline.fmt_time(self.start),
                "end": tagline.fmt_time(self.end),
            },
        )
        yield tagline.format_line("STATS", {k: v for k, v in sorted(self.stats.items())})
        for node in sorted(self.node_domains):
            yield tagline.format_line(
                "NODE", {"node": node, "domains": ",".join(sorted(d.value for d in self.node_domains[node]))}
            )
        for (socket, domain), sp in sorted(self.profile.entries.items()):
            yield tagline.format_line(
                "STATIC",
                {
                    "node": socket.node,
                    "socket": socket.socket,
                    "domain": domain.value,
                    "watts": sp.p_static,
                    "over": sp.measured_over,
                    "at": tagline.fmt_time(sp.measured_at),
                },
            )

    def _pod_lines(self) -> Iterable[str]:
        for uid in sorted(self.bindings):
            b = self.bindings[uid]
            yield tagline.format_line(
                "POD",
                {
                    "uid": tagline.fmt_str(b.pod_uid),
                    "name": tagline.fmt_str(b.name),
                    "task": tagline.fmt_str(b.task_name),
                    "node": b.node,
                    "first": tagline.fmt_time(b.first_seen),
                    "last": tagline.fmt_time(b.last_seen if b.last_seen is not None else b.first_seen),
                },
            )
            for pid, since, until in sorted((p, s, u) for p, spans in b.spans.items() for s, u in spans):
                yield tagline.format_line(
                    "BIND",
                    {
                        "uid": tagline.fmt_str(b.pod_uid),
                        "node": b.node,
                        "pid": pid,
                        "since": tagline.fmt_time(since),
                        "until": tagline.fmt_time(until) if until is not None else "-",
                    },
                )

    def _ledger_lines(self) -> Iterable[str]:
        for ledger in self.ledgers:
            for (socket, domain), e in sorted(ledger.entries.items()):
                denom = ledger.t_cpu_total if domain is Domain.CPU_PACKAGE else ledger.m_total
                yield tagline.format_line(
                    "LEDGER",
                    {
                        "node": ledger.node,
                        "interval": ledger.index,
                        "start": tagline.fmt_time(ledger.interval_start),
                        "end": tagline.fmt_time(ledger.interval_end),
                        "socket": socket.socket,
                        "domain": domain.value,
                        "total": e.e_total,
                        "static": e.e_static,
                        "dynamic": e.e_dynamic,
                        "clamped": e.clamped,
                        "denominator": float(denom.get(socket, 0.0)),
                    },
                )
        for s in self.skipped:
            yield tagline.format_line(
                "SKIP",
                {
                    "node": s.node,
                    "interval": s.interval,
                    "start": tagline.fmt_time(s.start),
                    "end": tagline.fmt_time(s.end),
                    "reason": s.reason,
                },
            )

    def _record_lines(self) -> Iterable[str]:
        for r in self.records:
            yield format_record(r)

    # -- reader

    @classmethod
    def read(cls, directory: str | os.PathLike) -> "Dataset":
        d = Path(directory)
        for name in FILES:
            if not (d / name).is_file():
                raise FileNotFoundError(f"dataset file {d / name} missing")
        ds = cls(config=MonitorConfig(), profile=StaticPowerProfile({}))
        _read_static(ds, d / "static.tl")
        _read_pods(ds, d / "pods.tl")
        _read_ledgers(ds, d / "ledgers.tl")
        ds.records = read_records(d / "records.tl")
        return ds


def format_record(r: AttributionRecord) -> str:
    return tagline.format_line(
        "REC",
        {
            "node": r.node,
            "interval": r.interval,
            "start": tagline.fmt_time(r.interval_start),
            "end": tagline.fmt_time(r.interval_end),
            "pid": r.pid,
            "cpu_dyn": r.e_cpu_dynamic,
            "cpu_static": r.e_cpu_static,
            "dram_dyn": r.e_dram_dynamic,
            "dram_static": r.e_dram_static,
        },
    )


def _lines(path: Path):
    try:
        yield from tagline.iter_lines(path.read_text())
    except tagline.TaggedLineError as exc:
        raise CorruptRecordError(str(exc), str(path)) from None


def read_records(path: str | os.PathLike) -> list[AttributionRecord]:
    path = Path(path)
    out = []
    with open(path) as fh:
        for number, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                tag, f = tagline.parse_line(line)
                if tag != "REC":
                    raise ValueError(f"unexpected tag {tag!r}")
                rec = AttributionRecord(
                    pid=int(f["pid"]),
                    node=f["node"],
                    interval=int(f["interval"]),
                    interval_start=float(f["start"]),
                    interval_end=float(f["end"]),
                    e_cpu_dynamic=float(f["cpu_dyn"]),
                    e_cpu_static=float(f["cpu_static"]),
                    e_dram_dynamic=float(f["dram_dyn"]),
                    e_dram_static=float(f["dram_static"]),
                )
            except (KeyError, ValueError) as exc:
                raise CorruptRecordError(f"bad record: {exc}", str(path), number) from None
            if any(v < 0 for v in rec.energies()):
                raise CorruptRecordError("negative energy in record", str(path), number)
            out.append(rec)
    return out


def _read_static(ds: Dataset, path: Path):
    config_fields = {f.name for f in fields(MonitorConfig)}
    for number, tag, f in _lines(path):
        try:
            if tag == "RUN":
                cfg = {}
                for k in config_fields & f.keys():
                    if k == "pod_filter":
                        cfg[k] = tagline.parse_str(f[k]) or None
                    elif k in ("mode", "model"):
                        cfg[k] = f[k]
                    else:
                        cfg[k] = float(f[k])
                ds.config = MonitorConfig(**cfg)
                ds.start = float(f["start"])
                ds.end = float(f["end"])
                ds.backend = f.get("backend", "replay")
            elif tag == "STATS":
                ds.stats = {k: int(v) for k, v in f.items()}
            elif tag == "NODE":
                ds.node_domains[f["node"]] = {Domain(x) for x in f["domains"].split(",") if x}
            elif tag == "STATIC":
                key = (SocketId(f["node"], int(f["socket"])), Domain(f["domain"]))
                ds.profile.entries[key] = StaticPower(float(f["watts"]), float(f["over"]), float(f["at"]))
        except (KeyError, ValueError) as exc:
            raise CorruptRecordError(f"bad {tag} line: {exc}", str(path), number) from None


def _read_pods(ds: Dataset, path: Path):
    for number, tag, f in _lines(path):
        try:
            if tag == "POD":
                uid = tagline.parse_str(f["uid"])
                ds.bindings[uid] = PodBinding(
                    pod_uid=uid,
                    task_name=tagline.parse_str(f["task"]),
                    node=f["node"],
                    name=tagline.parse_str(f.get("name", "-")),
                    first_seen=float(f["first"]),
                    last_seen=float(f["last"]),
                )
            elif tag == "BIND":
                b = ds.bindings[tagline.parse_str(f["uid"])]
                pid = int(f["pid"])
                b.pids.add(pid)
                until = None if f["until"] == "-" else float(f["until"])
                b.spans.setdefault(pid, []).append([float(f["since"]), until])
        except (KeyError, ValueError) as exc:
            raise CorruptRecordError(f"bad {tag} line: {exc}", str(path), number) from None


def _read_ledgers(ds: Dataset, path: Path):
    by_interval: dict[tuple[str, int], IntervalLedger] = {}
    for number, tag, f in _lines(path):
        try:
            if tag == "LEDGER":
                key = (f["node"], int(f["interval"]))
                ledger = by_interval.get(key)
                if ledger is None:
                    ledger = IntervalLedger(float(f["start"]), float(f["end"]), node=key[0], index=key[1])
                    by_interval[key] = ledger
                    ds.ledgers.append(ledger)
                socket = SocketId(f["node"], int(f["socket"]))
                domain = Domain(f["domain"])
                ledger.entries[(socket, domain)] = LedgerEntry(
                    float(f["total"]), float(f["static"]), float(f["dynamic"]), float(f["clamped"])
                )
                denom = ledger.t_cpu_total if domain is Domain.CPU_PACKAGE else ledger.m_total
                denom[socket] = float(f["denominator"])
            elif tag == "SKIP":
                ds.skipped.append(
                    SkippedInterval(f["node"], int(f["interval"]), float(f["start"]), float(f["end"]), f["reason"])
                )
        except (KeyError, ValueError) as exc:
            raise CorruptRecordError(f"bad {tag} line: {exc}", str(path), number) from None
