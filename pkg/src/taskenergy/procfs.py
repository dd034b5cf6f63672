"""Per-process CPU time and resident memory, socket apportionment, pod mapping."""

from __future__ import annotations

import logging
import os
from collections import defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .attribution import ProcessShare, SocketId

log = logging.getLogger(__name__)

PROC_ROOT = "/proc"


@dataclass(frozen=True)
class ProcessSample:
    """One observation of a process.

    Live samples carry the total ``cpu_time`` and the CPU the process last
    ran on; trace samples carry exact per-socket breakdowns instead.
    ``start`` identifies the process instance (kernel start time in live
    mode) so pid reuse can be told apart from a continuing process.
    """

    timestamp: float
    pid: int
    cpu_time: float
    rss: int
    last_cpu: int | None = None
    cpu_by_socket: Mapping[int, float] | None = None
    rss_by_socket: Mapping[int, int] | None = None
    cgroup: str | None = ""
    start: float | None = None


@dataclass
class TopologyMap:
    cpu_to_socket: dict[int, int]
    sockets: int = 1

    def __post_init__(self):
        if self.cpu_to_socket:
            self.sockets = max(self.sockets, max(self.cpu_to_socket.values()) + 1)

    def socket_of(self, cpu: int | None) -> int:
        if cpu is None:
            return 0
        return self.cpu_to_socket.get(cpu, 0)

    @classmethod
    def single(cls, sockets: int = 1) -> "TopologyMap":
        return cls({}, sockets)


@dataclass
class PodBinding:
    pod_uid: str
    task_name: str
    node: str
    name: str = ""
    pids: set[int] = field(default_factory=set)
    first_seen: float = 0.0
    last_seen: float | None = None
    # per pid, the [since, until] spans it belonged to the pod; a pid recycled
    # inside the same pod gets a second span
    spans: dict[int, list[list[float | None]]] = field(default_factory=dict)

    def bind(self, pid: int, since: float):
        self.pids.add(pid)
        self.spans.setdefault(pid, []).append([since, None])

    def release(self, pid: int, until: float):
        spans = self.spans.get(pid)
        if spans and spans[-1][1] is None:
            spans[-1][1] = until


# ---- parsers --------------------------------------------------------------


@dataclass(frozen=True)
class StatRecord:
    pid: int
    comm: str
    state: str
    utime: int
    stime: int
    starttime: int
    rss_pages: int
    processor: int


def parse_stat(text: str) -> StatRecord:
    # comm may contain spaces and parentheses; the last ')' closes it.
    lparen, rparen = text.index("("), text.rindex(")")
    fields = text[rparen + 2 :].split()
    # fields[0] is field 3 (state) of the stat record
    return StatRecord(
        pid=int(text[:lparen]),
        comm=text[lparen + 1 : rparen],
        state=fields[0],
        utime=int(fields[11]),
        stime=int(fields[12]),
        starttime=int(fields[19]),
        rss_pages=int(fields[21]),
        processor=int(fields[36]),
    )


def parse_status(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        key, sep, value = line.partition(":")
        if sep:
            out[key.strip()] = value.strip()
    return out


def vmrss_bytes(status: Mapping[str, str]) -> int | None:
    value = status.get("VmRSS")
    if value is None:
        return None
    number, _, unit = value.partition(" ")
    scale = {"kB": 1024, "mB": 1024**2, "gB": 1024**3, "": 1}[unit.strip()]
    return int(number) * scale


def parse_statm(text: str, page_size: int) -> int:
    return int(text.split()[1]) * page_size


def parse_cgroup(text: str) -> list[tuple[str, str, str]]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        hid, controllers, path = line.split(":", 2)
        out.append((hid, controllers, path))
    return out


def cgroup_paths(text: str) -> str:
    """All cgroup paths of a process joined by newlines, for substring matching."""
    return "\n".join(path for _, _, path in parse_cgroup(text))


def parse_cpuinfo(text: str) -> TopologyMap:
    mapping: dict[int, int] = {}
    cpu = None
    for line in text.splitlines():
        key, sep, value = line.partition(":")
        if not sep:
            continue
        key = key.strip()
        if key == "processor":
            cpu = int(value)
            mapping[cpu] = 0
        elif key == "physical id" and cpu is not None:
            mapping[cpu] = int(value)
    return TopologyMap(mapping)


class ProcfsReader:
    """Snapshot every process under a procfs root."""

    def __init__(self, root: str | os.PathLike = PROC_ROOT, clk_tck: int | None = None, page_size: int | None = None):
        self.root = Path(root)
        self.clk_tck = clk_tck or os.sysconf("SC_CLK_TCK")
        self.page_size = page_size or os.sysconf("SC_PAGE_SIZE")
        self.unreadable = 0

    def topology(self) -> TopologyMap:
        try:
            return parse_cpuinfo((self.root / "cpuinfo").read_text())
        except OSError:
            return TopologyMap.single()

    def pids(self) -> list[int]:
        return sorted(int(p.name) for p in self.root.iterdir() if p.name.isdigit())

    def sample(self, pid: int, timestamp: float) -> ProcessSample:
        base = self.root / str(pid)
        stat = parse_stat((base / "stat").read_text())
        rss = None
        try:
            rss = vmrss_bytes(parse_status((base / "status").read_text()))
        except OSError:
            pass
        if rss is None:
            # kernel threads have no VmRSS line
            try:
                rss = parse_statm((base / "statm").read_text(), self.page_size)
            except OSError:
                rss = stat.rss_pages * self.page_size
        try:
            cgroup = cgroup_paths((base / "cgroup").read_text())
        except OSError:
            cgroup = None
        return ProcessSample(
            timestamp=timestamp,
            pid=pid,
            cpu_time=(stat.utime + stat.stime) / self.clk_tck,
            rss=rss,
            last_cpu=stat.processor,
            cgroup=cgroup,
            start=stat.starttime / self.clk_tck,
        )

    def snapshot(self, timestamp: float) -> dict[int, ProcessSample]:
        out = {}
        for pid in self.pids():
            try:
                out[pid] = self.sample(pid, timestamp)
            except (OSError, ValueError, IndexError):
                # processes exit mid-scan
                self.unreadable += 1
        return out


# ---- pod mapping ------------------------------------------------------------


def uid_variants(pod_uid: str) -> tuple[str, ...]:
    """The raw UID and the systemd-driver form with dashes turned into underscores."""
    alt = pod_uid.replace("-", "_")
    return (pod_uid,) if alt == pod_uid else (pod_uid, alt)


def discover_pids_for_pod(pod_uid: str, metadata: Mapping[int, ProcessSample | str | None]) -> set[int]:
    """Pids whose cgroup path mentions the pod UID.

    ``metadata`` maps pid to a sample or a cgroup string; ``None`` marks
    metadata that could not be read, which is skipped.
    """
    variants = uid_variants(pod_uid)
    found = set()
    for pid, meta in metadata.items():
        cgroup = meta.cgroup if isinstance(meta, ProcessSample) else meta
        if not cgroup:
            continue
        if any(v in cgroup for v in variants):
            found.add(pid)
    return found


# ---- shares -----------------------------------------------------------------


def same_instance(prev: ProcessSample, next: ProcessSample) -> bool:
    if prev.start is not None and next.start is not None and prev.start != next.start:
        return False
    if next.cpu_time < prev.cpu_time:
        return False
    if prev.cpu_by_socket is not None and next.cpu_by_socket is not None:
        return all(next.cpu_by_socket.get(s, 0.0) >= v for s, v in prev.cpu_by_socket.items())
    return True


def cpu_time_deltas(
    prev: Mapping[int, ProcessSample], next: Mapping[int, ProcessSample], topology: TopologyMap
) -> dict[int, dict[int, float]]:
    """CPU seconds per pid and socket accrued between two snapshots.

    A pid absent from ``prev`` or recycled since counts its whole observed
    cumulative time. Without a per-socket breakdown the delta goes wholly
    to the socket of the CPU the process last ran on.
    """
    out: dict[int, dict[int, float]] = {}
    for pid, cur in next.items():
        old = prev.get(pid)
        if old is not None and not same_instance(old, cur):
            old = None
        if cur.cpu_by_socket is not None:
            before = old.cpu_by_socket if old is not None and old.cpu_by_socket is not None else {}
            out[pid] = {s: v - before.get(s, 0.0) for s, v in cur.cpu_by_socket.items()}
        else:
            delta = cur.cpu_time - (old.cpu_time if old is not None else 0.0)
            out[pid] = {topology.socket_of(cur.last_cpu): delta}
    return out


def _shares(values: Mapping[int, Mapping[int, float]], node: str) -> tuple[dict[int, dict[SocketId, float]], dict[SocketId, float]]:
    totals: dict[int, float] = defaultdict(float)
    for pid in sorted(values):
        for socket, v in sorted(values[pid].items()):
            totals[socket] += v
    shares = {}
    for pid, per_socket in values.items():
        shares[pid] = {
            SocketId(node, s): (v / totals[s] if totals[s] > 0 else 0.0) for s, v in per_socket.items()
        }
    return shares, {SocketId(node, s): t for s, t in sorted(totals.items())}


def cpu_time_shares(
    prev: Mapping[int, ProcessSample], next: Mapping[int, ProcessSample], topology: TopologyMap, node: str = ""
) -> tuple[dict[int, dict[SocketId, float]], dict[SocketId, float]]:
    """CPU-time share of each process per socket, and the per-socket totals.

    The denominator is the CPU time accrued by every observed process on
    the socket; an idle socket yields zero shares.
    """
    return _shares(cpu_time_deltas(prev, next, topology), node)


def rss_by_socket(sample: ProcessSample, topology: TopologyMap) -> dict[int, float]:
    if sample.rss_by_socket is not None:
        return dict(sample.rss_by_socket)
    return {topology.socket_of(sample.last_cpu): sample.rss}


def memory_shares(
    samples: Mapping[int, ProcessSample], topology: TopologyMap, node: str = ""
) -> tuple[dict[int, dict[SocketId, float]], dict[SocketId, float]]:
    """Resident-memory share per socket from end-of-interval samples."""
    return _shares({pid: rss_by_socket(s, topology) for pid, s in samples.items()}, node)


def process_shares(
    prev: Mapping[int, ProcessSample], next: Mapping[int, ProcessSample], topology: TopologyMap, node: str = ""
) -> tuple[dict[int, ProcessShare], dict[SocketId, float], dict[SocketId, float]]:
    rho, t_total = cpu_time_shares(prev, next, topology, node)
    sigma, m_total = memory_shares(next, topology, node)
    shares = {pid: ProcessShare(pid, rho.get(pid, {}), sigma.get(pid, {})) for pid in next}
    return shares, t_total, m_total


def share_sums(shares: Iterable[ProcessShare]) -> tuple[dict[SocketId, float], dict[SocketId, float]]:
    rho_sum: dict[SocketId, float] = defaultdict(float)
    sigma_sum: dict[SocketId, float] = defaultdict(float)
    for s in shares:
        for k, v in s.rho.items():
            rho_sum[k] += v
        for k, v in s.sigma.items():
            sigma_sum[k] += v
    return dict(rho_sum), dict(sigma_sum)
