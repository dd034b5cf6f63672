"""Monitoring lifecycle: pod discovery, pid mapping, interval sampling, attribution.

Two cadences drive a :class:`Monitor`: ``tick`` closes an attribution
interval (RAPL cadence) and ``poll`` discovers pods and their processes
(polling cadence). A pid found at a poll accrues energy from the first
interval that starts at or after the poll. When a tick and a poll fall on
the same instant the tick runs first.

:func:`run_replay` drives a monitor through a trace on a single thread;
:func:`run_live` runs both cadences as threads against a live backend.
"""

from __future__ import annotations

import heapq
import logging
import threading
from dataclasses import dataclass, field

from .attribution import attribute_interval
from .config import MonitorConfig
from .counters import CounterSample, StaticPowerProfile, estimate_static_power, ledger_for_interval
from .dataset import Dataset, SkippedInterval
from .errors import GapError, InsufficientDataError, InvalidIntervalError, MonitorStateError, PodSourceError, StartupError
from .pods import PodFilter
from .procfs import PodBinding, ProcessSample, discover_pids_for_pod, process_shares, same_instance
from .trace import ReplayBackend, Trace, from_us, to_us

log = logging.getLogger(__name__)


@dataclass
class TrackedProcess:
    node: str
    pid: int
    pod_uid: str
    since: float
    start: float | None = None


@dataclass
class NodeState:
    counters: dict
    processes: dict[int, ProcessSample]


@dataclass
class RunState:
    profile: StaticPowerProfile
    t0: float
    boundary: float
    interval: int = 0
    bindings: dict[str, PodBinding] = field(default_factory=dict)
    tracked: dict[tuple[str, int], TrackedProcess] = field(default_factory=dict)
    last: dict[str, NodeState] = field(default_factory=dict)


class NullPodSource:
    def list_pods(self, timestamp=None):
        return []


class Monitor:
    def __init__(self, config: MonitorConfig, backend, pod_source=None):
        self.config = config
        self.backend = backend
        self.pods = pod_source if pod_source is not None else getattr(backend, "pods", NullPodSource())
        self.pod_filter = PodFilter(config.pod_filter)
        self.state: RunState | None = None
        self.stopped = False
        self.records = []
        self.ledgers = []
        self.skipped = []
        self.stats = {"skipped": 0, "clamped": 0, "poll_failures": 0, "unreadable": 0}
        self._lock = threading.RLock()

    # -- lifecycle

    def start(self, timestamp: float | None = None) -> "Monitor":
        with self._lock:
            if self.state is not None:
                raise MonitorStateError("monitor already started")
            samples: list[CounterSample] = []
            for node in self.backend.nodes:
                node_samples = self.backend.idle_samples(node)
                if not node_samples:
                    raise StartupError(
                        f"no idle window for node {node}: static power needs an idle measurement before the workflow starts"
                    )
                samples.extend(node_samples)
            try:
                profile = estimate_static_power(samples)
            except (InsufficientDataError, InvalidIntervalError) as exc:
                raise StartupError(f"idle window unusable: {exc}") from exc
            t0 = self.backend.ready_time() if timestamp is None else timestamp
            self.state = RunState(profile=profile, t0=t0, boundary=t0)
            for node in self.backend.nodes:
                self.state.last[node] = NodeState(
                    self.backend.counters(node, t0), self._processes(node, t0)
                )
        self.poll(t0)
        return self

    def _require_running(self):
        if self.state is None:
            raise MonitorStateError("monitor not started")
        if self.stopped:
            raise MonitorStateError("monitor already stopped")

    def _processes(self, node: str, timestamp: float) -> dict[int, ProcessSample]:
        return self.backend.processes(node, timestamp)

    # -- pod polling

    def poll(self, timestamp: float) -> None:
        with self._lock:
            self._require_running()
            st = self.state
            try:
                pods = self.pods.list_pods(timestamp)
            except PodSourceError as exc:
                self.stats["poll_failures"] += 1
                log.warning("pod source unavailable, keeping previous state: %s", exc)
                return
            present = {p.uid: p for p in pods if self.pod_filter(p)}
            for uid, pod in sorted(present.items()):
                binding = st.bindings.get(uid)
                if binding is None:
                    binding = PodBinding(uid, pod.task, pod.node, pod.name, first_seen=timestamp)
                    st.bindings[uid] = binding
                binding.last_seen = timestamp
                if pod.node not in st.last:
                    continue
                table = self._processes(pod.node, timestamp)
                for pid in sorted(discover_pids_for_pod(uid, table)):
                    key = (pod.node, pid)
                    current = st.tracked.get(key)
                    if current is not None:
                        if current.pod_uid != uid:
                            log.warning("pid %s on %s already bound to pod %s", pid, pod.node, current.pod_uid)
                        continue
                    st.tracked[key] = TrackedProcess(pod.node, pid, uid, timestamp, table[pid].start)
                    binding.bind(pid, timestamp)

    # -- interval sampling

    def tick(self, timestamp: float) -> list:
        with self._lock:
            self._require_running()
            st = self.state
            if not timestamp > st.boundary:
                raise InvalidIntervalError(f"tick at {timestamp} does not advance past {st.boundary}")
            st.interval += 1
            start, end = st.boundary, timestamp
            closed = []
            for node in self.backend.nodes:
                closed.extend(self._close_node(node, st.interval, start, end))
            st.boundary = timestamp
            self.records.extend(closed)
            return closed

    def _close_node(self, node: str, index: int, start: float, end: float) -> list:
        st = self.state
        last = st.last[node]
        counters = {k: s for k, s in self.backend.counters(node, end).items() if s.timestamp > start}
        procs = self._processes(node, end)
        profile = st.profile.for_node(node)
        records = []
        try:
            ledger = ledger_for_interval(last.counters, counters, profile, start, end, node=node, index=index)
        except GapError as exc:
            ledger = None
            self.stats["skipped"] += 1
            self.skipped.append(SkippedInterval(node, index, start, end, "gap"))
            log.info("skipping interval %d on %s: %s", index, node, exc)

        topology = self.backend.topology(node)
        shares, t_total, m_total = process_shares(last.processes, procs, topology, node)
        if ledger is not None:
            ledger.t_cpu_total.update(t_total)
            ledger.m_total.update(m_total)
            self.stats["clamped"] += sum(1 for e in ledger.entries.values() if e.clamped > 0)
            self.ledgers.append(ledger)
            eligible = [
                pid
                for (n, pid), tp in st.tracked.items()
                if n == node and tp.since <= start and self._alive(tp, last.processes, procs)
            ]
            records = attribute_interval(
                shares, eligible, ledger, self.config.gamma, self.config.mode, self.config.model
            )

        # close exited or recycled pids
        for key in [k for k in st.tracked if k[0] == node]:
            tp = st.tracked[key]
            if not self._alive(tp, last.processes, procs):
                st.bindings[tp.pod_uid].release(tp.pid, end)
                del st.tracked[key]
        st.last[node] = NodeState(counters, procs)
        return records

    @staticmethod
    def _alive(tp: TrackedProcess, before: dict, after: dict) -> bool:
        cur = after.get(tp.pid)
        if cur is None:
            return False
        if tp.start is not None and cur.start is not None and tp.start != cur.start:
            return False
        old = before.get(tp.pid)
        return old is None or same_instance(old, cur)

    def stop(self, timestamp: float | None = None) -> Dataset:
        with self._lock:
            self._require_running()
            st = self.state
            if timestamp is None:
                timestamp = self.backend.now()
            if timestamp > st.boundary:
                self.tick(timestamp)
            for tp in st.tracked.values():
                st.bindings[tp.pod_uid].release(tp.pid, st.boundary)
            for binding in st.bindings.values():
                if binding.last_seen is None:
                    binding.last_seen = binding.first_seen
            self.stopped = True
            if hasattr(self.backend, "unreadable"):
                self.stats["unreadable"] = self.backend.unreadable
            node_domains = {n: {d for (s, d) in st.profile.for_node(n).entries} for n in self.backend.nodes}
            return Dataset(
                config=self.config,
                profile=st.profile,
                bindings=dict(st.bindings),
                ledgers=list(self.ledgers),
                skipped=list(self.skipped),
                records=list(self.records),
                start=st.t0,
                end=st.boundary,
                stats=dict(self.stats),
                node_domains=node_domains,
                backend=getattr(self.backend, "kind", "replay"),
            )


class ReplayMonitorBackend(ReplayBackend):
    """Replay backend with the lifecycle hooks the monitor expects."""

    def ready_time(self) -> float:
        ends = [m.end for m in (self.idle_window(n) for n in self.nodes) if m is not None]
        return max(ends) if ends else self.start_time

    def now(self) -> float:
        return self.end_time


def replay_schedule(t0: float, end: float, rapl_interval: float, poll_interval: float):
    """Yield ``(time, action)`` pairs up to ``end``; ticks precede polls at equal times."""
    t0_us, end_us = to_us(t0), to_us(end)
    rapl_us, poll_us = to_us(rapl_interval), to_us(poll_interval)
    heap = [(t0_us + rapl_us, 0, "tick", 1), (t0_us + poll_us, 1, "poll", 1)]
    while heap:
        t_us, prio, action, k = heapq.heappop(heap)
        if t_us > end_us:
            continue
        yield from_us(t_us), action
        step = rapl_us if action == "tick" else poll_us
        heapq.heappush(heap, (t0_us + (k + 1) * step, prio, action, k + 1))


def run_replay(trace: Trace, config: MonitorConfig | None = None, duration: float | None = None) -> Dataset:
    """Run the whole pipeline over a trace on one thread, deterministically."""
    config = config or MonitorConfig()
    backend = ReplayMonitorBackend(trace)
    monitor = Monitor(config, backend)
    monitor.start()
    t0 = monitor.state.t0
    end = backend.end_time if duration is None else min(backend.end_time, t0 + duration)
    for t, action in replay_schedule(t0, end, config.rapl_interval, config.poll_interval):
        if action == "tick":
            monitor.tick(t)
        else:
            monitor.poll(t)
    return monitor.stop(max(end, monitor.state.boundary))


def run_live(monitor: Monitor, duration: float | None = None, stop_event: threading.Event | None = None) -> Dataset:
    """Run sampling and pod polling as two periodic threads until stopped.

    Blocks for the idle window first. Stops after ``duration`` seconds or
    when ``stop_event`` is set.
    """
    clock = monitor.backend.now
    monitor.start()
    t0 = monitor.state.t0
    stop = stop_event or threading.Event()
    deadline = None if duration is None else t0 + duration
    errors: list[BaseException] = []

    def loop(period: float, action):
        k = 1
        while not stop.is_set():
            target = t0 + k * period
            if deadline is not None and target > deadline:
                return
            delay = target - clock()
            if delay > 0 and stop.wait(delay):
                return
            try:
                action(max(clock(), target))
            except BaseException as exc:  # surfaced to the caller after join
                errors.append(exc)
                stop.set()
                return
            k += 1

    threads = [
        threading.Thread(target=loop, args=(monitor.config.rapl_interval, monitor.tick), name="sampler", daemon=True),
        threading.Thread(target=loop, args=(monitor.config.poll_interval, monitor.poll), name="pod-poller", daemon=True),
    ]
    for th in threads:
        th.start()
    if deadline is None:
        stop.wait()
    else:
        stop.wait(max(0.0, deadline - clock()))
    stop.set()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]
    end = clock() if deadline is None else min(clock(), deadline)
    return monitor.stop(max(end, monitor.state.boundary))
