"""Synthetic traces with a known power law and exact ground truth.

A scenario describes nodes, pods with their processes and loads, and
optional unrelated background load. Process ``i`` on socket ``s`` with
load ``u`` (fraction of the socket's capacity) draws ``p_dyn * u**gamma_true``
watts of package power; resident memory ``m`` draws
``p_dyn_dram * (m / mem_per_socket)**gamma_true``. Node counters integrate
static plus dynamic power, round to microjoules and fold through the wrap
value.

With ``housekeeping="calibrated"`` every node also runs an untracked,
powerless system process whose CPU time (and resident memory) is chosen so
that the credits of the task processes sum to one on each socket. Under
that construction faithful attribution with ``gamma == gamma_true`` is
exact, which is what makes the exponent recoverable from the trace alone.
"""

from __future__ import annotations

import json
import math
import os
import uuid
from collections import defaultdict
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tagline
from .attribution import Domain, check_gamma
from .counters import DEFAULT_WRAP_UJ, UJ_PER_J
from .errors import InfeasibleScenarioError
from .trace import (
    IdleMark,
    PodGone,
    PodSeen,
    ProcSample,
    RaplReading,
    Segment,
    Trace,
    TraceHeader,
    from_us,
    to_us,
)

HOUSEKEEPING_PID = 2
HOUSEKEEPING_CGROUP = "/system.slice/housekeeping.service"
HOUSEKEEPING_MODES = ("calibrated", "none")


def _per_socket(value, cast=float) -> dict[int, float]:
    if isinstance(value, Mapping):
        return {int(k): cast(v) for k, v in value.items()}
    return {0: cast(value)}


def _per_domain(value) -> dict[Domain, float]:
    return {Domain(k): float(v) for k, v in value.items()}


@dataclass
class NodeSpec:
    name: str
    sockets: int = 1
    cores_per_socket: int = 16
    mem_bytes_per_socket: int = 64 * 2**30
    p_static: dict[Domain, float] = field(default_factory=lambda: {Domain.CPU_PACKAGE: 40.0, Domain.DRAM: 5.0})
    p_dynamic: dict[Domain, float] = field(default_factory=lambda: {Domain.CPU_PACKAGE: 90.0, Domain.DRAM: 10.0})


@dataclass
class ProcessSpec:
    pid: int
    load: dict[int, float]
    mem: dict[int, int] = field(default_factory=dict)
    start: float | None = None
    end: float | None = None


@dataclass
class TaskSpec:
    name: str
    task: str
    node: str
    start: float
    end: float
    processes: list[ProcessSpec]
    uid: str | None = None


@dataclass
class BackgroundSpec:
    node: str
    pid: int
    load: dict[int, float]
    start: float
    end: float
    mem: dict[int, int] = field(default_factory=dict)
    cgroup: str = "/user.slice/stress.scope"


@dataclass
class Scenario:
    """All times except ``idle_window`` are relative to the end of the idle window."""

    nodes: list[NodeSpec]
    tasks: list[TaskSpec] = field(default_factory=list)
    background: list[BackgroundSpec] = field(default_factory=list)
    segments: list[tuple[float, str]] = field(default_factory=list)
    seed: int = 0
    tick: float = 2.0
    cpu_tick: float = 1.0
    idle_window: float = 30.0
    duration: float = 60.0
    gamma_true: float = 0.3
    noise_j: float = 0.0
    housekeeping: str = "calibrated"
    domains: tuple[Domain, ...] = (Domain.CPU_PACKAGE, Domain.DRAM)
    counter_start_uj: dict[Domain, int] | None = None

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scenario":
        nodes = []
        for n in d.get("nodes", [{"name": "n0"}]):
            n = dict(n)
            for key in ("p_static", "p_dynamic"):
                if key in n:
                    n[key] = _per_domain(n[key])
            nodes.append(NodeSpec(**n))
        tasks = []
        for t in d.get("tasks", []):
            t = dict(t)
            procs = []
            for p in t.pop("processes"):
                p = dict(p)
                p["load"] = _per_socket(p["load"])
                p["mem"] = _per_socket(p.get("mem", 0), int)
                procs.append(ProcessSpec(**p))
            tasks.append(TaskSpec(processes=procs, **t))
        background = []
        for b in d.get("background", []):
            b = dict(b)
            b["load"] = _per_socket(b["load"])
            b["mem"] = _per_socket(b.get("mem", 0), int)
            background.append(BackgroundSpec(**b))
        rest = {
            k: d[k]
            for k in ("seed", "tick", "cpu_tick", "idle_window", "duration", "gamma_true", "noise_j", "housekeeping")
            if k in d
        }
        if "domains" in d:
            rest["domains"] = tuple(Domain(x) for x in d["domains"])
        if d.get("counter_start_uj") is not None:
            rest["counter_start_uj"] = {Domain(k): int(v) for k, v in d["counter_start_uj"].items()}
        segments = [(float(t), str(name)) for t, name in d.get("segments", [])]
        return cls(nodes=nodes, tasks=tasks, background=background, segments=segments, **rest)

    def to_dict(self) -> dict:
        def clean(obj):
            if isinstance(obj, Domain):
                return obj.value
            if isinstance(obj, dict):
                return {clean(k): clean(v) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [clean(v) for v in obj]
            return obj

        return clean(asdict(self))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class GroundTruth:
    """Exact energies over the monitored span (after the idle window)."""

    gamma_true: float
    process: dict[tuple[str, int], dict[Domain, float]] = field(default_factory=dict)
    task: dict[str, float] = field(default_factory=dict)
    node: dict[tuple[str, int, Domain], tuple[float, float]] = field(default_factory=dict)
    t0: float = 0.0
    end: float = 0.0

    @property
    def dynamic_total(self) -> float:
        return math.fsum(dyn for _, dyn in self.node.values())

    @property
    def static_total(self) -> float:
        return math.fsum(st for st, _ in self.node.values())

    def lines(self) -> list[str]:
        out = [tagline.format_line("TRUTHRUN", {"gamma": self.gamma_true, "t0": tagline.fmt_time(self.t0), "end": tagline.fmt_time(self.end)})]
        for (node, pid), per in sorted(self.process.items()):
            for domain, joules in sorted(per.items()):
                out.append(tagline.format_line("TRUTH", {"node": node, "pid": pid, "domain": domain.value, "dynamic": joules}))
        for uid, joules in sorted(self.task.items()):
            out.append(tagline.format_line("TASKTRUTH", {"uid": tagline.fmt_str(uid), "dynamic": joules}))
        for (node, socket, domain), (st, dyn) in sorted(self.node.items()):
            out.append(
                tagline.format_line(
                    "NODETRUTH", {"node": node, "socket": socket, "domain": domain.value, "static": st, "dynamic": dyn}
                )
            )
        return out

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.lines()) + "\n")

    @classmethod
    def read(cls, path: str | os.PathLike) -> "GroundTruth":
        with open(path) as fh:
            text = fh.read()
        gt = cls(gamma_true=0.0)
        for _, tag, f in tagline.iter_lines(text):
            if tag == "TRUTHRUN":
                gt.gamma_true, gt.t0, gt.end = float(f["gamma"]), float(f["t0"]), float(f["end"])
            elif tag == "TRUTH":
                gt.process.setdefault((f["node"], int(f["pid"])), {})[Domain(f["domain"])] = float(f["dynamic"])
            elif tag == "TASKTRUTH":
                gt.task[tagline.parse_str(f["uid"])] = float(f["dynamic"])
            elif tag == "NODETRUTH":
                gt.node[(f["node"], int(f["socket"]), Domain(f["domain"]))] = (float(f["static"]), float(f["dynamic"]))
        return gt


# ---- generation ---------------------------------------------------------------


def pod_cgroup(uid: str, container: str) -> str:
    """Host cgroup path of a container under the systemd cgroup driver."""
    u = uid.replace("-", "_")
    return (
        "/kubepods.slice/kubepods-burstable.slice/"
        f"kubepods-burstable-pod{u}.slice/cri-containerd-{container}.scope"
    )


@dataclass
class _Proc:
    node: str
    pid: int
    load: dict[int, float]
    mem: dict[int, int]
    start_us: int
    end_us: int
    cgroup: str
    task_uid: str | None
    tracked: bool

    def active(self, a: int, b: int) -> bool:
        return self.start_us <= a and b <= self.end_us

    def present(self, t: int) -> bool:
        return self.start_us <= t <= self.end_us


def _check(scn: Scenario) -> None:
    check_gamma(scn.gamma_true)
    if scn.housekeeping not in HOUSEKEEPING_MODES:
        raise InfeasibleScenarioError(f"housekeeping must be one of {HOUSEKEEPING_MODES}")
    if Domain.CPU_PACKAGE not in scn.domains:
        raise InfeasibleScenarioError("the package domain is required")
    tick = to_us(scn.tick)
    if tick <= 0 or scn.duration <= 0 or scn.idle_window < 2 * scn.tick:
        raise InfeasibleScenarioError("tick and duration must be positive and the idle window at least two ticks")
    for label, value in [("idle_window", scn.idle_window), ("duration", scn.duration)]:
        if to_us(value) % tick:
            raise InfeasibleScenarioError(f"{label}={value} is not a multiple of the tick {scn.tick}")
    names = {n.name for n in scn.nodes}
    if len(names) != len(scn.nodes) or not names:
        raise InfeasibleScenarioError("node names must be unique and non-empty")
    spans = [(t.start, t.end, f"task {t.name}") for t in scn.tasks]
    spans += [(p.start, p.end, f"process {p.pid}") for t in scn.tasks for p in t.processes if p.start is not None or p.end is not None]
    spans += [(b.start, b.end, f"background {b.pid}") for b in scn.background]
    for a, b, what in spans:
        if a is None or b is None:
            continue
        if to_us(a) % tick or to_us(b) % tick:
            raise InfeasibleScenarioError(f"{what} span [{a}, {b}] is not aligned to the tick {scn.tick}")
        if not 0 <= a < b <= scn.duration:
            raise InfeasibleScenarioError(f"{what} span [{a}, {b}] outside [0, {scn.duration}]")
    min_static = min(n.p_static.get(d, 0.0) for n in scn.nodes for d in scn.domains)
    if scn.noise_j < 0 or (scn.noise_j > 0 and 2 * scn.noise_j >= min_static * scn.tick):
        raise InfeasibleScenarioError("noise must keep every counter monotone: 2*noise_j < p_static*tick")


def _processes(scn: Scenario, rng: np.random.Generator) -> tuple[list[_Proc], dict[str, tuple[str, str]]]:
    t0 = to_us(scn.idle_window)
    nodes = {n.name: n for n in scn.nodes}
    procs: list[_Proc] = []
    pods: dict[str, tuple[str, str]] = {}
    seen_pids: set[tuple[str, int]] = set()

    def add(p: _Proc):
        if (p.node, p.pid) in seen_pids or p.pid == HOUSEKEEPING_PID:
            raise InfeasibleScenarioError(f"pid {p.pid} used twice on node {p.node}")
        sockets = nodes[p.node].sockets
        if any(s >= sockets or s < 0 for s in list(p.load) + list(p.mem)):
            raise InfeasibleScenarioError(f"pid {p.pid} uses a socket outside 0..{sockets - 1}")
        if any(not 0 <= u <= 1 for u in p.load.values()) or any(m < 0 for m in p.mem.values()):
            raise InfeasibleScenarioError(f"pid {p.pid} load must lie in [0, 1] and memory be non-negative")
        seen_pids.add((p.node, p.pid))
        procs.append(p)

    for task in scn.tasks:
        if task.node not in nodes:
            raise InfeasibleScenarioError(f"task {task.name} on unknown node {task.node}")
        if task.name in pods:
            raise InfeasibleScenarioError(f"task name {task.name} used twice")
        drawn = str(uuid.UUID(bytes=rng.bytes(16), version=4))
        uid = task.uid or drawn
        container = rng.bytes(32).hex()
        pods[task.name] = (uid, task.task)
        for p in task.processes:
            start = task.start if p.start is None else p.start
            end = task.end if p.end is None else p.end
            if not task.start <= start < end <= task.end:
                raise InfeasibleScenarioError(f"process {p.pid} outside its task {task.name}")
            add(
                _Proc(task.node, p.pid, p.load, p.mem, t0 + to_us(start), t0 + to_us(end),
                      pod_cgroup(uid, container), uid, True)
            )
    for b in scn.background:
        if b.node not in nodes:
            raise InfeasibleScenarioError(f"background pid {b.pid} on unknown node {b.node}")
        add(_Proc(b.node, b.pid, b.load, b.mem, t0 + to_us(b.start), t0 + to_us(b.end), b.cgroup, None, False))
    return procs, pods


def _housekeeping(values: list[float], gamma: float) -> float:
    """Extra quantity making the power-law credits of ``values`` sum to one."""
    values = [v for v in values if v > 0]
    if len(values) < 2 or gamma == 0:
        return 0.0
    # (sum v^g)^(1/g) >= sum v for g <= 1
    return max(math.fsum(v**gamma for v in values) ** (1.0 / gamma) - math.fsum(values), 0.0)


def _dyn_power(p_dyn: float, fraction: float, gamma: float) -> float:
    if fraction <= 0:
        return 0.0
    return p_dyn * fraction**gamma


def generate_synthetic(scn: Scenario) -> tuple[Trace, GroundTruth]:
    """Build the trace and ground truth of a scenario; deterministic in ``scn.seed``."""
    _check(scn)
    rng = np.random.default_rng(scn.seed)
    procs, pods = _processes(scn, rng)
    tick = to_us(scn.tick)
    t0 = to_us(scn.idle_window)
    end = t0 + to_us(scn.duration)
    times = list(range(0, end + 1, tick))
    gamma = scn.gamma_true
    sockets = max(n.sockets for n in scn.nodes)
    for n in scn.nodes:
        if n.sockets != sockets:
            raise InfeasibleScenarioError("all nodes must have the same socket count")
    wrap = {d: DEFAULT_WRAP_UJ[d] for d in scn.domains}
    header = TraceHeader(
        nodes=tuple(n.name for n in scn.nodes), sockets=sockets, domains=tuple(scn.domains),
        wrap_uj=wrap, tick=scn.tick, cpu_tick=scn.cpu_tick,
    )
    if scn.counter_start_uj is not None:
        start_uj = {d: int(scn.counter_start_uj.get(d, 0)) % wrap[d] for d in scn.domains}
        starts = {(n.name, s, d): start_uj[d] for n in scn.nodes for s in range(sockets) for d in scn.domains}
    else:
        starts = {
            (n.name, s, d): int(rng.integers(0, wrap[d]))
            for n in scn.nodes for s in range(sockets) for d in scn.domains
        }

    truth = GroundTruth(gamma_true=gamma, t0=from_us(t0), end=from_us(end))
    cum_j = defaultdict(float)              # true cumulative energy per (node, socket, domain)
    cpu_cum: dict[tuple[str, int], dict[int, float]] = {}
    hk_cpu = {(n.name, s): 0.0 for n in scn.nodes for s in range(sockets)}
    hk_rss = {(n.name, s): 0 for n in scn.nodes for s in range(sockets)}
    node_specs = {n.name: n for n in scn.nodes}
    segments = sorted(scn.segments)
    events = []
    pods_by_start = defaultdict(list)
    pods_by_end = defaultdict(list)
    for task in scn.tasks:
        pods_by_start[t0 + to_us(task.start)].append(task)
        pods_by_end[t0 + to_us(task.end)].append(task)

    seg_i = 0
    for k, t in enumerate(times):
        if k > 0:
            a = times[k - 1]
            dt = from_us(t - a)
            for node in scn.nodes:
                cores = node.cores_per_socket
                for s in range(sockets):
                    # utilisation and memory per process on this socket over [a, t]
                    active = [p for p in procs if p.node == node.name and p.active(a, t)]
                    loads = {p.pid: p.load.get(s, 0.0) for p in active}
                    mems = {p.pid: p.mem.get(s, 0) for p in active}
                    total_load = math.fsum(loads.values())
                    if total_load > 1 + 1e-12:
                        raise InfeasibleScenarioError(
                            f"loads on {node.name} socket {s} sum to {total_load:.6g} > 1 during [{from_us(a - t0)}, {from_us(t - t0)}]"
                        )
                    if sum(mems.values()) > node.mem_bytes_per_socket:
                        raise InfeasibleScenarioError(f"memory on {node.name} socket {s} exceeds capacity")
                    for p in active:
                        per = cpu_cum.setdefault((p.node, p.pid), {})
                        per[s] = per.get(s, 0.0) + loads[p.pid] * dt * cores / scn.cpu_tick
                    if scn.housekeeping == "calibrated":
                        tracked = [p for p in active if p.tracked]
                        hk_cpu[(node.name, s)] += _housekeeping([loads[p.pid] * dt * cores for p in tracked], gamma) / scn.cpu_tick
                        hk_rss[(node.name, s)] = int(round(_housekeeping([float(mems[p.pid]) for p in tracked], gamma)))
                    for domain in scn.domains:
                        if domain is Domain.CPU_PACKAGE:
                            fractions = {pid: u for pid, u in loads.items()}
                        else:
                            fractions = {pid: m / node.mem_bytes_per_socket for pid, m in mems.items()}
                        p_dyn = node.p_dynamic.get(domain, 0.0)
                        dyn = {pid: _dyn_power(p_dyn, f, gamma) * dt for pid, f in fractions.items()}
                        static = node.p_static.get(domain, 0.0) * dt
                        total_dyn = math.fsum(dyn[pid] for pid in sorted(dyn))
                        cum_j[(node.name, s, domain)] += static + total_dyn
                        if a >= t0:
                            st, dy = truth.node.get((node.name, s, domain), (0.0, 0.0))
                            truth.node[(node.name, s, domain)] = (st + static, dy + total_dyn)
                            for p in active:
                                if not p.tracked:
                                    continue
                                per_proc = truth.process.setdefault((p.node, p.pid), {})
                                per_proc[domain] = per_proc.get(domain, 0.0) + dyn[p.pid]
                                truth.task[p.task_uid] = truth.task.get(p.task_uid, 0.0) + dyn[p.pid]

        while seg_i < len(segments) and t0 + to_us(segments[seg_i][0]) <= t:
            events.append(Segment(from_us(t0 + to_us(segments[seg_i][0])), segments[seg_i][1]))
            seg_i += 1
        ts = from_us(t)
        for task in pods_by_start.get(t, []):
            pod_name = "nf-" + rng.bytes(16).hex()
            events.append(PodSeen(ts, pods[task.name][0], task.task, task.node, pod_name))
        for node in scn.nodes:
            for s in range(sockets):
                for domain in scn.domains:
                    key = (node.name, s, domain)
                    uj = starts[key] + int(round(cum_j[key] * UJ_PER_J))
                    if scn.noise_j > 0 and k > 0:
                        uj += int(round(rng.uniform(-scn.noise_j, scn.noise_j) * UJ_PER_J))
                    events.append(RaplReading(ts, node.name, s, domain, uj % wrap[domain]))
            events.append(
                ProcSample(
                    ts, node.name, HOUSEKEEPING_PID,
                    {s: hk_cpu[(node.name, s)] for s in range(sockets)},
                    {s: hk_rss[(node.name, s)] for s in range(sockets)},
                    HOUSEKEEPING_CGROUP, 0.0,
                )
            )
            for p in sorted((p for p in procs if p.node == node.name and p.present(t)), key=lambda p: p.pid):
                cpu = dict(cpu_cum.get((p.node, p.pid), {s: 0.0 for s in p.load}))
                for s in p.load:
                    cpu.setdefault(s, 0.0)
                rss = {s: (m if t > p.start_us else 0) for s, m in p.mem.items()} or {0: 0}
                events.append(ProcSample(ts, node.name, p.pid, cpu, rss, p.cgroup, from_us(p.start_us)))
        if t == t0:
            for node in scn.nodes:
                events.append(IdleMark(0.0, ts, node.name))
        for task in pods_by_end.get(t, []):
            events.append(PodGone(ts, pods[task.name][0]))
    return Trace(header, events), truth


# ---- scenario builders ---------------------------------------------------------


def _node(name: str = "n0", sockets: int = 1, **kw) -> NodeSpec:
    return NodeSpec(name=name, sockets=sockets, **kw)


def staircase(step: float = 20.0, seed: int = 0, gamma_true: float = 0.3) -> Scenario:
    """One process at 0%, 10%, ..., 100% load, one step each."""
    tasks = []
    for i in range(1, 11):
        tasks.append(
            TaskSpec(
                name=f"nf-step{i:02d}", task="STAIRCASE", node="n0", start=i * step, end=(i + 1) * step,
                processes=[ProcessSpec(pid=1000 + i, load={0: i / 10}, mem={0: i * 2**30})],
            )
        )
    return Scenario(nodes=[_node()], tasks=tasks, seed=seed, duration=12 * step, gamma_true=gamma_true)


def calibration(gamma_true: float = 0.3, seed: int = 0, phases: int = 12, phase_len: float = 20.0) -> Scenario:
    """Phases of parallel tasks with heterogeneous loads, all aligned to pod polls."""
    rng = np.random.default_rng(seed)
    tasks = []
    pid = 1000
    for ph in range(phases):
        n = int(rng.integers(1, 5))
        loads = rng.uniform(0.05, 0.9 / n, n)
        mems = rng.integers(1, 8, n) * 2**30
        for j in range(n):
            pid += 1
            tasks.append(
                TaskSpec(
                    name=f"nf-cal{ph:02d}{j}", task=f"CAL_{j}", node="n0",
                    start=ph * phase_len, end=(ph + 1) * phase_len,
                    processes=[ProcessSpec(pid=pid, load={0: round(float(loads[j]), 4)}, mem={0: int(mems[j])})],
                )
            )
    return Scenario(nodes=[_node()], tasks=tasks, seed=seed, duration=phases * phase_len, gamma_true=gamma_true)


def random_scenario(seed: int, intervals: int = 100, max_processes: int = 5, max_sockets: int = 2,
                    tick: float = 2.0, gamma_true: float | None = None) -> Scenario:
    """Random pods, loads and lifetimes; processes may span sockets and start mid-run."""
    rng = np.random.default_rng(seed)
    sockets = int(rng.integers(1, max_sockets + 1))
    n_procs = int(rng.integers(1, max_processes + 1))
    duration = intervals * tick
    slots = intervals
    tasks = []
    pid = 100
    remaining = n_procs
    while remaining:
        k = int(rng.integers(1, remaining + 1))
        remaining -= k
        a = int(rng.integers(0, slots // 2))
        b = int(rng.integers(a + 2, slots + 1))
        procs = []
        for _ in range(k):
            pid += int(rng.integers(1, 50))
            load = {s: round(float(rng.uniform(0.0, 0.95 / n_procs)), 6) for s in range(sockets) if rng.random() < 0.8 or s == 0}
            mem = {s: int(rng.integers(0, 4 * 2**30)) for s in load}
            pa = int(rng.integers(a, max(a + 1, (a + b) // 2)))
            pb = int(rng.integers(pa + 1, b + 1))
            procs.append(ProcessSpec(pid=pid, load=load, mem=mem, start=pa * tick, end=pb * tick))
        tasks.append(
            TaskSpec(name=f"nf-{rng.bytes(4).hex()}", task=f"PROC_{len(tasks) % 3}", node="n0",
                     start=a * tick, end=b * tick, processes=procs)
        )
    background = []
    if rng.random() < 0.5:
        background.append(BackgroundSpec("n0", 50, {0: round(float(rng.uniform(0.0, 0.05)), 6)}, 0.0, duration))
    return Scenario(
        nodes=[_node(sockets=sockets)], tasks=tasks, background=background, seed=seed, tick=tick,
        duration=duration, gamma_true=float(rng.uniform(0.1, 0.9)) if gamma_true is None else gamma_true,
        housekeeping="calibrated" if rng.random() < 0.5 else "none",
        noise_j=float(rng.uniform(0, 5.0)) if rng.random() < 0.5 else 0.0,
    )


def colocated_pair(extra: float = 0.25, gamma_true: float = 0.3, seed: int = 7,
                   loads=(0.3, 0.5, 0.7, 0.4, 0.6), task_len: float = 40.0) -> tuple[Scenario, Scenario]:
    """An isolated run and the same run next to unrelated CPU load.

    Tasks run one after another so each owns the socket; the loaded run adds
    a non-workflow process whose CPU time is ``extra`` times the task's.
    """
    tasks = [
        TaskSpec(
            name=f"nf-seq{i:02d}", task=f"STEP_{i % 2}", node="n0",
            start=i * task_len, end=(i + 1) * task_len,
            processes=[ProcessSpec(pid=2000 + i, load={0: u}, mem={0: (i + 1) * 2**30})],
            uid=str(uuid.UUID(int=i + 1, version=4)),
        )
        for i, u in enumerate(loads)
    ]
    duration = len(loads) * task_len + 10.0
    isolated = Scenario(nodes=[_node()], tasks=tasks, seed=seed, duration=duration, gamma_true=gamma_true,
                        segments=[(0.0, "isolated")])
    stress = [
        BackgroundSpec("n0", 3000 + i, {0: extra * u}, i * task_len, (i + 1) * task_len)
        for i, u in enumerate(loads)
    ]
    loaded = Scenario(nodes=[_node()], tasks=[TaskSpec(**{**asdict(t), "processes": t.processes}) for t in tasks],
                      background=stress, seed=seed, duration=duration, gamma_true=gamma_true,
                      segments=[(0.0, "loaded")])
    return isolated, loaded


def rangeland(n_tasks: int = 300, parallel: int = 8, seed: int = 3) -> Scenario:
    """Hundreds of sub-10 s tasks, ``parallel`` at a time.

    Each task outlives one pod poll so the monitor sees every pod.
    """
    rng = np.random.default_rng(seed)
    tick = 2.0
    lanes = [0.0] * parallel
    tasks = []
    for i in range(n_tasks):
        lane = int(np.argmin(lanes))
        length = float(rng.choice([6.0, 8.0]))
        start = lanes[lane]
        lanes[lane] = start + length + tick
        tasks.append(
            TaskSpec(
                name=f"nf-{i:06x}", task=f"RANGELAND_{i % 4}", node="n0", start=start, end=start + length,
                processes=[ProcessSpec(pid=10000 + i, load={0: round(float(rng.uniform(0.01, 0.9 / parallel)), 4)},
                                       mem={0: int(rng.integers(1, 512)) * 2**20})],
            )
        )
    duration = math.ceil(max(lanes) / 10.0) * 10.0
    return Scenario(nodes=[_node()], tasks=tasks, seed=seed, duration=duration, housekeeping="none")


def sarek_like(seed: int = 5) -> Scenario:
    """Many small tasks of one process next to a few large tasks of another."""
    rng = np.random.default_rng(seed)
    tasks = []
    pid = 5000
    for i in range(40):
        pid += 1
        start = 10.0 * (i // 4)
        tasks.append(
            TaskSpec(name=f"nf-small{i:02d}", task="MARKDUPLICATES_SPARK", node="n0", start=start, end=start + 10.0,
                     processes=[ProcessSpec(pid=pid, load={0: round(float(rng.uniform(0.05, 0.1)), 4)}, mem={0: 2**30})])
        )
    for i in range(2):
        pid += 1
        tasks.append(
            TaskSpec(name=f"nf-large{i}", task="HAPLOTYPECALLER", node="n0", start=20.0 * i, end=20.0 * i + 60.0,
                     processes=[ProcessSpec(pid=pid, load={0: 0.25}, mem={0: 8 * 2**30})])
        )
    return Scenario(nodes=[_node()], tasks=tasks, seed=seed, duration=110.0, housekeeping="none")


BUILDERS = {
    "staircase": staircase,
    "calibration": calibration,
    "rangeland": rangeland,
    "sarek": sarek_like,
    "colocated_isolated": lambda: colocated_pair()[0],
    "colocated_loaded": lambda: colocated_pair()[1],
}
