"""Energy attribution arithmetic.

Node energy per socket and RAPL domain is split into a static part (idle
power times interval length) and a dynamic remainder. A process receives
the dynamic energy of each socket weighted by an *energy credit*, its
resource share raised to ``gamma``, plus the static energy weighted by
the plain share. CPU package energy follows CPU-time shares, DRAM energy
follows resident-memory shares.

Everything here is pure and deterministic; no I/O.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import InvalidIntervalError, MissingLedgerError, ShareDomainError

DEFAULT_GAMMA = 0.3
# Sum-of-shares tolerance; sampling and clock granularity make exact unity unattainable.
SHARE_EPSILON = 1e-6

FAITHFUL = "faithful"
CONSERVING = "conserving"
NONLINEAR = "nonlinear"
LINEAR = "linear"
MODES = (FAITHFUL, CONSERVING)
MODELS = (NONLINEAR, LINEAR)


class Domain(str, enum.Enum):
    CPU_PACKAGE = "package"
    DRAM = "dram"

    def __str__(self) -> str:
        return self.value


class SocketId(NamedTuple):
    node: str
    socket: int


LedgerKey = tuple[SocketId, Domain]


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ShareDomainError(f"gamma must lie in [0, 1], got {gamma}")
    return gamma


@dataclass(frozen=True)
class LedgerEntry:
    e_total: float
    e_static: float
    e_dynamic: float
    clamped: float = 0.0


@dataclass
class IntervalLedger:
    """Static/dynamic split of one attribution interval on one node."""

    interval_start: float
    interval_end: float
    entries: dict[LedgerKey, LedgerEntry] = field(default_factory=dict)
    t_cpu_total: dict[SocketId, float] = field(default_factory=dict)
    m_total: dict[SocketId, float] = field(default_factory=dict)
    node: str = ""
    index: int = 0

    def __post_init__(self):
        if not self.interval_end > self.interval_start:
            raise InvalidIntervalError(
                f"interval end {self.interval_end} not after start {self.interval_start}"
            )

    @property
    def length(self) -> float:
        return self.interval_end - self.interval_start

    @property
    def domains(self) -> set[Domain]:
        return {d for _, d in self.entries}

    @property
    def sockets(self) -> list[SocketId]:
        return sorted({s for s, _ in self.entries})

    def entry(self, socket: SocketId, domain: Domain) -> LedgerEntry:
        try:
            return self.entries[(socket, domain)]
        except KeyError:
            raise MissingLedgerError(f"no {domain} ledger for {socket}") from None


@dataclass
class ProcessShare:
    """Per-socket CPU-time share ``rho`` and memory share ``sigma`` of one process."""

    pid: int
    rho: dict[SocketId, float] = field(default_factory=dict)
    sigma: dict[SocketId, float] = field(default_factory=dict)

    def shares(self, domain: Domain) -> dict[SocketId, float]:
        return self.rho if domain is Domain.CPU_PACKAGE else self.sigma


@dataclass
class AttributionRecord:
    pid: int
    node: str = ""
    interval: int = 0
    interval_start: float = 0.0
    interval_end: float = 0.0
    e_cpu_dynamic: float = 0.0
    e_cpu_static: float = 0.0
    e_dram_dynamic: float = 0.0
    e_dram_static: float = 0.0

    @property
    def dynamic(self) -> float:
        return self.e_cpu_dynamic + self.e_dram_dynamic

    @property
    def static(self) -> float:
        return self.e_cpu_static + self.e_dram_static

    @property
    def total(self) -> float:
        return total_process_energy(self)

    def energies(self) -> tuple[float, float, float, float]:
        return (self.e_cpu_dynamic, self.e_cpu_static, self.e_dram_dynamic, self.e_dram_static)


def compute_static_energy(p_static: Mapping, interval_length: float) -> dict:
    """Static energy (J) per key for an interval of ``interval_length`` seconds."""
    if not interval_length > 0:
        raise InvalidIntervalError(f"interval length must be positive, got {interval_length}")
    out = {}
    for key, watts in p_static.items():
        if watts < 0:
            raise ValueError(f"negative static power for {key}: {watts}")
        out[key] = watts * interval_length
    return out


def split_dynamic(e_total: float, e_static: float) -> tuple[float, float]:
    """Return ``(dynamic, clamped)``.

    Dynamic energy is ``e_total - e_static`` floored at zero; ``clamped`` is
    the amount cut off by the floor (zero when no clamping happened).
    """
    if e_total < 0 or e_static < 0:
        raise ValueError(f"energies must be non-negative (total={e_total}, static={e_static})")
    if e_total < e_static:
        return 0.0, e_static - e_total
    return e_total - e_static, 0.0


def energy_credit(share: float, gamma: float) -> float:
    if not 0.0 <= share <= 1.0:
        raise ShareDomainError(f"share must lie in [0, 1], got {share}")
    check_gamma(gamma)
    # 0**0 is taken as 0 so an idle process never earns credit when gamma == 0.
    if share == 0.0:
        return 0.0
    return share**gamma


def _socket_keys(shares: Mapping[SocketId, float]) -> list[SocketId]:
    return sorted(shares)


def _attribute_domain(
    shares: Mapping[SocketId, float], ledger: IntervalLedger, domain: Domain, gamma: float
) -> tuple[float, float]:
    dynamic = static = 0.0
    for socket in _socket_keys(shares):
        entry = ledger.entry(socket, domain)
        share = shares[socket]
        dynamic += entry.e_dynamic * energy_credit(share, gamma)
        static += entry.e_static * share
    return dynamic, static


def attribute_cpu(share: ProcessShare, ledger: IntervalLedger, gamma: float) -> tuple[float, float]:
    """CPU package energy ``(dynamic, static)`` for one process, no normalization."""
    return _attribute_domain(share.rho, ledger, Domain.CPU_PACKAGE, gamma)


def attribute_memory(share: ProcessShare, ledger: IntervalLedger, gamma: float) -> tuple[float, float]:
    """DRAM energy ``(dynamic, static)`` for one process, no normalization."""
    return _attribute_domain(share.sigma, ledger, Domain.DRAM, gamma)


def total_process_energy(record: AttributionRecord) -> float:
    return record.e_cpu_dynamic + record.e_cpu_static + record.e_dram_dynamic + record.e_dram_static


def attribute_linear_baseline(share: ProcessShare, ledger: IntervalLedger) -> dict[Domain, tuple[float, float]]:
    """Linear share-of-node-energy heuristic, per domain present in the ledger.

    Each domain gets ``(dynamic, static)`` = share times the ledger's dynamic
    and static energy, so the sum is share times the measured total.
    """
    out = {}
    for domain in (Domain.CPU_PACKAGE, Domain.DRAM):
        shares = share.shares(domain)
        if domain not in ledger.domains:
            if any(shares.values()) and domain is Domain.CPU_PACKAGE:
                raise MissingLedgerError(f"no {domain} ledger")
            continue
        dynamic = static = 0.0
        for socket in _socket_keys(shares):
            entry = ledger.entry(socket, domain)
            dynamic += entry.e_dynamic * shares[socket]
            static += entry.e_static * shares[socket]
        out[domain] = (dynamic, static)
    return out


def linear_workload_energy(share: ProcessShare, ledger: IntervalLedger, domain: Domain) -> float:
    """Share times total measured energy, summed over sockets."""
    shares = share.shares(domain)
    return sum(ledger.entry(s, domain).e_total * shares[s] for s in _socket_keys(shares))


def attribute_conserving(
    shares: Sequence[ProcessShare], ledger: IntervalLedger, gamma: float
) -> tuple[dict[int, dict[Domain, tuple[float, float]]], dict[LedgerKey, float]]:
    """Credit-normalized attribution over all given processes.

    Per socket and domain the credits are divided by their sum so the
    attributed dynamic energy adds up to the ledger's dynamic energy. When
    every credit on a socket is zero the dynamic energy stays unattributed
    and is returned in the second mapping.
    """
    unattributed: dict[LedgerKey, float] = {}
    out: dict[int, dict[Domain, tuple[float, float]]] = {s.pid: {} for s in shares}
    for domain in (Domain.CPU_PACKAGE, Domain.DRAM):
        if domain not in ledger.domains:
            continue
        dyn = {s.pid: 0.0 for s in shares}
        stat = {s.pid: 0.0 for s in shares}
        for socket in ledger.sockets:
            if (socket, domain) not in ledger.entries:
                continue
            entry = ledger.entries[(socket, domain)]
            credits = {s.pid: energy_credit(s.shares(domain).get(socket, 0.0), gamma) for s in shares}
            norm = math.fsum(credits.values())
            for s in shares:
                share = s.shares(domain).get(socket, 0.0)
                stat[s.pid] += entry.e_static * share
                if norm > 0:
                    dyn[s.pid] += entry.e_dynamic * (credits[s.pid] / norm)
            if norm == 0 and entry.e_dynamic > 0:
                unattributed[(socket, domain)] = entry.e_dynamic
        for s in shares:
            missing = set(s.shares(domain)) - set(ledger.sockets)
            if any(s.shares(domain)[m] for m in missing):
                raise MissingLedgerError(f"no {domain} ledger for {sorted(missing)}")
            out[s.pid][domain] = (dyn[s.pid], stat[s.pid])
    return out, unattributed


def attribute_interval(
    shares: Mapping[int, ProcessShare],
    tracked: Iterable[int],
    ledger: IntervalLedger,
    gamma: float = DEFAULT_GAMMA,
    mode: str = FAITHFUL,
    model: str = NONLINEAR,
) -> list[AttributionRecord]:
    """Attribution records for the ``tracked`` pids of one closed interval.

    ``shares`` covers every observed process, tracked or not; untracked
    processes only matter for conserving-mode normalization.
    """
    check_gamma(gamma)
    if mode not in MODES:
        raise ValueError(f"unknown attribution mode {mode!r}")
    if model not in MODELS:
        raise ValueError(f"unknown attribution model {model!r}")
    tracked = sorted(set(tracked))
    domains = ledger.domains
    per_pid: dict[int, dict[Domain, tuple[float, float]]] = {}
    if model == LINEAR:
        for pid in tracked:
            per_pid[pid] = attribute_linear_baseline(shares[pid], ledger)
    elif mode == CONSERVING:
        everyone = [shares[p] for p in sorted(shares)]
        normalized, _ = attribute_conserving(everyone, ledger, gamma)
        per_pid = {pid: normalized[pid] for pid in tracked}
    else:
        for pid in tracked:
            result = {Domain.CPU_PACKAGE: attribute_cpu(shares[pid], ledger, gamma)}
            if Domain.DRAM in domains:
                result[Domain.DRAM] = attribute_memory(shares[pid], ledger, gamma)
            per_pid[pid] = result

    records = []
    for pid in tracked:
        cpu = per_pid[pid].get(Domain.CPU_PACKAGE, (0.0, 0.0))
        dram = per_pid[pid].get(Domain.DRAM, (0.0, 0.0))
        records.append(
            AttributionRecord(
                pid=pid,
                node=ledger.node,
                interval=ledger.index,
                interval_start=ledger.interval_start,
                interval_end=ledger.interval_end,
                e_cpu_dynamic=cpu[0],
                e_cpu_static=cpu[1],
                e_dram_dynamic=dram[0],
                e_dram_static=dram[1],
            )
        )
    return records
