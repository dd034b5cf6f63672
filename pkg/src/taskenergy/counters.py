"""Cumulative RAPL counters: overflow-corrected deltas, idle power, ledgers.

Counter values are carried as integer microjoules, the native powercap
unit, so unwrapping is exact integer arithmetic. Conversions to joules
happen only when a ledger is built.
"""

from __future__ import annotations

import logging
import os
import re
from collections import defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path

from .attribution import (
    Domain,
    IntervalLedger,
    LedgerEntry,
    LedgerKey,
    SocketId,
    compute_static_energy,
    split_dynamic,
)
from .errors import GapError, InsufficientDataError, InvalidIntervalError, OrderingError, PairingError

log = logging.getLogger(__name__)

UJ_PER_J = 1_000_000
# Energy counted before overflow on the reference hardware (Xeon Silver 4314).
CPU_WRAP_UJ = 262_143_300_000
DRAM_WRAP_UJ = 65_713_000_000
DEFAULT_WRAP_UJ = {Domain.CPU_PACKAGE: CPU_WRAP_UJ, Domain.DRAM: DRAM_WRAP_UJ}
DEFAULT_IDLE_WINDOW = 30.0
POWERCAP_ROOT = "/sys/class/powercap"


def to_uj(joules: float) -> int:
    return round(joules * UJ_PER_J)


def to_joules(uj: int) -> float:
    return uj / UJ_PER_J


@dataclass(frozen=True)
class CounterSample:
    timestamp: float
    socket: SocketId
    domain: Domain
    cumulative_uj: int
    wrap_uj: int

    def __post_init__(self):
        if self.wrap_uj <= 0:
            raise ValueError(f"wrap_at must be positive, got {self.wrap_uj} uJ")
        if not 0 <= self.cumulative_uj < self.wrap_uj:
            raise ValueError(
                f"counter value {self.cumulative_uj} uJ outside [0, {self.wrap_uj}) for {self.socket}/{self.domain}"
            )

    @property
    def key(self) -> LedgerKey:
        return (self.socket, self.domain)

    @property
    def cumulative(self) -> float:
        return to_joules(self.cumulative_uj)

    @property
    def wrap_at(self) -> float:
        return to_joules(self.wrap_uj)


def counter_delta_uj(prev: CounterSample, next: CounterSample) -> int:
    """Energy counted between two readings, in microjoules.

    At most one overflow between the readings is assumed; the sampling
    interval has to keep ``interval * max_power`` well below the wrap value.
    """
    if prev.key != next.key:
        raise PairingError(f"cannot pair {prev.key} with {next.key}")
    if not next.timestamp > prev.timestamp:
        raise OrderingError(f"sample at {next.timestamp} does not follow {prev.timestamp}")
    delta = next.cumulative_uj - prev.cumulative_uj
    if delta < 0:
        delta = next.wrap_uj - prev.cumulative_uj + next.cumulative_uj
    return delta


def counter_delta(prev: CounterSample, next: CounterSample) -> float:
    return to_joules(counter_delta_uj(prev, next))


@dataclass(frozen=True)
class StaticPower:
    p_static: float
    measured_over: float
    measured_at: float


@dataclass
class StaticPowerProfile:
    entries: dict[LedgerKey, StaticPower]

    def power(self) -> dict[LedgerKey, float]:
        return {k: v.p_static for k, v in self.entries.items()}

    def for_node(self, node: str) -> "StaticPowerProfile":
        return StaticPowerProfile({k: v for k, v in self.entries.items() if k[0].node == node})

    @property
    def domains(self) -> set[Domain]:
        return {d for _, d in self.entries}


def estimate_static_power(samples: Iterable[CounterSample]) -> StaticPowerProfile:
    """Average power per (socket, domain) over an idle window of readings."""
    by_key: dict[LedgerKey, list[CounterSample]] = defaultdict(list)
    for sample in samples:
        by_key[sample.key].append(sample)
    if not by_key:
        raise InsufficientDataError("no idle-window samples")
    entries = {}
    for key, series in by_key.items():
        if len(series) < 2:
            raise InsufficientDataError(f"need at least 2 idle samples for {key}, got {len(series)}")
        window = series[-1].timestamp - series[0].timestamp
        if not window > 0:
            raise InvalidIntervalError(f"zero-length idle window for {key}")
        total_uj = sum(counter_delta_uj(a, b) for a, b in zip(series, series[1:]))
        entries[key] = StaticPower(
            p_static=to_joules(total_uj) / window,
            measured_over=window,
            measured_at=series[0].timestamp,
        )
    return StaticPowerProfile(entries)


def ledger_for_interval(
    prev: Mapping[LedgerKey, CounterSample],
    next: Mapping[LedgerKey, CounterSample],
    profile: StaticPowerProfile,
    start: float | None = None,
    end: float | None = None,
    node: str = "",
    index: int = 0,
) -> IntervalLedger:
    """Build the static/dynamic ledger from boundary readings.

    ``start``/``end`` default to the reading timestamps. Every key of the
    profile needs a reading on both boundaries, otherwise a
    :class:`GapError` names the affected keys.
    """
    keys = sorted(profile.entries)
    missing = [k for k in keys if k not in prev or k not in next]
    if missing:
        raise GapError(f"missing boundary samples for {missing}", missing)
    stale = [k for k in keys if not next[k].timestamp > prev[k].timestamp]
    if stale:
        raise GapError(f"no fresh reading for {stale}", stale)
    if start is None:
        start = min(prev[k].timestamp for k in keys)
    if end is None:
        end = max(next[k].timestamp for k in keys)
    statics = compute_static_energy(profile.power(), end - start)
    ledger = IntervalLedger(interval_start=start, interval_end=end, node=node, index=index)
    for key in keys:
        e_total = counter_delta(prev[key], next[key])
        e_dynamic, clamped = split_dynamic(e_total, statics[key])
        if clamped:
            log.debug("clamped %.6f J of negative dynamic energy for %s", clamped, key)
        ledger.entries[key] = LedgerEntry(e_total, statics[key], e_dynamic, clamped)
    return ledger


_ZONE = re.compile(r"^intel-rapl:(\d+)(?::(\d+))?$")


class PowercapReader:
    """Read package and DRAM counters from a powercap tree.

    The tree root defaults to ``/sys/class/powercap`` and can be re-rooted
    for fixtures.
    """

    def __init__(self, root: str | os.PathLike = POWERCAP_ROOT, node: str = "localhost"):
        self.root = Path(root)
        self.node = node
        self.zones = self.discover()

    def discover(self) -> dict[LedgerKey, Path]:
        if not self.root.is_dir():
            raise FileNotFoundError(f"powercap root {self.root} not found")
        zones: dict[LedgerKey, Path] = {}
        candidates = list(self.root.glob("intel-rapl:*")) + list(self.root.glob("intel-rapl:*/intel-rapl:*"))
        for path in sorted(candidates):
            match = _ZONE.match(path.name)
            if not match or not (path / "energy_uj").exists():
                continue
            socket = SocketId(self.node, int(match.group(1)))
            if match.group(2) is None:
                zones.setdefault((socket, Domain.CPU_PACKAGE), path)
                continue
            name = _read_text(path / "name").strip().lower()
            if name == "dram":
                zones.setdefault((socket, Domain.DRAM), path)
        if not zones:
            raise FileNotFoundError(f"no intel-rapl zones under {self.root}")
        return zones

    @property
    def domains(self) -> set[Domain]:
        return {d for _, d in self.zones}

    @property
    def sockets(self) -> list[SocketId]:
        return sorted({s for s, _ in self.zones})

    def read(self, timestamp: float) -> dict[LedgerKey, CounterSample]:
        out = {}
        for key, path in sorted(self.zones.items()):
            wrap = int(_read_text(path / "max_energy_range_uj"))
            # The kernel reports values in [0, max_energy_range_uj]; the top value aliases 0.
            value = int(_read_text(path / "energy_uj")) % wrap
            out[key] = CounterSample(timestamp, key[0], key[1], value, wrap)
        return out


def _read_text(path: Path) -> str:
    with open(path) as fh:
        return fh.read()
