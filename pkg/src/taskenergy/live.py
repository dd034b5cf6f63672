"""Live backend: powercap counters and procfs on the local node."""

from __future__ import annotations

import logging
import os
import time
from collections.abc import Callable

from .counters import POWERCAP_ROOT, CounterSample, PowercapReader
from .errors import StartupError
from .procfs import PROC_ROOT, ProcessSample, ProcfsReader, TopologyMap

log = logging.getLogger(__name__)


class LiveBackend:
    """Samples the local machine; one node named after the host.

    ``idle_samples`` blocks for the idle window, reading the counters every
    ``sample_interval`` seconds; nothing else should run on the node then.
    """

    kind = "live"

    def __init__(
        self,
        node: str | None = None,
        proc_root: str | os.PathLike = PROC_ROOT,
        powercap_root: str | os.PathLike = POWERCAP_ROOT,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        sample_interval: float = 1.0,
        idle_window: float = 30.0,
    ):
        self.node = node or os.uname().nodename
        self.nodes = [self.node]
        self.clock = clock
        self.sleep = sleep
        self.sample_interval = sample_interval
        self.idle_window_s = idle_window
        try:
            self.rapl = PowercapReader(powercap_root, self.node)
        except (FileNotFoundError, OSError) as exc:
            raise StartupError(f"cannot open powercap counters: {exc}") from exc
        if not self.rapl.zones:
            raise StartupError(f"no RAPL package zones under {powercap_root}")
        self.procfs = ProcfsReader(proc_root)
        self._topology = self.procfs.topology()
        self._ready: float | None = None

    @property
    def domains(self):
        return self.rapl.domains

    @property
    def unreadable(self) -> int:
        return self.procfs.unreadable

    def now(self) -> float:
        return self.clock()

    def topology(self, node: str) -> TopologyMap:
        return self._topology

    def counters(self, node: str, timestamp: float) -> dict:
        return self.rapl.read(self.clock())

    def processes(self, node: str, timestamp: float) -> dict[int, ProcessSample]:
        return self.procfs.snapshot(self.clock())

    def idle_samples(self, node: str) -> list[CounterSample]:
        samples: list[CounterSample] = []
        start = self.clock()
        log.info("measuring idle power for %.1f s", self.idle_window_s)
        while True:
            samples.extend(self.rapl.read(self.clock()).values())
            elapsed = self.clock() - start
            if elapsed >= self.idle_window_s:
                break
            self.sleep(min(self.sample_interval, self.idle_window_s - elapsed))
        self._ready = samples[-1].timestamp if samples else self.clock()
        return samples

    def ready_time(self) -> float:
        return self._ready if self._ready is not None else self.clock()
