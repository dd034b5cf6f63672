from __future__ import annotations

from dataclasses import asdict, dataclass

from .attribution import DEFAULT_GAMMA, MODELS, MODES, NONLINEAR, FAITHFUL, check_gamma
from .counters import DEFAULT_IDLE_WINDOW
from .pods import DEFAULT_POD_FILTER

DEFAULT_RAPL_INTERVAL = 2.0
DEFAULT_POLL_INTERVAL = 5.0
# Tasks observed for less than this are flagged; the attribution is unreliable below it.
DEFAULT_SHORT_TASK = 15.0


@dataclass(frozen=True)
class MonitorConfig:
    gamma: float = DEFAULT_GAMMA
    rapl_interval: float = DEFAULT_RAPL_INTERVAL
    poll_interval: float = DEFAULT_POLL_INTERVAL
    idle_window: float = DEFAULT_IDLE_WINDOW
    mode: str = FAITHFUL
    model: str = NONLINEAR
    pod_filter: str | None = DEFAULT_POD_FILTER
    short_task: float = DEFAULT_SHORT_TASK

    def __post_init__(self):
        check_gamma(self.gamma)
        # the two cadences are independent; neither must divide the other
        if not self.rapl_interval > 0:
            raise ValueError(f"rapl_interval must be positive, got {self.rapl_interval}")
        if not self.poll_interval > 0:
            raise ValueError(f"poll_interval must be positive, got {self.poll_interval}")
        if not self.idle_window > 0:
            raise ValueError(f"idle_window must be positive, got {self.idle_window}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.short_task < 0:
            raise ValueError("short_task threshold must be non-negative")

    def replace(self, **changes) -> "MonitorConfig":
        return MonitorConfig(**{**asdict(self), **changes})
