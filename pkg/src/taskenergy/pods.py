"""Pod sources: where the monitor learns which workflow pods exist.

A pod source exposes ``list_pods(timestamp)`` returning the pods present
at that time. Trace replay and a polled pod-list file implement it; a
cluster-API client would plug in the same way.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

from . import tagline
from .errors import PodSourceError

# Nextflow names task pods "nf-" followed by a hex task hash.
DEFAULT_POD_FILTER = r"^nf-[0-9a-f]+"


@dataclass(frozen=True)
class PodInfo:
    uid: str
    name: str
    task: str
    node: str


class PodFilter:
    def __init__(self, pattern: str | None = DEFAULT_POD_FILTER):
        self.pattern = pattern
        self._regex = re.compile(pattern) if pattern else None

    def __call__(self, pod: PodInfo) -> bool:
        return self._regex is None or bool(self._regex.search(pod.name))


def format_pod_line(pod: PodInfo) -> str:
    return tagline.format_line(
        "POD",
        {
            "uid": tagline.fmt_str(pod.uid),
            "name": tagline.fmt_str(pod.name),
            "task": tagline.fmt_str(pod.task),
            "node": tagline.fmt_str(pod.node),
        },
    )


class FilePodSource:
    """Pods listed in a tagged-line file, re-read on every poll.

    Each line looks like ``POD uid=... name=... task=... node=...``; pods
    disappear when their line is removed.
    """

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)

    def list_pods(self, timestamp: float | None = None) -> list[PodInfo]:
        try:
            text = self.path.read_text()
        except OSError as exc:
            raise PodSourceError(f"cannot read pod list {self.path}: {exc}") from exc
        pods = []
        try:
            for _, tag, f in tagline.iter_lines(text):
                if tag != "POD":
                    continue
                pods.append(
                    PodInfo(
                        uid=tagline.parse_str(f["uid"]),
                        name=tagline.parse_str(f.get("name", "-")),
                        task=tagline.parse_str(f.get("task", "-")),
                        node=tagline.parse_str(f.get("node", "-")),
                    )
                )
        except (KeyError, ValueError) as exc:
            raise PodSourceError(f"malformed pod list {self.path}: {exc}") from exc
        return pods
