import io
import sys
from collections import defaultdict
from pathlib import Path

import pytest

from taskenergy.trace import parse_trace, serialize_trace

TESTS = Path(__file__).parent
FIXTURES = TESTS / "fixtures"
sys.path.insert(0, str(TESTS))  # the oracle module


def per_process(records):
    """Sum of the four energy columns per (node, pid)."""
    out = defaultdict(lambda: [0.0] * 4)
    for r in records:
        acc = out[(r.node, r.pid)]
        for i, v in enumerate(r.energies()):
            acc[i] += v
    return dict(out)


def roundtrip(trace):
    """Serialize and re-parse, so the pipeline sees exactly what the oracle sees."""
    text = serialize_trace(trace)
    return text, parse_trace(io.StringIO(text))


def rel_err(got, want):
    want = float(want)
    return abs(got - want) / max(abs(want), 1e-12)


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def min_trace_path():
    return FIXTURES / "min.trace"


VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
