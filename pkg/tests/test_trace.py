import pytest

from taskenergy.attribution import Domain, SocketId
from taskenergy.counters import counter_delta_uj, estimate_static_power
from taskenergy.errors import TraceParseError
from taskenergy.monitor import ReplayMonitorBackend
from taskenergy.trace import (
    IdleMark,
    PodSeen,
    ProcSample,
    RaplReading,
    parse_trace,
    read_trace,
    replay,
    serialize_trace,
)

import oracle

HEADER = "TRACE version=1 nodes=n0 sockets=1 domains=package wrap.package=1000 tick=2 cpu_tick=1\n"


def test_min_trace_shape(min_trace_path):
    tr = read_trace(min_trace_path)
    idle = tr.of_type(IdleMark)[0]
    after = [e for e in tr.of_type(RaplReading) if e.t > idle.end]
    assert len([e for e in after if e.domain is Domain.CPU_PACKAGE]) == 10
    assert len([e for e in after if e.domain is Domain.DRAM]) == 10
    assert {e.pid for e in tr.of_type(ProcSample)} == {2, 50, 1234}
    assert len(tr.of_type(PodSeen)) == 1


def test_min_trace_roundtrip_is_byte_identical(min_trace_path):
    text = min_trace_path.read_text()
    assert serialize_trace(parse_trace(text)) == text


def test_min_trace_deltas_match_unwrapped_series(min_trace_path):
    # the fixture's package counter wraps inside the monitored span
    text = min_trace_path.read_text()
    ref = oracle.OracleTrace(text)
    pkg = [uj for _, uj in ref.rapl[("n0", 0, "package")]]
    assert any(b < a for a, b in zip(pkg, pkg[1:]))
    events = [e.payload for e in replay(parse_trace(text)) if hasattr(e.payload, "cumulative_uj")]
    for domain in (Domain.CPU_PACKAGE, Domain.DRAM):
        series = [s for s in events if s.domain is domain]
        raw = [uj for _, uj in ref.rapl[("n0", 0, domain.value)]]
        ours = [counter_delta_uj(a, b) for a, b in zip(series, series[1:])]
        theirs = [ref.unwrap(domain.value, a, b) for a, b in zip(raw, raw[1:])]
        assert ours == theirs


def test_idle_profile_matches_generator_power(min_trace_path):
    backend = ReplayMonitorBackend(read_trace(min_trace_path))
    prof = estimate_static_power(backend.idle_samples("n0")).power()
    assert prof[(SocketId("n0", 0), Domain.CPU_PACKAGE)] == pytest.approx(40.0, rel=1e-12)
    assert prof[(SocketId("n0", 0), Domain.DRAM)] == pytest.approx(5.0, rel=1e-12)
    assert backend.ready_time() == 6.0


def test_backend_batches(min_trace_path):
    backend = ReplayMonitorBackend(read_trace(min_trace_path))
    assert set(backend.processes("n0", 9.0)) == {2, 50, 1234}
    assert backend.processes("n0", 9.0)[1234].timestamp == 8.0
    assert backend.processes("n0", -1.0) == {}
    pods = backend.pods.list_pods(6.0)
    assert [p.task for p in pods] == ["ALIGN"]
    assert backend.pods.list_pods(5.9) == []


@pytest.mark.parametrize(
    "body,line",
    [
        ("RAPL t=0 node=n0 socket=0 domain=package uj=1000\n", 2),  # at the wrap value
        ("RAPL t=0 node=n0 socket=0 domain=dram uj=1\n", 2),  # undeclared domain
        ("RAPL t=0 node=n9 socket=0 domain=package uj=1\n", 2),  # undeclared node
        ("RAPL t=0 node=n0 socket=1 domain=package uj=1\n", 2),  # undeclared socket
        ("RAPL t=1 node=n0 socket=0 domain=package uj=1\nRAPL t=0 node=n0 socket=0 domain=package uj=2\n", 3),
        ("BOGUS t=0\n", 2),
        ("PROC t=0 node=n0 pid=1 cpu=0:-1 rss=0:0\n", 2),
        ("PROC t=0 node=n0 cpu=0:1 rss=0:0\n", 2),
        ("RAPL t=zero node=n0 socket=0 domain=package uj=1\n", 2),
        ("RAPL t=0 node=n0 socket=0 domain=package uj\n", 2),
    ],
)
def test_parse_errors_carry_line(body, line):
    with pytest.raises(TraceParseError) as info:
        parse_trace(HEADER + body)
    assert info.value.line == line
    assert info.value.category == "trace-parse"


@pytest.mark.parametrize("text", ["", "# only a comment\n", "RAPL t=0 node=n0 socket=0 domain=package uj=1\n"])
def test_missing_header(text):
    with pytest.raises(TraceParseError):
        parse_trace(text)


def test_comments_and_blank_lines_are_ignored():
    tr = parse_trace(HEADER + "\n# note\nRAPL t=0 node=n0 socket=0 domain=package uj=5\n")
    assert tr.events == [RaplReading(0.0, "n0", 0, Domain.CPU_PACKAGE, 5)]


def test_percent_encoded_fields_roundtrip():
    tr = parse_trace(HEADER + "POD t=0 uid=a%20b task=X node=n0 name=nf-1\n")
    assert tr.events[0].uid == "a b"
    assert "uid=a%20b" in serialize_trace(tr)
