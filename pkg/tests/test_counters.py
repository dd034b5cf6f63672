import shutil

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskenergy.attribution import Domain, SocketId
from taskenergy.counters import (
    CPU_WRAP_UJ,
    DRAM_WRAP_UJ,
    CounterSample,
    PowercapReader,
    StaticPower,
    StaticPowerProfile,
    counter_delta,
    counter_delta_uj,
    estimate_static_power,
    ledger_for_interval,
    to_uj,
)
from taskenergy.errors import GapError, InsufficientDataError, InvalidIntervalError, OrderingError, PairingError

S0 = SocketId("n0", 0)
PKG, DRAM = Domain.CPU_PACKAGE, Domain.DRAM


def sample(t, joules, domain=PKG, wrap=CPU_WRAP_UJ, socket=S0):
    return CounterSample(t, socket, domain, to_uj(joules), wrap)


def test_wrap_constants():
    assert CPU_WRAP_UJ == 262_143_300_000
    assert DRAM_WRAP_UJ == 65_713_000_000


@pytest.mark.parametrize(
    "prev,nxt,expected",
    [(100.0, 150.0, 50.0), (42.0, 42.0, 0.0), (262_000.0, 50.0, 193.3)],
)
def test_counter_delta(prev, nxt, expected):
    assert counter_delta(sample(0, prev), sample(1, nxt)) == pytest.approx(expected, abs=1e-12)


def test_counter_delta_wrap_is_exact_in_microjoules():
    assert counter_delta_uj(sample(0, 262_000.0), sample(1, 50.0)) == 193_300_000


def test_pairing_error():
    with pytest.raises(PairingError):
        counter_delta(sample(0, 1.0), sample(1, 2.0, domain=DRAM, wrap=DRAM_WRAP_UJ))


@pytest.mark.parametrize("t1", [0.0, -1.0])
def test_ordering_error(t1):
    with pytest.raises(OrderingError):
        counter_delta(sample(0, 1.0), sample(t1, 2.0))


@pytest.mark.parametrize("value", [-1, CPU_WRAP_UJ])
def test_sample_range(value):
    with pytest.raises(ValueError):
        CounterSample(0, S0, PKG, value, CPU_WRAP_UJ)


@settings(max_examples=300)
@given(
    domain=st.sampled_from([PKG, DRAM]),
    start=st.integers(0, DRAM_WRAP_UJ - 1),
    steps=st.lists(st.integers(0, 60_000_000_000), min_size=1, max_size=40),
)
def test_unwrap_sum_equals_true_total(domain, start, steps):
    wrap = CPU_WRAP_UJ if domain is PKG else DRAM_WRAP_UJ
    steps = [s % wrap for s in steps]  # at most one wrap per interval
    true = [start]
    for s in steps:
        true.append(true[-1] + s)
    folded = [CounterSample(float(i), S0, domain, v % wrap, wrap) for i, v in enumerate(true)]
    deltas = [counter_delta_uj(a, b) for a, b in zip(folded, folded[1:])]
    assert all(d >= 0 for d in deltas)
    assert sum(deltas) == true[-1] - true[0]


def test_static_power_ratio():
    prof = estimate_static_power([sample(0, 10.0), sample(30, 310.0)])
    assert prof.entries[(S0, PKG)] == StaticPower(10.0, 30.0, 0.0)


def test_static_power_flat_counter():
    assert estimate_static_power([sample(0, 5.0), sample(10, 5.0)]).power() == {(S0, PKG): 0.0}


def test_static_power_across_wrap_matches_unwrapped_series():
    # true cumulative 262_100 J + 10 W over 30 s, read every 5 s
    true = [262_100.0 + 10.0 * 5 * k for k in range(7)]
    folded = [sample(5.0 * k, v % 262_143.3) for k, v in enumerate(true)]
    assert estimate_static_power(folded).power()[(S0, PKG)] == pytest.approx(10.0, rel=1e-12)


def test_static_power_errors():
    with pytest.raises(InsufficientDataError):
        estimate_static_power([sample(0, 1.0)])
    with pytest.raises(InsufficientDataError):
        estimate_static_power([])
    with pytest.raises((InvalidIntervalError, OrderingError)):
        estimate_static_power([sample(3, 1.0), sample(3, 1.0)])


def _profile(watts=10.0):
    return StaticPowerProfile({(S0, PKG): StaticPower(watts, 30.0, 0.0)})


@pytest.mark.parametrize(
    "total,dyn,clamped",
    [(50.0, 30.0, 0.0), (20.0, 0.0, 0.0), (15.0, 0.0, 5.0)],
)
def test_ledger_for_interval(total, dyn, clamped):
    led = ledger_for_interval({(S0, PKG): sample(0, 100.0)}, {(S0, PKG): sample(2, 100.0 + total)}, _profile())
    e = led.entries[(S0, PKG)]
    assert e.e_static == 20.0
    assert e.e_dynamic == pytest.approx(dyn)
    assert e.clamped == pytest.approx(clamped)
    assert e.e_static + e.e_dynamic == pytest.approx(e.e_total + e.clamped)


def test_ledger_gap_names_keys():
    with pytest.raises(GapError) as info:
        ledger_for_interval({}, {(S0, PKG): sample(2, 1.0)}, _profile())
    assert info.value.keys == ((S0, PKG),)


def test_ledger_stale_reading_is_gap():
    s = sample(1, 1.0)
    with pytest.raises(GapError):
        ledger_for_interval({(S0, PKG): s}, {(S0, PKG): s}, _profile())


def test_powercap_fixture(fixtures):
    reader = PowercapReader(fixtures / "powercap", node="fx")
    sock = SocketId("fx", 0)
    assert reader.domains == {PKG, DRAM}
    assert reader.sockets == [sock]
    got = reader.read(7.0)
    assert got[(sock, PKG)] == CounterSample(7.0, sock, PKG, 1_000_000, 262_143_328_850)
    assert got[(sock, DRAM)] == CounterSample(7.0, sock, DRAM, 500_000, 65_712_999_613)


def test_powercap_top_value_aliases_zero(fixtures, tmp_path):
    root = tmp_path / "pc"
    shutil.copytree(fixtures / "powercap", root)
    (root / "intel-rapl:0" / "energy_uj").write_text("262143328850\n")
    got = PowercapReader(root, "fx").read(0.0)
    assert got[(SocketId("fx", 0), PKG)].cumulative_uj == 0


@pytest.mark.parametrize("layout", ["missing", "empty"])
def test_powercap_without_zones(tmp_path, layout):
    root = tmp_path / "pc"
    if layout == "empty":
        root.mkdir()
    with pytest.raises(FileNotFoundError):
        PowercapReader(root)
