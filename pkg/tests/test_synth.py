import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskenergy import synth
from taskenergy.attribution import Domain
from taskenergy.errors import InfeasibleScenarioError
from taskenergy.synth import (
    BackgroundSpec,
    GroundTruth,
    NodeSpec,
    ProcessSpec,
    Scenario,
    TaskSpec,
    generate_synthetic,
)
from taskenergy.trace import ProcSample, RaplReading, serialize_trace

from conftest import FIXTURES


def one_task(load=0.5, **kw):
    task = TaskSpec("nf-a", "T", "n0", 0, 10, [ProcessSpec(7, {0: load}, {0: 2**30})])
    return Scenario(nodes=[NodeSpec("n0")], tasks=[task], idle_window=4, duration=10, **kw)


def node_power_by_step(trace, t0, step):
    pkg = [(e.t, e.uj) for e in trace.of_type(RaplReading) if e.domain is Domain.CPU_PACKAGE]
    wrap = trace.header.wrap_uj[Domain.CPU_PACKAGE]
    energy = {}
    for (ta, a), (tb, b) in zip(pkg, pkg[1:]):
        if ta >= t0:
            k = int((ta - t0) // step)
            energy[k] = energy.get(k, 0) + (b - a) % wrap
    return [energy[k] / 1e6 / step for k in sorted(energy)]


def test_staircase_node_power_is_monotone():
    scn = synth.staircase(step=20)
    tr, _ = generate_synthetic(scn)
    power = node_power_by_step(tr, scn.idle_window, 20.0)
    busy = power[1:11]
    assert all(a < b for a, b in zip(busy, busy[1:]))
    assert power[0] == pytest.approx(40.0, abs=1e-5)  # idle step: static only
    assert busy[-1] == pytest.approx(40.0 + 90.0, abs=1e-5)  # full load


def test_generation_is_deterministic():
    scn = synth.random_scenario(3)
    a, ta = generate_synthetic(scn)
    b, tb = generate_synthetic(scn)
    assert serialize_trace(a) == serialize_trace(b)
    assert ta.lines() == tb.lines()


def test_seed_changes_counters():
    a, _ = generate_synthetic(one_task(seed=1))
    b, _ = generate_synthetic(one_task(seed=2))
    assert serialize_trace(a) != serialize_trace(b)


def test_scenario_json_roundtrip(tmp_path):
    isolated, _ = synth.colocated_pair()
    path = tmp_path / "s.json"
    isolated.dump(path)
    again = Scenario.load(path)
    assert serialize_trace(generate_synthetic(again)[0]) == serialize_trace(generate_synthetic(isolated)[0])


def test_bundled_scenario_reproduces_min_trace():
    scn = Scenario.load(FIXTURES / "min.scenario.json")
    tr, truth = generate_synthetic(scn)
    assert serialize_trace(tr) == (FIXTURES / "min.trace").read_text()
    assert "\n".join(truth.lines()) + "\n" == (FIXTURES / "min.truth").read_text()


def test_truth_roundtrip(tmp_path):
    _, truth = generate_synthetic(one_task())
    truth.write(tmp_path / "t")
    assert GroundTruth.read(tmp_path / "t").lines() == truth.lines()


def test_truth_power_law():
    _, truth = generate_synthetic(one_task(load=0.5, gamma_true=0.3))
    dyn = truth.process[("n0", 7)][Domain.CPU_PACKAGE]
    assert dyn == pytest.approx(90.0 * 0.5**0.3 * 10, rel=1e-12)


@pytest.mark.parametrize(
    "change,match",
    [
        (dict(duration=11), "multiple of the tick"),
        (dict(noise_j=50.0), "noise"),
        (dict(idle_window=2), "idle window"),
        (dict(housekeeping="maybe"), "housekeeping"),
        (dict(gamma_true=1.5), None),
    ],
)
def test_infeasible_settings(change, match):
    scn = one_task()
    for k, v in change.items():
        setattr(scn, k, v)
    with pytest.raises((InfeasibleScenarioError, ValueError), match=match):
        generate_synthetic(scn)


def test_overloaded_socket_is_infeasible():
    scn = one_task(load=0.7)
    scn.background.append(BackgroundSpec("n0", 9, {0: 0.5}, 0, 10))
    with pytest.raises(InfeasibleScenarioError, match="sum to"):
        generate_synthetic(scn)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda s: s.tasks.append(s.tasks[0]),  # duplicate task name
        lambda s: s.tasks[0].processes.append(ProcessSpec(7, {0: 0.1})),  # duplicate pid
        lambda s: setattr(s.tasks[0], "node", "n9"),
        lambda s: setattr(s.tasks[0].processes[0], "load", {1: 0.1}),  # no such socket
        lambda s: setattr(s.tasks[0], "end", 12),  # outside duration
    ],
)
def test_infeasible_structure(mutate):
    scn = one_task()
    mutate(scn)
    with pytest.raises(InfeasibleScenarioError):
        generate_synthetic(scn)


@settings(max_examples=15, deadline=None)
@given(loads=st.lists(st.floats(0.02, 0.3), min_size=2, max_size=3), gamma=st.sampled_from([0.3, 0.5, 0.8]))
def test_calibrated_housekeeping_makes_credits_sum_to_one(loads, gamma):
    tasks = [TaskSpec(f"nf-{i}", "T", "n0", 0, 10, [ProcessSpec(10 + i, {0: u}, {0: 2**28 * (i + 1)})])
             for i, u in enumerate(loads)]
    scn = Scenario(nodes=[NodeSpec("n0")], tasks=tasks, idle_window=4, duration=10, gamma_true=gamma)
    tr, _ = generate_synthetic(scn)
    procs = [e for e in tr.of_type(ProcSample) if e.t in (6.0, 8.0)]
    before = {e.pid: e.cpu[0] for e in procs if e.t == 6.0}
    after = {e.pid: e.cpu[0] for e in procs if e.t == 8.0}
    deltas = {pid: after[pid] - before[pid] for pid in after}
    total = sum(deltas.values())
    credits = sum((d / total) ** gamma for pid, d in deltas.items() if pid != synth.HOUSEKEEPING_PID)
    assert credits == pytest.approx(1.0, rel=1e-9)


def test_process_starts_with_zero_counters():
    tr, _ = generate_synthetic(one_task())
    first = [e for e in tr.of_type(ProcSample) if e.pid == 7][0]
    assert first.cpu == {0: 0.0} and first.rss == {0: 0}


@pytest.mark.parametrize("name", sorted(synth.BUILDERS))
def test_builders_generate(name):
    tr, truth = generate_synthetic(synth.BUILDERS[name]())
    assert tr.events and truth.node


def test_random_scenarios_are_feasible():
    for seed in range(30):
        scn = synth.random_scenario(seed)
        assert len([p for t in scn.tasks for p in t.processes]) <= 5
        generate_synthetic(scn)


def test_noise_keeps_counters_monotone():
    scn = one_task(noise_j=4.0)
    tr, _ = generate_synthetic(scn)
    pkg = [e.uj for e in tr.of_type(RaplReading) if e.domain is Domain.CPU_PACKAGE]
    wrap = tr.header.wrap_uj[Domain.CPU_PACKAGE]
    steps = [(b - a) % wrap for a, b in zip(pkg, pkg[1:])]
    assert all(0 < s < wrap // 2 for s in steps)
    assert math.isclose(sum(steps) / 1e6, 14 * 40 + 90 * 0.5**0.3 * 10, rel_tol=1e-2)


@pytest.mark.parametrize("name", ["colocated_isolated", "colocated_loaded"])
def test_bundled_colocated_traces_are_current(name):
    tr, _ = generate_synthetic(synth.BUILDERS[name]())
    assert serialize_trace(tr) == (FIXTURES / f"{name}.trace").read_text()
