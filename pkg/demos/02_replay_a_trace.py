"""
Replaying a recorded trace
==========================

A trace holds counter readings, process samples and pod sightings. Replay
runs the same monitor as live mode on a deterministic schedule.
"""

# %%
import tempfile
from pathlib import Path

from taskenergy import synth
from taskenergy.monitor import run_replay
from taskenergy.report import render_report, rollup

scenario = synth.staircase(step=20)
trace, truth = synth.generate_synthetic(scenario)
print(f"{len(trace.events)} events, {len(scenario.tasks)} tasks")

# %%
dataset = run_replay(trace)
print(f"{len(dataset.ledgers)} intervals, {len(dataset.records)} process records")
print(f"static power: {dataset.profile.power()}")

# %% [markdown]
# The dataset is four tagged-line files; the report rolls records up to
# pods (physical tasks) and task names (logical tasks).

# %%
with tempfile.TemporaryDirectory() as tmp:
    dataset.write(Path(tmp) / "run")
    print(sorted(p.name for p in (Path(tmp) / "run").iterdir()))

print(render_report(rollup(dataset), "table").decode())
