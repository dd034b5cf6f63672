"""
Many small tasks
================

Groups of short tasks can outweigh a few long ones in total even though
each long task dominates individually. Tasks observed for under 15 s are
flagged because they span few samples.
"""

# %%
from taskenergy import synth
from taskenergy.monitor import run_replay
from taskenergy.report import energy_histogram, rollup

r = rollup(run_replay(synth.generate_synthetic(synth.sarek_like())[0]))
for name, tasks in energy_histogram(r):
    energies = [e for _, e in tasks]
    print(f"{name:22s} n={len(tasks):3d}  max {max(energies):9.1f} J  total {sum(energies):10.1f} J")

# %% [markdown]
# A run of hundreds of sub-10 s tasks: every one carries the flag.

# %%
r = rollup(run_replay(synth.generate_synthetic(synth.rangeland())[0]))
flagged = sum(t.short_task for t in r.physical.values())
print(f"{flagged} of {len(r.physical)} tasks flagged short")
