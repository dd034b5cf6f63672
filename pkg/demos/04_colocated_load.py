"""
Robustness to co-located load
=============================

The same sequence of tasks runs twice, the second time next to unrelated
processes that add a quarter of the tasks' CPU time. Both models lose
accuracy; the linear one loses more.
"""

# %%
from taskenergy import synth
from taskenergy.evaluation import compare_baseline, render_comparison

isolated, loaded = synth.colocated_pair(extra=0.25)
cmp = compare_baseline(synth.generate_synthetic(isolated)[0], 0.3, synth.generate_synthetic(loaded)[0])
print(render_comparison(cmp).decode())

for model, result in cmp.models.items():
    print(f"{model:9s} deviation under load {result.deviation['loaded']:+.2f} pp")
