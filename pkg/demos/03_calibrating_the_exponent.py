"""
Calibrating the exponent
========================

Sweep the exponent over a trace and keep the one whose workflow estimate
is closest to the node's measured energy.
"""

# %%
from taskenergy import synth
from taskenergy.evaluation import calibrate_gamma, render_sweep

for gamma_true in (0.3, 0.5):
    trace, _ = synth.generate_synthetic(synth.calibration(gamma_true))
    result = calibrate_gamma(trace)
    print(f"generated with {gamma_true}, selected {result.selected}, unimodal {result.is_unimodal()}")
    print(render_sweep(result).decode())
