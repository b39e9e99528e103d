"""Current-voltage sweeps of a single CNT marble and its pinched loop."""
import numpy as np

from cntmarble import DeviceKind, SweepSpec, default_params, loop_area, render_plots, run_sweep

params = default_params()
print(params)

# One double-sided staircase sweep: 0 -> +3 V -> 0 -> -3 V -> 0
sweep = SweepSpec(v_max=3.0, steps_per_leg=60, dwell=0.1)
iv = run_sweep(params, DeviceKind.CNT_LM, sweep, dt=0.01)
print(len(iv), "samples, first/last voltage:", iv.v[0], iv.v[-1])

# Zero voltage always means zero current, whatever the internal state
at_zero = np.abs(iv.v) < 1e-9
print("max |I| at V = 0:", np.abs(iv.i[at_zero]).max())

# The loop only opens on the attracting (negative) half where charge builds up
print("loop area (V*A):", loop_area(iv))

# Faster sweeps leave less time to accumulate charge: the loop shrinks and,
# once a sweep no longer delivers the threshold charge, closes entirely
for dwell in (0.5, 0.1, 0.05, 0.01):
    a = loop_area(run_sweep(params, DeviceKind.CNT_LM, SweepSpec(3.0, 60, dwell), 0.01))
    print(f"dwell {dwell:5.2f} s -> area {a:.4g}")

# A water-cored marble is a plain resistor: straight line, zero area
water = run_sweep(default_params(DeviceKind.WATER_LM), DeviceKind.WATER_LM, sweep, 0.01)
print("water marble area:", loop_area(water))

with open("iv_loop.svg", "w") as fh:
    fh.write(render_plots(iv, "iv_loop"))
print("wrote iv_loop.svg")
