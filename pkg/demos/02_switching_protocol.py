"""A single device under the four-phase pulse protocol."""
from cntmarble import (DeviceKind, default_params, detect_onset, paper_protocol, percentage_change,
                       phase_summary, render_plots, run_protocol)

protocol = paper_protocol()
for k, ph in enumerate(protocol.phases):
    print(f"s{k + 1}: {ph.pulse_count} pulses of {ph.amplitude:+.0f} V, {ph.duration:.0f} s")

trace = run_protocol(default_params(), DeviceKind.CNT_LM, protocol, dt=0.01)
print(len(trace), "peak samples; final state", trace.final_state)

# The repelling phases (s1, s3) sit on the high-resistance profile; the
# attracting phases (s2, s4) collapse after an onset delay
for s in phase_summary(trace):
    onset = "-" if s.onset_s is None else f"{s.onset_s:.1f} s"
    print(f"s{s.phase_index + 1}: mean {s.mean_r:10.1f} ohm  median {s.median_r:10.1f} ohm  "
          f"onset {onset}")

summ = phase_summary(trace)
print("PC s1->s2: %.2f %%" % percentage_change(summ[0].mean_r, summ[1].mean_r))
print("PC s1->s4: %.2f %%" % percentage_change(summ[0].mean_r, summ[3].mean_r))

# Entrainment: the second attracting phase switches sooner than the first
o2, o4 = detect_onset(trace, 1), detect_onset(trace, 3)
print(f"onset s2 {o2} s, s4 {o4} s, change {percentage_change(o2, o4):.1f} %")

# Weaker contact (a larger contact factor) means less current and later onset
for c in (0.125, 0.25, 0.5, 1.0):
    tr = run_protocol(default_params().replace(contact_factor=c), DeviceKind.CNT_LM, protocol)
    print(f"contact {c:5.3f}: onset s2 {detect_onset(tr, 1)} s, s4 {detect_onset(tr, 3)} s")

with open("resistance_vs_time.svg", "w") as fh:
    fh.write(render_plots(trace, "resistance_vs_time"))
print("wrote resistance_vs_time.svg")
