"""Cross-check scan.py against the frozen scratch numbers."""
import numpy as np

from nvspin import evolution as evo
from nvspin import model as mod
from nvspin import scan

noise = evo.NoiseSpec()

m = mod.nearest_neighbor_model(25.0)
spec = scan.preset_gate_spec(m, "c_pi", (52.7,), (300.0, 360.0),
                             noise=noise, label="nn carbon pi")
print("carriers:", [f"{c:.4f}" for c in spec.carriers])
rows = []
rep = scan.optimize_pi_pulse(spec, trace_rows=rows)
print(f"nn C: min={100*rep.fidelity:.3f}% avg={100*rep.fidelity_avg:.3f}% "
      f"t={rep.duration_ns:.2f} unc={100*rep.uncertainty:.3f}pt")
print("blocks:", rep.level_pair)
print("rows:", [(f"{r[0]:.4g}", f"{r[1]:.4g}", f"{r[2]:.4g}") for r in rows])

m3 = mod.third_neighbor_model(25.0)
spec3 = scan.preset_gate_spec(m3, "v_pi", (190.0,), (3.0, 4.6),
                              noise=noise, label="3rd vacancy pi")
print("carriers:", [f"{c:.4f}" for c in spec3.carriers])
rep3 = scan.optimize_pi_pulse(spec3)
print(f"3rd V: min={100*rep3.fidelity:.3f}% avg={100*rep3.fidelity_avg:.3f}% "
      f"t={rep3.duration_ns:.2f} unc={100*rep3.uncertainty:.3f}pt")
print("blocks:", rep3.level_pair)

specv = scan.preset_gate_spec(m, "v_pi", (44.0,), (14.5, 18.0),
                              noise=noise, label="nn vacancy pi dual")
print("carriers:", [f"{c:.4f}" for c in specv.carriers])
repv = scan.optimize_pi_pulse(specv)
print(f"nn V: min={100*repv.fidelity:.3f}% avg={100*repv.fidelity_avg:.3f}% "
      f"t={repv.duration_ns:.2f}")
