"""Lock N-gate and CROT_V,N numbers through the production scanner."""
from nvspin import evolution as evo
from nvspin import model as mod
from nvspin import scan

noise = evo.NoiseSpec()

m = mod.nearest_neighbor_model(25.0)
spec = scan.preset_gate_spec(m, "n_pi", (109.5,), (6100.0, 6500.0),
                             noise=noise, label="nn nitrogen pi")
rep = scan.optimize_pi_pulse(spec)
print(f"nn N: carriers={spec.carriers} min={100*rep.fidelity:.3f}% "
      f"avg={100*rep.fidelity_avg:.3f}% t={rep.duration_ns:.1f} "
      f"unc={100*rep.uncertainty:.4f}pt blocks={rep.level_pair}")

m3 = mod.third_neighbor_model(25.0)
spec3 = scan.preset_gate_spec(m3, "crot_vn", (110.0,), (6300.0, 6900.0),
                              noise=noise, label="3rd crot v,n")
rep3 = scan.optimize_pi_pulse(spec3)
print(f"3rd CROT_V,N: carriers={spec3.carriers} min={100*rep3.fidelity:.3f}% "
      f"avg={100*rep3.fidelity_avg:.3f}% t={rep3.duration_ns:.1f} "
      f"unc={100*rep3.uncertainty:.4f}pt blocks={rep3.level_pair}")
