"""Dual-tone V-gate knob search: carriers, relative phase, omega."""
import numpy as np

from nvspin import evolution as evo
from nvspin import fidelity as fid
from nvspin import model as mod
from nvspin import pulses as pul

from scratch_gatecheck import pair_freq, run_gate

noise = evo.NoiseSpec()
m = mod.nearest_neighbor_model(25.0)
vals, _ = mod.eigensystem(m)

nu24 = pair_freq(vals, (2, 4))
nu35 = pair_freq(vals, (3, 5))
nu06 = pair_freq(vals, (0, 6))
nu17 = pair_freq(vals, (1, 7))
nu_up = 0.5 * (nu24 + nu35)
nu_dn = 0.5 * (nu06 + nu17)

states = fid.vacancy_states()

for phi in (0.0, np.pi / 2, np.pi):
    run_gate(f"N-means, rel phase {phi:.2f}, om 44", m,
             [pul.Tone(44.0, nu_up), pul.Tone(44.0, nu_dn, phi0=phi)],
             states, 14.5, 18.0, 0.05, noise)

run_gate("exact lines (2,4)/(0,6), om 44", m,
         [pul.Tone(44.0, nu24), pul.Tone(44.0, nu06)],
         states, 14.5, 18.0, 0.05, noise)

for om in (40.0, 48.0):
    run_gate(f"N-means, om {om}", m,
             [pul.Tone(om, nu_up), pul.Tone(om, nu_dn)],
             states, 13.0, 19.5, 0.05, noise)
