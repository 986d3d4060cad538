"""Shared oracles for the test suite, independent of the integrator."""

import numpy as np

from nvspin import model as mdl
from nvspin import pulses as pls
from nvspin import spincore as sc

KAPPA = sc.RADIANS_PER_MHZ_NS


def piecewise_unitary(model, schedule, dt):
    """Time-ordered product of midpoint-sampled matrix exponentials.

    Second order in dt; dt around 1e-3 ns resolves the carriers used
    here to fidelity errors well below 1e-8.
    """
    h0 = mdl.build_static_hamiltonian(model)
    vd = pls.drive_operator(model)
    u = np.eye(sc.DIM, dtype=complex)
    t0 = 0.0
    for seg in schedule.segments:
        n = max(1, int(np.ceil(seg.duration / dt)))
        step = seg.duration / n
        for k in range(n):
            tm = t0 + (k + 0.5) * step
            h = h0 + pls.drive_amplitude(schedule, tm) * vd
            vals, vecs = np.linalg.eigh(h)
            u = (vecs * np.exp(-1j * KAPPA * vals * step)) @ vecs.conj().T @ u
        t0 += seg.duration
    return u


def random_schedule(rng, max_segments=2, max_duration=12.0):
    """Small driven schedule with random tones for propagator checks."""
    segments = []
    for _ in range(int(rng.integers(1, max_segments + 1))):
        tones = tuple(
            pls.Tone(
                omega0=float(rng.uniform(2.0, 30.0)),
                nu=float(rng.uniform(5.0, 2600.0)),
                phi0=float(rng.uniform(0.0, 2.0 * np.pi)),
            )
            for _ in range(int(rng.integers(1, 3)))
        )
        ref = "segment" if rng.random() < 0.5 else "schedule"
        segments.append(pls.PulseSegment(
            tones, float(rng.uniform(2.0, max_duration)), carrier_reference=ref))
    return pls.PulseSchedule(tuple(segments))


def random_density(rng, rank=3):
    """Random fixed-rank density matrix."""
    a = rng.normal(size=(sc.DIM, rank)) + 1j * rng.normal(size=(sc.DIM, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def decoupled_model(field_mt=25.0):
    """Hyperfine-free register: diagonal Hamiltonian, exact rate algebra."""
    return mdl.RegisterModel(
        field_mt=field_mt, zero_field_splitting=2880.0, strain=0.0,
        gamma_e=28.0, gamma_c=0.0106, gamma_n=-0.0043,
        n_parallel=0.0, n_perp=0.0, carbon=mdl.HyperfineTensor(0.0, 0.0))
