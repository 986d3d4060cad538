"""Pulse-parameter optimization: max-of-min fidelity scans and sequences.

The scanner scores a square pulse against the ideal action of the lines
it actually drives. A tone claims an eigenlevel pair when its detuning
is below the pair's Rabi rate; claims are resolved strongest-line-first
so that a weak line sharing a level with a strong one stays a spectator
(and shows up as honest leakage). The ideal then consists of pi blocks
on the claimed pairs stacked onto free phase evolution, with two
deterministic frame calibrations that a hardware experiment would also
calibrate away:

* second-order AC Stark shifts of every undriven level under every
  tone (the dominant effect on spectator coherences), and
* carrier-locked phase accumulation inside each driven block, so the
  block rotates at the tone frequency rather than the shifted line.

Gate fidelity is the minimum over the preparation set, maximized over
the time window ("max-of-min"), with cubic interpolation for the peak
location and the +-250 ps jitter figure.
"""

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import spincore as sc
from .evolution import evolve, evolve_batch
from .fidelity import (GateReport, state_fidelity, state_set,
                       timing_uncertainty)
from .model import dominant_label, eigensystem
from .pulses import (PulseSchedule, PulseSegment, Tone, drive_operator,
                     pi_time_estimate)

KAPPA = sc.RADIANS_PER_MHZ_NS

# a line below this drive element cannot be addressed at all
ELEMENT_MIN = 1e-6

# dual carriers closer than the bandwidth of an O(10 ns) pulse cannot be
# separately resolved
RESOLVABLE_SPLITTING_MHZ = 50.0

# Stark terms with a denominator below this multiple of the half-Rabi
# rate are non-perturbative and excluded from the shift sum
_STARK_GUARD = 4.0

# peak polish: half-width of the dense re-evaluation around the coarse
# optimum; must exceed the 0.25 ns jitter half-window
_POLISH_HALF_NS = 0.3
_POLISH_DT_NS = 0.02


class ScanWindowError(RuntimeError):
    """Fidelity trace has no interior maximum; widen the time window."""


@dataclass(frozen=True)
class ScanSpec:
    """One optimization problem: drive target, grids, states, noise."""

    model: object
    carriers: tuple
    omega_grid: tuple
    window: tuple
    states: object
    noise: object = None
    phases: tuple = None
    refine: int = 10
    label: str = ""

    def __post_init__(self):
        carriers = tuple(float(c) for c in self.carriers)
        omegas = tuple(float(w) for w in self.omega_grid)
        window = tuple(float(t) for t in self.window)
        if not carriers or min(carriers) <= 0:
            raise ValueError("carriers must be positive frequencies")
        if not omegas or any(b <= a for a, b in zip(omegas, omegas[1:])):
            raise ValueError("omega grid must be nonempty and increasing")
        if min(omegas) <= 0:
            raise ValueError("omega grid must be positive")
        if len(window) != 2 or window[0] < 0 or window[1] <= window[0]:
            raise ValueError("time window must be (lo, hi) with 0 <= lo < hi")
        phases = self.phases
        phases = (0.0,) * len(carriers) if phases is None else tuple(
            float(p) for p in phases)
        if len(phases) != len(carriers):
            raise ValueError("need one phase per carrier")
        if self.refine < 1:
            raise ValueError("refinement factor must be >= 1")
        object.__setattr__(self, "carriers", carriers)
        object.__setattr__(self, "omega_grid", omegas)
        object.__setattr__(self, "window", window)
        object.__setattr__(self, "phases", phases)

    def segment(self, omega0, duration):
        tones = tuple(Tone(float(omega0), nu, phi)
                      for nu, phi in zip(self.carriers, self.phases))
        return PulseSegment(tones, duration)


# -- drive frame -------------------------------------------------------------

@dataclass(frozen=True)
class DriveFrame:
    """Ideal action of one segment: claimed blocks + calibrated phases."""

    blocks: tuple        # ((a, b), tone_index) per claimed pair
    freqs: object        # per-level phase frequencies, MHz
    gate: object         # product of pi blocks, eigenbasis
    vecs: object         # eigenvectors, lab <- eigen

    def target_vector(self, psi0, t):
        c0 = self.gate @ (self.vecs.conj().T @ psi0)
        return self.vecs @ (np.exp(-1j * KAPPA * self.freqs * t) * c0)


def drive_frame(model, segment):
    """Claim driven lines and build the calibrated ideal for a segment."""
    vals, vecs = eigensystem(model)
    m_eig = vecs.conj().T @ drive_operator(model) @ vecs
    n = vals.size

    cands = [(i, j, abs(m_eig[i, j]))
             for i in range(n) for j in range(i + 1, n)
             if abs(m_eig[i, j]) > ELEMENT_MIN]

    # strongest lines claim their levels first; qualifying weaker lines
    # that would share a level stay spectators
    blocks = []
    used = set()
    for i, j, el in sorted(cands, key=lambda c: (-c[2], c[0], c[1])):
        nu_ij = vals[j] - vals[i]
        best = None
        for ti, tone in enumerate(segment.tones):
            det = abs(nu_ij - tone.nu)
            if det <= tone.omega0 * el and (best is None or det < best[1]):
                best = (ti, det)
        if best is not None and i not in used and j not in used:
            blocks.append(((i, j), best[0]))
            used.update((i, j))
    blocks.sort()

    claimed = {pair: ti for pair, ti in blocks}
    stark = np.zeros(n)
    for i, j, el in cands:
        d_ij = vals[i] - vals[j]
        for ti, tone in enumerate(segment.tones):
            if claimed.get((i, j)) == ti:
                continue
            half = 0.5 * tone.omega0 * el
            if min(abs(d_ij + tone.nu), abs(d_ij - tone.nu)) \
                    < _STARK_GUARD * half:
                continue
            shift = half * half * (1.0 / (d_ij + tone.nu)
                                   + 1.0 / (d_ij - tone.nu))
            stark[i] += shift
            stark[j] -= shift

    freqs = vals + stark
    gate = np.eye(n, dtype=complex)
    for (a, b), ti in blocks:
        tone = segment.tones[ti]
        freqs[b] = freqs[a] + tone.nu
        phi = tone.phi0 + np.angle(m_eig[a, b])
        blk = np.eye(n, dtype=complex)
        blk[a, a] = blk[b, b] = 0.0
        blk[a, b] = -1j * np.exp(1j * phi)
        blk[b, a] = -1j * np.exp(-1j * phi)
        gate = blk @ gate

    return DriveFrame(tuple(blocks), freqs, gate, vecs)


def _pure_ket(rho):
    w, v = np.linalg.eigh(rho)
    if w[-1] >= 1.0 - 1e-9:
        return v[:, -1]
    return None


def fidelity_trace(model, segment, states, times, noise):
    """Per-time, per-state fidelity against the drive-frame ideal."""
    frame = drive_frame(model, segment)
    times = np.asarray(times, dtype=float)
    rhos = np.asarray(states.states)
    _, samples, _ = evolve_batch(rhos, model, PulseSchedule((segment,)),
                                 noise=noise, sample_times=times,
                                 check_samples=False)
    kets = [_pure_ket(r) for r in states.states]
    phases = np.exp(-1j * KAPPA * np.outer(times, frame.freqs))
    out = np.empty((times.size, len(states)))
    for s, rho0 in enumerate(states.states):
        if kets[s] is not None:
            c0 = frame.gate @ (frame.vecs.conj().T @ kets[s])
            tgt = (phases * c0) @ frame.vecs.T          # (nt, d) kets
            out[:, s] = np.real(np.einsum(
                "ti,tij,tj->t", tgt.conj(), samples[:, s], tgt))
        else:
            sig = frame.gate @ (frame.vecs.conj().T @ rho0 @ frame.vecs) \
                @ frame.gate.conj().T
            for k in range(times.size):
                ph = phases[k]
                tgt = frame.vecs @ (np.outer(ph, ph.conj()) * sig) \
                    @ frame.vecs.conj().T
                out[k, s] = state_fidelity(samples[k, s], tgt)
    return out


# -- scan core ---------------------------------------------------------------

def _claimable_element(model, spec, omega0):
    vals, vecs = eigensystem(model)
    m_eig = vecs.conj().T @ drive_operator(model) @ vecs
    best = 0.0
    for i in range(vals.size):
        for j in range(i + 1, vals.size):
            el = abs(m_eig[i, j])
            if el <= ELEMENT_MIN:
                continue
            nu_ij = vals[j] - vals[i]
            for nu in spec.carriers:
                if abs(nu_ij - nu) <= omega0 * el:
                    best = max(best, el)
    if best == 0.0:
        best = max(abs(m_eig[i, j]) for i in range(vals.size)
                   for j in range(i + 1, vals.size))
    return best


def _window_times(spec, omega0):
    lo, hi = spec.window
    t_pi = pi_time_estimate(omega0, _claimable_element(spec.model, spec,
                                                       omega0))
    dt = min(1.0, t_pi / 200.0)
    count = max(int(np.floor((hi - lo) / dt)) + 1, 4)
    return lo + dt * np.arange(count)


def _grid_point(spec, omega0):
    """Best (t, min, avg) on the sampled window for one drive power."""
    times = _window_times(spec, omega0)
    segment = spec.segment(omega0, times[-1] + 2.0 * _POLISH_HALF_NS)
    trace = fidelity_trace(spec.model, segment, spec.states, times,
                           spec.noise)
    min_tr = trace.min(axis=1)
    k = int(np.argmax(min_tr))
    return times, min_tr, k, float(trace[k].mean())


def _require_interior(times, min_tr, k, label):
    if np.ptp(min_tr) < 1e-9:
        raise ScanWindowError(
            f"{label}: fidelity trace is flat over "
            f"[{times[0]:g}, {times[-1]:g}] ns; widen the time window")
    if k == 0 or k == times.size - 1:
        raise ScanWindowError(
            f"{label}: fidelity trace is monotone over "
            f"[{times[0]:g}, {times[-1]:g}] ns (best point at the edge); "
            "widen the time window")


def _curve_job(args):
    spec, omega0 = args
    times, min_tr, k, avg = _grid_point(spec, omega0)
    return float(omega0), float(times[k]), float(min_tr[k]), avg


def _map_jobs(jobs, workers):
    if workers <= 1:
        return [_curve_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_curve_job, jobs))


def _refined_omegas(spec, best):
    grid = spec.omega_grid
    if len(grid) < 2:
        return ()
    step = (grid[-1] - grid[0]) / (len(grid) - 1) / spec.refine
    out = []
    for k in range(1 - spec.refine, spec.refine):
        om = best + k * step
        if om > 0 and k != 0:
            out.append(om)
    return tuple(out)


def optimize_pi_pulse(spec, workers=1, trace_rows=None):
    """Max-of-min optimum over the omega grid and time window.

    Coarse grid first, then a 1/refine-pitch pass around the coarse
    winner, then a dense time polish at the overall best point. When
    `trace_rows` is a list, every evaluated grid point appends a row
    (omega0_MHz, t_ns, min_fidelity, avg_fidelity).
    """
    label = spec.label or "scan"
    rows = _map_jobs([(spec, om) for om in spec.omega_grid], workers)
    if trace_rows is not None:
        trace_rows.extend(rows)
    # deterministic: strict improvement wins, ties keep the lower power
    best_om, best_t, best_min, _ = max(rows, key=lambda r: (r[2], -r[0]))

    times, min_tr, k, _ = _grid_point(spec, best_om)
    _require_interior(times, min_tr, k, label)

    refined = _map_jobs([(spec, om) for om in _refined_omegas(spec, best_om)],
                        workers)
    if trace_rows is not None:
        trace_rows.extend(refined)
    for om, t, fmin, _ in refined:
        if fmin > best_min:
            best_om, best_t, best_min = om, t, fmin

    return _polish(spec, best_om, best_t, label)


def _polish(spec, omega0, t_center, label):
    lo, _ = spec.window
    t0 = max(lo, t_center - _POLISH_HALF_NS)
    times = t0 + _POLISH_DT_NS * np.arange(
        int(round(2.0 * _POLISH_HALF_NS / _POLISH_DT_NS)) + 1)
    segment = spec.segment(omega0, times[-1] + 1.0)
    trace = fidelity_trace(spec.model, segment, spec.states, times,
                           spec.noise)
    min_tr = trace.min(axis=1)

    spline = CubicSpline(times, min_tr)
    dense = np.linspace(times[0], times[-1], 2048)
    t_star = float(dense[int(np.argmax(spline(dense)))])
    k = int(np.argmin(np.abs(times - t_star)))

    frame = drive_frame(spec.model, segment)
    try:
        jitter = timing_uncertainty(times, min_tr, times[k])
    except ValueError:
        jitter = float(0.5 * np.ptp(min_tr))
    return GateReport(
        label=label,
        level_pair=tuple(pair for pair, _ in frame.blocks),
        state_set=spec.states.name,
        omega0=float(omega0),
        nu=spec.carriers[0],
        carriers=spec.carriers,
        phi0=spec.phases[0],
        duration_ns=float(times[k]),
        fidelity=float(min_tr[k]),
        fidelity_avg=float(trace[k].mean()),
        uncertainty=float(jitter),
        per_state=tuple(zip(spec.states.labels,
                            (float(f) for f in trace[k]))),
    )


def fidelity_vs_omega_scan(spec, workers=1, trace_rows=None):
    """Best in-window fidelity per drive power, refined around peaks.

    Returns a tuple of (omega0, best min fidelity) sorted by omega0,
    including the refined points. Edge maxima are recorded as-is: the
    curve reports whatever the window contains.
    """
    coarse = _map_jobs([(spec, om) for om in spec.omega_grid], workers)
    if trace_rows is not None:
        trace_rows.extend(coarse)
    fids = [r[2] for r in coarse]
    peaks = [k for k in range(1, len(coarse) - 1)
             if fids[k] >= fids[k - 1] and fids[k] >= fids[k + 1]]

    extra = []
    for k in peaks:
        extra.extend(_refined_omegas_near(spec, spec.omega_grid[k]))
    refined = _map_jobs([(spec, om) for om in sorted(set(extra))], workers)
    if trace_rows is not None:
        trace_rows.extend(refined)

    curve = {r[0]: r[2] for r in coarse}
    for om, _, fmin, _ in refined:
        curve[om] = fmin
    return tuple(sorted(curve.items()))


def _refined_omegas_near(spec, center):
    grid = spec.omega_grid
    if len(grid) < 2:
        return ()
    step = (grid[-1] - grid[0]) / (len(grid) - 1) / spec.refine
    return tuple(center + k * step
                 for k in range(1 - spec.refine, spec.refine)
                 if k != 0 and center + k * step > 0)


def scan_rows_to_csv(rows):
    """CSV trace of evaluated grid points."""
    lines = ["omega0_MHz,t_ns,min_fidelity,avg_fidelity"]
    for om, t, fmin, favg in rows:
        lines.append(f"{om:.9g},{t:.9g},{fmin:.9g},{favg:.9g}")
    return "\n".join(lines) + "\n"


def jitter_ranked_peaks(spec, curve, workers=1):
    """Score every curve peak by fidelity minus timing jitter.

    Returns ((omega0, fidelity, jitter, score), ...) sorted by score,
    best first; ties prefer the lower drive power. The best entry is
    the jitter-preferred operating point.
    """
    oms = [om for om, _ in curve]
    fids = [f for _, f in curve]
    peaks = [k for k in range(1, len(curve) - 1)
             if fids[k] >= fids[k - 1] and fids[k] >= fids[k + 1]]
    if not peaks:
        raise ScanWindowError("curve has no interior peak; widen the "
                              "omega grid")
    reports = []
    for k in peaks:
        sub = ScanSpec(spec.model, spec.carriers, (oms[k],), spec.window,
                       spec.states, spec.noise, spec.phases, spec.refine,
                       spec.label)
        rep = optimize_pi_pulse(sub, workers=workers)
        reports.append((oms[k], rep.fidelity, rep.uncertainty,
                        rep.fidelity - rep.uncertainty))
    reports.sort(key=lambda r: (-r[3], r[0]))
    return tuple(reports)


# -- gate presets ------------------------------------------------------------

def _labels(model):
    _, vecs = eigensystem(model)
    return [dominant_label(vecs[:, k]) for k in range(sc.DIM)]


def transition_pairs(model, spin):
    """Eigenpairs of the single-flip lines for one spin of the register.

    Vacancy pairs flip m_S between 0 and -1 with both nuclei spectating;
    carbon and nitrogen pairs flip the named nuclear spin inside the
    m_S = -1 manifold, where the hyperfine coupling makes them drivable.
    """
    labs = _labels(model)
    out = []
    for i in range(sc.DIM):
        for j in range(i + 1, sc.DIM):
            (ms_i, mc_i, mn_i), (ms_j, mc_j, mn_j) = labs[i], labs[j]
            if spin == "vacancy":
                hit = {ms_i, ms_j} == {0, -1} and mc_i == mc_j \
                    and mn_i == mn_j
            elif spin == "carbon":
                hit = ms_i == ms_j == -1 and mc_i != mc_j and mn_i == mn_j
            elif spin == "nitrogen":
                hit = ms_i == ms_j == -1 and mn_i != mn_j and mc_i == mc_j
            else:
                raise ValueError(f"unknown spin {spin!r}")
            if hit:
                out.append((i, j))
    if not out:
        raise ValueError(f"no {spin} transition found; labels too mixed")
    return tuple(out)


def _pair_freqs(model, pairs):
    vals, _ = eigensystem(model)
    return tuple(float(vals[j] - vals[i]) for i, j in pairs)


def _pair_elements(model, pairs):
    vals, vecs = eigensystem(model)
    m_eig = vecs.conj().T @ drive_operator(model) @ vecs
    return tuple(float(abs(m_eig[i, j])) for i, j in pairs)


def vacancy_pi_carriers(model, omega0):
    """Carrier rule for an unconditional vacancy flip.

    The four carbon/nitrogen-conditioned lines fall into two carbon
    branches. When the branch splitting beats the drive bandwidth the
    branches need one tone each (dual-frequency driving); otherwise a
    single tone at the average frequency covers all four lines.
    """
    pairs = transition_pairs(model, "vacancy")
    labs = _labels(model)
    freqs = _pair_freqs(model, pairs)
    els = _pair_elements(model, pairs)
    up = [f for (i, j), f in zip(pairs, freqs) if labs[i][1] == 1]
    dn = [f for (i, j), f in zip(pairs, freqs) if labs[i][1] == -1]
    if not up or not dn:
        return (float(np.mean(freqs)),)
    split = abs(np.mean(up) - np.mean(dn))
    bandwidth = 2.0 * omega0 * float(np.mean(els))
    if split > bandwidth:
        return tuple(sorted((float(np.mean(up)), float(np.mean(dn)))))
    return (float(np.mean(freqs)),)


def conditioned_vacancy_carrier(model, carbon_value):
    """Single carrier at the carbon-conditioned vacancy branch."""
    pairs = transition_pairs(model, "vacancy")
    labs = _labels(model)
    freqs = [f for (i, j), f in zip(pairs, _pair_freqs(model, pairs))
             if labs[i][1] == carbon_value]
    if not freqs:
        raise ValueError(f"no vacancy line with carbon {carbon_value}")
    return float(np.mean(freqs))


def nuclear_pi_carrier(model, spin):
    """Carrier at the mean of the m_S = -1 nuclear-flip lines."""
    return float(np.mean(_pair_freqs(model, transition_pairs(model, spin))))


_GATE_STATES = {
    "v_pi": "vacancy25",
    "crot_cv": "vacancy25",
    "c_pi": "carbon16",
    "crot_vc": "carbon16",
    "n_pi": "nitrogen8",
    "crot_vn": "nitrogen8",
}


def preset_gate_spec(model, gate, omega_grid, window, noise=None,
                     refine=10, label=None):
    """ScanSpec for one of the register's named pulse gates.

    Gates: v_pi (unconditional vacancy flip, dual-frequency when the
    carbon branches resolve), crot_cv (vacancy flip conditioned on
    carbon up), c_pi/crot_vc (carbon flip, m_S = -1 manifold) and
    n_pi/crot_vn (nitrogen flip, m_S = -1 manifold).
    """
    if gate not in _GATE_STATES:
        raise ValueError(f"unknown gate {gate!r}, expected one of "
                         f"{sorted(_GATE_STATES)}")
    omega_ref = float(np.median(np.asarray(omega_grid, dtype=float)))
    if gate == "v_pi":
        carriers = vacancy_pi_carriers(model, omega_ref)
    elif gate == "crot_cv":
        carriers = (conditioned_vacancy_carrier(model, 1),)
    elif gate in ("c_pi", "crot_vc"):
        carriers = (nuclear_pi_carrier(model, "carbon"),)
    else:
        carriers = (nuclear_pi_carrier(model, "nitrogen"),)
    return ScanSpec(model, carriers, tuple(omega_grid), tuple(window),
                    state_set(_GATE_STATES[gate]), noise,
                    label=label or gate)


# -- dual-frequency pulse ----------------------------------------------------

def dual_frequency_pulse(model, transition_pair, omega0, phases=(0.0, 0.0)):
    """Two-tone segment addressing both carbon branches of a V flip.

    `transition_pair` holds the two carbon-conditioned eigenpairs. The
    carriers sit on the exact line frequencies, one tone per branch,
    separated by the carbon-conditioned splitting. Equal frequencies
    collapse to a single tone of doubled amplitude (cosine identity).
    A splitting too small for an O(10 ns) pulse to resolve is flagged.
    """
    (a, b), (c, d) = transition_pair
    freqs = _pair_freqs(model, ((a, b), (c, d)))
    els = _pair_elements(model, ((a, b), (c, d)))
    if min(els) <= ELEMENT_MIN:
        raise ValueError("transition is drive-forbidden")
    duration = pi_time_estimate(omega0, float(np.mean(els)))
    split = abs(freqs[0] - freqs[1])
    if split < 1e-9:
        return PulseSegment((Tone(2.0 * omega0, freqs[0], phases[0]),),
                            duration)
    if split < RESOLVABLE_SPLITTING_MHZ:
        warnings.warn(
            f"carrier splitting {split:.3g} MHz is unresolvable within "
            "O(10 ns) pulses; expect overlapping excitation",
            stacklevel=2)
    return PulseSegment(
        (Tone(omega0, freqs[0], phases[0]),
         Tone(omega0, freqs[1], phases[1])), duration)


# -- sequences ---------------------------------------------------------------

@dataclass(frozen=True)
class SequenceStep:
    """One resonant rotation: eigenpair, angle, tone phase, power.

    `detune` offsets the tone from the bare eigenfrequency, e.g. onto
    the power-shifted line of a weak transition next to a strong one.
    """

    level_pair: tuple
    theta: float
    phase: float = 0.0
    omega0: float = 10.0
    detune: float = 0.0

    def __post_init__(self):
        a, b = (int(k) for k in self.level_pair)
        if not 0 <= a < b < sc.DIM:
            raise ValueError(f"bad level pair {self.level_pair}")
        if self.theta <= 0:
            raise ValueError("rotation angle must be positive")
        if self.omega0 <= 0:
            raise ValueError("drive power must be positive")
        object.__setattr__(self, "level_pair", (a, b))


@dataclass(frozen=True)
class SequenceSpec:
    """Named pulse train; each step must resolve to a drivable line."""

    name: str
    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))


def compile_sequence(model, seq):
    """PulseSchedule for a sequence of resonant rotations.

    Directly driven double-flip ("forbidden") lines are permitted
    whenever the eigenbasis drive element exceeds 1e-6; the compiled
    duration uses that element.
    """
    vals, vecs = eigensystem(model)
    m_eig = vecs.conj().T @ drive_operator(model) @ vecs
    segments = []
    for step in seq.steps:
        a, b = step.level_pair
        el = abs(m_eig[a, b])
        if el <= ELEMENT_MIN:
            raise ValueError(
                f"{seq.name}: transition {a}-{b} is drive-forbidden "
                f"(element {el:.2g})")
        duration = (step.theta / np.pi) * pi_time_estimate(step.omega0, el)
        segments.append(PulseSegment(
            (Tone(step.omega0, float(vals[b] - vals[a]) + step.detune,
                  step.phase),),
            duration))
    return PulseSchedule(tuple(segments))


def _sequence_frame(model, seq, schedule):
    """Eigenbasis rotation product with absolute-time tone phases."""
    vals, vecs = eigensystem(model)
    m_eig = vecs.conj().T @ drive_operator(model) @ vecs
    gate = np.eye(sc.DIM, dtype=complex)
    for step, start, segment in zip(seq.steps, schedule.segment_starts(),
                                    schedule.segments):
        a, b = step.level_pair
        nu = segment.tones[0].nu
        phi = step.phase - KAPPA * nu * start + np.angle(m_eig[a, b])
        half = 0.5 * step.theta
        blk = np.eye(sc.DIM, dtype=complex)
        blk[a, a] = blk[b, b] = np.cos(half)
        blk[a, b] = -1j * np.exp(1j * phi) * np.sin(half)
        blk[b, a] = -1j * np.exp(-1j * phi) * np.sin(half)
        gate = blk @ gate
    return gate, vals, vecs


def sequence_target(model, seq, schedule, t):
    """Lab-frame ideal unitary of the sequence at time t."""
    gate, vals, vecs = _sequence_frame(model, seq, schedule)
    phases = np.exp(-1j * KAPPA * vals * t)
    return vecs @ (phases[:, None] * gate) @ vecs.conj().T


def run_sequence(model, seq, rho0, noise=None):
    """Evolve through a compiled sequence; score against its ideal.

    Returns (rho_final, fidelity against the ideal sequence action).
    An empty sequence leaves the state untouched with fidelity one.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if not seq.steps:
        return rho0.copy(), 1.0
    schedule = compile_sequence(model, seq)
    result = evolve(rho0, model, schedule, noise=noise)
    ideal = sequence_target(model, seq, schedule,
                            schedule.total_duration)
    want = ideal @ rho0 @ ideal.conj().T
    return result.rho_final, state_fidelity(result.rho_final, want)


def sequence_fidelity_trace(model, seq, rho0, noise, sample_times):
    """Fidelity vs the matching-time ideal at each sample time.

    The ideal applies every rotation in full plus free phases to t, so
    the trace peaks where the real pulse train best realizes the whole
    sequence; its maximum is the sequence's optimum readout.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    schedule = compile_sequence(model, seq)
    times = np.asarray(sample_times, dtype=float)
    result = evolve(rho0, model, schedule, noise=noise,
                    sample_times=times)
    gate, vals, vecs = _sequence_frame(model, seq, schedule)
    sampled = [rho for _, rho in result.trajectory]
    ket = _pure_ket(rho0)
    out = np.empty(times.size)
    phases = np.exp(-1j * KAPPA * np.outer(times, vals))
    if ket is not None:
        c0 = gate @ (vecs.conj().T @ ket)
        tgt = (phases * c0) @ vecs.T
        for k in range(times.size):
            out[k] = float(np.real(
                tgt[k].conj() @ sampled[k] @ tgt[k]))
    else:
        sig = gate @ (vecs.conj().T @ rho0 @ vecs) @ gate.conj().T
        for k in range(times.size):
            ph = phases[k]
            want = vecs @ (np.outer(ph, ph.conj()) * sig) @ vecs.conj().T
            out[k] = state_fidelity(sampled[k], want)
    return out


# -- entangled-state preparation --------------------------------------------

def find_level(model, label):
    """Eigenlevel index whose dominant product component matches label."""
    vals, vecs = eigensystem(model)
    want = tuple(label)
    for k in range(sc.DIM):
        if dominant_label(vecs[:, k]) == want:
            return k
    raise ValueError(f"no eigenlevel with dominant label {label}")


def stark_detunes(model, seq):
    """Per-step power shift of the driven line under its own tone.

    Weak lines next to strong ones shift by more than their Rabi width,
    so resonant driving must target the shifted frequency. Returns one
    detune per step, computed with the same second-order sum as the
    scan ideal; terms inside the non-perturbative guard are skipped.
    """
    vals, vecs = eigensystem(model)
    m_eig = vecs.conj().T @ drive_operator(model) @ vecs
    out = []
    for step in seq.steps:
        a, b = step.level_pair
        nu = float(vals[b] - vals[a])
        stark = np.zeros(sc.DIM)
        for i in range(sc.DIM):
            for j in range(i + 1, sc.DIM):
                el = abs(m_eig[i, j])
                if el <= ELEMENT_MIN or (i, j) == (a, b):
                    continue
                d_ij = vals[i] - vals[j]
                half = 0.5 * step.omega0 * el
                if min(abs(d_ij + nu), abs(d_ij - nu)) < _STARK_GUARD * half:
                    continue
                shift = half * half * (1.0 / (d_ij + nu)
                                       + 1.0 / (d_ij - nu))
                stark[i] += shift
                stark[j] -= shift
        out.append(float(stark[b] - stark[a]))
    return tuple(out)


@dataclass(frozen=True)
class BellPrep:
    """Compiled-ready entangling sequence with its scored doublet."""

    seq: "SequenceSpec"
    rho0: np.ndarray
    pair: tuple     # eigenlevel indices of the odd-parity doublet
    label: str


def bell_state_fidelity(rho, pair):
    """Overlap with (|a> + e^{i chi}|b>)/sqrt(2), maximized over chi.

    Indices address whatever basis `rho` is expressed in.
    """
    a, b = pair
    return float(0.5 * (rho[a, a].real + rho[b, b].real)
                 + abs(rho[a, b]))


def _broadband_theta(model, pair, base):
    """Rotation angle correction for drives faster than level mixing.

    Where the product-basis element exceeds the eigenbasis one, the
    eigenstructure under the line is unresolved at pulse bandwidth and
    the physical flip rate is the product element; shrink theta so the
    compiled duration matches it.
    """
    vals, vecs = eigensystem(model)
    m_eig = vecs.conj().T @ drive_operator(model) @ vecs
    a, b = pair
    el_eig = abs(m_eig[a, b])
    ia = int(np.argmax(np.abs(vecs[:, a])))
    ib = int(np.argmax(np.abs(vecs[:, b])))
    el_prod = abs(drive_operator(model)[ia, ib])
    if el_prod > el_eig:
        return base * el_eig / el_prod
    return base


# slow flips beat leakage until m_S=0 precession catches up; these sit
# at the measured optima of that trade
_BELL_OMEGA_RF = {("vc", "two"): 25.0, ("vn", "two"): 20.0,
                  ("vc", "three"): 60.0, ("vn", "three"): 60.0}


def bell_preparation(model, which="vc", scheme="two", omega_mw=10.0,
                     omega_rf=None, stark_correct=True):
    """Odd-parity Bell preparation controls from the polarized state.

    `which` picks the nuclear partner ("vc" carbon, "vn" nitrogen);
    `scheme` the pulse count ("two": flip up then half-rotate on the
    cross-manifold line; "three": half-rotate down, flip the nucleus,
    flip the rest up). The start state is the polarized product state;
    the scored doublet indexes eigenlevels.
    """
    if which not in ("vc", "vn"):
        raise ValueError(f"unknown bell partner {which!r}")
    if scheme not in ("two", "three"):
        raise ValueError(f"unknown bell scheme {scheme!r}")
    if omega_rf is None:
        omega_rf = _BELL_OMEGA_RF[(which, scheme)]
    nuc = {"vc": (-1, 1, -1), "vn": (-1, -1, 1)}[which]
    k_start = find_level(model, (0, -1, -1))
    k_up = find_level(model, (1, -1, -1))
    k_dn = find_level(model, (-1, -1, -1))
    k_nuc = find_level(model, nuc)
    if scheme == "two":
        steps = [
            SequenceStep(tuple(sorted((k_start, k_up))),
                         _broadband_theta(model, tuple(sorted((k_start, k_up))), np.pi),
                         omega0=omega_mw),
            SequenceStep(tuple(sorted((k_up, k_nuc))), np.pi / 2.0,
                         omega0=omega_rf),
        ]
    else:
        steps = [
            SequenceStep(tuple(sorted((k_start, k_dn))),
                         _broadband_theta(model, tuple(sorted((k_start, k_dn))), np.pi / 2.0),
                         omega0=omega_mw),
            SequenceStep(tuple(sorted((k_dn, k_nuc))), np.pi,
                         omega0=omega_rf),
            SequenceStep(tuple(sorted((k_start, k_up))),
                         _broadband_theta(model, tuple(sorted((k_start, k_up))), np.pi),
                         omega0=omega_mw),
        ]
    seq = SequenceSpec(f"bell {which} {scheme}-pulse", tuple(steps))
    if stark_correct:
        detunes = stark_detunes(model, seq)
        seq = SequenceSpec(seq.name, tuple(
            SequenceStep(s.level_pair, s.theta, s.phase, s.omega0, d)
            for s, d in zip(seq.steps, detunes)))
    return BellPrep(seq=seq, rho0=sc.basis_state(0, -1, -1),
                    pair=(k_up, k_nuc), label=seq.name)


def bell_fidelity_trace(model, prep, noise, sample_times):
    """Doublet fidelity of the preparation at each sample time."""
    schedule = compile_sequence(model, prep.seq)
    times = np.asarray(sample_times, dtype=float)
    result = evolve(prep.rho0, model, schedule, noise=noise,
                    sample_times=times)
    _, vecs = eigensystem(model)
    return np.array([
        bell_state_fidelity(vecs.conj().T @ rho @ vecs, prep.pair)
        for _, rho in result.trajectory])
