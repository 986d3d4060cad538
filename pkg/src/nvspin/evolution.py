"""Open-system evolution of the register under pulse schedules.

The master equation is integrated in the rotating (interaction) picture
with respect to the diagonal of the static Hamiltonian, which removes
the fast level phases and leaves the off-diagonal static couplings and
the drive as oscillatory terms the adaptive stepper resolves. Sampled
and final states are always reported back in the lab frame. Setting
frame="lab" integrates in the lab frame directly; both frames must
agree to integration tolerance and the test suite holds them to that.

Decoherence channels (build_channels):

* nuclear spin flips, raising and lowering at 1/(2 T1) each, so the
  population difference relaxes at 1/T1;
* nuclear dephasing sigma_z/sqrt(2) at 1/T2 - 1/(2 T1), floored at 0;
* vacancy population exchange 0 <-> +1 and 0 <-> -1, four jump
  operators whose rates sum to 1/T1;
* vacancy dephasing with a rate growing linearly in time,
  gamma(t) = DEPHASING_CALIBRATION * t / T2star**2, split over the two
  diagonal generators diag(1,0,-1)/sqrt(2) and diag(1,-2,1)/sqrt(6).

The two vacancy dephasing generators together damp every vacancy
coherence at the same unit weight, so the linear-in-time rate gives a
Gaussian envelope exp(-c t^2 / (2 T2star^2)) with c the calibration
constant. DEPHASING_CALIBRATION = 2 pins the envelope to
exp(-(t/T2star)^2), i.e. 1/e at exactly t = T2star.

Time-dependent rates reference absolute time since the start of the
evolve call, matching a free-induction experiment that begins at t=0.

For undriven evolution the generator is constant apart from that linear
rate, so the default method propagates with exact matrix exponentials
of the 144-dim superoperator (midpoint rate per substep; the midpoint
rule integrates a linear rate exactly and substeps bound the ordering
error). Driven schedules always use the adaptive stepper. Pass
method="rk" to force the stepper everywhere.
"""

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import _kernels
from . import spincore as sc
from .model import build_static_hamiltonian
from .pulses import PulseSchedule, drive_operator

KAPPA = sc.RADIANS_PER_MHZ_NS

# pins the vacancy free-induction envelope to exp(-(t/T2star)^2)
DEPHASING_CALIBRATION = 2.0

_MAX_STEPS = 50_000_000


class IntegrationFault(RuntimeError):
    """Integration gave up or produced an unphysical state."""

    def __init__(self, message, t_reached):
        super().__init__(f"{message} (reached t = {t_reached:.6g} ns)")
        self.t_reached = float(t_reached)


@dataclass(frozen=True)
class NoiseSpec:
    """Decoherence times; units are in the field names."""

    t1_v_ms: float = 10.0
    t2star_v_us: float = 100.0
    t1_c_s: float = 10.0
    t2_c_ms: float = 10.0
    t1_n_s: float = 10.0
    t2_n_ms: float = 10.0
    enabled: bool = True

    def __post_init__(self):
        if not self.enabled:
            return
        for name in ("t1_v_ms", "t2star_v_us", "t1_c_s", "t2_c_ms",
                     "t1_n_s", "t2_n_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


NOISE_OFF = NoiseSpec(enabled=False)


@dataclass(frozen=True)
class Channel:
    """One Lindblad operator with its rate.

    For law "constant" the rate is 1/ns. For law "linear_t" the
    instantaneous rate is `rate * t` with t in ns, so the field carries
    1/ns^2.
    """

    operator: np.ndarray
    rate: float
    law: str = "constant"

    def __post_init__(self):
        if self.law not in ("constant", "linear_t"):
            raise ValueError(f"unknown rate law {self.law!r}")
        if self.rate < 0:
            raise ValueError("channel rate must be non-negative")


@dataclass(frozen=True)
class ChannelSet:
    channels: tuple = ()


def build_channels(noise):
    """Lindblad channels for a NoiseSpec (empty set if disabled)."""
    if noise is None or not noise.enabled:
        return ChannelSet(())
    half = sc.SPIN_HALF
    out = []
    for slot, t1_ns, t2_ns in (
        ("C", noise.t1_c_s * 1e9, noise.t2_c_ms * 1e6),
        ("N", noise.t1_n_s * 1e9, noise.t2_n_ms * 1e6),
    ):
        flip = 1.0 / (2.0 * t1_ns)
        out.append(Channel(sc.embed(half.s_plus, slot), flip))
        out.append(Channel(sc.embed(half.s_minus, slot), flip))
        pure = 1.0 / t2_ns - 1.0 / (2.0 * t1_ns)
        if pure > 0:
            out.append(Channel(np.sqrt(2.0) * sc.embed(half.sz, slot), pure))
    hop = 1.0 / (4.0 * noise.t1_v_ms * 1e6)
    for row, col in ((1, 0), (0, 1), (1, 2), (2, 1)):
        op3 = np.zeros((3, 3))
        op3[row, col] = 1.0
        out.append(Channel(sc.embed(op3, "V"), hop))
    t2s_ns = noise.t2star_v_us * 1e3
    coeff = DEPHASING_CALIBRATION / t2s_ns**2
    diag_a = np.diag([1.0, 0.0, -1.0]) / np.sqrt(2.0)
    diag_b = np.diag([1.0, -2.0, 1.0]) / np.sqrt(6.0)
    out.append(Channel(sc.embed(diag_a, "V"), coeff, law="linear_t"))
    out.append(Channel(sc.embed(diag_b, "V"), coeff, law="linear_t"))
    return ChannelSet(tuple(out))


def _flatten_channels(channel_set, d):
    """Split channels into kernel arrays.

    Diagonal operators become elementwise decay matrices (constant part
    and linear-in-t part). Jump operators, at most one entry per row and
    per column, become gather rows carrying the rotating-picture phase
    frequency derived from the diagonal d.
    """
    n = sc.DIM
    c_const = np.zeros((n, n))
    c_deph = np.zeros((n, n))
    rows = []
    for ch in channel_set.channels:
        op = np.asarray(ch.operator, dtype=complex)
        if op.shape != (n, n):
            raise ValueError(f"channel operator shape {op.shape}")
        diag = np.diag(op)
        if np.abs(op - np.diag(diag)).max() < 1e-14:
            lev = diag.real
            mat = -0.5 * (lev[:, None] - lev[None, :]) ** 2
            if ch.law == "constant":
                c_const += ch.rate * mat
            else:
                c_deph += ch.rate * mat
            continue
        if ch.law != "constant":
            raise ValueError("time-dependent rates require a diagonal operator")
        tgt, src = np.nonzero(op)
        amp = op[tgt, src]
        if np.abs(amp.imag).max() > 1e-14:
            raise ValueError("jump amplitudes must be real")
        amp = amp.real
        if len(set(src.tolist())) != len(src) or len(set(tgt.tolist())) != len(tgt):
            raise ValueError("jump operator must be single-entry per row and column")
        weight = np.zeros(n)
        weight[src] = amp**2
        c_const += -0.5 * ch.rate * (weight[:, None] + weight[None, :])
        for a in range(len(tgt)):
            for b in range(len(tgt)):
                rate = ch.rate * amp[a] * amp[b]
                freq = (d[tgt[a]] - d[src[a]]) - (d[tgt[b]] - d[src[b]])
                rows.append((src[a], src[b], tgt[a], tgt[b], rate, freq))
    if rows:
        arr = np.array(rows, dtype=float)
        g_si = arr[:, 0].astype(np.int64)
        g_sj = arr[:, 1].astype(np.int64)
        g_di = arr[:, 2].astype(np.int64)
        g_dj = arr[:, 3].astype(np.int64)
        g_rate = np.ascontiguousarray(arr[:, 4])
        g_freq = np.ascontiguousarray(arr[:, 5])
    else:
        g_si = g_sj = g_di = g_dj = np.zeros(0, dtype=np.int64)
        g_rate = g_freq = np.zeros(0)
    return c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq


def _segment_tables(schedule):
    """Per-segment tone arrays with phases folded to absolute time."""
    tables = []
    starts = schedule.segment_starts()
    for seg, t0 in zip(schedule.segments, starts):
        t_ref = t0 if seg.carrier_reference == "segment" else 0.0
        om = np.array([tone.omega0 for tone in seg.tones])
        nu = np.array([tone.nu for tone in seg.tones])
        ph = np.array([tone.phi0 - KAPPA * tone.nu * t_ref for tone in seg.tones])
        tables.append((float(t0), float(t0 + seg.duration), om, nu, ph))
    return tables


_NO_TONES = (np.zeros(0), np.zeros(0), np.zeros(0))


@dataclass(frozen=True)
class EvolutionResult:
    """Final lab-frame state plus optional sampled trajectory."""

    rho_final: np.ndarray
    duration_ns: float
    accepted_steps: int
    rejected_steps: int
    trajectory: tuple = ()  # ((t_ns, rho_lab), ...)


def _to_lab(rho_tilde, d, t):
    if t == 0.0 or not d.any():
        return rho_tilde.copy()
    w = np.exp(-1j * KAPPA * d * t)
    return rho_tilde * np.outer(w, w.conj())


def _guard_state(rho, t):
    tr = np.trace(rho).real
    if abs(tr - 1.0) > 1e-4:
        raise IntegrationFault(f"trace drifted to {tr:.6f}", t)
    low = np.linalg.eigvalsh(rho).min()
    if low < -1e-4:
        raise IntegrationFault(f"positivity violated (min eigenvalue {low:.3e})", t)


def evolve_batch(rhos, model, schedule, noise=None, rtol=1e-8, atol=1e-10,
                 sample_times=None, frame="interaction", method="auto",
                 check_samples=True):
    """Evolve a batch of states under one schedule with shared steps.

    Returns (finals, samples, info): finals has shape (m, 12, 12) in the
    lab frame, samples is None or (n_samples, m, 12, 12) at the sorted
    sample times, info carries step counts. The error norm spans the
    whole batch, so all members see the same accepted steps.
    """
    rhos = np.ascontiguousarray(np.asarray(rhos, dtype=complex))
    if rhos.ndim != 3 or rhos.shape[1:] != (sc.DIM, sc.DIM):
        raise ValueError(f"batch shape {rhos.shape}, expected (m, {sc.DIM}, {sc.DIM})")
    for k in range(rhos.shape[0]):
        sc.check_density(rhos[k], trace_tol=1e-7, herm_tol=1e-8, eig_floor=-1e-6)
    if frame not in ("interaction", "lab"):
        raise ValueError(f"unknown frame {frame!r}")

    if isinstance(schedule, PulseSchedule):
        duration = schedule.total_duration
        tables = _segment_tables(schedule)
        driven = bool(tables)
    else:
        duration = float(schedule)
        if duration < 0:
            raise ValueError("free evolution time must be non-negative")
        tables = []
        driven = False

    if method == "auto":
        method = "rk" if driven else "expm"
    if method not in ("rk", "expm"):
        raise ValueError(f"unknown method {method!r}")
    if method == "expm" and driven:
        raise ValueError("method='expm' only applies to free evolution")

    if sample_times is None:
        samples_at = np.zeros(0)
    else:
        samples_at = np.unique(np.asarray(sample_times, dtype=float))
        if samples_at.size and (samples_at[0] < 0 or samples_at[-1] > duration + 1e-9):
            raise ValueError("sample times must lie within the schedule")

    if duration == 0.0:
        finals = rhos.copy()
        samples = rhos[None].copy() if samples_at.size else None
        return finals, samples, {"accepted": 0, "rejected": 0}

    h_full = build_static_hamiltonian(model)
    channels = build_channels(noise)

    if method == "expm":
        return _evolve_expm(rhos, h_full, channels, duration, samples_at,
                            check_samples)

    d_full = np.ascontiguousarray(np.diag(h_full).real)
    if frame == "interaction":
        d = d_full
        h_stat = np.ascontiguousarray(h_full - np.diag(d_full))
    else:
        d = np.zeros(sc.DIM)
        h_stat = np.ascontiguousarray(h_full)
    vd = np.ascontiguousarray(drive_operator(model)) if driven \
        else np.zeros((sc.DIM, sc.DIM), dtype=complex)
    flat = _flatten_channels(channels, d)
    c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq = flat

    points = [0.0, duration]
    points.extend(t0 for t0, _, _, _, _ in tables[1:])
    points.extend(samples_at.tolist())
    points = sorted(set(points))
    merged = [points[0]]
    for p in points[1:]:
        if p - merged[-1] > 1e-9 * max(1.0, duration):
            merged.append(p)
        elif p == duration:
            merged[-1] = duration
    points = merged

    seg_ends = [tb for _, tb, _, _, _ in tables]
    work = rhos.copy()
    samples = np.empty((samples_at.size, *work.shape), dtype=complex) \
        if samples_at.size else None
    sample_pos = 0
    if samples_at.size and samples_at[0] == 0.0:
        samples[0] = work
        sample_pos = 1
    accepted = rejected = 0
    h_next = min(1.0, duration)
    for ta, tb in zip(points[:-1], points[1:]):
        if driven:
            idx = min(bisect_right(seg_ends, 0.5 * (ta + tb)), len(tables) - 1)
            _, _, om, nu, ph = tables[idx]
        else:
            om, nu, ph = _NO_TONES
        status, t_reached, h_next, n_acc, n_rej = _kernels.advance(
            work, ta, tb, d, h_stat, vd, om, nu, ph,
            c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq,
            rtol, atol, h_next, _MAX_STEPS - accepted - rejected)
        accepted += n_acc
        rejected += n_rej
        if status == 1:
            raise IntegrationFault("step size underflow", t_reached)
        if status == 2:
            raise IntegrationFault("step budget exhausted", t_reached)
        if sample_pos < samples_at.size and abs(samples_at[sample_pos] - tb) <= \
                1e-9 * max(1.0, duration):
            for k in range(work.shape[0]):
                samples[sample_pos, k] = _to_lab(work[k], d, tb)
                if check_samples:
                    _guard_state(samples[sample_pos, k], tb)
            sample_pos += 1
    finals = np.empty_like(work)
    for k in range(work.shape[0]):
        finals[k] = _to_lab(work[k], d, duration)
        _guard_state(finals[k], duration)
    return finals, samples, {"accepted": accepted, "rejected": rejected}


def _split_channels(channels):
    const = [(np.asarray(ch.operator, dtype=complex), ch.rate)
             for ch in channels.channels if ch.law == "constant"]
    c_lin = np.zeros((sc.DIM, sc.DIM))
    for ch in channels.channels:
        if ch.law != "constant":
            op = np.asarray(ch.operator)
            lev = np.diag(op).real
            if np.abs(op - np.diag(np.diag(op))).max() > 1e-14:
                raise ValueError("time-dependent rates require a diagonal operator")
            c_lin += ch.rate * (-0.5) * (lev[:, None] - lev[None, :]) ** 2
    return const, c_lin


def _superoperator(hamiltonian, channel_pairs):
    """Lindblad generator on row-major vec(rho), units 1/ns."""
    n = sc.DIM
    eye = np.eye(n)
    h = np.asarray(hamiltonian, dtype=complex)
    gen = -1j * KAPPA * (np.kron(h, eye) - np.kron(eye, h.T))
    for op, rate in channel_pairs:
        op = np.asarray(op, dtype=complex)
        opdag_op = op.conj().T @ op
        gen += rate * (np.kron(op, op.conj())
                       - 0.5 * (np.kron(opdag_op, eye) + np.kron(eye, opdag_op.T)))
    return gen


def _evolve_expm(rhos, h_full, channels, duration, samples_at, check_samples):
    const_pairs, c_lin = _split_channels(channels)
    gen = _superoperator(h_full, const_pairs)
    lin = c_lin.reshape(-1)
    has_lin = bool(np.abs(lin).max() > 0.0) if lin.size else False
    # substep cap bounds the midpoint ordering error near 1e-8
    dt_max = 0.01 / np.sqrt(np.abs(lin).max()) if has_lin else np.inf

    points = sorted(set([0.0, duration] + samples_at.tolist()))
    vec = rhos.reshape(rhos.shape[0], -1).T.copy()
    samples = np.empty((samples_at.size, *rhos.shape), dtype=complex) \
        if samples_at.size else None
    sample_pos = 0
    if samples_at.size and samples_at[0] == 0.0:
        samples[0] = rhos
        sample_pos = 1
    diag_idx = np.arange(gen.shape[0])
    for ta, tb in zip(points[:-1], points[1:]):
        span = tb - ta
        if span <= 0:
            continue
        n_sub = max(1, int(np.ceil(span / dt_max))) if has_lin else 1
        dt = span / n_sub
        for k in range(n_sub):
            t_mid = ta + (k + 0.5) * dt
            step_gen = gen.copy()
            if has_lin:
                step_gen[diag_idx, diag_idx] += t_mid * lin
            vec = sla.expm(dt * step_gen) @ vec
        if sample_pos < samples_at.size and abs(samples_at[sample_pos] - tb) <= \
                1e-9 * max(1.0, duration):
            for m in range(rhos.shape[0]):
                rho = vec[:, m].reshape(sc.DIM, sc.DIM)
                rho = 0.5 * (rho + rho.conj().T)
                samples[sample_pos, m] = rho
                if check_samples:
                    _guard_state(rho, tb)
            sample_pos += 1
    finals = np.empty_like(rhos)
    for m in range(rhos.shape[0]):
        rho = vec[:, m].reshape(sc.DIM, sc.DIM)
        finals[m] = 0.5 * (rho + rho.conj().T)
        _guard_state(finals[m], duration)
    return finals, samples, {"accepted": 0, "rejected": 0}


def evolve(rho0, model, schedule, noise=None, rtol=1e-8, atol=1e-10,
           sample_times=None, frame="interaction", method="auto"):
    """Evolve one density matrix under a schedule or a free wait.

    `schedule` is a PulseSchedule or a plain duration in ns for free
    evolution. Returns an EvolutionResult whose states satisfy trace
    within 1e-7, hermiticity within 1e-9 and smallest eigenvalue above
    -1e-6 at the integration tolerances; breaches beyond 1e-4 raise
    IntegrationFault instead.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (sc.DIM, sc.DIM):
        raise ValueError(f"state shape {rho0.shape}, expected ({sc.DIM}, {sc.DIM})")
    finals, samples, info = evolve_batch(
        rho0[None], model, schedule, noise=noise, rtol=rtol, atol=atol,
        sample_times=sample_times, frame=frame, method=method)
    duration = schedule.total_duration if isinstance(schedule, PulseSchedule) \
        else float(schedule)
    trajectory = ()
    if samples is not None:
        times = np.unique(np.asarray(sample_times, dtype=float))
        trajectory = tuple((float(t), samples[k, 0]) for k, t in enumerate(times))
    return EvolutionResult(
        rho_final=finals[0],
        duration_ns=duration,
        accepted_steps=info["accepted"],
        rejected_steps=info["rejected"],
        trajectory=trajectory,
    )


def evolve_superoperator_oracle(rho0, hamiltonian, channel_pairs, duration):
    """Dense-exponential reference propagation (constant rates only).

    `channel_pairs` is an iterable of (operator, rate) or Channel with
    law "constant". Independent of the stepper; used to cross-check it.
    """
    pairs = []
    for entry in channel_pairs:
        if isinstance(entry, Channel):
            if entry.law != "constant":
                raise ValueError("oracle handles constant rates only")
            pairs.append((entry.operator, entry.rate))
        else:
            pairs.append(entry)
    gen = _superoperator(hamiltonian, pairs)
    vec = np.asarray(rho0, dtype=complex).reshape(-1)
    out = (sla.expm(duration * gen) @ vec).reshape(sc.DIM, sc.DIM)
    return 0.5 * (out + out.conj().T)


def trajectory_to_csv(result):
    """CSV dump of a sampled trajectory.

    Columns: t_ns, then re_i_j and im_i_j for every entry in row-major
    order, then trace and min_eig.
    """
    header = ["t_ns"]
    for i in range(sc.DIM):
        for j in range(sc.DIM):
            header.append(f"re_{i}_{j}")
            header.append(f"im_{i}_{j}")
    header += ["trace", "min_eig"]
    lines = [",".join(header)]
    for t, rho in result.trajectory:
        cells = [f"{t:.9g}"]
        for i in range(sc.DIM):
            for j in range(sc.DIM):
                cells.append(f"{rho[i, j].real:.9g}")
                cells.append(f"{rho[i, j].imag:.9g}")
        cells.append(f"{np.trace(rho).real:.9g}")
        cells.append(f"{np.linalg.eigvalsh(rho).min():.9g}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
