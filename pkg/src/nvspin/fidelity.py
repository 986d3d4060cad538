"""State fidelities, ideal gate targets and preparation state sets.

Ideal targets live in the frame co-rotating with each driven carrier:
a resonant rotation by theta on the eigenlevel pair (a, b), driven with
absolute-time tone phase phi, maps to the block

    [ cos(t/2)              -i e^{+i phi'} sin(t/2) ]      (row/col a)
    [ -i e^{-i phi'} sin(t/2)            cos(t/2)   ]      (row/col b)

in the eigenbasis, with phi' = phi + arg <a|Vd|b>, identity on the
spectator levels. The lab-frame ideal then right-multiplies by the free
propagator over the gate duration, so every level keeps its static
phase accumulation and states the gate should leave alone compare
cleanly against their freely evolved selves. The block is gauge
invariant: eigenvector phase choices cancel between the matrix element
and the projectors.

The tone phase handed to these constructors is referenced to absolute
schedule time: a segment starting at t_k with carrier_reference
"segment" contributes phi = phi0 - kappa nu t_k.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from . import spincore as sc
from .model import eigensystem
from .pulses import drive_operator

KAPPA = sc.RADIANS_PER_MHZ_NS


def _psd_sqrt(rho):
    w, v = np.linalg.eigh(rho)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def state_fidelity(rho, sigma):
    """Uhlmann fidelity (squared-overlap convention) of two densities."""
    rho = sc.check_density(rho, trace_tol=1e-6, herm_tol=1e-7, eig_floor=-1e-5)
    sigma = sc.check_density(sigma, trace_tol=1e-6, herm_tol=1e-7,
                             eig_floor=-1e-5)
    w, v = np.linalg.eigh(rho)
    if w[-1] >= 1.0 - 1e-9:
        ket = v[:, -1]
        return float(np.real(ket.conj() @ sigma @ ket))
    root = _psd_sqrt(rho)
    inner = np.linalg.eigvalsh(root @ sigma @ root)
    return float(np.sum(np.sqrt(np.clip(inner, 0.0, None))) ** 2)


def target_state(rho0, unitary):
    """Conjugate a state by a (verified) unitary."""
    u = np.asarray(unitary, dtype=complex)
    if np.abs(u.conj().T @ u - np.eye(u.shape[0])).max() > 1e-9:
        raise ValueError("matrix is not unitary")
    return u @ np.asarray(rho0, dtype=complex) @ u.conj().T


def free_propagator(model, duration):
    """Lab-frame propagator of the static Hamiltonian."""
    vals, vecs = eigensystem(model)
    return (vecs * np.exp(-1j * KAPPA * vals * duration)) @ vecs.conj().T


def rotation_unitary(model, level_pair, theta, phase=0.0, threshold=1e-6):
    """Co-rotating-frame rotation block on an eigenlevel pair."""
    vals, vecs = eigensystem(model)
    a, b = sorted(int(k) for k in level_pair)
    element = vecs[:, a].conj() @ drive_operator(model) @ vecs[:, b]
    if abs(element) <= threshold:
        raise ValueError(f"transition {a}-{b} is drive-forbidden")
    phi = phase + np.angle(element)
    half = 0.5 * theta
    block = np.eye(sc.DIM, dtype=complex)
    block[a, a] = block[b, b] = np.cos(half)
    block[a, b] = -1j * np.exp(1j * phi) * np.sin(half)
    block[b, a] = -1j * np.exp(-1j * phi) * np.sin(half)
    return vecs @ block @ vecs.conj().T


def ideal_unitary(model, level_pair, theta, phase, duration):
    """Lab-frame ideal: free phases over the duration times the block."""
    return free_propagator(model, duration) @ rotation_unitary(
        model, level_pair, theta, phase)


def ideal_sequence_unitary(model, steps, total_duration):
    """Ideal for a sequence of rotations applied in time order.

    `steps` is an iterable of (level_pair, theta, phase) with phases in
    absolute schedule time; later steps compose on the left.
    """
    u = np.eye(sc.DIM, dtype=complex)
    for level_pair, theta, phase in steps:
        u = rotation_unitary(model, level_pair, theta, phase) @ u
    return free_propagator(model, total_duration) @ u


# -- preparation state sets ------------------------------------------------

_QUBIT = {
    "up": np.array([1.0, 0.0], dtype=complex),
    "dn": np.array([0.0, 1.0], dtype=complex),
    "x+": np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0),
    "x-": np.array([1.0, -1.0], dtype=complex) / np.sqrt(2.0),
    "y+": np.array([1.0, 1.0j], dtype=complex) / np.sqrt(2.0),
    "y-": np.array([1.0, -1.0j], dtype=complex) / np.sqrt(2.0),
}

# vacancy qubit lives on the {0, -1} pair; index order is +1, 0, -1
_VQUBIT = {
    "0": np.array([0.0, 1.0, 0.0], dtype=complex),
    "-1": np.array([0.0, 0.0, 1.0], dtype=complex),
    "x+": np.array([0.0, 1.0, 1.0], dtype=complex) / np.sqrt(2.0),
    "x-": np.array([0.0, 1.0, -1.0], dtype=complex) / np.sqrt(2.0),
}


@dataclass(frozen=True)
class StateSet:
    """Named preparation states; the gate score is the minimum over them."""

    name: str
    labels: tuple
    states: tuple

    def __len__(self):
        return len(self.states)


def _product_density(v_vec, c_vec, n_vec):
    ket = np.kron(np.kron(v_vec, c_vec), n_vec)
    return sc.ket_density(ket)


def vacancy_states():
    """25 preparations in the m_S = 0 manifold for vacancy-driving gates.

    All six cardinal carbon states against four nitrogen states, plus
    one fully mixed nuclear state.
    """
    labels = []
    states = []
    for c_key in ("up", "dn", "x+", "x-", "y+", "y-"):
        for n_key in ("up", "dn", "x+", "x-"):
            labels.append(f"0:{c_key}:{n_key}")
            states.append(_product_density(_VQUBIT["0"], _QUBIT[c_key],
                                           _QUBIT[n_key]))
    proj0 = np.outer(_VQUBIT["0"], _VQUBIT["0"].conj())
    mixed = np.kron(np.kron(proj0, np.eye(2) / 2.0), np.eye(2) / 2.0)
    labels.append("0:mix:mix")
    states.append(mixed.astype(complex))
    return StateSet("vacancy25", tuple(labels), tuple(states))


def carbon_states():
    """16 preparations with the carbon target spin down."""
    labels = []
    states = []
    for v_key in ("0", "-1", "x+", "x-"):
        for n_key in ("up", "dn", "x+", "x-"):
            labels.append(f"{v_key}:dn:{n_key}")
            states.append(_product_density(_VQUBIT[v_key], _QUBIT["dn"],
                                           _QUBIT[n_key]))
    return StateSet("carbon16", tuple(labels), tuple(states))


def nitrogen_states():
    """8 preparations with the nitrogen target spin down."""
    labels = []
    states = []
    for v_key in ("0", "-1"):
        for c_key in ("up", "dn", "x+", "x-"):
            labels.append(f"{v_key}:{c_key}:dn")
            states.append(_product_density(_VQUBIT[v_key], _QUBIT[c_key],
                                           _QUBIT["dn"]))
    return StateSet("nitrogen8", tuple(labels), tuple(states))


_SET_BUILDERS = {
    "vacancy25": vacancy_states,
    "carbon16": carbon_states,
    "nitrogen8": nitrogen_states,
}


def state_set(name):
    try:
        return _SET_BUILDERS[name]()
    except KeyError:
        raise ValueError(
            f"unknown state set {name!r}, expected one of "
            f"{sorted(_SET_BUILDERS)}") from None


# -- gate scoring ----------------------------------------------------------

@dataclass(frozen=True)
class FidelitySummary:
    """Per-state fidelities of a realized gate against its ideal."""

    minimum: float
    average: float
    per_state: tuple  # ((label, fidelity), ...)


def gate_fidelity_estimate(finals, ideal, states):
    """Score evolved states against an ideal unitary.

    `finals` has one lab-frame density per member of the state set, in
    set order. The gate fidelity is the minimum over the set.
    """
    finals = np.asarray(finals)
    if finals.shape != (len(states), sc.DIM, sc.DIM):
        raise ValueError(
            f"finals shape {finals.shape} does not match set of {len(states)}")
    fids = []
    for k in range(len(states)):
        want = target_state(states.states[k], ideal)
        fids.append(state_fidelity(finals[k], want))
    return FidelitySummary(
        minimum=float(min(fids)),
        average=float(np.mean(fids)),
        per_state=tuple(zip(states.labels, fids)),
    )


def timing_uncertainty(times, fidelities, t_opt, half_window=0.25):
    """Half the fidelity spread across a +-250 ps timing window.

    Cubic interpolation of the fidelity trace around the chosen time;
    raises ValueError if the trace does not cover the window.
    """
    times = np.asarray(times, dtype=float)
    fidelities = np.asarray(fidelities, dtype=float)
    if times.ndim != 1 or times.size < 4 or times.size != fidelities.size:
        raise ValueError("need matching 1-d arrays with at least 4 points")
    lo, hi = t_opt - half_window, t_opt + half_window
    if lo < times[0] - 1e-9 or hi > times[-1] + 1e-9:
        raise ValueError("fidelity trace does not cover the timing window")
    spline = CubicSpline(times, fidelities)
    dense = np.linspace(max(lo, times[0]), min(hi, times[-1]), 201)
    vals = spline(dense)
    return float(0.5 * (vals.max() - vals.min()))


# -- gate reports ----------------------------------------------------------

@dataclass(frozen=True)
class GateReport:
    """One optimized pulse with its scored fidelity."""

    label: str
    level_pair: tuple
    state_set: str
    omega0: float
    nu: float
    phi0: float
    duration_ns: float
    fidelity: float
    fidelity_avg: float
    uncertainty: float
    per_state: tuple = ()
    carriers: tuple = ()  # all tone frequencies; nu repeats the first

    def to_json(self):
        return {
            "label": self.label,
            "level_pair": [list(p) if isinstance(p, tuple) else p
                           for p in self.level_pair],
            "state_set": self.state_set,
            "omega0_MHz": self.omega0,
            "nu_MHz": self.nu,
            "carriers_MHz": list(self.carriers),
            "phi0_rad": self.phi0,
            "time_ns": self.duration_ns,
            "fidelity_pct": 100.0 * self.fidelity,
            "fidelity_avg_pct": 100.0 * self.fidelity_avg,
            "uncertainty_pct": 100.0 * self.uncertainty,
            "per_state": [[lab, 100.0 * f] for lab, f in self.per_state],
        }


REPORT_CSV_HEADER = "transition,other_states,omega0_MHz,fidelity_pct,uncertainty_pct,time_ns"


def reports_to_csv(reports):
    """Gate table with one row per report."""
    lines = [REPORT_CSV_HEADER]
    for rep in reports:
        if rep.level_pair and isinstance(rep.level_pair[0], tuple):
            pair = "+".join("-".join(str(k) for k in p)
                            for p in rep.level_pair)
        else:
            pair = "-".join(str(k) for k in rep.level_pair)
        lines.append(",".join((
            pair,
            rep.state_set,
            f"{rep.omega0:.9g}",
            f"{100.0 * rep.fidelity:.9g}",
            f"{100.0 * rep.uncertainty:.9g}",
            f"{rep.duration_ns:.9g}",
        )))
    return "\n".join(lines) + "\n"
