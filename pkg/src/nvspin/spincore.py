"""Spin operator algebra for the vacancy-carbon-nitrogen register.

The composite space is ordered V (S=1, dim 3) x C (I=1/2, dim 2) x N
(I=1/2, dim 2), twelve levels total. Vacancy basis order is
m_S = +1, 0, -1 so that level diagrams read top to bottom; nuclear
order is up, down. All operators are dense complex arrays in
dimensionless spin units (hbar = 1). Energies elsewhere in the package
are plain MHz and times are ns; the angular 2*pi enters only inside the
integrator.
"""

from dataclasses import dataclass

import numpy as np

DIM_V = 3
DIM_C = 2
DIM_N = 2
DIM = DIM_V * DIM_C * DIM_N

# single angular conversion point: H in MHz, t in ns
RADIANS_PER_MHZ_NS = 2.0e-3 * np.pi

SLOT_DIMS = {"V": DIM_V, "C": DIM_C, "N": DIM_N}

# doubled spin projections per slot, in basis order
M_S_VALUES = (1, 0, -1)
M_I_VALUES = (1, -1)  # doubled: +1 = up, -1 = down


@dataclass(frozen=True)
class SpinOperators:
    """Cartesian and ladder operators for a single spin."""

    dimension: int
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray


def make_spin_operators(two_s):
    """Angular-momentum matrices for spin s = two_s / 2.

    Parameters
    ----------
    two_s : int
        Doubled spin quantum number; 1 for the nuclear spins, 2 for the
        vacancy electron spin.

    Returns
    -------
    SpinOperators
        Matrices of dimension two_s + 1 in the basis m = s, s-1, ..., -s.
    """
    if two_s not in (1, 2):
        raise ValueError(f"unsupported spin value two_s={two_s}, expected 1 or 2")
    s = two_s / 2.0
    dim = two_s + 1
    m = s - np.arange(dim)
    sz = np.diag(m).astype(complex)
    # <m+1| S+ |m> = sqrt(s(s+1) - m(m+1))
    ladder = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    s_plus = np.zeros((dim, dim), dtype=complex)
    s_plus[np.arange(dim - 1), np.arange(1, dim)] = ladder
    s_minus = s_plus.conj().T
    sx = 0.5 * (s_plus + s_minus)
    sy = -0.5j * (s_plus - s_minus)
    return SpinOperators(dim, sx, sy, sz, s_plus, s_minus)


SPIN1 = make_spin_operators(2)
SPIN_HALF = make_spin_operators(1)


def kron3(a, b, c):
    """Tensor product of one operator per slot, in V x C x N order."""
    return np.kron(np.kron(a, b), c)


def embed(op, slot):
    """Lift a single-slot operator to the full register.

    Parameters
    ----------
    op : ndarray
        Square matrix matching the slot dimension (3 for V, 2 for C/N).
    slot : {"V", "C", "N"}

    Returns
    -------
    ndarray
        12x12 operator acting as `op` on the slot, identity elsewhere.
    """
    if slot not in SLOT_DIMS:
        raise ValueError(f"unknown slot {slot!r}, expected V, C or N")
    op = np.asarray(op, dtype=complex)
    want = SLOT_DIMS[slot]
    if op.shape != (want, want):
        raise ValueError(f"operator shape {op.shape} does not fit slot {slot} (dim {want})")
    eye_v = np.eye(DIM_V, dtype=complex)
    eye_c = np.eye(DIM_C, dtype=complex)
    eye_n = np.eye(DIM_N, dtype=complex)
    if slot == "V":
        return kron3(op, eye_c, eye_n)
    if slot == "C":
        return kron3(eye_v, op, eye_n)
    return kron3(eye_v, eye_c, op)


def basis_index(m_s, m_c, m_n):
    """Index of the product basis state |m_S, m_C, m_N>.

    m_s is +1, 0 or -1; m_c and m_n are the doubled nuclear projections
    +1 (up) or -1 (down).
    """
    try:
        iv = M_S_VALUES.index(m_s)
        ic = M_I_VALUES.index(m_c)
        in_ = M_I_VALUES.index(m_n)
    except ValueError:
        raise ValueError(f"invalid basis label ({m_s}, {m_c}, {m_n})") from None
    return (iv * DIM_C + ic) * DIM_N + in_


BASIS_LABELS = tuple(
    (m_s, m_c, m_n) for m_s in M_S_VALUES for m_c in M_I_VALUES for m_n in M_I_VALUES
)


def basis_ket(m_s, m_c, m_n):
    """Product basis ket as a length-12 complex vector."""
    ket = np.zeros(DIM, dtype=complex)
    ket[basis_index(m_s, m_c, m_n)] = 1.0
    return ket


def basis_state(m_s, m_c, m_n):
    """Rank-1 density matrix of a product basis state."""
    ket = basis_ket(m_s, m_c, m_n)
    return np.outer(ket, ket.conj())


def ket_density(ket):
    """Normalized rank-1 density matrix from a state vector."""
    ket = np.asarray(ket, dtype=complex)
    nrm = np.linalg.norm(ket)
    if nrm == 0:
        raise ValueError("zero vector is not a state")
    ket = ket / nrm
    return np.outer(ket, ket.conj())


def check_density(rho, trace_tol=1e-9, herm_tol=1e-9, eig_floor=-1e-8):
    """Validate a density matrix; raises ValueError on breach."""
    rho = np.asarray(rho)
    if rho.shape != (DIM, DIM):
        raise ValueError(f"density shape {rho.shape}, expected ({DIM}, {DIM})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"trace {tr} deviates from 1 by more than {trace_tol}")
    if np.abs(rho - rho.conj().T).max() > herm_tol:
        raise ValueError("density is not Hermitian")
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if w.min() < eig_floor:
        raise ValueError(f"negative eigenvalue {w.min()} below floor {eig_floor}")
    return rho
