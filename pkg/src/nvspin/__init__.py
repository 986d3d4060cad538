"""Pulse-level density-matrix simulator for a diamond spin register.

One optically active vacancy spin (S = 1) hyperfine-coupled to a
carbon-13 and a nitrogen-15 nuclear spin (both I = 1/2). The package
builds the static twelve-level Hamiltonian, finds microwave and
radio-frequency transitions, integrates driven Lindblad dynamics, and
scores pulse gates by worst-case state fidelity.
"""

from nvspin.spincore import (
    DIM,
    SpinOperators,
    basis_index,
    basis_ket,
    basis_state,
    check_density,
    embed,
    ket_density,
    kron3,
    make_spin_operators,
)

__all__ = [
    "DIM",
    "SpinOperators",
    "basis_index",
    "basis_ket",
    "basis_state",
    "check_density",
    "embed",
    "ket_density",
    "kron3",
    "make_spin_operators",
]

__version__ = "0.1.0"
