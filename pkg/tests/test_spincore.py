import numpy as np
import pytest

from nvspin import spincore as sc


def test_spin_half_matrices():
    ops = sc.make_spin_operators(1)
    assert ops.dimension == 2
    np.testing.assert_allclose(ops.sx, [[0, 0.5], [0.5, 0]], atol=1e-15)
    np.testing.assert_allclose(ops.sz, [[0.5, 0], [0, -0.5]], atol=1e-15)
    np.testing.assert_allclose(ops.s_plus, [[0, 1], [0, 0]], atol=1e-15)


def test_spin_one_ladder_elements():
    ops = sc.make_spin_operators(2)
    assert ops.dimension == 3
    r2 = np.sqrt(2)
    np.testing.assert_allclose(ops.s_plus, [[0, r2, 0], [0, 0, r2], [0, 0, 0]], atol=1e-15)
    np.testing.assert_allclose(np.diag(ops.sz), [1, 0, -1], atol=1e-15)


@pytest.mark.parametrize("two_s", [1, 2])
def test_commutators_and_casimir(two_s):
    ops = sc.make_spin_operators(two_s)
    comm = ops.sx @ ops.sy - ops.sy @ ops.sx
    np.testing.assert_allclose(comm, 1j * ops.sz, atol=1e-12)
    s = two_s / 2.0
    s2 = ops.sx @ ops.sx + ops.sy @ ops.sy + ops.sz @ ops.sz
    np.testing.assert_allclose(s2, s * (s + 1) * np.eye(ops.dimension), atol=1e-12)


def test_invalid_spin_rejected():
    with pytest.raises(ValueError):
        sc.make_spin_operators(3)


def test_embed_shapes_and_slots():
    sz_v = sc.embed(sc.SPIN1.sz, "V")
    assert sz_v.shape == (12, 12)
    # V slot z operator is diagonal +1 x4, 0 x4, -1 x4
    np.testing.assert_allclose(np.diag(sz_v).real, [1] * 4 + [0] * 4 + [-1] * 4, atol=1e-15)
    iz_c = sc.embed(sc.SPIN_HALF.sz, "C")
    np.testing.assert_allclose(np.diag(iz_c).real, [0.5, 0.5, -0.5, -0.5] * 3, atol=1e-15)
    iz_n = sc.embed(sc.SPIN_HALF.sz, "N")
    np.testing.assert_allclose(np.diag(iz_n).real, [0.5, -0.5] * 6, atol=1e-15)


def test_embed_different_slots_commute():
    a = sc.embed(sc.SPIN1.sx, "V")
    b = sc.embed(sc.SPIN_HALF.sy, "C")
    c = sc.embed(sc.SPIN_HALF.sz, "N")
    np.testing.assert_allclose(a @ b, b @ a, atol=1e-14)
    np.testing.assert_allclose(b @ c, c @ b, atol=1e-14)


def test_embed_rejects_wrong_shape():
    with pytest.raises(ValueError):
        sc.embed(np.eye(2), "V")
    with pytest.raises(ValueError):
        sc.embed(np.eye(3), "C")
    with pytest.raises(ValueError):
        sc.embed(np.eye(3), "Q")


def test_basis_index_bijection():
    seen = set()
    for lbl in sc.BASIS_LABELS:
        idx = sc.basis_index(*lbl)
        assert 0 <= idx < 12
        seen.add(idx)
    assert len(seen) == 12
    # ordering: first index is |+1, up, up>, last is |-1, down, down>
    assert sc.basis_index(1, 1, 1) == 0
    assert sc.basis_index(-1, -1, -1) == 11
    assert sc.basis_index(0, -1, -1) == 7


def test_basis_index_rejects_bad_labels():
    with pytest.raises(ValueError):
        sc.basis_index(2, 1, 1)
    with pytest.raises(ValueError):
        sc.basis_index(0, 0, 1)


def test_basis_state_projectors():
    total = np.zeros((12, 12), dtype=complex)
    for lbl in sc.BASIS_LABELS:
        p = sc.basis_state(*lbl)
        np.testing.assert_allclose(p @ p, p, atol=1e-15)
        np.testing.assert_allclose(np.trace(p), 1.0, atol=1e-15)
        total += p
    np.testing.assert_allclose(total, np.eye(12), atol=1e-15)


def test_ket_density_normalizes():
    ket = 3.0 * sc.basis_ket(0, 1, -1)
    rho = sc.ket_density(ket)
    np.testing.assert_allclose(np.trace(rho), 1.0, atol=1e-15)
    with pytest.raises(ValueError):
        sc.ket_density(np.zeros(12))


def test_check_density_accepts_and_rejects():
    rho = sc.basis_state(0, 1, 1)
    sc.check_density(rho)
    with pytest.raises(ValueError):
        sc.check_density(2.0 * rho)
    bad = rho.copy()
    bad[0, 1] = 0.5
    with pytest.raises(ValueError):
        sc.check_density(bad)
    neg = 1.5 * sc.basis_state(0, 1, 1) - 0.5 * sc.basis_state(0, 1, -1)
    with pytest.raises(ValueError):
        sc.check_density(neg)
