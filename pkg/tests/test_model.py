import numpy as np
import pytest

from nvspin import model as mdl
from nvspin import spincore as sc


def zero_hyperfine_model(field_mt, gamma_c=0.0, gamma_n=0.0):
    tensor = mdl.HyperfineTensor(0.0, 0.0, "nv_frame")
    return mdl.RegisterModel(field_mt=field_mt, gamma_c=gamma_c,
                             gamma_n=gamma_n, n_parallel=0.0, n_perp=0.0,
                             carbon=tensor)


class TestFrameCoefficients:
    def test_nearest_neighbor_values(self):
        got = mdl.nv_frame_coefficients(199.0, 123.0, mdl.THETA_NN)
        np.testing.assert_allclose(
            got, (131.444444, 156.777778, -33.777778, 23.884496), atol=1e-5)

    def test_third_neighbor_values(self):
        got = mdl.nv_frame_coefficients(18.5, 13.26, mdl.THETA_THIRD)
        np.testing.assert_allclose(
            got, (13.418788, 15.800606, -2.540606, -0.898240), atol=1e-5)

    def test_aligned_axes(self):
        got = mdl.nv_frame_coefficients(199.0, 123.0, 0.0)
        np.testing.assert_allclose(got, (199.0, 123.0, 0.0, 0.0), atol=1e-12)

    def test_perpendicular_axes(self):
        c_par, _, _, c_cross = mdl.nv_frame_coefficients(199.0, 123.0, np.pi / 2)
        assert abs(c_par - 123.0) < 1e-12
        assert abs(c_cross) < 1e-12

    def test_trace_identity_random(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            cp, cq = rng.uniform(-200, 200, 2)
            th = rng.uniform(0, np.pi)
            par, perp, _, _ = mdl.nv_frame_coefficients(cp, cq, th)
            assert abs(par + 2 * perp - (cp + 2 * cq)) < 1e-9


class TestModelTypes:
    def test_tensor_frame_validation(self):
        with pytest.raises(ValueError):
            mdl.HyperfineTensor(1.0, 1.0, "lab")

    def test_tensor_passthrough(self):
        t = mdl.HyperfineTensor(10.0, 20.0, "nv_frame", c_raise=-3.0, c_cross=2.0)
        assert t.defect_frame() == (10.0, 20.0, -3.0, 2.0)

    def test_model_validation(self):
        with pytest.raises(ValueError):
            mdl.RegisterModel(field_mt=-1.0)
        with pytest.raises(ValueError):
            mdl.RegisterModel(field_mt=1.0, zero_field_splitting=0.0)
        with pytest.raises(ValueError):
            mdl.RegisterModel(field_mt=1.0, site="fourth_neighbor")

    def test_presets(self):
        m = mdl.nearest_neighbor_model(25.0)
        assert m.site == "nearest_neighbor"
        assert m.carbon.c_parallel == 199.0
        m3 = mdl.third_neighbor_model(2.0)
        assert m3.carbon.c_perp == 13.26
        assert abs(m3.carbon.theta - np.arccos(1.0 / np.sqrt(33.0))) < 1e-12


class TestHamiltonian:
    def test_bare_zero_field_spectrum(self):
        m = zero_hyperfine_model(0.0)
        vals = np.linalg.eigvalsh(mdl.build_static_hamiltonian(m))
        np.testing.assert_allclose(vals, [0.0] * 4 + [2880.0] * 8, atol=1e-9)

    def test_analytic_zeeman_spectrum(self):
        m = zero_hyperfine_model(50.0)
        vals = np.linalg.eigvalsh(mdl.build_static_hamiltonian(m))
        d, z = 2880.0, 28.0 * 50.0
        want = sorted([0.0] * 4 + [d - z] * 4 + [d + z] * 4)
        np.testing.assert_allclose(vals, want, atol=1e-9)

    def test_hermitian_random_models(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            tensor = mdl.HyperfineTensor(rng.uniform(0, 200), rng.uniform(0, 200),
                                         "principal", rng.uniform(0, np.pi))
            m = mdl.RegisterModel(field_mt=rng.uniform(0, 120),
                                  strain=rng.uniform(0, 5), carbon=tensor)
            h = mdl.build_static_hamiltonian(m)
            scale = np.abs(h).max()
            assert np.abs(h - h.conj().T).max() < 1e-12 * scale

    def test_nn_med_field_spectrum(self):
        vals, _ = mdl.eigensystem(mdl.nearest_neighbor_model(25.0))
        want = [-6.218259, -6.086488, -3.712046, -3.591338,
                2117.489689, 2120.616243, 2245.492500, 2248.626758,
                3515.063047, 3517.980777, 3645.709271, 3648.629845]
        np.testing.assert_allclose(vals, want, atol=1e-5)


class TestEigenAnalysis:
    def test_z_fidelity_basics(self):
        assert mdl.z_fidelity(sc.basis_ket(0, 1, 1)) == 1.0
        half = (sc.basis_ket(0, 1, 1) + sc.basis_ket(-1, 1, 1)) / np.sqrt(2)
        assert abs(mdl.z_fidelity(half) - 0.5) < 1e-12

    def test_nn_med_field_all_levels_z_like(self):
        _, vecs = mdl.eigensystem(mdl.nearest_neighbor_model(25.0))
        for k in range(12):
            assert mdl.z_fidelity(vecs[:, k]) > 0.98

    def test_dominant_label(self):
        _, vecs = mdl.eigensystem(mdl.nearest_neighbor_model(25.0))
        assert mdl.dominant_label(vecs[:, 0]) == (0, -1, 1)
        assert mdl.dominant_label(vecs[:, 11]) == (1, 1, 1)


class TestLevelScan:
    def test_grid_validation(self):
        m = mdl.nearest_neighbor_model(25.0)
        with pytest.raises(ValueError):
            mdl.scan_levels(m, np.array([1.0, 1.0, 2.0]))
        with pytest.raises(ValueError):
            mdl.scan_levels(m, np.array([3.0]))

    def test_zeeman_linearity_away_from_crossings(self):
        m = mdl.third_neighbor_model(25.0)
        scan = mdl.scan_levels(m, np.linspace(30.0, 50.0, 21))
        split = scan.energies[:, 8:].mean(axis=1) - scan.energies[:, 4:8].mean(axis=1)
        # m_S = +1 minus m_S = -1 manifolds split by 2 gamma_e B
        np.testing.assert_allclose(split, 2 * 28.0 * scan.b_grid, rtol=1e-3)

    def test_continuity(self):
        m = mdl.nearest_neighbor_model(25.0)
        scan = mdl.scan_levels(m, np.linspace(10.0, 20.0, 101))
        steps = np.abs(np.diff(scan.energies, axis=0)).max()
        assert steps < 2 * 28.0 * 0.1 * 1.5

    def test_tracking_error_on_coarse_grid(self):
        m = mdl.nearest_neighbor_model(25.0)
        with pytest.raises(mdl.TrackingError):
            mdl.scan_levels(m, np.array([60.0, 100.0, 140.0]))

    def test_csv_format(self):
        m = mdl.nearest_neighbor_model(25.0)
        scan = mdl.scan_levels(m, np.linspace(24.0, 26.0, 3))
        lines = scan.to_csv().strip().split("\n")
        assert lines[0] == "B_mT,level_index,energy_MHz,z_fidelity"
        assert len(lines) == 1 + 3 * 12
        first = lines[1].split(",")
        assert first[0] == "24" and first[1] == "0"


class TestTransitionTable:
    def test_table_shape(self):
        tab = mdl.transition_table(mdl.nearest_neighbor_model(25.0))
        assert len(tab) == 66
        assert all(f > 0 for _, f, _ in tab)

    def test_nn_med_field_spot_frequencies(self):
        m = mdl.nearest_neighbor_model(25.0)
        freqs = {pair: f for pair, f, _ in mdl.transition_table(m)}
        np.testing.assert_allclose(freqs[(2, 4)], 2121.2017, atol=1e-3)
        np.testing.assert_allclose(freqs[(3, 5)], 2124.2076, atol=1e-3)
        np.testing.assert_allclose(freqs[(0, 6)], 2251.7108, atol=1e-3)
        np.testing.assert_allclose(freqs[(1, 7)], 2254.7132, atol=1e-3)
        np.testing.assert_allclose(freqs[(4, 6)], 128.0028, atol=1e-3)
        np.testing.assert_allclose(freqs[(4, 5)], 3.1266, atol=1e-3)
        np.testing.assert_allclose(freqs[(6, 7)], 3.1343, atol=1e-3)
        assert abs(freqs[(4, 6)] - 126.5) < 3.0

    def test_nn_med_field_spot_elements(self):
        m = mdl.nearest_neighbor_model(25.0)
        np.testing.assert_allclose(mdl.transition_element(m, (2, 4)), 0.696861, atol=1e-5)
        np.testing.assert_allclose(mdl.transition_element(m, (4, 6)), 0.029639, atol=1e-5)
        np.testing.assert_allclose(mdl.transition_element(m, (6, 7)), 0.000759, atol=2e-6)

    def test_third_med_field_spots(self):
        m = mdl.third_neighbor_model(25.0)
        freqs = {pair: f for pair, f, _ in mdl.transition_table(m)}
        np.testing.assert_allclose(freqs[(2, 4)], 2171.8590, atol=1e-3)
        np.testing.assert_allclose(freqs[(3, 5)], 2174.8860, atol=1e-3)
        np.testing.assert_allclose(freqs[(4, 6)], 13.1287, atol=1e-3)
        np.testing.assert_allclose(freqs[(4, 5)], 3.1343, atol=1e-3)
        np.testing.assert_allclose(mdl.transition_element(m, (2, 4)), 0.706480, atol=1e-5)
        np.testing.assert_allclose(mdl.transition_element(m, (4, 6)), 0.003246, atol=2e-6)

    def test_allowed_flags(self):
        # hyperfine mixing leaves every pair weakly allowed in the presets;
        # with mixing off, pure nuclear flips have exactly zero element
        tab = mdl.transition_table(mdl.nearest_neighbor_model(25.0))
        assert all(ok for _, _, ok in tab)
        tab0 = mdl.transition_table(zero_hyperfine_model(25.0))
        assert not all(ok for _, _, ok in tab0)


class TestCrossings:
    def test_exchange_crossing_is_splitting_over_gyro(self):
        for m in (mdl.nearest_neighbor_model(25.0), mdl.third_neighbor_model(25.0)):
            b_x = mdl.exchange_crossing_field(m)
            np.testing.assert_allclose(b_x, 2880.0 / 28.0, atol=1e-4)

    def test_exchange_gap_profile_nn(self):
        m = mdl.nearest_neighbor_model(25.0)
        grid = np.linspace(88.0, 118.0, 601)
        _, gaps = mdl.exchange_gap_profile(m, grid)
        k = int(np.argmin(gaps))
        np.testing.assert_allclose(grid[k], 100.507, atol=0.08)
        np.testing.assert_allclose(gaps[k], 1.978, atol=0.02)

    def test_exchange_gap_profile_third(self):
        m = mdl.third_neighbor_model(25.0)
        grid = np.linspace(88.0, 118.0, 601)
        _, gaps = mdl.exchange_gap_profile(m, grid)
        k = int(np.argmin(gaps))
        np.testing.assert_allclose(grid[k], 102.857, atol=0.08)
        np.testing.assert_allclose(gaps[k], 0.717, atol=0.02)

    def test_strain_center(self):
        np.testing.assert_allclose(
            mdl.strain_crossing_center(mdl.nearest_neighbor_model(25.0)),
            131.444444 / 56.0, atol=1e-6)
        np.testing.assert_allclose(
            mdl.strain_crossing_center(mdl.third_neighbor_model(25.0)),
            13.418788 / 56.0, atol=1e-6)

    def test_strain_records_nn(self):
        m = mdl.nearest_neighbor_model(25.0, strain=1.0)
        recs = mdl.strain_crossing_records(m, 1.5, 3.2)
        fields = [r.field_mt for r in recs]
        gaps = [r.gap_mhz for r in recs]
        np.testing.assert_allclose(fields, [2.26189, 2.37001], atol=5e-4)
        np.testing.assert_allclose(gaps, [0.88639, 0.88650], atol=5e-3)

    def test_strain_records_third(self):
        m = mdl.third_neighbor_model(25.0, strain=1.0)
        recs = mdl.strain_crossing_records(m, 0.12, 0.45)
        fields = [r.field_mt for r in recs]
        gaps = [r.gap_mhz for r in recs]
        np.testing.assert_allclose(fields, [0.18534, 0.29347], atol=5e-4)
        np.testing.assert_allclose(gaps, [0.98599, 0.98598], atol=5e-3)

    def test_strain_gap_tracks_strain_without_mixing_terms(self):
        # with the double-raising and cross terms off, the only coupling
        # between the crossing branches is the strain itself
        for e in (0.05, 0.2):
            tensor = mdl.HyperfineTensor(131.444444, 156.777778, "nv_frame")
            m = mdl.RegisterModel(field_mt=25.0, strain=e, carbon=tensor)
            recs = mdl.strain_crossing_records(m, 1.8, 2.9)
            assert len(recs) == 2
            for r in recs:
                np.testing.assert_allclose(r.gap_mhz, e, atol=2e-3)

    def test_crossing_report_third(self):
        rep = mdl.crossing_report(mdl.third_neighbor_model(25.0))
        np.testing.assert_allclose(rep.exchange_field_mt, 102.857, atol=1e-3)
        np.testing.assert_allclose(rep.strain_center_mt, 0.23962, atol=1e-4)
        fields = [r.field_mt for r in rep.strain_records]
        np.testing.assert_allclose(fields, [0.18534, 0.29347], atol=5e-4)
