import numpy as np
import pytest

from nvspin import fidelity as fid
from nvspin import model as mdl
from nvspin import pulses as pls
from nvspin import scan
from nvspin import spincore as sc
from helpers import decoupled_model

NN25 = mdl.nearest_neighbor_model(25.0)
THIRD25 = mdl.third_neighbor_model(25.0)
FLAT = decoupled_model()


def flat_spec(omega_grid=(20.0,), window=(33.0, 38.0), states=None):
    # hyperfine-free register: all four V lines degenerate, one carrier;
    # the default window brackets the pi time of omega0=20 only, so the
    # middle of a 3-point grid wins with an interior peak
    carriers = scan.vacancy_pi_carriers(FLAT, omega_grid[0])
    return scan.ScanSpec(FLAT, carriers, omega_grid, window,
                         states or fid.nitrogen_states(), None,
                         refine=4, label="flat v")


class TestScanSpec:
    def test_rejects_bad_grids(self):
        good = dict(model=FLAT, carriers=(100.0,), omega_grid=(1.0, 2.0),
                    window=(1.0, 2.0), states=fid.nitrogen_states())
        scan.ScanSpec(**good)
        for bad in (dict(carriers=()), dict(carriers=(-5.0,)),
                    dict(omega_grid=()), dict(omega_grid=(2.0, 1.0)),
                    dict(omega_grid=(-1.0, 2.0)), dict(window=(2.0, 1.0)),
                    dict(window=(-1.0, 2.0)), dict(refine=0),
                    dict(phases=(0.0, 0.0))):
            with pytest.raises(ValueError):
                scan.ScanSpec(**{**good, **bad})

    def test_segment_builds_tones(self):
        spec = scan.ScanSpec(FLAT, (100.0, 200.0), (10.0,), (1.0, 2.0),
                             fid.nitrogen_states(), phases=(0.0, 1.5))
        seg = spec.segment(10.0, 5.0)
        assert [t.nu for t in seg.tones] == [100.0, 200.0]
        assert [t.phi0 for t in seg.tones] == [0.0, 1.5]
        assert seg.duration == 5.0


class TestDriveFrame:
    def test_carbon_pi_blocks(self):
        carrier = scan.nuclear_pi_carrier(NN25, "carbon")
        seg = pls.PulseSegment((pls.Tone(52.7, carrier),), 340.0)
        frame = scan.drive_frame(NN25, seg)
        assert tuple(p for p, _ in frame.blocks) == ((4, 6), (5, 7))

    def test_carrier_locked_phases(self):
        carrier = scan.nuclear_pi_carrier(NN25, "carbon")
        seg = pls.PulseSegment((pls.Tone(52.7, carrier),), 340.0)
        frame = scan.drive_frame(NN25, seg)
        for (a, b), _ in frame.blocks:
            assert frame.freqs[b] - frame.freqs[a] == pytest.approx(
                carrier, abs=1e-12)

    def test_gate_is_unitary(self):
        carriers = scan.vacancy_pi_carriers(NN25, 44.0)
        seg = pls.PulseSegment(tuple(pls.Tone(44.0, c) for c in carriers),
                               18.0)
        frame = scan.drive_frame(NN25, seg)
        eye = frame.gate.conj().T @ frame.gate
        assert np.abs(eye - np.eye(sc.DIM)).max() < 1e-12

    def test_weak_overlapping_line_stays_spectator(self):
        # the nn double-flip lines qualify by detuning at omega0=44 but
        # share levels with the four main lines; they must not claim
        carriers = scan.vacancy_pi_carriers(NN25, 44.0)
        seg = pls.PulseSegment(tuple(pls.Tone(44.0, c) for c in carriers),
                               18.0)
        frame = scan.drive_frame(NN25, seg)
        pairs = tuple(p for p, _ in frame.blocks)
        assert pairs == ((0, 6), (1, 7), (2, 4), (3, 5))

    def test_target_vector_unit_norm(self):
        carrier = scan.nuclear_pi_carrier(NN25, "carbon")
        seg = pls.PulseSegment((pls.Tone(52.7, carrier),), 340.0)
        frame = scan.drive_frame(NN25, seg)
        psi = np.zeros(sc.DIM, dtype=complex)
        psi[4] = 1.0
        tgt = frame.target_vector(psi, 123.4)
        assert np.linalg.norm(tgt) == pytest.approx(1.0, abs=1e-12)


class TestOptimizePiPulse:
    def test_flat_register_hits_pi_time(self):
        rows = []
        rep = scan.optimize_pi_pulse(flat_spec(), trace_rows=rows)
        t_pi = pls.pi_time_estimate(20.0, 1.0 / np.sqrt(2.0))
        assert rep.fidelity > 0.9999
        assert rep.duration_ns == pytest.approx(t_pi, rel=0.02)
        assert rep.fidelity <= min(f for _, f in rep.per_state) + 1e-12
        assert rep.fidelity <= rep.fidelity_avg + 1e-12
        assert rows and rows[0][0] == 20.0

    def test_deterministic(self):
        a = scan.optimize_pi_pulse(flat_spec())
        b = scan.optimize_pi_pulse(flat_spec())
        assert a == b

    def test_worker_pool_matches_serial(self):
        spec = flat_spec(omega_grid=(18.0, 20.0, 22.0))
        serial = scan.optimize_pi_pulse(spec, workers=1)
        pooled = scan.optimize_pi_pulse(spec, workers=2)
        assert serial == pooled

    def test_refinement_monotone(self):
        spec = flat_spec(omega_grid=(18.0, 20.0, 22.0))
        rows = []
        rep = scan.optimize_pi_pulse(spec, trace_rows=rows)
        coarse_best = max(r[2] for r in rows[:3])
        assert rep.fidelity >= coarse_best - 1e-12

    def test_monotone_window_raises(self):
        with pytest.raises(scan.ScanWindowError, match="widen"):
            scan.optimize_pi_pulse(flat_spec(window=(2.0, 8.0)))

    def test_zero_drive_flat_trace_raises(self):
        spec = flat_spec(omega_grid=(1e-4,), window=(1.0, 6.0))
        with pytest.raises(scan.ScanWindowError, match="flat"):
            scan.optimize_pi_pulse(spec)


class TestOmegaCurve:
    def test_curve_sorted_and_refined(self):
        spec = flat_spec(omega_grid=(18.0, 20.0, 22.0))
        curve = scan.fidelity_vs_omega_scan(spec)
        oms = [om for om, _ in curve]
        assert oms == sorted(oms)
        assert len(curve) > 3  # refinement added points near the peak
        assert all(0.0 <= f <= 1.0 + 1e-9 for _, f in curve)

    def test_curve_deterministic(self):
        spec = flat_spec(omega_grid=(18.0, 20.0, 22.0))
        assert scan.fidelity_vs_omega_scan(spec) == \
            scan.fidelity_vs_omega_scan(spec)

    def test_jitter_ranking(self):
        spec = flat_spec(omega_grid=(18.0, 20.0, 22.0))
        curve = scan.fidelity_vs_omega_scan(spec)
        ranked = scan.jitter_ranked_peaks(spec, curve)
        assert ranked == tuple(sorted(ranked, key=lambda r: (-r[3], r[0])))
        om, fmax, unc, score = ranked[0]
        assert score == pytest.approx(fmax - unc)
        assert unc >= 0.0

    def test_no_peak_raises(self):
        spec = flat_spec(omega_grid=(18.0, 20.0, 22.0))
        with pytest.raises(scan.ScanWindowError):
            scan.jitter_ranked_peaks(spec, ((1.0, 0.1), (2.0, 0.2),
                                            (3.0, 0.3)))

    def test_csv_shape(self):
        rows = [(20.0, 35.5, 0.998877665, 0.999111222)]
        text = scan.scan_rows_to_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0] == "omega0_MHz,t_ns,min_fidelity,avg_fidelity"
        assert lines[1].split(",")[2] == "0.998877665"


class TestTransitionPairs:
    def test_med_field_assignments(self):
        assert scan.transition_pairs(NN25, "vacancy") == \
            ((0, 6), (1, 7), (2, 4), (3, 5))
        assert scan.transition_pairs(NN25, "carbon") == ((4, 6), (5, 7))
        assert scan.transition_pairs(NN25, "nitrogen") == ((4, 5), (6, 7))

    def test_unknown_spin(self):
        with pytest.raises(ValueError, match="unknown spin"):
            scan.transition_pairs(NN25, "boron")

    def test_dual_rule_nearest_vs_third(self):
        nn = scan.vacancy_pi_carriers(NN25, 44.0)
        assert len(nn) == 2
        assert abs(nn[1] - nn[0]) == pytest.approx(130.5, abs=1.0)
        third = scan.vacancy_pi_carriers(THIRD25, 190.0)
        assert len(third) == 1
        assert third[0] == pytest.approx(2180.1, abs=0.5)

    def test_bandwidth_beats_splitting_single_tone(self):
        # driving insanely hard makes even the nn branches unresolvable
        assert len(scan.vacancy_pi_carriers(NN25, 500.0)) == 1

    def test_conditioned_carrier(self):
        up = scan.conditioned_vacancy_carrier(NN25, 1)
        dn = scan.conditioned_vacancy_carrier(NN25, -1)
        assert up == pytest.approx(2122.70, abs=0.05)
        assert dn == pytest.approx(2253.21, abs=0.05)

    def test_preset_state_sets(self):
        for gate, name in (("v_pi", "vacancy25"), ("crot_cv", "vacancy25"),
                           ("c_pi", "carbon16"), ("crot_vc", "carbon16"),
                           ("n_pi", "nitrogen8"), ("crot_vn", "nitrogen8")):
            spec = scan.preset_gate_spec(NN25, gate, (50.0,), (1.0, 2.0))
            assert spec.states.name == name

    def test_preset_unknown_gate(self):
        with pytest.raises(ValueError, match="unknown gate"):
            scan.preset_gate_spec(NN25, "swap", (50.0,), (1.0, 2.0))


class TestDualFrequencyPulse:
    def test_nearest_low_field_splitting(self):
        model = mdl.nearest_neighbor_model(1.1)
        pairs = scan.transition_pairs(model, "vacancy")
        up = [p for p in pairs if p in ((2, 4), (3, 5))]
        seg = scan.dual_frequency_pulse(model, (pairs[0], pairs[2]), 20.0)
        assert len(seg.tones) == 2
        split = abs(seg.tones[0].nu - seg.tones[1].nu)
        assert split == pytest.approx(129.0, abs=8.0)
        assert up  # branch structure resolved at low field too

    def test_third_neighbor_flagged_unresolvable(self):
        model = mdl.third_neighbor_model(2.0)
        pairs = scan.transition_pairs(model, "vacancy")
        with pytest.warns(UserWarning, match="unresolvable"):
            scan.dual_frequency_pulse(model, (pairs[0], pairs[2]), 20.0)

    def test_equal_tones_collapse(self):
        pairs = scan.transition_pairs(NN25, "vacancy")
        seg = scan.dual_frequency_pulse(NN25, (pairs[2], pairs[2]), 20.0)
        assert len(seg.tones) == 1
        assert seg.tones[0].omega0 == 40.0


class TestSequences:
    def test_empty_sequence_is_identity(self):
        rho0 = sc.ket_density(np.eye(sc.DIM, dtype=complex)[:, 2])
        seq = scan.SequenceSpec("noop", ())
        final, f = scan.run_sequence(NN25, seq, rho0)
        assert np.array_equal(final, rho0)
        assert f == 1.0

    def test_step_validation(self):
        with pytest.raises(ValueError):
            scan.SequenceStep((4, 4), np.pi)
        with pytest.raises(ValueError):
            scan.SequenceStep((2, 4), -1.0)
        with pytest.raises(ValueError):
            scan.SequenceStep((2, 4), np.pi, omega0=0.0)

    def test_forbidden_step_rejected(self):
        # hyperfine-free register: double spin flips have exactly zero
        # drive element, so the weakest pair is genuinely forbidden
        vals, vecs = mdl.eigensystem(FLAT)
        m_eig = vecs.conj().T @ pls.drive_operator(FLAT) @ vecs
        weak = min(((i, j) for i in range(sc.DIM)
                    for j in range(i + 1, sc.DIM)),
                   key=lambda p: abs(m_eig[p]))
        assert abs(m_eig[weak]) <= scan.ELEMENT_MIN
        seq = scan.SequenceSpec("bad", (scan.SequenceStep(weak, np.pi),))
        with pytest.raises(ValueError, match="drive-forbidden"):
            scan.compile_sequence(FLAT, seq)

    def test_compiled_durations(self):
        seq = scan.SequenceSpec("halfpi", (
            scan.SequenceStep((2, 4), np.pi / 2.0, omega0=5.0),))
        sched = scan.compile_sequence(NN25, seq)
        vals, vecs = mdl.eigensystem(NN25)
        m_eig = vecs.conj().T @ pls.drive_operator(NN25) @ vecs
        el = abs(m_eig[2, 4])
        assert sched.segments[0].duration == pytest.approx(
            0.5 * pls.pi_time_estimate(5.0, el))
        assert sched.segments[0].tones[0].nu == pytest.approx(
            vals[4] - vals[2])

    def test_gentle_pi_reaches_ideal(self):
        # carbon flip within m_S=-1: nearest coupled line is ~2000 MHz
        # away, so a moderate drive tracks the ideal rotation closely
        vals, vecs = mdl.eigensystem(NN25)
        rho0 = sc.ket_density(vecs[:, 4])
        seq = scan.SequenceSpec("flip", (
            scan.SequenceStep((4, 6), np.pi, omega0=20.0),))
        final, f = scan.run_sequence(NN25, seq, rho0)
        assert f > 0.999
        moved = np.real(vecs[:, 6].conj() @ final @ vecs[:, 6])
        assert moved > 0.999

    def test_sequence_target_unitary(self):
        seq = scan.SequenceSpec("two", (
            scan.SequenceStep((2, 4), np.pi / 2.0, omega0=4.0),
            scan.SequenceStep((4, 6), np.pi, omega0=30.0),))
        sched = scan.compile_sequence(NN25, seq)
        u = scan.sequence_target(NN25, seq, sched, sched.total_duration)
        assert np.abs(u.conj().T @ u - np.eye(sc.DIM)).max() < 1e-12

    def test_trace_peaks_near_duration(self):
        vals, vecs = mdl.eigensystem(NN25)
        rho0 = sc.ket_density(vecs[:, 4])
        seq = scan.SequenceSpec("flip", (
            scan.SequenceStep((4, 6), np.pi, omega0=20.0),))
        sched = scan.compile_sequence(NN25, seq)
        t_end = sched.total_duration
        times = np.linspace(0.7 * t_end, t_end, 40)
        trace = scan.sequence_fidelity_trace(NN25, seq, rho0, None, times)
        assert trace.max() > 0.995
        assert times[int(np.argmax(trace))] > 0.9 * t_end


NN11 = mdl.nearest_neighbor_model(1.1)


class TestBellPreparation:
    def test_partner_and_scheme_validation(self):
        with pytest.raises(ValueError, match="partner"):
            scan.bell_preparation(NN11, which="vx")
        with pytest.raises(ValueError, match="scheme"):
            scan.bell_preparation(NN11, scheme="four")

    def test_find_level_matches_dominant_label(self):
        vals, vecs = mdl.eigensystem(NN11)
        k = scan.find_level(NN11, (1, -1, -1))
        assert mdl.dominant_label(vecs[:, k]) == (1, -1, -1)
        with pytest.raises(ValueError, match="dominant"):
            scan.find_level(NN11, (2, 1, 1))

    def test_two_pulse_structure(self):
        prep = scan.bell_preparation(NN11, which="vc", scheme="two")
        k_start = scan.find_level(NN11, (0, -1, -1))
        k_up = scan.find_level(NN11, (1, -1, -1))
        k_nuc = scan.find_level(NN11, (-1, 1, -1))
        assert len(prep.seq.steps) == 2
        assert prep.seq.steps[0].level_pair == tuple(sorted((k_start, k_up)))
        assert prep.seq.steps[1].level_pair == tuple(sorted((k_up, k_nuc)))
        # the microwave line is a blend of unresolved nuclear satellites:
        # the compiled angle shrinks to match the faster physical flip
        assert 0.9 * np.pi < prep.seq.steps[0].theta < np.pi
        assert prep.seq.steps[1].theta == pytest.approx(np.pi / 2.0)
        assert set(prep.pair) == {k_up, k_nuc}
        assert prep.rho0[sc.basis_index(0, -1, -1),
                         sc.basis_index(0, -1, -1)] == pytest.approx(1.0)

    def test_three_pulse_structure(self):
        prep = scan.bell_preparation(NN11, which="vn", scheme="three")
        k_start = scan.find_level(NN11, (0, -1, -1))
        k_up = scan.find_level(NN11, (1, -1, -1))
        k_dn = scan.find_level(NN11, (-1, -1, -1))
        k_nuc = scan.find_level(NN11, (-1, -1, 1))
        assert [s.level_pair for s in prep.seq.steps] == [
            tuple(sorted((k_start, k_dn))),
            tuple(sorted((k_dn, k_nuc))),
            tuple(sorted((k_start, k_up)))]
        assert set(prep.pair) == {k_up, k_nuc}

    def test_stark_correction_targets_shifted_line(self):
        prep = scan.bell_preparation(NN11, which="vn", scheme="two")
        # the weak nitrogen flip sits next to a 600x stronger neighbor;
        # its power shift exceeds the Rabi half-width
        assert 0.005 < prep.seq.steps[1].detune < 0.06
        raw = scan.bell_preparation(NN11, which="vn", scheme="two",
                                    stark_correct=False)
        assert all(s.detune == 0.0 for s in raw.seq.steps)

    def test_doublet_fidelity_values(self):
        a, b = 3, 7
        ket = np.zeros(sc.DIM, dtype=complex)
        ket[a] = ket[b] = 1.0 / np.sqrt(2.0)
        assert scan.bell_state_fidelity(
            sc.ket_density(ket), (a, b)) == pytest.approx(1.0)
        mix = np.zeros((sc.DIM, sc.DIM), dtype=complex)
        mix[a, a] = mix[b, b] = 0.5
        assert scan.bell_state_fidelity(mix, (a, b)) == pytest.approx(0.5)
        assert scan.bell_state_fidelity(
            np.eye(sc.DIM, dtype=complex) / sc.DIM,
            (a, b)) == pytest.approx(1.0 / sc.DIM)

    def test_two_pulse_carbon_fidelity(self):
        prep = scan.bell_preparation(NN11, which="vc", scheme="two")
        total = scan.compile_sequence(NN11, prep.seq).total_duration
        times = np.linspace(0.85 * total, total, 30)
        trace = scan.bell_fidelity_trace(NN11, prep, None, times)
        assert trace.max() > 0.985
