"""Bell preparation exploration at 1.1 mT: product-basis start/target."""
import numpy as np
import nvspin.model as mdl
import nvspin.pulses as pls
import nvspin.scan as scan
import nvspin.spincore as sc
import nvspin.evolution as evo

M = mdl.RegisterModel(1.1)
VALS, VECS = mdl.eigensystem(M)
MEIG = VECS.conj().T @ pls.drive_operator(M) @ VECS
VD = pls.drive_operator(M)

# computational-basis indices: v(+1,0,-1) c(up,dn) n(up,dn)
K_0dd = 7    # |0,dn,dn>
K_P1dd = 3   # |+1,dn,dn>
K_M1ud = 9   # |-1,up,dn>
K_M1du = 10  # |-1,dn,up>

START = sc.ket_density(np.eye(sc.DIM, dtype=complex)[:, K_0dd])


def bell_fidelity(rho_lab, pair):
    a, b = pair
    return float(0.5 * (rho_lab[a, a].real + rho_lab[b, b].real)
                 + abs(rho_lab[a, b]))


def theta_scaled(pair, base):
    """Shrink theta when the broadband product element beats the eigen one."""
    a, b = pair
    el_eig = abs(MEIG[a, b])
    ia = int(np.argmax(np.abs(VECS[:, a])))
    ib = int(np.argmax(np.abs(VECS[:, b])))
    el_prod = abs(VD[ia, ib])
    if el_prod > el_eig:
        return base * el_eig / el_prod
    return base


def run(steps, noise, pair, tail=0.25, n=80):
    seq = scan.SequenceSpec("bell", tuple(steps))
    sched = scan.compile_sequence(M, seq)
    t_end = sched.total_duration
    times = np.linspace((1.0 - tail) * t_end, t_end, n)
    res = evo.evolve(START, M, sched, noise=noise, sample_times=times)
    fb = np.array([bell_fidelity(r, pair) for _, r in res.trajectory])
    k = int(np.argmax(fb))
    return fb[k], times[k], t_end


def vc2(om_mw, om_rf, s=1.0):
    return (scan.SequenceStep((1, 6), theta_scaled((1, 6), np.pi), omega0=om_mw),
            scan.SequenceStep((5, 6), s * np.pi / 2.0, omega0=om_rf))


def vn2(om_mw, om_rf, s=1.0):
    return (scan.SequenceStep((1, 6), theta_scaled((1, 6), np.pi), omega0=om_mw),
            scan.SequenceStep((6, 8), s * np.pi / 2.0, omega0=om_rf))


def vc3(om_mw, om_c):
    return (scan.SequenceStep((1, 9), theta_scaled((1, 9), np.pi / 2.0), omega0=om_mw),
            scan.SequenceStep((5, 9), np.pi, omega0=om_c),
            scan.SequenceStep((1, 6), theta_scaled((1, 6), np.pi), omega0=om_mw))


if __name__ == "__main__":
    import sys
    which = sys.argv[1] if len(sys.argv) > 1 else "vc2"
    noise = None if (len(sys.argv) > 2 and sys.argv[2] == "off") else evo.NoiseSpec()
    tag = "noise-off" if noise is None else "noise-on"
    if which == "vc2":
        for om_mw in (15.0, 20.0, 30.0):
            for om_rf in (10.0, 17.5, 25.0):
                f, t, t_end = run(vc2(om_mw, om_rf), noise, (K_P1dd, K_M1ud))
                print(f"vc2 {tag} mw={om_mw} rf={om_rf}: F={100*f:.3f}% "
                      f"t_opt={t:.1f} t_end={t_end:.1f}")
    elif which == "vn2":
        for om_mw in (20.0, 30.0):
            for om_rf in (8.0, 13.3, 20.0):
                f, t, t_end = run(vn2(om_mw, om_rf), noise, (K_P1dd, K_M1du),
                                  tail=0.15)
                print(f"vn2 {tag} mw={om_mw} rf={om_rf}: F={100*f:.3f}% "
                      f"t_opt={t:.1f} t_end={t_end:.1f}")
    elif which == "vc3":
        for om_mw in (15.0, 20.0, 30.0):
            for om_c in (20.0, 30.0):
                f, t, t_end = run(vc3(om_mw, om_c), noise, (K_P1dd, K_M1ud))
                print(f"vc3 {tag} mw={om_mw} c={om_c}: F={100*f:.3f}% "
                      f"t_opt={t:.1f} t_end={t_end:.1f}")