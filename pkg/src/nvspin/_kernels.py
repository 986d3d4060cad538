"""Hot integrator kernels with a numba and a pure-numpy build.

The same stepper source is compiled with numba when available (or when
NVSPIN_BACKEND=numba demands it) and run as plain numpy otherwise
(NVSPIN_BACKEND=numpy forces the fallback). Both builds take identical
flat-array arguments so the evolution driver is backend-agnostic.

State layout: a batch of density matrices (m, 12, 12) in the rotating
(interaction) picture with respect to the diagonal d of the static
Hamiltonian. The equation of motion integrated here is

    drho/dt = -i k [Heff(t), rho] + (Cc + t Cd) o rho + jump gather

with k = 2 pi 1e-3 rad/(MHz ns), Heff(t) = (Hs + u(t) Vd) o W(t),
W_jk = exp(i k (d_j - d_k) t), "o" elementwise. Cc collects all
constant elementwise decay factors, Cd the linear-in-t dephasing law,
and each gather row moves rho[si, sj] into drho[di, dj] at a fixed rate
and phase frequency. The lab frame is the special case d = 0 with the
full Hamiltonian in Hs.

Stepper: embedded Dormand-Prince 5(4) pair, first-same-as-last, step
control 0.9 err^(-1/5) clamped to [0.2, 5], rejection above unit error,
RMS error norm with scale atol + rtol max(|y0|, |y1|). Accepted states
are re-Hermitized. Returns (status, t_reached, next_step, accepted,
rejected) with status 0 ok, 1 step underflow, 2 step budget exhausted.
"""

import os

import numpy as np

_FLAG = os.environ.get("NVSPIN_BACKEND", "").strip().lower()
if _FLAG not in ("", "numba", "numpy"):
    raise RuntimeError(f"NVSPIN_BACKEND={_FLAG!r}: expected 'numba' or 'numpy'")

if _FLAG == "numpy":
    _HAVE_NUMBA = False
else:
    try:
        from numba import njit
        _HAVE_NUMBA = True
    except ImportError:
        if _FLAG == "numba":
            raise
        _HAVE_NUMBA = False

BACKEND = "numba" if _HAVE_NUMBA else "numpy"

KAPPA = 2.0e-3 * np.pi


def _rhs(t, y, d, h_stat, vd, tone_om, tone_nu, tone_ph,
         c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq):
    m_batch = y.shape[0]
    n = y.shape[1]
    u = 0.0
    for i in range(tone_om.shape[0]):
        u += tone_om[i] * np.cos(KAPPA * tone_nu[i] * t + tone_ph[i])
    w = np.exp(1j * (KAPPA * t) * d)
    hmat = (h_stat + u * vd) * (w.reshape(n, 1) * np.conj(w).reshape(1, n))
    cmat = c_const + t * c_deph
    nk = g_rate.shape[0]
    gph = np.empty(nk, np.complex128)
    for kk in range(nk):
        ph = KAPPA * g_freq[kk] * t
        gph[kk] = g_rate[kk] * (np.cos(ph) + 1j * np.sin(ph))
    out = np.empty_like(y)
    for mm in range(m_batch):
        ym = y[mm]
        comm = hmat @ ym - ym @ hmat
        out[mm] = (-1j * KAPPA) * comm + cmat * ym
        for kk in range(nk):
            out[mm, g_di[kk], g_dj[kk]] += gph[kk] * ym[g_si[kk], g_sj[kk]]
    return out


def _advance(rho, t0, t1, d, h_stat, vd, tone_om, tone_nu, tone_ph,
             c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq,
             rtol, atol, h_start, max_steps):
    m_batch = rho.shape[0]
    n = rho.shape[1]

    a21 = 1.0 / 5.0
    a31 = 3.0 / 40.0
    a32 = 9.0 / 40.0
    a41 = 44.0 / 45.0
    a42 = -56.0 / 15.0
    a43 = 32.0 / 9.0
    a51 = 19372.0 / 6561.0
    a52 = -25360.0 / 2187.0
    a53 = 64448.0 / 6561.0
    a54 = -212.0 / 729.0
    a61 = 9017.0 / 3168.0
    a62 = -355.0 / 33.0
    a63 = 46732.0 / 5247.0
    a64 = 49.0 / 176.0
    a65 = -5103.0 / 18656.0
    b1 = 35.0 / 384.0
    b3 = 500.0 / 1113.0
    b4 = 125.0 / 192.0
    b5 = -2187.0 / 6784.0
    b6 = 11.0 / 84.0
    e1 = 71.0 / 57600.0
    e3 = -71.0 / 16695.0
    e4 = 71.0 / 1920.0
    e5 = -17253.0 / 339200.0
    e6 = 22.0 / 525.0
    e7 = -1.0 / 40.0
    c2 = 1.0 / 5.0
    c3 = 3.0 / 10.0
    c4 = 4.0 / 5.0
    c5 = 8.0 / 9.0

    span = t1 - t0
    t = t0
    h = h_start
    if h <= 0.0 or h > span:
        h = min(1.0, span)
    n_acc = 0
    n_rej = 0
    k1 = _rhs(t, rho, d, h_stat, vd, tone_om, tone_nu, tone_ph,
              c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq)
    while t1 - t > 1e-12 * max(1.0, abs(t1)):
        if h > t1 - t:
            h = t1 - t
        if h < 1e-12 * max(1.0, abs(t)):
            return 1, t, h, n_acc, n_rej
        if n_acc + n_rej >= max_steps:
            return 2, t, h, n_acc, n_rej

        y = rho + (h * a21) * k1
        k2 = _rhs(t + c2 * h, y, d, h_stat, vd, tone_om, tone_nu, tone_ph,
                  c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq)
        y = rho + h * (a31 * k1 + a32 * k2)
        k3 = _rhs(t + c3 * h, y, d, h_stat, vd, tone_om, tone_nu, tone_ph,
                  c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq)
        y = rho + h * (a41 * k1 + a42 * k2 + a43 * k3)
        k4 = _rhs(t + c4 * h, y, d, h_stat, vd, tone_om, tone_nu, tone_ph,
                  c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq)
        y = rho + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)
        k5 = _rhs(t + c5 * h, y, d, h_stat, vd, tone_om, tone_nu, tone_ph,
                  c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq)
        y = rho + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)
        k6 = _rhs(t + h, y, d, h_stat, vd, tone_om, tone_nu, tone_ph,
                  c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq)
        y5 = rho + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6)
        k7 = _rhs(t + h, y5, d, h_stat, vd, tone_om, tone_nu, tone_ph,
                  c_const, c_deph, g_si, g_sj, g_di, g_dj, g_rate, g_freq)
        err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7)

        sq = 0.0
        for mm in range(m_batch):
            for i in range(n):
                for j in range(n):
                    y0a = abs(rho[mm, i, j])
                    y1a = abs(y5[mm, i, j])
                    big = y0a if y0a > y1a else y1a
                    q = abs(err[mm, i, j]) / (atol + rtol * big)
                    sq += q * q
        errn = np.sqrt(sq / (m_batch * n * n))

        if errn <= 1.0:
            t = t + h
            for mm in range(m_batch):
                rho[mm] = 0.5 * (y5[mm] + np.conj(y5[mm]).T)
            k1 = k7
            n_acc += 1
            if errn == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * errn ** -0.2
                if fac > 5.0:
                    fac = 5.0
                elif fac < 0.2:
                    fac = 0.2
            h = h * fac
        else:
            n_rej += 1
            fac = 0.9 * errn ** -0.2
            if fac > 1.0:
                fac = 1.0
            elif fac < 0.2:
                fac = 0.2
            h = h * fac
    return 0, t, h, n_acc, n_rej


if _HAVE_NUMBA:
    _rhs = njit(cache=True)(_rhs)
    advance = njit(cache=True)(_advance)
else:
    advance = _advance
