"""Independent arbitrary-precision reference formulas.

Written from the equations of motion without reusing package code, so the
tests compare two separate implementations.
"""

import mpmath as mp

mp.mp.dps = 40

HBAR = mp.mpf("1.054571817e-34")
KB = mp.mpf("1.380649e-23")
C = mp.mpf("299792458")


def field(L, lam, delta_hz, gamma_hz, p_circ, eps_ppm=0):
    L, lam, p = mp.mpf(L), mp.mpf(lam), mp.mpf(p_circ)
    w0 = 2 * mp.pi * C / lam
    g = 2 * mp.pi * mp.mpf(gamma_hz)
    ge = C * mp.mpf(eps_ppm) * mp.mpf("1e-6") / (4 * L)
    return {
        "G0": w0 / L,
        "n": 2 * L * p / (HBAR * w0 * C),
        "Delta": 2 * mp.pi * mp.mpf(delta_hz),
        "gamma": g,
        "gamma_eps": ge,
        "gamma_tot": g + ge,
    }


def spring(f, omega):
    w = mp.mpf(omega)
    gt = f["gamma_tot"]
    return 2 * HBAR * f["G0"] ** 2 * f["n"] * f["Delta"] / ((w - f["Delta"] + 1j * gt) * (w + f["Delta"] + 1j * gt))


def force_spectrum(f, omega, gamma=None):
    w = mp.mpf(omega)
    g = f["gamma"] if gamma is None else gamma
    d = f["Delta"]
    return 4 * HBAR**2 * f["G0"] ** 2 * f["n"] * g * (g**2 + w**2 + d**2) / (((w - d) ** 2 + g**2) * ((w + d) ** 2 + g**2))


def residual(f, eta, omega):
    w = mp.mpf(omega)
    D = f["gamma"] ** 2 + f["Delta"] ** 2
    pref = 4 * HBAR**2 * f["G0"] ** 2 * f["gamma"] * f["n"] / D
    return pref * (f["gamma_eps"] / f["gamma"] + (1 - mp.mpf(eta)) + w**2 * f["Delta"] ** 2 / D**2)
