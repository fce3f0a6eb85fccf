"""Single-field frequency-domain physics.

All functions take angular frequency ``omega`` (rad/s) and broadcast over
numpy arrays. ``mode="exact"`` uses the full linearized cavity response
(with ``gamma_tot`` where loss enters); ``mode="approx"`` is the expansion
for cavity bandwidth and detuning large compared with ``omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import NoiseChannel, NoiseVector
from .params import OpticalField

MODES = ("exact", "approx")


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _pole_product(field: OpticalField, omega, gamma=None):
    g = field.gamma_tot if gamma is None else gamma
    den = (omega - field.Delta + 1j * g) * (omega + field.Delta + 1j * g)
    # |den| >= gamma_tot**2 for real omega, so this only trips on bad input
    assert np.all(np.abs(den) > np.finfo(float).tiny), "cavity pole reached on the real axis"
    return den


def spring_exact(field: OpticalField, omega):
    """Exact optical spring coefficient ``K_os(omega)`` in N/m."""
    omega = np.asarray(omega, dtype=float)
    num = 2.0 * field.hbar * field.G0**2 * field.n_circ * field.Delta
    return (num / _pole_product(field, omega))[()]


@dataclass(frozen=True)
class SpringCoefficient:
    """Large-detuning decomposition ``K ~ stiffness - i friction omega``.

    ``stiffness`` is ``m omega_os^2`` (N/m) and ``friction`` is
    ``m Gamma_os`` (kg/s); both are independent of the mechanical mass,
    which is only needed for the per-unit-mass quantities.
    """

    stiffness: float
    friction: float
    mass: float

    @property
    def omega_os_sq(self) -> float:
        return self.stiffness / self.mass

    @property
    def Gamma_os(self) -> float:
        return self.friction / self.mass

    @property
    def omega_os(self) -> float:
        """Signed spring frequency: negative when the rigidity is negative."""
        return math.copysign(math.sqrt(abs(self.omega_os_sq)), self.omega_os_sq)

    def at(self, omega):
        return self.stiffness - 1j * self.friction * np.asarray(omega, dtype=float)


def spring_approx(field: OpticalField, mass: float) -> SpringCoefficient:
    """Rigidity and optical damping to leading order in ``omega`` and loss."""
    D = field.D
    k0 = -2.0 * field.hbar * field.G0**2 * field.n_circ * field.Delta / D
    stiffness = k0 * (1.0 - 4.0 * field.gamma * field.gamma_eps / D)
    friction = 4.0 * field.hbar * field.G0**2 * field.n_circ * field.gamma * field.Delta / D**2
    return SpringCoefficient(stiffness=stiffness, friction=friction, mass=mass)


def channels(field: OpticalField) -> dict:
    """The input-quadrature channels owned by ``field``."""
    lab = field.label
    return {
        "V1": NoiseChannel("V1", lab, field.amplitude_noise),
        "V2": NoiseChannel("V2", lab),
        "V1p": NoiseChannel("V1p", lab),
        "V2p": NoiseChannel("V2p", lab),
    }


def force_noise(field: OpticalField, omega, mode: str = "exact") -> NoiseVector:
    """Radiation-pressure force fluctuation as a :class:`NoiseVector` (N/sqrt(Hz))."""
    _check_mode(mode)
    omega = np.asarray(omega, dtype=float)
    ch = channels(field)
    hb, G0, nb = field.hbar, field.G0, math.sqrt(field.n_circ)
    Delta, g = field.Delta, field.gamma
    loss = math.sqrt(field.gamma_eps / g)
    if mode == "exact":
        gt = field.gamma_tot
        Dt = gt**2 + Delta**2
        pref = 2.0 * hb * G0 * math.sqrt(g) * nb / math.sqrt(Dt)
        den = _pole_product(field, omega)
        c1 = pref * (Dt - 1j * gt * omega) / den
        c2 = pref * 1j * Delta * omega / den
        coeffs = {ch["V1"]: c1, ch["V2"]: c2, ch["V1p"]: loss * c1, ch["V2p"]: loss * c2}
    else:
        D = field.D
        A = 2.0 * hb * G0 * math.sqrt(g) * nb / math.sqrt(D)
        ones = np.ones_like(omega)
        coeffs = {
            ch["V1"]: -A * ones + 0j,
            ch["V2"]: -A * 1j * omega * Delta / D,
            ch["V1p"]: -A * loss * ones + 0j,
        }
    return NoiseVector(omega[()], {k: np.asarray(v)[()] for k, v in coeffs.items()})


def force_spectrum_exact(field: OpticalField, omega, with_loss: bool = False):
    """Closed-form single-sided force spectrum for vacuum input (N^2/Hz).

    With ``with_loss`` the loss port is included, which replaces ``gamma``
    by ``gamma_tot`` throughout; the default is the lossless expression.
    Excess amplitude noise is not included here.
    """
    omega = np.asarray(omega, dtype=float)
    g = field.gamma_tot if with_loss else field.gamma
    Delta = field.Delta
    num = 4.0 * field.hbar**2 * field.G0**2 * field.n_circ * g * (g**2 + omega**2 + Delta**2)
    den = ((omega - Delta) ** 2 + g**2) * ((omega + Delta) ** 2 + g**2)
    return (num / den)[()]


@dataclass(frozen=True)
class IORelation:
    """``a_out = r_in a_in + r_loss a_in' + c_x x`` at one frequency."""

    r_in: complex
    r_loss: complex
    c_x: complex


def input_output(field: OpticalField, omega, mode: str = "exact") -> IORelation:
    """Cavity reflection coefficients; ``approx`` is the ``omega -> 0`` limit."""
    _check_mode(mode)
    omega = np.asarray(omega, dtype=float)
    w = omega if mode == "exact" else np.zeros_like(omega)
    Delta, g, ge, gt = field.Delta, field.gamma, field.gamma_eps, field.gamma_tot
    den = w - Delta + 1j * gt
    r_in = -(w - Delta - 1j * (g - ge)) / den
    r_loss = 2j * math.sqrt(g * ge) / den
    c_x = math.sqrt(2.0 * g) * field.G0 * field.a_bar / den
    return IORelation(r_in[()], r_loss[()], c_x[()])


def a_out_mean(field: OpticalField) -> complex:
    """Steady-state output amplitude ``-a_in + sqrt(2 gamma) a_bar``."""
    return -field.a_in + math.sqrt(2.0 * field.gamma) * field.a_bar


def default_grid(omega_m: float, fields, n: int = 400) -> np.ndarray:
    """Log-spaced grid from ``omega_m / 10`` to ``10 * min(gamma)``."""
    gammas = [f.gamma for f in fields] or [1e3 * omega_m]
    hi = 10.0 * min(gammas)
    lo = omega_m / 10.0
    return np.logspace(math.log10(lo), math.log10(max(hi, 10 * lo)), n)


def dump_rows(field: OpticalField, omega):
    """Per-frequency table used by ``cavity dump``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    K = np.atleast_1d(spring_exact(field, omega))
    S = np.atleast_1d(force_spectrum_exact(field, omega, with_loss=field.gamma_eps > 0))
    fn = force_noise(field, omega, "exact")
    header = ["omega", "re_K_exact", "im_K_exact", "S_F"]
    cols = [omega, K.real, K.imag, S]
    for chan, c in fn.coeffs.items():
        c = np.atleast_1d(c) * np.ones_like(omega)
        header += [f"re_{chan.tag}", f"im_{chan.tag}"]
        cols += [c.real, c.imag]
    return header, np.column_stack(cols)
