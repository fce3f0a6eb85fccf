"""Photodetection and the amplitude-feedback loop.

Each drive field has its own photodetector on the reflected beam and its
own loop back to the amplitude quadrature of its input
(``v1_loop = v1 - K_c * dP / (sqrt(2) a_in)``). Coupling between the loops
through the shared displacement enters only via each photocurrent's
position term, which is folded into the closed-loop susceptibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cavity import a_out_mean, force_noise, input_output, spring_approx, spring_exact, _check_mode
from .errors import DomainError, LoopSingularityError
from .noise import NoiseChannel, NoiseVector, sum_vectors
from .params import DEFAULT_CONSTANTS, Detector, FeedbackKernel, MechanicalOscillator, OpticalField
from .spring import SpringStack, bare_inverse_susceptibility, effective_susceptibility

# below this |1 + K_c| the loop is treated as singular
_SINGULAR = 1e-12


def detector_channel(field: OpticalField) -> NoiseChannel:
    return NoiseChannel("N", f"pd:{field.label}")


@dataclass(frozen=True)
class PhotocurrentVector:
    """Fluctuating photocurrent ``dP`` (photons/s).

    ``noise`` holds the optical and detector vacuum contributions and
    ``c_x`` the coefficient of the displacement, per metre.
    """

    noise: NoiseVector
    c_x: object


def photocurrent(field: OpticalField, det: Detector, omega, mode: str = "approx") -> PhotocurrentVector:
    """Reflected-power fluctuation seen by the field's photodetector.

    ``approx`` keeps leading order in loss and ``omega``. The displacement
    term is ``+2 G0 |a|^2 Delta (2 gamma_eps - i omega) / (gamma^2 + Delta^2)``;
    its sign follows from the exact reflection coefficients (``exact`` mode
    evaluates ``a_out^* a_out(omega) + a_out a_out^dag(omega)`` directly).
    """
    _check_mode(mode)
    omega = np.asarray(omega, dtype=float)
    lab = field.label
    ch_v1 = NoiseChannel("V1", lab, field.amplitude_noise)
    ch_v2, ch_v1p, ch_v2p = NoiseChannel("V2", lab), NoiseChannel("V1p", lab), NoiseChannel("V2p", lab)
    s2a = math.sqrt(2.0) * field.a_in
    ones = np.ones_like(omega)
    n_coef = s2a * math.sqrt(1.0 - det.eta) * ones + 0j
    if mode == "approx":
        D, g, ge, Delta = field.D, field.gamma, field.gamma_eps, field.Delta
        w = 2.0 * math.sqrt(2.0 * g * ge) * field.a_in / D
        coeffs = {ch_v1: s2a * ones + 0j, ch_v1p: w * g * ones + 0j, ch_v2p: -w * Delta * ones + 0j,
                  detector_channel(field): n_coef}
        c_x = 2.0 * field.G0 * field.n_circ * Delta * (2.0 * ge - 1j * omega) / D
    else:
        ao = a_out_mean(field)
        io_p = input_output(field, omega, "exact")
        io_m = input_output(field, -omega, "exact")

        def quads(rp, rm):
            plus, minus = np.conj(ao) * rp, ao * np.conj(rm)
            return (plus + minus) / math.sqrt(2.0), 1j * (plus - minus) / math.sqrt(2.0)

        sample, t2 = quads(io_p.r_in, io_m.r_in)
        t1p, t2p = quads(io_p.r_loss, io_m.r_loss)
        coeffs = {ch_v1: sample, ch_v2: t2, ch_v1p: t1p, ch_v2p: t2p, detector_channel(field): n_coef}
        c_x = np.conj(ao) * io_p.c_x + ao * np.conj(io_m.c_x)
    coeffs = {k: np.asarray(v)[()] for k, v in coeffs.items()}
    return PhotocurrentVector(NoiseVector(omega[()], coeffs), np.asarray(c_x)[()])


@dataclass(frozen=True)
class ClosedLoopResult:
    chi_inv_closed: object
    residual_force: NoiseVector
    kernel_used: FeedbackKernel
    per_field: dict

    @property
    def chi_closed(self):
        return 1.0 / np.asarray(self.chi_inv_closed)


def _loop_factors(kernel: FeedbackKernel, omega):
    """Return ``(K/(1+K), 1/(1+K))`` with the analytic ideal limit."""
    if kernel.is_ideal:
        return 1.0, 0.0
    K = np.asarray(kernel(omega))
    one_plus = 1.0 + K
    bad = np.abs(one_plus) < _SINGULAR
    if np.any(bad):
        w = np.asarray(omega, dtype=float)
        where = w[bad] if w.ndim else w
        raise LoopSingularityError(f"1 + K_c(omega) = 0 at omega = {where} rad/s", omega=where)
    return (K / one_plus)[()], (1.0 / one_plus)[()]


def _field_loop_approx(field: OpticalField, det: Detector, kernel: FeedbackKernel, omega):
    """Per-field closed-loop correction to chi^{-1} and residual force (approx)."""
    L, inv = _loop_factors(kernel, omega)
    D, g, ge, Delta = field.D, field.gamma, field.gamma_eps, field.Delta
    hb, G0, n = field.hbar, field.G0, field.n_circ
    A = 2.0 * hb * G0 * math.sqrt(g) * math.sqrt(n) / math.sqrt(D)
    lab = field.label
    ones = np.ones_like(omega)
    coeffs = {
        NoiseChannel("V1", lab, field.amplitude_noise): -A * inv * ones + 0j,
        NoiseChannel("V2", lab): -A * 1j * omega * Delta / D + 0j * ones,
        NoiseChannel("V1p", lab): -A * math.sqrt(ge / g) * (1.0 - 2.0 * g**2 * L / D) * ones + 0j,
        NoiseChannel("V2p", lab): -A * 2.0 * math.sqrt(g * ge) * Delta * L / D * ones + 0j,
        detector_channel(field): A * math.sqrt(1.0 - det.eta) * L * ones + 0j,
    }
    C = 4.0 * hb * G0**2 * n * g * Delta * (2.0 * ge - 1j * omega) / D**2
    K_open = spring_approx(field, 1.0).at(omega)
    return K_open - C * L, coeffs


def _field_loop_exact(field: OpticalField, det: Detector, kernel: FeedbackKernel, omega):
    """Per-field closed loop solved with exact cavity transfer functions."""
    fn = force_noise(field, omega, "exact")
    pc = photocurrent(field, det, omega, "exact")
    lab = field.label
    ch_v1 = NoiseChannel("V1", lab, field.amplitude_noise)
    F1 = fn.coefficient(ch_v1)
    T1 = pc.noise.coefficient(ch_v1)
    s2a = math.sqrt(2.0) * field.a_in
    if kernel.is_ideal:
        # v1_loop = -(rest + c_P x) / T1
        g_x, g_rest, g_v1 = -1.0 / T1, -1.0 / T1, 0.0
    else:
        k = np.asarray(kernel(omega)) / s2a
        den = 1.0 + k * T1
        if np.any(np.abs(den) < _SINGULAR):
            raise LoopSingularityError("1 + K_c T(omega) = 0 for the exact in-loop transfer", omega=omega)
        g_v1, g_rest, g_x = 1.0 / den, -k / den, -k / den
    coeffs = {}
    for ch in set(fn.coeffs) | set(pc.noise.coeffs):
        if ch == ch_v1:
            coeffs[ch] = np.asarray(F1 * g_v1 + 0j * omega)[()]
            continue
        direct = fn.coefficient(ch)
        coeffs[ch] = np.asarray(direct + F1 * g_rest * pc.noise.coefficient(ch) + 0j * omega)[()]
    # x-dependent force moves to the left-hand side
    chi_corr = spring_exact(field, omega) - F1 * g_x * pc.c_x
    return chi_corr, coeffs


def close_loop(mech: MechanicalOscillator, stack: SpringStack, det: Detector,
               kernel: FeedbackKernel, omega, mode: str = "approx") -> ClosedLoopResult:
    """Closed-loop inverse susceptibility and residual force for a stack.

    Every field gets its own loop with the same kernel. With the kernel off
    this returns the open-loop susceptibility and force noise unchanged.
    """
    _check_mode(mode)
    omega = np.asarray(omega, dtype=float)
    if kernel.kind == "off":
        chi = effective_susceptibility(mech, stack, omega, mode).chi_inv
        forces = [force_noise(f, omega, mode) for f in stack]
        per = {f.label: v for f, v in zip(stack, forces)}
        return ClosedLoopResult(chi, sum_vectors(forces, omega[()]), kernel, per)
    chi_inv = bare_inverse_susceptibility(mech, omega)
    per = {}
    residual = NoiseVector(omega[()], {})
    for f in stack:
        step = _field_loop_approx if mode == "approx" else _field_loop_exact
        corr, coeffs = step(f, det, kernel, omega)
        chi_inv = chi_inv + corr
        vec = NoiseVector(omega[()], coeffs)
        per[f.label] = vec
        residual = residual + vec
    return ClosedLoopResult(np.asarray(chi_inv)[()], residual, kernel, per)


def residual_spectrum(field: OpticalField, det: Detector, omega):
    """Residual radiation-pressure force density with ideal feedback (N^2/Hz)."""
    omega = np.asarray(omega, dtype=float)
    D = field.D
    pref = 4.0 * field.hbar**2 * field.G0**2 * field.gamma * field.n_circ / D
    bracket = field.gamma_eps / field.gamma + (1.0 - det.eta) + omega**2 * field.Delta**2 / D**2
    return (pref * bracket)[()]


def residual_bracket_terms(field: OpticalField, det: Detector, omega) -> tuple:
    """The loss, efficiency and finite-bandwidth terms of the residual bracket."""
    D = field.D
    return (field.gamma_eps / field.gamma, 1.0 - det.eta,
            np.asarray(omega, dtype=float) ** 2 * field.Delta**2 / D**2)


def residual_temperature(field: OpticalField, mech: MechanicalOscillator, det: Detector, omega_eval,
                         constants=DEFAULT_CONSTANTS):
    """Bath temperature whose viscous thermal force matches the residual (K)."""
    return residual_spectrum(field, det, omega_eval) / (4.0 * mech.m * mech.gamma_m * constants.k_B)


def required_gain(Gamma_os: float, gamma_m: float) -> float:
    """Open-loop gain threshold ``|Gamma_os| / gamma_m`` for stabilisation."""
    if gamma_m == 0:
        raise DomainError("gamma_m must be non-zero")
    return abs(Gamma_os) / abs(gamma_m)
