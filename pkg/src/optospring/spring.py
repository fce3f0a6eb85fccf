"""Optical springs combined with the bare oscillator.

Covers the effective susceptibility of a stack of drive fields, the
double-spring damping cancellation, detuning solvers and a stability check
on the quadratic (large-detuning) form of the susceptibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .cavity import spring_approx, spring_exact, _check_mode
from .errors import DomainError, NoSolutionError, UnsupportedFormError
from .params import (DEFAULT_CONSTANTS, MechanicalOscillator, OpticalField, OpticalFieldInput,
                     PhysicalConstants, derive_field, TWO_PI)


def bare_inverse_susceptibility(mech: MechanicalOscillator, omega):
    """``chi_0^{-1} = -m (omega^2 + i gamma_m omega - omega_m^2)``."""
    omega = np.asarray(omega, dtype=float)
    return (-mech.m * (omega**2 + 1j * mech.gamma_m * omega - mech.omega_m**2))[()]


@dataclass(frozen=True)
class Susceptibility:
    chi_inv: object
    provenance: str = "bare"

    @property
    def chi(self):
        return 1.0 / np.asarray(self.chi_inv)


@dataclass(frozen=True)
class SpringStack:
    """Ordered collection of drive fields acting on the same oscillator."""

    springs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "springs", tuple(self.springs))

    def __len__(self):
        return len(self.springs)

    def __iter__(self):
        return iter(self.springs)

    def K_tot(self, omega, mode: str = "exact", mass: float | None = None):
        _check_mode(mode)
        omega = np.asarray(omega, dtype=float)
        total = np.zeros_like(omega, dtype=complex)
        for f in self.springs:
            if mode == "exact":
                total = total + spring_exact(f, omega)
            else:
                total = total + spring_approx(f, 1.0 if mass is None else mass).at(omega)
        return total[()]

    def stiffness(self) -> float:
        """Summed large-detuning rigidity ``sum m omega_os^2`` (N/m)."""
        return sum(spring_approx(f, 1.0).stiffness for f in self.springs)

    def friction(self) -> float:
        """Summed large-detuning optical friction ``sum m Gamma_os`` (kg/s)."""
        return sum(spring_approx(f, 1.0).friction for f in self.springs)


def combine_springs(stack: SpringStack, omega, mode: str = "exact"):
    """Total optical spring coefficient of a non-empty stack."""
    if len(stack) == 0:
        raise DomainError("combine_springs needs at least one field")
    return stack.K_tot(omega, mode)


def effective_susceptibility(mech: MechanicalOscillator, stack: SpringStack, omega,
                             mode: str = "exact") -> Susceptibility:
    chi_inv = bare_inverse_susceptibility(mech, omega)
    if len(stack) == 0:
        return Susceptibility(chi_inv, "bare")
    return Susceptibility(chi_inv + stack.K_tot(omega, mode), "open_loop")


def spring_frequency_sq(mech: MechanicalOscillator, stack: SpringStack) -> float:
    """Stacked ``omega_os^2`` from the large-detuning rigidities."""
    return stack.stiffness() / mech.m


def closed_loop_resonance(mech: MechanicalOscillator, stack: SpringStack) -> float:
    """``sqrt(omega_m^2 + omega_os^2)`` (requires a positive total rigidity)."""
    w2 = mech.omega_m**2 + spring_frequency_sq(mech, stack)
    if w2 <= 0:
        raise DomainError("total rigidity is negative; no real resonance")
    return math.sqrt(w2)


# -- detuning solvers ------------------------------------------------------

def solve_detuning(kappa: float, gamma: float, Delta_R: float) -> float:
    """Blue detuning that cancels the net optical damping for equal bandwidths.

    ``kappa = |omega_osB / omega_osR| > 1``; returns the negative root of
    ``Delta_B^2 = (kappa^2 - 1) gamma^2 + kappa^2 Delta_R^2``.
    """
    if not kappa > 1.0:
        raise DomainError(f"kappa must exceed 1 (blue spring must dominate), got {kappa!r}")
    if gamma < 0:
        raise DomainError("gamma must be non-negative")
    return -math.sqrt((kappa**2 - 1.0) * gamma**2 + kappa**2 * Delta_R**2)


def damping_bracket(blue: OpticalField, red: OpticalField, mass: float) -> float:
    """``gamma_B w_B^2/(gamma_B^2+Delta_B^2) - gamma_R w_R^2/(gamma_R^2+Delta_R^2)``.

    ``w^2`` are the magnitudes of the lossless spring frequencies squared.
    """
    def term(f):
        w2 = abs(2.0 * f.hbar * f.G0**2 * f.n_circ * f.Delta / (f.D * mass))
        return f.gamma * w2 / f.D
    return term(blue) - term(red)


@dataclass(frozen=True)
class DetuningSolution:
    Delta_B: float
    residual_im_K: float
    omega_ref: float
    iterations: int


def solve_detuning_general(blue: OpticalFieldInput, red: OpticalFieldInput, mass: float,
                           constants: PhysicalConstants = DEFAULT_CONSTANTS, *,
                           mode: str = "exact", omega_ref: float | None = None,
                           search_hz: tuple | None = None, omega_m: float = 0.0,
                           rtol: float = 1e-12, max_iter: int = 20) -> DetuningSolution:
    """Blue detuning (rad/s) giving zero net optical damping.

    ``blue.Delta_hz`` is ignored; all other parameters (powers included)
    stay fixed. In ``approx`` mode the net friction is frequency independent
    and the root is unique per branch. In ``exact`` mode the condition is
    ``Im K_tot(omega_ref) = 0``; without an explicit ``omega_ref`` the
    reference tracks the resulting spring frequency by fixed-point
    iteration. The search runs over ``|Delta_B|`` in ``search_hz`` (default:
    from ``gamma_B/sqrt(3)``, where the blue friction peaks, to
    ``1000 gamma_B``), i.e. the large-detuning branch.
    """
    _check_mode(mode)
    red_f = derive_field(red, constants)
    if search_hz is None:
        lo, hi = blue.gamma_hz / math.sqrt(3.0), 1e3 * blue.gamma_hz
    else:
        lo, hi = sorted(abs(v) for v in search_hz)

    def fields_at(abs_delta_hz):
        return derive_field(replace(blue, Delta_hz=-abs_delta_hz), constants)

    def objective(abs_delta_hz, w_ref):
        b = fields_at(abs_delta_hz)
        if mode == "approx":
            # Im K_tot = -omega * (total friction); normalise out omega
            return -(spring_approx(b, mass).friction + spring_approx(red_f, mass).friction)
        return float(np.imag(spring_exact(b, w_ref) + spring_exact(red_f, w_ref))) / w_ref

    def resulting_omega(abs_delta_hz):
        b = fields_at(abs_delta_hz)
        w2 = omega_m**2 + (spring_approx(b, mass).stiffness + spring_approx(red_f, mass).stiffness) / mass
        return math.sqrt(abs(w2)) or 1.0

    def root(w_ref):
        f_lo, f_hi = objective(lo, w_ref), objective(hi, w_ref)
        if np.sign(f_lo) == np.sign(f_hi):
            xs = np.geomspace(lo, hi, 64)
            sweep = np.array([(x, objective(x, w_ref)) for x in xs])
            raise NoSolutionError(
                f"net optical damping does not change sign for |Delta_B|/2pi in [{lo:.4g}, {hi:.4g}] Hz; "
                "the red spring dominates the damping", sweep=sweep)
        return brentq(objective, lo, hi, args=(w_ref,), xtol=1e-300, rtol=4 * np.finfo(float).eps,
                      maxiter=500)

    iterations = 0
    if mode == "approx" or omega_ref is not None:
        w_ref = omega_ref if omega_ref is not None else 1.0
        x = root(w_ref)
    else:
        x = root(resulting_omega(blue.gamma_hz))
        w_ref = resulting_omega(x)
        for iterations in range(1, max_iter + 1):
            x_new = root(w_ref)
            w_new = resulting_omega(x_new)
            converged = abs(x_new - x) <= rtol * abs(x) and abs(w_new - w_ref) <= rtol * w_ref
            x, w_ref = x_new, w_new
            if converged:
                break
    b = fields_at(x)
    if mode == "approx":
        resid = -(spring_approx(b, mass).friction + spring_approx(red_f, mass).friction) * w_ref
    else:
        resid = float(np.imag(spring_exact(b, w_ref) + spring_exact(red_f, w_ref)))
    return DetuningSolution(Delta_B=-TWO_PI * x, residual_im_K=resid, omega_ref=w_ref, iterations=iterations)


# -- stability ---------------------------------------------------------------

@dataclass(frozen=True)
class StabilityResult:
    stable: bool
    poles: tuple
    Gamma: float
    Omega_sq: float

    @property
    def margin(self) -> float:
        """Smallest decay rate ``min(-Im pole)``; negative when unstable."""
        return min(-p.imag for p in self.poles)


def stability(Gamma: float, Omega_sq: float) -> StabilityResult:
    """Poles of ``chi = 1 / (-m [omega^2 + i Gamma omega - Omega^2])``.

    With the ``exp(-i omega t)`` convention a pole decays iff its imaginary
    part is negative; both poles do iff ``Gamma > 0`` and ``Omega^2 > 0``.
    """
    for name, v in (("Gamma", Gamma), ("Omega_sq", Omega_sq)):
        if np.iscomplexobj(v) and np.imag(v) != 0:
            raise UnsupportedFormError(f"{name} must be real for the quadratic form, got {v!r}")
        if np.ndim(v) != 0:
            raise UnsupportedFormError(f"{name} must be a scalar coefficient")
    Gamma, Omega_sq = float(np.real(Gamma)), float(np.real(Omega_sq))
    # omega^2 + i Gamma omega - Omega^2 = 0; cancellation-free root pair
    b = 1j * Gamma
    disc = np.sqrt(complex(4.0 * Omega_sq - Gamma**2))
    q = -(b + disc) / 2.0 if abs(b + disc) >= abs(b - disc) else -(b - disc) / 2.0
    poles = (q, -Omega_sq / q) if q != 0 else (0j, 0j)
    # Routh-Hurwitz for a quadratic: both coefficients positive
    stable = Gamma > 0 and Omega_sq > 0
    return StabilityResult(stable=stable, poles=poles, Gamma=Gamma, Omega_sq=Omega_sq)


def quadratic_form(mech: MechanicalOscillator, stack: SpringStack,
                   loop_factor: float | dict | None = None) -> tuple[float, float]:
    """``(Gamma, Omega^2)`` of the large-detuning susceptibility.

    ``loop_factor`` is ``K/(1+K)`` of a flat real feedback kernel (1 for the
    ideal limit), either one value for all fields or a per-label mapping.
    Feedback removes that fraction of each field's optical damping and of
    its loss-induced rigidity correction.
    """
    Gamma = mech.gamma_m
    Omega_sq = mech.omega_m**2
    for f in stack:
        sc = spring_approx(f, mech.m)
        L = 0.0
        if loop_factor is not None:
            L = loop_factor[f.label] if isinstance(loop_factor, dict) else loop_factor
            if np.iscomplexobj(L) and np.imag(L) != 0:
                raise UnsupportedFormError("complex loop factor: susceptibility is not quadratic")
            L = float(np.real(L))
        lossless = -2.0 * f.hbar * f.G0**2 * f.n_circ * f.Delta / (f.D * mech.m)
        Gamma += sc.Gamma_os * (1.0 - L)
        Omega_sq += sc.omega_os_sq + L * (lossless - sc.omega_os_sq)
    return Gamma, Omega_sq
