"""Noise budgets, effective temperatures and summary reports."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .cavity import force_noise
from .feedback import close_loop, required_gain, residual_temperature
from .params import (CONVENTIONS, FeedbackKernel, MechanicalOscillator, PhysicalConstants,
                     SystemConfig, DEFAULT_CONSTANTS, decoherence_ratio)
from .spring import SpringStack, effective_susceptibility, quadratic_form, stability


def thermal_force_spectrum(mech: MechanicalOscillator, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Viscous-damping thermal force density ``4 m gamma_m k_B T`` (N^2/Hz)."""
    if 0 < mech.T_env and constants.k_B * mech.T_env < 10.0 * constants.hbar * mech.omega_m:
        warnings.warn("k_B T is not much larger than hbar omega_m; the classical thermal force "
                      "density underestimates the zero-point contribution", stacklevel=2)
    return 4.0 * mech.m * mech.gamma_m * constants.k_B * mech.T_env


@dataclass(frozen=True)
class BudgetRow:
    """Displacement spectra (m^2/Hz) per source; arrays broadcast over omega."""

    omega: object
    S_x_thermal: object
    S_x_rp: dict
    S_x_total: object
    chi_inv: object

    @property
    def chi_closed(self):
        return 1.0 / np.asarray(self.chi_inv)


def _closed_kernel(cfg: SystemConfig) -> FeedbackKernel:
    return FeedbackKernel.ideal() if cfg.feedback.kind == "off" else cfg.feedback


def displacement_spectrum(cfg: SystemConfig, omega, mode: str = "open") -> BudgetRow:
    """Per-source displacement spectra.

    ``open``: exact open-loop susceptibility with exact force spectra.
    ``closed``: closed loop with the configured kernel (the ideal limit if the
    configured kernel is ``off``), large-detuning expressions.
    """
    if mode not in ("open", "closed"):
        raise ValueError("mode must be 'open' or 'closed'")
    omega = np.asarray(omega, dtype=float)
    mech = cfg.mechanical()
    stack = SpringStack(cfg.optical_fields())
    S_th = thermal_force_spectrum(mech, cfg.constants)
    if mode == "open":
        chi_inv = effective_susceptibility(mech, stack, omega, "exact").chi_inv
        S_F = {f.label: force_noise(f, omega, "exact").spectral_density() for f in stack}
    else:
        res = close_loop(mech, stack, cfg.detector, _closed_kernel(cfg), omega, "approx")
        chi_inv = res.chi_inv_closed
        S_F = {lab: vec.spectral_density() for lab, vec in res.per_field.items()}
    chi2 = 1.0 / np.abs(chi_inv) ** 2
    S_x_th = chi2 * S_th
    S_x_rp = {lab: chi2 * s for lab, s in S_F.items()}
    total = S_x_th + sum(S_x_rp.values()) if S_x_rp else S_x_th
    return BudgetRow(omega[()], S_x_th[()] if np.ndim(S_x_th) == 0 else S_x_th, S_x_rp, total, chi_inv)


def budget_table(cfg: SystemConfig, omega, mode: str = "open"):
    """Header and data array with the fixed budget CSV column layout."""
    row = displacement_spectrum(cfg, omega, mode)
    omega = np.atleast_1d(omega)
    labels = [f.label for f in cfg.fields]
    header = ["f_hz", "Sx_thermal"] + [f"Sx_rp_{lab}" for lab in labels] + ["Sx_total", "re_chi_inv", "im_chi_inv"]
    chi_inv = np.atleast_1d(row.chi_inv) * np.ones_like(omega)
    cols = [omega / (2 * math.pi), np.atleast_1d(row.S_x_thermal) * np.ones_like(omega)]
    cols += [np.atleast_1d(row.S_x_rp[lab]) for lab in labels]
    cols += [np.atleast_1d(row.S_x_total), chi_inv.real, chi_inv.imag]
    return header, np.column_stack(cols)


# -- temperature report -------------------------------------------------------

@dataclass(frozen=True)
class TemperatureReport:
    T_env: float
    T_res: dict
    Q_eff: float
    omega_new: float
    omega_os_sq: float
    n_bar_over_Q: float
    ground_state_threshold_T: float
    omega_eval: float
    stable: bool
    Gamma_eff: float
    Omega_sq_eff: float
    kernel: str
    required_gain: float
    lambda0: dict
    notes: tuple = ()

    @property
    def status(self) -> str:
        return "STABLE" if self.stable else "UNSTABLE"

    def as_dict(self) -> dict:
        return {
            "status": self.status,
            "kernel": self.kernel,
            "T_env_K": self.T_env,
            "T_res_K": dict(self.T_res),
            "Q_eff": self.Q_eff,
            "omega_new_rad_s": self.omega_new,
            "f_new_hz": self.omega_new / (2 * math.pi),
            "omega_os_sq": self.omega_os_sq,
            "omega_eval_rad_s": self.omega_eval,
            "n_bar_over_Q": self.n_bar_over_Q,
            "ground_state_threshold_T_K": self.ground_state_threshold_T,
            "Gamma_eff_rad_s": self.Gamma_eff,
            "Omega_sq_eff": self.Omega_sq_eff,
            "required_gain": self.required_gain,
            "lambda0_m": dict(self.lambda0),
            "notes": list(self.notes),
        }


def _loop_factor(kernel: FeedbackKernel, omega: float):
    if kernel.kind == "off":
        return None
    if kernel.is_ideal:
        return 1.0
    K = complex(kernel(omega))
    return (K / (1.0 + K)).real


def temperature_report(cfg: SystemConfig, omega_eval: float | None = None) -> TemperatureReport:
    """Effective temperatures, effective Q and ground-state threshold.

    ``Q_eff = (omega_new / omega_m) Q`` assumes the feedback (or the spring
    combination) leaves only the intrinsic damping. ``omega_eval`` defaults
    to the closed-loop resonance ``omega_new``.
    """
    mech = cfg.mechanical()
    fields_ = cfg.optical_fields()
    stack = SpringStack(fields_)
    c = cfg.constants
    w_os_sq = stack.stiffness() / mech.m
    w_new_sq = mech.omega_m**2 + w_os_sq
    omega_new = math.sqrt(w_new_sq) if w_new_sq > 0 else float("nan")
    w_eval = omega_new if omega_eval is None else float(omega_eval)
    Q_eff = omega_new / mech.omega_m * mech.Q
    T_res = {f.label: float(residual_temperature(f, mech, cfg.detector, w_eval, c)) for f in fields_}

    L = _loop_factor(cfg.feedback, omega_new if math.isfinite(omega_new) else mech.omega_m)
    Gamma, Omega_sq = quadratic_form(mech, stack, L)
    st = stability(Gamma, Omega_sq)
    friction = stack.friction() / mech.m
    notes = [
        "lambda0 is a configuration choice; rigidity, photon number and residual noise depend on it",
        "circulating power mapped to photons via n = 2 L P / (hbar omega0 c)",
        "Q_eff assumes viscous damping with fixed gamma_m; structural damping is not modelled",
        "per-field loops: cross-coupling through the shared displacement is kept only in chi",
    ]
    if cfg.feedback.kind == "rational":
        notes.append("rational kernel: stability judged with Re[K/(1+K)] evaluated at omega_new")
    if not st.stable:
        notes.append(f"UNSTABLE: open-loop gain above {required_gain(friction, mech.gamma_m):.6g} "
                     "is needed to remove the optical anti-damping")
    return TemperatureReport(
        T_env=mech.T_env, T_res=T_res, Q_eff=Q_eff, omega_new=omega_new, omega_os_sq=w_os_sq,
        n_bar_over_Q=float(decoherence_ratio(mech.T_env, omega_new, Q_eff, c)) if mech.T_env > 0 else 0.0,
        ground_state_threshold_T=c.hbar * omega_new * Q_eff / c.k_B,
        omega_eval=w_eval, stable=st.stable, Gamma_eff=Gamma, Omega_sq_eff=Omega_sq,
        kernel=cfg.feedback.kind, required_gain=required_gain(friction, mech.gamma_m),
        lambda0={f.label: f.lambda0 for f in fields_}, notes=tuple(notes),
    )


def report_header(cfg: SystemConfig, title: str) -> list[str]:
    """Comment lines embedded at the top of every output file."""
    lines = [f"# {title}", f"# config_hash: {cfg.config_hash()}", f"# constants: {cfg.constants.version}"]
    lines += [f"# convention: {c}" for c in CONVENTIONS]
    for f in cfg.fields:
        lines.append(f"# lambda0[{f.label}]: {f.lambda0!r} m (user-chosen wavelength)")
    return lines


def format_summary(report: TemperatureReport, cfg: SystemConfig) -> str:
    """Aligned key/value summary followed by a machine-readable JSON block."""
    d = report.as_dict()
    flat = []
    for key, value in d.items():
        if isinstance(value, dict):
            flat += [(f"{key}.{k}", v) for k, v in value.items()]
        elif isinstance(value, list):
            flat += [(f"{key}[{i}]", v) for i, v in enumerate(value)]
        else:
            flat.append((key, value))
    width = max(len(k) for k, _ in flat)
    lines = report_header(cfg, "temperature report")
    for k, v in flat:
        lines.append(f"{k:<{width}}  {_fmt(v)}")
    lines.append("--- machine-readable ---")
    lines.append(json.dumps(d, sort_keys=True, default=_fmt))
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def tune_power(cfg: SystemConfig, target_omega_new: float) -> SystemConfig:
    """Scale every field's power by one factor so the resonance hits the target.

    The rigidity is linear in circulating power, so the scale factor is
    ``(target^2 - omega_m^2) / omega_os^2``.
    """
    mech = cfg.mechanical()
    w_os_sq = SpringStack(cfg.optical_fields()).stiffness() / mech.m
    need = target_omega_new**2 - mech.omega_m**2
    if w_os_sq == 0 or need / w_os_sq <= 0:
        raise ValueError("target resonance not reachable by scaling the powers")
    s = need / w_os_sq
    return replace(cfg, fields=tuple(replace(f, P_circ=f.P_circ * s) for f in cfg.fields))
