"""Configuration ingestion and derived physical quantities.

Conventions used everywhere in the package:

* angular frequencies in rad/s; the configuration file uses Hz and is
  converted on ingestion (multiplication by 2*pi),
* ``gamma`` is the amplitude decay rate (half linewidth),
* detuning ``Delta = omega_c - omega_0``; a blue-detuned drive has
  ``Delta < 0`` and produces a positive optical rigidity,
* circulating photon number ``n_circ = 2 L P_circ / (hbar omega_0 c)``.

The configuration file is TOML with sections ``[oscillator]``,
``[[field]]`` (repeatable), ``[detector]``, ``[feedback]`` and an optional
``[constants-override]``.
"""

from __future__ import annotations

import cmath
import hashlib
import math
import sys
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import scipy.constants as sc
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

TWO_PI = 2.0 * math.pi

CONVENTIONS = (
    "single-sided spectra; unit vacuum quadrature density",
    "gamma is the half-width (amplitude decay rate) in rad/s",
    "Delta = omega_c - omega_0 (blue drive: Delta < 0)",
    "n_circ = 2 L P_circ / (hbar omega_0 c)",
)


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = sc.hbar
    k_B: float = sc.k
    c: float = sc.c
    version: str = "CODATA 2018 (exact SI 2019 values)"

    def __post_init__(self):
        for name in ("hbar", "k_B", "c"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
                raise ConfigError(f"constant {name} must be a positive finite number, got {value!r}")


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class MechanicalOscillator:
    """Bare mechanical mode. ``gamma_m`` is derived as ``omega_m / Q``."""

    m: float
    omega_m: float
    Q: float
    T_env: float = 0.0
    gamma_m: float = field(init=False)

    def __post_init__(self):
        for name in ("m", "omega_m", "Q"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"oscillator.{name} must be > 0, got {value!r}")
        if not self.T_env >= 0:
            raise ConfigError(f"oscillator.T_env must be >= 0, got {self.T_env!r}")
        object.__setattr__(self, "gamma_m", self.omega_m / self.Q)


@dataclass(frozen=True)
class OscillatorInput:
    """Oscillator as written in the configuration file (frequency in Hz)."""

    m: float
    f_m: float
    Q: float
    T_env: float = 300.0

    def derive(self) -> MechanicalOscillator:
        return MechanicalOscillator(m=self.m, omega_m=TWO_PI * self.f_m, Q=self.Q, T_env=self.T_env)


@dataclass(frozen=True)
class OpticalFieldInput:
    """One drive field as written in the configuration file.

    Frequencies are in Hz, ``epsilon_ppm`` is the round-trip power loss in
    parts per million, ``P_circ`` the circulating power in W.
    ``amplitude_noise`` multiplies the amplitude-quadrature input density
    (1 = shot-noise-limited laser).
    """

    label: str
    L: float
    lambda0: float
    Delta_hz: float
    gamma_hz: float
    P_circ: float
    epsilon_ppm: float = 0.0
    amplitude_noise: float = 1.0


@dataclass(frozen=True)
class OpticalField:
    """A drive field with every derived quantity populated.

    Build instances with :func:`derive_field`.
    """

    label: str
    L: float
    lambda0: float
    Delta: float
    gamma: float
    epsilon: float
    P_circ: float
    amplitude_noise: float
    omega0: float
    G0: float
    gamma_eps: float
    gamma_tot: float
    n_circ: float
    a_bar: complex
    a_in: float
    P_in: float
    hbar: float

    @property
    def D(self) -> float:
        """``gamma**2 + Delta**2`` with the input-coupling half-width."""
        return self.gamma**2 + self.Delta**2


def derive_field(raw: OpticalFieldInput, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> OpticalField:
    """Convert file-level field parameters into an :class:`OpticalField`."""
    for name in ("L", "lambda0", "P_circ", "gamma_hz"):
        value = getattr(raw, name)
        if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
            raise ConfigError(f"field '{raw.label}': {name} must be > 0, got {value!r}")
    if not (math.isfinite(raw.Delta_hz)):
        raise ConfigError(f"field '{raw.label}': Delta_hz must be finite, got {raw.Delta_hz!r}")
    if not raw.epsilon_ppm >= 0:
        raise ConfigError(f"field '{raw.label}': epsilon_ppm must be >= 0, got {raw.epsilon_ppm!r}")
    if not raw.amplitude_noise >= 1:
        raise ConfigError(f"field '{raw.label}': amplitude_noise must be >= 1, got {raw.amplitude_noise!r}")
    if "blue" in raw.label.lower() and raw.Delta_hz > 0:
        warnings.warn(f"field '{raw.label}' is labelled blue but has Delta > 0 (red-detuned drive)", stacklevel=2)
    if "red" in raw.label.lower() and raw.Delta_hz < 0:
        warnings.warn(f"field '{raw.label}' is labelled red but has Delta < 0 (blue-detuned drive)", stacklevel=2)

    hbar, c = constants.hbar, constants.c
    Delta = TWO_PI * raw.Delta_hz
    gamma = TWO_PI * raw.gamma_hz
    epsilon = raw.epsilon_ppm * 1e-6
    omega0 = TWO_PI * c / raw.lambda0
    G0 = omega0 / raw.L
    gamma_eps = c * epsilon / (4.0 * raw.L)
    gamma_tot = gamma + gamma_eps
    n_circ = 2.0 * raw.L * raw.P_circ / (hbar * omega0 * c)
    # phase reference: a_in real and positive
    a_bar = math.sqrt(n_circ) * cmath.exp(-1j * math.atan2(Delta, gamma_tot))
    a_in = math.sqrt(n_circ * (gamma_tot**2 + Delta**2) / (2.0 * gamma))
    P_in = hbar * omega0 * a_in**2
    return OpticalField(
        label=raw.label, L=raw.L, lambda0=raw.lambda0, Delta=Delta, gamma=gamma,
        epsilon=epsilon, P_circ=raw.P_circ, amplitude_noise=raw.amplitude_noise,
        omega0=omega0, G0=G0, gamma_eps=gamma_eps, gamma_tot=gamma_tot,
        n_circ=n_circ, a_bar=a_bar, a_in=a_in, P_in=P_in, hbar=hbar,
    )


@dataclass(frozen=True)
class Detector:
    eta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"detector.eta must lie in [0, 1], got {self.eta!r}")


KERNEL_KINDS = ("off", "flat", "rational", "ideal")


@dataclass(frozen=True)
class FeedbackKernel:
    """Photocurrent-to-modulator kernel ``K_c(omega)``.

    ``rational`` kernels are ``gain * prod(s - z) / prod(s - p)`` with the
    Laplace variable ``s = -i omega`` (the package's ``exp(-i omega t)``
    Fourier convention); zeros and poles are given in Hz, i.e. ``s/2pi``.
    ``ideal`` is the infinite-gain limit, which is taken analytically and
    cannot be evaluated numerically.
    """

    kind: str = "off"
    gain: float = 0.0
    zeros_hz: tuple = ()
    poles_hz: tuple = ()

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"feedback.kind must be one of {KERNEL_KINDS}, got {self.kind!r}")
        if self.kind == "rational":
            if len(self.zeros_hz) > len(self.poles_hz):
                raise ConfigError("feedback: rational kernel must be proper (#zeros <= #poles)")
            if any(complex(p).real >= 0 for p in self.poles_hz):
                raise ConfigError("feedback: rational kernel poles must have negative real part")
        object.__setattr__(self, "zeros_hz", tuple(complex(z) for z in self.zeros_hz))
        object.__setattr__(self, "poles_hz", tuple(complex(p) for p in self.poles_hz))

    @classmethod
    def off(cls):
        return cls("off")

    @classmethod
    def flat(cls, gain):
        return cls("flat", gain=float(gain))

    @classmethod
    def ideal(cls):
        return cls("ideal")

    @property
    def is_ideal(self) -> bool:
        return self.kind == "ideal"

    @property
    def zeros(self) -> np.ndarray:
        return TWO_PI * np.asarray(self.zeros_hz, dtype=complex)

    @property
    def poles(self) -> np.ndarray:
        return TWO_PI * np.asarray(self.poles_hz, dtype=complex)

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.kind == "off":
            return np.zeros_like(omega, dtype=complex)[()]
        if self.kind == "flat":
            return np.full_like(omega, self.gain, dtype=complex)[()]
        if self.kind == "ideal":
            raise ValueError("the ideal kernel is an analytic limit and has no finite value")
        s = -1j * omega
        num = np.ones_like(s) * self.gain
        for z in self.zeros:
            num = num * (s - z)
        den = np.ones_like(s)
        for p in self.poles:
            den = den * (s - p)
        return (num / den)[()]


@dataclass(frozen=True)
class SystemConfig:
    oscillator: OscillatorInput
    fields: tuple = ()
    detector: Detector = Detector()
    feedback: FeedbackKernel = FeedbackKernel()
    constants: PhysicalConstants = DEFAULT_CONSTANTS

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        labels = [f.label for f in self.fields]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"field labels must be unique, got {labels}")

    def mechanical(self) -> MechanicalOscillator:
        return self.oscillator.derive()

    def optical_fields(self) -> tuple:
        return tuple(derive_field(f, self.constants) for f in self.fields)

    def field_input(self, label: str) -> OpticalFieldInput:
        for f in self.fields:
            if f.label == label:
                return f
        raise ConfigError(f"no field labelled {label!r}")

    def with_field(self, label: str, **changes) -> "SystemConfig":
        new = tuple(replace(f, **changes) if f.label == label else f for f in self.fields)
        return replace(self, fields=new)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        osc = self.oscillator
        out: dict[str, Any] = {
            "oscillator": {"m": osc.m, "f_m": osc.f_m, "Q": osc.Q, "T_env": osc.T_env},
            "field": [
                {
                    "label": f.label, "L": f.L, "lambda0": f.lambda0,
                    "Delta_hz": f.Delta_hz, "gamma_hz": f.gamma_hz,
                    "epsilon_ppm": f.epsilon_ppm, "P_circ": f.P_circ,
                    "amplitude_noise": f.amplitude_noise,
                }
                for f in self.fields
            ],
            "detector": {"eta": self.detector.eta},
            "feedback": _kernel_to_dict(self.feedback),
        }
        if self.constants != DEFAULT_CONSTANTS:
            c = self.constants
            out["constants-override"] = {"hbar": c.hbar, "k_B": c.k_B, "c": c.c, "version": c.version}
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps())

    def config_hash(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: Mapping) -> "SystemConfig":
        known = {"oscillator", "field", "detector", "feedback", "constants-override"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration section(s): {sorted(unknown)}")
        if "oscillator" not in data:
            raise ConfigError("missing [oscillator] section")
        osc = _build(OscillatorInput, data["oscillator"], "oscillator")
        raw_fields = data.get("field", [])
        if isinstance(raw_fields, Mapping):
            raw_fields = [raw_fields]
        flds = tuple(_build(OpticalFieldInput, f, f"field[{i}]") for i, f in enumerate(raw_fields))
        det = _build(Detector, data.get("detector", {}), "detector")
        fb = _kernel_from_dict(data.get("feedback", {}))
        const = DEFAULT_CONSTANTS
        if "constants-override" in data:
            const = _build(PhysicalConstants, {**_constants_dict(DEFAULT_CONSTANTS), **data["constants-override"]},
                           "constants-override")
        cfg = cls(oscillator=osc, fields=flds, detector=det, feedback=fb, constants=const)
        cfg.mechanical()
        cfg.optical_fields()
        return cfg

    @classmethod
    def loads(cls, text: str) -> "SystemConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse configuration: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "SystemConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read configuration file {path}: {exc}") from exc
        return cls.loads(text)


def _constants_dict(c: PhysicalConstants) -> dict:
    return {"hbar": c.hbar, "k_B": c.k_B, "c": c.c, "version": c.version}


def _build(cls, data, where):
    if not isinstance(data, Mapping):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in fields(cls) if f.init}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"[{where}] unknown key(s): {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"[{where}] {exc}") from exc


def _kernel_to_dict(k: FeedbackKernel) -> dict:
    out: dict[str, Any] = {"kind": k.kind}
    if k.kind in ("flat", "rational"):
        out["gain"] = k.gain
    if k.kind == "rational":
        out["zeros_hz"] = [[z.real, z.imag] for z in k.zeros_hz]
        out["poles_hz"] = [[p.real, p.imag] for p in k.poles_hz]
    return out


def _kernel_from_dict(data: Mapping) -> FeedbackKernel:
    if not isinstance(data, Mapping):
        raise ConfigError("[feedback] must be a table")
    unknown = set(data) - {"kind", "gain", "zeros_hz", "poles_hz"}
    if unknown:
        raise ConfigError(f"[feedback] unknown key(s): {sorted(unknown)}")

    def as_complex(seq, name):
        out = []
        for item in seq:
            if isinstance(item, (int, float)):
                out.append(complex(item))
            elif isinstance(item, Sequence) and len(item) == 2:
                out.append(complex(item[0], item[1]))
            else:
                raise ConfigError(f"[feedback] {name} entries must be numbers or [re, im] pairs")
        return tuple(out)

    return FeedbackKernel(
        kind=data.get("kind", "off"),
        gain=float(data.get("gain", 0.0)),
        zeros_hz=as_complex(data.get("zeros_hz", ()), "zeros_hz"),
        poles_hz=as_complex(data.get("poles_hz", ()), "poles_hz"),
    )


def finesse(field: OpticalField, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Free spectral range over full linewidth, ``(pi c / L) / (2 gamma)``."""
    return (math.pi * constants.c / field.L) / (2.0 * field.gamma)


def decoherence_ratio(T, omega, Q, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Thermal occupation over quality factor, ``k_B T / (hbar omega Q)``."""
    return constants.k_B * T / (constants.hbar * omega * Q)


def sample_config(lambda0: float = 1064e-9, *, eta: float = 1.0, epsilon_ppm: float = 0.0,
                  feedback: FeedbackKernel | None = None, T_env: float = 300.0) -> SystemConfig:
    """Reference double-spring parameter set (250 ng, 1 mm, 100 Hz, Q = 1e6).

    The wavelength is not part of the set and must be chosen.
    """
    return SystemConfig(
        oscillator=OscillatorInput(m=250e-12, f_m=100.0, Q=1e6, T_env=T_env),
        fields=(
            OpticalFieldInput("blue", L=1e-3, lambda0=lambda0, Delta_hz=-20e6, gamma_hz=20e6,
                              P_circ=0.390, epsilon_ppm=epsilon_ppm),
            OpticalFieldInput("red", L=1e-3, lambda0=lambda0, Delta_hz=4e6, gamma_hz=4e6,
                              P_circ=0.016, epsilon_ppm=epsilon_ppm),
        ),
        detector=Detector(eta),
        feedback=feedback or FeedbackKernel.off(),
    )


def derived_table(cfg: SystemConfig) -> list[tuple[str, str]]:
    """Flat ``(key, value)`` listing of every derived quantity."""
    rows: list[tuple[str, str]] = []
    c = cfg.constants
    rows += [("constants.version", c.version), ("constants.hbar", repr(c.hbar)),
             ("constants.k_B", repr(c.k_B)), ("constants.c", repr(c.c))]
    mech = cfg.mechanical()
    rows += [("oscillator.m", repr(mech.m)), ("oscillator.omega_m", repr(mech.omega_m)),
             ("oscillator.Q", repr(mech.Q)), ("oscillator.gamma_m", repr(mech.gamma_m)),
             ("oscillator.T_env", repr(mech.T_env))]
    for f in cfg.optical_fields():
        p = f"field.{f.label}"
        rows += [
            (f"{p}.lambda0", repr(f.lambda0)), (f"{p}.L", repr(f.L)),
            (f"{p}.Delta", repr(f.Delta)), (f"{p}.gamma", repr(f.gamma)),
            (f"{p}.epsilon", repr(f.epsilon)), (f"{p}.P_circ", repr(f.P_circ)),
            (f"{p}.omega0", repr(f.omega0)), (f"{p}.G0", repr(f.G0)),
            (f"{p}.gamma_eps", repr(f.gamma_eps)), (f"{p}.gamma_tot", repr(f.gamma_tot)),
            (f"{p}.n_circ", repr(f.n_circ)), (f"{p}.a_bar.re", repr(f.a_bar.real)),
            (f"{p}.a_bar.im", repr(f.a_bar.imag)), (f"{p}.a_in", repr(f.a_in)),
            (f"{p}.P_in", repr(f.P_in)), (f"{p}.finesse", repr(finesse(f, c))),
        ]
    rows += [("detector.eta", repr(cfg.detector.eta)), ("feedback.kind", cfg.feedback.kind)]
    return rows
