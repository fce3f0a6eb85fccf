"""Time-domain stochastic oracle.

Integrates the linearized quasi-classical equations of motion

    d(da)/dt = -(gamma_tot + i Delta) da - i G0 a_bar x
               + sqrt(gamma) (v1 + i v2) + sqrt(gamma_eps) (v1' + i v2')
    m (x'' + gamma_m x' + omega_m^2 x) = -2 hbar G0 Re(a_bar^* da) + F_th

with Euler-Maruyama, optionally closing the amplitude loop
``v1_loop = v1 - K_c * dP / (sqrt(2) a_in)`` through a realizable kernel.
White inputs are Gaussian with unit single-sided density per quadrature.
Spectra are then estimated with Welch's method and compared against the
frequency-domain engine.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numba
import numpy as np
from scipy import signal

from .budget import displacement_spectrum, thermal_force_spectrum
from .cavity import a_out_mean, force_noise
from .errors import ConfigError
from .feedback import close_loop, residual_spectrum
from .params import (Detector, FeedbackKernel, OpticalFieldInput, OscillatorInput, SystemConfig,
                     TWO_PI)
from .spring import SpringStack, effective_susceptibility

# explicit-step guards
GAMMA_DT_MAX = 0.1
EIG_DT_MAX = 0.5
UNSTABLE_FACTOR = 1e6

# adjacent-bin correlation of Hann-windowed periodograms and 50 % overlap
_HANN_ADJ_CORR = 4.0 / 9.0
_HANN_OVERLAP_CORR = 0.167


@dataclass(frozen=True)
class TrajectoryConfig:
    """Integration settings.

    ``decimate`` keeps every n-th displacement sample and block-averages
    the photocurrents. ``noise=False`` gives the homogeneous response from
    ``x0``.
    """

    dt: float
    duration: float
    seed: int = 0
    scheme: str = "euler_maruyama"
    decimate: int = 1
    noise: bool = True
    x0: float = 0.0
    enforce_duration: bool = True

    def __post_init__(self):
        if self.scheme != "euler_maruyama":
            raise ConfigError(f"unsupported scheme {self.scheme!r}; only 'euler_maruyama' is available")
        if not (self.dt > 0 and self.duration > 0):
            raise ConfigError("dt and duration must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if int(self.decimate) < 1:
            raise ConfigError("decimate must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


# -- linear model --------------------------------------------------------------

@dataclass(frozen=True)
class LinearModel:
    """``ds/dt = M s + N xi`` with white ``xi`` of single-sided densities ``S``.

    ``C_y s + D_y xi`` are the in-loop photocurrents ``dP`` (photons/s),
    one row per field.
    """

    M: np.ndarray
    N: np.ndarray
    S: np.ndarray
    C_y: np.ndarray
    D_y: np.ndarray
    state_names: tuple
    noise_names: tuple
    labels: tuple

    def transfer(self, omega):
        """``s(omega) = H(omega) xi(omega)`` with ``d/dt -> -i omega``."""
        n = self.M.shape[0]
        omega = np.atleast_1d(omega)
        return np.array([np.linalg.solve(-1j * w * np.eye(n) - self.M, self.N) for w in omega])

    def eigenvalues(self):
        return np.linalg.eigvals(self.M)


def _kernel_ss(kernel: FeedbackKernel):
    """State-space form of ``K(s)``, ``s = d/dt``; zeros/poles in rad/s."""
    if kernel.kind == "flat":
        return np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), float(np.real(kernel.gain))
    if kernel.kind == "rational":
        z, p = kernel.zeros, kernel.poles
        if len(z) > len(p):
            raise ConfigError("rational kernel must be proper (no more zeros than poles)")
        num = np.real_if_close(kernel.gain * np.poly(z)) if len(z) else np.array([kernel.gain])
        den = np.real_if_close(np.poly(p))
        if np.iscomplexobj(num) or np.iscomplexobj(den):
            raise ConfigError("rational kernel zeros/poles must come in conjugate pairs")
        if len(p) == 0:
            return np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), float(num[0])
        A, B, C, D = signal.tf2ss(num, den)
        return A, B, C, float(D[0, 0])
    raise ConfigError(f"kernel kind {kernel.kind!r} is not realizable in the time domain")


def linear_model(cfg: SystemConfig) -> LinearModel:
    """Assemble the drift and diffusion matrices for ``cfg``."""
    mech = cfg.mechanical()
    fields_ = cfg.optical_fields()
    kernel = cfg.feedback
    if kernel.kind == "ideal":
        raise ConfigError("the ideal feedback limit cannot be integrated; use a flat or rational kernel")
    looped = kernel.kind != "off"
    A_k, B_k, C_k, D_k = _kernel_ss(kernel) if looped else (np.zeros((0, 0)),) * 2 + (np.zeros((1, 0)), 0.0)
    nk = A_k.shape[0]

    state_names = ["x", "v"]
    noise_names = ["FTH"]
    for f in fields_:
        state_names += [f"re_a:{f.label}", f"im_a:{f.label}"]
        state_names += [f"kernel{j}:{f.label}" for j in range(nk)]
        noise_names += [f"{t}:{f.label}" for t in ("V1", "V2", "V1p", "V2p", "N")]
    n, q = len(state_names), len(noise_names)
    # rows are linear forms over [state, noise]
    drift = np.zeros((n, n + q))
    out = np.zeros((len(fields_), n + q))
    S = np.ones(q)
    S[0] = thermal_force_spectrum(mech, cfg.constants)

    def unit(i):
        e = np.zeros(n + q)
        e[i] = 1.0
        return e

    drift[0] = unit(1)
    drift[1] = (-mech.gamma_m * unit(1) - mech.omega_m**2 * unit(0) + unit(n) / mech.m)
    eta = cfg.detector.eta
    for i, f in enumerate(fields_):
        ia = 2 + i * (2 + nk)
        ar, ai, iq = unit(ia), unit(ia + 1), ia + 2
        j = n + 1 + 5 * i
        v1, v2, v1p, v2p, nd = (unit(j + k) for k in range(5))
        S[j - n] = f.amplitude_noise
        ao = a_out_mean(f)
        sg, sge = math.sqrt(f.gamma), math.sqrt(f.gamma_eps)
        # dP / (sqrt(2) a_in) without the prompt v1_loop reflection
        e_part = (2.0 * sg * math.sqrt(2.0) * (ao.real * ar + ao.imag * ai) - math.sqrt(2.0) * ao.imag * v2
                  + math.sqrt(2.0) * f.a_in * math.sqrt(1.0 - eta) * nd) / (math.sqrt(2.0) * f.a_in)
        e_v = -ao.real / f.a_in
        if looped:
            q_form = sum((C_k[0, k] * unit(iq + k) for k in range(nk)), np.zeros(n + q))
            den = 1.0 + D_k * e_v
            if abs(den) < 1e-12:
                raise ConfigError(f"algebraic feedback loop is singular for field {f.label!r}")
            v1_loop = (v1 - q_form - D_k * e_part) / den
        else:
            v1_loop = v1
        e = e_part + e_v * v1_loop
        for k in range(nk):
            drift[iq + k] = sum((A_k[k, l] * unit(iq + l) for l in range(nk)), np.zeros(n + q)) + B_k[k, 0] * e
        x = unit(0)
        drift[ia] = (-f.gamma_tot * ar + f.Delta * ai + f.G0 * f.a_bar.imag * x
                     + sg * v1_loop + sge * v1p)
        drift[ia + 1] = (-f.Delta * ar - f.gamma_tot * ai - f.G0 * f.a_bar.real * x
                         + sg * v2 + sge * v2p)
        drift[1] += -2.0 * f.hbar * f.G0 * (f.a_bar.real * ar + f.a_bar.imag * ai) / mech.m
        out[i] = math.sqrt(2.0) * f.a_in * e
    return LinearModel(drift[:, :n], drift[:, n:], S, out[:, :n], out[:, n:],
                       tuple(state_names), tuple(noise_names), tuple(f.label for f in fields_))


# -- integration -------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _em_kernel(M, N, sig, C_y, D_y, s0, dt, n_steps, decim, x_limit, rng, with_noise, paired):
    n, q = N.shape
    p = C_y.shape[0]
    n_out = n_steps // decim
    xs = np.zeros(n_out)
    ys = np.zeros((p, n_out))
    s = s0.copy()
    ds = np.zeros(n)
    xi = np.zeros(q)
    yacc = np.zeros(p)
    for k in range(n_steps):
        if with_noise:
            if paired:
                for j in range(q):
                    xi[j] = rng.standard_normal()
                for j in range(q):
                    xi[j] = (xi[j] + rng.standard_normal()) / math.sqrt(2.0)
                    xi[j] *= sig[j]
            else:
                for j in range(q):
                    xi[j] = rng.standard_normal() * sig[j]
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += M[i, j] * s[j]
            for j in range(q):
                acc += N[i, j] * xi[j]
            ds[i] = acc
        for i in range(p):
            acc = 0.0
            for j in range(n):
                acc += C_y[i, j] * s[j]
            for j in range(q):
                acc += D_y[i, j] * xi[j]
            yacc[i] += acc
        for i in range(n):
            s[i] += dt * ds[i]
        if (k + 1) % decim == 0:
            idx = (k + 1) // decim - 1
            xs[idx] = s[0]
            for i in range(p):
                ys[i, idx] = yacc[i] / decim
                yacc[i] = 0.0
        if not abs(s[0]) <= x_limit:
            return xs, ys, k + 1, False
    return xs, ys, n_steps, True


@dataclass(frozen=True)
class SimulationResult:
    t: np.ndarray
    x: np.ndarray
    photocurrent: dict
    fs: float
    status: str
    steps: int
    x_scale: float
    seed: int

    @property
    def unstable(self) -> bool:
        return self.status == "UNSTABLE"


def displacement_scale(cfg: SystemConfig) -> float:
    """RMS displacement for the open-loop force level at ``omega_m``."""
    mech = cfg.mechanical()
    S = thermal_force_spectrum(mech, cfg.constants)
    S += sum(force_noise(f, mech.omega_m, "exact").spectral_density() for f in cfg.optical_fields())
    return math.sqrt(S / (4.0 * mech.m**2 * mech.gamma_m * mech.omega_m**2))


def check_trajectory(cfg: SystemConfig, traj: TrajectoryConfig, model: LinearModel | None = None) -> None:
    """Raise :class:`ConfigError` if the step size or duration is unsuitable."""
    model = model or linear_model(cfg)
    fields_ = cfg.optical_fields()
    g_max = max([f.gamma_tot for f in fields_], default=0.0)
    if traj.dt * g_max >= GAMMA_DT_MAX:
        raise ConfigError(f"dt * gamma_tot = {traj.dt * g_max:.3g} >= {GAMMA_DT_MAX}; reduce dt below "
                          f"{GAMMA_DT_MAX / g_max:.3g} s")
    lam = np.abs(model.eigenvalues()).max()
    if traj.dt * lam > EIG_DT_MAX:
        raise ConfigError(f"dt * max|eig| = {traj.dt * lam:.3g} > {EIG_DT_MAX} (fast closed-loop pole at "
                          f"{lam:.3g} 1/s); reduce dt below {EIG_DT_MAX / lam:.3g} s")
    if traj.enforce_duration:
        slowest = cfg.mechanical().omega_m
        need = 100.0 * TWO_PI / slowest
        if traj.duration < need:
            raise ConfigError(f"duration {traj.duration:g} s is shorter than 100 mechanical periods ({need:g} s)")


def simulate(cfg: SystemConfig, traj: TrajectoryConfig) -> SimulationResult:
    """Integrate one trajectory. Identical inputs give bit-identical output."""
    model = linear_model(cfg)
    check_trajectory(cfg, traj, model)
    return _run(model, cfg, traj, paired=False)


def _run(model: LinearModel, cfg: SystemConfig, traj: TrajectoryConfig, paired: bool) -> SimulationResult:
    n = model.M.shape[0]
    s0 = np.zeros(n)
    s0[0] = traj.x0
    scale = displacement_scale(cfg) if traj.noise else abs(traj.x0)
    if scale == 0:
        scale = abs(traj.x0) or 1e-12
    dt = traj.dt * (2 if paired else 1)
    n_steps = traj.n_steps // (2 if paired else 1)
    decim = max(1, int(traj.decimate) // (2 if paired else 1))
    sig = np.sqrt(model.S / (2.0 * dt))
    rng = np.random.Generator(np.random.PCG64(int(traj.seed)))
    xs, ys, steps, ok = _em_kernel(model.M, model.N, sig, model.C_y, model.D_y, s0, dt, n_steps, decim,
                                   UNSTABLE_FACTOR * scale, rng, bool(traj.noise), paired)
    n_keep = steps // decim
    fs = 1.0 / (dt * decim)
    t = np.arange(1, n_keep + 1) / fs
    pc = {lab: ys[i, :n_keep] for i, lab in enumerate(model.labels)}
    return SimulationResult(t, xs[:n_keep], pc, fs, "OK" if ok else "UNSTABLE", steps, scale, int(traj.seed))


def simulate_many(cfg: SystemConfig, traj: TrajectoryConfig, seeds, threads: int = 1) -> list:
    """Independent trajectories, one per seed, optionally in parallel."""
    model = linear_model(cfg)
    check_trajectory(cfg, traj, model)
    jobs = [replace(traj, seed=int(s)) for s in seeds]
    if threads <= 1:
        return [_run(model, cfg, j, False) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda j: _run(model, cfg, j, False), jobs))


# -- spectra -----------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumEstimate:
    """Single-sided PSD estimate with per-bin relative standard error.

    After log rebinning, ``groups`` holds for every output bin the indices
    of the original Welch bins (``source_freqs``) averaged into it.
    """

    freqs: np.ndarray
    psd: np.ndarray
    n_segments: int
    rel_std: np.ndarray
    source_freqs: np.ndarray | None = None
    groups: tuple | None = None


def psd_welch(series, fs: float, segment_len: int) -> SpectrumEstimate:
    """Welch estimate with a Hann window and 50 % overlap."""
    series = np.asarray(series, dtype=float)
    segment_len = int(segment_len)
    if series.size < 4 * segment_len:
        raise ValueError(f"series of length {series.size} is too short; need at least "
                         f"{4 * segment_len} samples (4 segments of {segment_len})")
    f, p = signal.welch(series, fs=fs, window="hann", nperseg=segment_len, noverlap=segment_len // 2,
                        detrend="constant", scaling="density", return_onesided=True)
    step = segment_len - segment_len // 2
    K = 1 + (series.size - segment_len) // step
    var = (1.0 + 2.0 * _HANN_OVERLAP_CORR**2 * (K - 1) / K) / K
    rel = np.full(f.shape, math.sqrt(var))
    rel[0] *= math.sqrt(2.0)
    if segment_len % 2 == 0:
        rel[-1] *= math.sqrt(2.0)
    return SpectrumEstimate(f, p, K, rel)


def merge_estimates(estimates) -> SpectrumEstimate:
    """Segment-weighted average of estimates on the same grid."""
    estimates = list(estimates)
    w = np.array([e.n_segments for e in estimates], dtype=float)
    psd = sum(wi * e.psd for wi, e in zip(w, estimates)) / w.sum()
    rel = np.sqrt(sum((wi * e.rel_std) ** 2 for wi, e in zip(w, estimates))) / w.sum()
    return SpectrumEstimate(estimates[0].freqs, psd, int(w.sum()), rel)


def rebin_log(est: SpectrumEstimate, bins_per_decade: int, f_lo: float, f_hi: float) -> SpectrumEstimate:
    """Average Welch bins into logarithmic bins between ``f_lo`` and ``f_hi``."""
    n_dec = math.log10(f_hi / f_lo)
    edges = np.logspace(math.log10(f_lo), math.log10(f_hi), max(1, int(round(n_dec * bins_per_decade))) + 1)
    freqs, psd, rel, groups = [], [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        idx = np.nonzero((est.freqs >= lo) & (est.freqs < hi))[0]
        if idx.size == 0:
            continue
        k = idx.size
        corr = 1.0 + 2.0 * _HANN_ADJ_CORR * (k - 1) / k
        freqs.append(math.sqrt(lo * hi))
        psd.append(est.psd[idx].mean())
        rel.append(min(est.rel_std[idx].max(), est.rel_std[idx].mean() * math.sqrt(corr / k)))
        groups.append(idx)
    return SpectrumEstimate(np.array(freqs), np.array(psd), est.n_segments, np.array(rel),
                            est.freqs, tuple(groups))


@dataclass(frozen=True)
class Comparison:
    max_rel_dev: float
    passed: bool
    n_bins: int
    worst_freq: float
    tolerance: float


def _analytic_on(analytic, est: SpectrumEstimate):
    if callable(analytic):
        if est.groups is not None:
            return np.array([np.mean(analytic(est.source_freqs[g])) for g in est.groups])
        return np.asarray(analytic(est.freqs))
    fa, va = (np.asarray(a, dtype=float) for a in analytic)
    inside = (est.freqs >= fa.min()) & (est.freqs <= fa.max())
    vals = np.full(est.freqs.shape, np.nan)
    vals[inside] = np.interp(est.freqs[inside], fa, va)
    return vals


def compare(analytic, empirical: SpectrumEstimate, band: tuple, tolerance: float = 0.15,
            max_rel_std: float = 0.2) -> Comparison:
    """Maximum bin-wise relative deviation over ``band`` (Hz).

    ``analytic`` is a callable of frequency in Hz or a ``(freqs, values)``
    pair. Bins with ``rel_std > max_rel_std`` are skipped.
    """
    lo, hi = band
    sel = (empirical.freqs >= lo) & (empirical.freqs <= hi)
    ref = _analytic_on(analytic, empirical)
    sel &= np.isfinite(ref) & (empirical.rel_std <= max_rel_std)
    if not np.any(sel):
        raise ValueError(f"no overlapping frequency bins in band {band} Hz")
    dev = np.abs(empirical.psd[sel] / ref[sel] - 1.0)
    i = int(np.argmax(dev))
    worst = float(dev[i])
    return Comparison(worst, worst < tolerance, int(sel.sum()), float(empirical.freqs[sel][i]), tolerance)


def x_spectrum(result: SimulationResult, segment_seconds: float, discard_seconds: float = 0.0) -> SpectrumEstimate:
    start = int(round(discard_seconds * result.fs))
    return psd_welch(result.x[start:], result.fs, int(round(segment_seconds * result.fs)))


def convergence_check(cfg: SystemConfig, traj: TrajectoryConfig, band: tuple, segment_seconds: float,
                      bins_per_decade: int = 5) -> Comparison:
    """Compare spectra at ``dt`` and ``2 dt`` driven by the same Brownian path.

    The coarse run sums consecutive pairs of fine increments, so the
    statistical scatter cancels and the deviation measures the step error.
    """
    model = linear_model(cfg)
    check_trajectory(cfg, traj, model)
    fine = _run(model, cfg, traj, paired=False)
    coarse = _run(model, cfg, traj, paired=True)
    ef = rebin_log(x_spectrum(fine, segment_seconds), bins_per_decade, *band)
    ec = rebin_log(x_spectrum(coarse, segment_seconds), bins_per_decade, *band)
    return compare((ef.freqs, ef.psd), replace(ec, rel_std=np.zeros_like(ec.rel_std)), band, tolerance=0.05)


# -- canonical desk-scale configuration ----------------------------------------------

def canonical_config(*, feedback: FeedbackKernel | None = None, eta: float = 1.0, epsilon_ppm: float = 0.0,
                     T_env: float = 1.0, fields: str = "both") -> SystemConfig:
    """Scaled-down double spring that keeps ``gamma, |Delta| >> omega``.

    1 mg oscillator at 100 Hz with Q = 3; blue drive at
    (gamma, Delta)/2pi = (10, -15) kHz, red drive at (5, +5) kHz, giving a
    net spring near 1 kHz with positive net optical damping.
    """
    blue = OpticalFieldInput("blue", L=0.05, lambda0=1064e-9, Delta_hz=-15e3, gamma_hz=10e3,
                             P_circ=CANONICAL_POWER["blue"], epsilon_ppm=epsilon_ppm)
    red = OpticalFieldInput("red", L=0.05, lambda0=1064e-9, Delta_hz=5e3, gamma_hz=5e3,
                            P_circ=CANONICAL_POWER["red"], epsilon_ppm=epsilon_ppm)
    chosen = {"both": (blue, red), "blue": (blue,), "red": (red,), "none": ()}[fields]
    return SystemConfig(
        oscillator=OscillatorInput(m=1e-6, f_m=100.0, Q=3.0, T_env=T_env),
        fields=chosen,
        detector=Detector(eta),
        feedback=feedback or FeedbackKernel.off(),
    )


CANONICAL_POWER = {"blue": 0.023, "red": 0.0054}


# -- verification suite --------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.4g} (threshold {self.threshold:.4g}) {self.detail}".rstrip()


def equipartition(cfg: SystemConfig, traj: TrajectoryConfig, n_batches: int = 20, discard: float = 0.1):
    """``<x^2> / (k_B T / m omega_m^2)`` and its batch-means standard error."""
    mech = cfg.mechanical()
    res = simulate(cfg, traj)
    x = res.x[int(discard * res.fs):]
    x = x[: x.size // n_batches * n_batches].reshape(n_batches, -1)
    expect = cfg.constants.k_B * mech.T_env / (mech.m * mech.omega_m**2)
    means = (x**2).mean(axis=1) / expect
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def force_estimate(result: SimulationResult, cfg: SystemConfig, segment_seconds: float,
                   discard_seconds: float = 0.05) -> SpectrumEstimate:
    """Empirical total force spectrum ``S_x |chi^{-1}|^2`` (exact chi, per Welch bin)."""
    est = x_spectrum(result, segment_seconds, discard_seconds)
    mech = cfg.mechanical()
    stack = SpringStack(cfg.optical_fields())
    w = TWO_PI * est.freqs
    if cfg.feedback.kind == "off":
        chi_inv = effective_susceptibility(mech, stack, w, "exact").chi_inv
    else:
        chi_inv = close_loop(mech, stack, cfg.detector, cfg.feedback, w, "exact").chi_inv_closed
    return replace(est, psd=est.psd * np.abs(chi_inv) ** 2)


def suppression_prediction(cfg: SystemConfig, f_hz):
    """Open-loop over ideal-loop radiation-pressure force density (large detuning)."""
    w = TWO_PI * np.asarray(f_hz, dtype=float)
    fields_ = cfg.optical_fields()
    open_ = sum(force_noise(f, w, "approx").spectral_density() for f in fields_)
    closed = sum(residual_spectrum(f, cfg.detector, w) for f in fields_)
    return open_ / closed


def homogeneous_growth(cfg: SystemConfig, dt: float, duration: float, x0: float = 1e-12):
    """Noise-free response from ``x0``; returns (grows, simulation result)."""
    traj = TrajectoryConfig(dt=dt, duration=duration, noise=False, x0=x0, enforce_duration=False)
    res = simulate(cfg, traj)
    if res.unstable:
        return True, res
    q = max(1, res.x.size // 4)
    return bool(np.abs(res.x[-q:]).max() > np.abs(res.x[:q]).max()), res


CANONICAL_DT = 2.5e-7
CANONICAL_DECIMATE = 40
CANONICAL_GAIN = 20.0


def verify(seed: int = 0, scale: float = 1.0) -> list:
    """Canonical comparison suite; ``scale`` multiplies every duration."""
    from .spring import quadratic_form, stability

    out = []
    # (a) thermal equipartition, optics off
    cfg = canonical_config(fields="none", T_env=300.0)
    ratio, se = equipartition(cfg, TrajectoryConfig(dt=1e-6, duration=max(2.0, 40.0 * scale), seed=seed))
    out.append(CheckResult("thermal equipartition <x^2>/(kT/m w^2) - 1", abs(ratio - 1) < 3 * se,
                           abs(ratio - 1), 3 * se, f"ratio={ratio:.4f}"))

    # (b) open-loop displacement spectrum
    band = (100.0, 1e4)
    cfg = canonical_config()
    traj = TrajectoryConfig(dt=CANONICAL_DT, duration=max(2.0, 16.0 * scale), seed=seed + 1,
                            decimate=CANONICAL_DECIMATE)
    res = simulate(cfg, traj)
    est = rebin_log(x_spectrum(res, 0.2, 0.05), 5, *band)
    cmp_ = compare(lambda f: displacement_spectrum(cfg, TWO_PI * f, "open").S_x_total, est, band)
    out.append(CheckResult("open-loop S_x vs |chi_eff|^2 (S_F + S_th)", cmp_.passed, cmp_.max_rel_dev,
                           cmp_.tolerance, f"worst at {cmp_.worst_freq:.4g} Hz over {cmp_.n_bins} bins"))

    # (c) closed-loop suppression of radiation-pressure force
    band = (100.0, 3000.0)
    c_open = canonical_config(eta=0.9, T_env=0.0)
    c_closed = replace(c_open, feedback=FeedbackKernel.flat(CANONICAL_GAIN))
    r_open = simulate(c_open, replace(traj, seed=seed + 2))
    r_closed = simulate(c_closed, replace(traj, seed=seed + 3))
    fo = rebin_log(force_estimate(r_open, c_open, 0.2), 5, *band)
    fc = rebin_log(force_estimate(r_closed, c_closed, 0.2), 5, *band)
    ratio_est = replace(fo, psd=fo.psd / fc.psd, rel_std=np.hypot(fo.rel_std, fc.rel_std))
    cmp_ = compare(lambda f: suppression_prediction(c_open, f), ratio_est, band, tolerance=0.2)
    out.append(CheckResult("closed-loop suppression factor vs residual formula", cmp_.passed, cmp_.max_rel_dev,
                           cmp_.tolerance, f"worst at {cmp_.worst_freq:.4g} Hz"))

    # (d) stability verdicts on a single blue spring
    for label, kern in (("single blue spring, loop open", FeedbackKernel.off()),
                        ("single blue spring, flat gain", FeedbackKernel.flat(CANONICAL_GAIN))):
        c = canonical_config(fields="blue", feedback=kern)
        mech = c.mechanical()
        L = None if kern.kind == "off" else CANONICAL_GAIN / (1.0 + CANONICAL_GAIN)
        verdict = stability(*quadratic_form(mech, SpringStack(c.optical_fields()), L))
        grows, _ = homogeneous_growth(c, CANONICAL_DT, 0.2)
        out.append(CheckResult(f"{label}: time-domain growth matches stability()", grows == (not verdict.stable),
                               float(grows), float(not verdict.stable),
                               f"predicted {'stable' if verdict.stable else 'unstable'}"))

    # step-size convergence
    conv = convergence_check(cfg, replace(traj, duration=max(2.0, 8.0 * scale), seed=seed + 4),
                             (100.0, 1e4), 0.2)
    out.append(CheckResult("dt-halving spectral change", conv.passed, conv.max_rel_dev, conv.tolerance))
    return out
