import math
from dataclasses import replace

import numpy as np
import pytest

from optospring.budget import displacement_spectrum
from optospring.errors import ConfigError
from optospring.feedback import close_loop
from optospring.oracle import (CANONICAL_DT, CANONICAL_DECIMATE, TrajectoryConfig, canonical_config, compare,
                               equipartition, homogeneous_growth, linear_model, psd_welch, rebin_log, simulate,
                               simulate_many, x_spectrum)
from optospring.params import FeedbackKernel, TWO_PI
from optospring.spring import SpringStack, quadratic_form, stability

KERNELS = [FeedbackKernel.off(), FeedbackKernel.flat(20.0),
           FeedbackKernel("rational", gain=20.0 * TWO_PI * 2e4, poles_hz=(-2e4,))]


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.kind)
def test_linear_model_susceptibility_matches_exact(kernel):
    cfg = canonical_config(feedback=kernel)
    w = TWO_PI * np.array([50.0, 1e3, 5e3])
    H = linear_model(cfg).transfer(w)[:, 0, 0]
    ci = close_loop(cfg.mechanical(), SpringStack(cfg.optical_fields()), cfg.detector, kernel, w,
                    "exact").chi_inv_closed
    assert np.allclose(H * ci, 1.0, rtol=0, atol=1e-10)


@pytest.mark.parametrize("kernel", KERNELS[:2], ids=lambda k: k.kind)
def test_linear_model_displacement_spectrum(kernel):
    cfg = canonical_config(feedback=kernel, eta=0.9, epsilon_ppm=1.0)
    w = TWO_PI * np.array([100.0, 1e3, 3e3])
    m = linear_model(cfg)
    H = m.transfer(w)[:, 0, :]
    S_x = (np.abs(H) ** 2 * m.S).sum(axis=1)
    if kernel.kind == "off":
        want = displacement_spectrum(cfg, w, "open").S_x_total
    else:
        mech, stack = cfg.mechanical(), SpringStack(cfg.optical_fields())
        res = close_loop(mech, stack, cfg.detector, kernel, w, "exact")
        want = (res.residual_force.spectral_density() + m.S[0]) / np.abs(res.chi_inv_closed) ** 2
    assert np.allclose(S_x, want, rtol=1e-9, atol=0)


def test_ideal_kernel_is_rejected():
    with pytest.raises(ConfigError):
        linear_model(canonical_config(feedback=FeedbackKernel.ideal()))


def test_step_size_guard():
    cfg = canonical_config()
    with pytest.raises(ConfigError, match="dt"):
        simulate(cfg, TrajectoryConfig(dt=1e-5, duration=2.0))


def test_duration_guard():
    with pytest.raises(ConfigError, match="100 mechanical periods"):
        simulate(canonical_config(), TrajectoryConfig(dt=CANONICAL_DT, duration=0.1))


def test_unknown_scheme():
    with pytest.raises(ConfigError):
        TrajectoryConfig(dt=1e-6, duration=1.0, scheme="milstein")


def test_seed_determinism():
    cfg = canonical_config()
    traj = TrajectoryConfig(dt=CANONICAL_DT, duration=1.0, seed=7, decimate=CANONICAL_DECIMATE)
    a, b = simulate(cfg, traj), simulate(cfg, traj)
    assert np.array_equal(a.x, b.x)
    assert all(np.array_equal(a.photocurrent[k], b.photocurrent[k]) for k in a.photocurrent)
    c = simulate(cfg, replace(traj, seed=8))
    assert not np.array_equal(a.x, c.x)
    many = simulate_many(cfg, traj, [7, 8], threads=2)
    assert np.array_equal(many[0].x, a.x) and np.array_equal(many[1].x, c.x)


def test_welch_white_noise_level(rng):
    fs, sigma = 1000.0, 0.3
    x = rng.normal(0.0, sigma, 2**18)
    est = psd_welch(x, fs, 1024)
    band = (est.freqs > 10) & (est.freqs < 490)
    assert est.psd[band].mean() == pytest.approx(2 * sigma**2 / fs, rel=0.01)
    # the per-bin scatter agrees with the reported standard error
    scatter = np.std(est.psd[band] / (2 * sigma**2 / fs))
    assert scatter == pytest.approx(est.rel_std[1], rel=0.15)


def test_welch_sinusoid_parseval():
    fs, n = 1000.0, 2**16
    t = np.arange(n) / fs
    x = 0.7 * np.sin(TWO_PI * 123.0 * t)
    est = psd_welch(x, fs, 2048)
    power = est.psd.sum() * (est.freqs[1] - est.freqs[0])
    assert power == pytest.approx(0.7**2 / 2, rel=0.05)


def test_welch_too_short():
    with pytest.raises(ValueError, match="at least 4096"):
        psd_welch(np.zeros(1000), 1.0, 1024)


def test_compare_identity_and_offset(rng):
    est = rebin_log(psd_welch(rng.normal(size=2**18), 2.0, 1024), 5, 0.01, 0.9)
    flat = np.mean(est.psd)
    ident = compare((est.freqs, est.psd), est, (0.01, 0.9))
    assert ident.max_rel_dev == 0 and ident.passed
    off = compare((est.freqs, 1.3 * est.psd), est, (0.01, 0.9))
    assert not off.passed
    assert compare(lambda f: np.full_like(f, flat), est, (0.01, 0.9)).passed
    with pytest.raises(ValueError, match="no overlapping"):
        compare((est.freqs, est.psd), est, (10.0, 20.0))


# -- statistical checks against the analytic model (slow) ----------------------

@pytest.mark.slow
@pytest.mark.parametrize("T", [30.0, 300.0, 3000.0])
def test_equipartition(T):
    cfg = canonical_config(fields="none", T_env=T)
    ratio, se = equipartition(cfg, TrajectoryConfig(dt=1e-6, duration=20.0, seed=int(T)))
    assert abs(ratio - 1) < max(3 * se, 0.03)


@pytest.mark.slow
def test_thermal_lorentzian():
    cfg = canonical_config(fields="none", T_env=300.0)
    res = simulate(cfg, TrajectoryConfig(dt=1e-6, duration=80.0, seed=3, decimate=20))
    band = (20.0, 2000.0)
    est = rebin_log(x_spectrum(res, 0.5, 0.05), 5, *band)
    cmp_ = compare(lambda f: displacement_spectrum(cfg, TWO_PI * f, "open").S_x_total, est, band, 0.10)
    assert cmp_.passed, cmp_


@pytest.mark.slow
def test_unstable_run_is_flagged():
    cfg = canonical_config(fields="blue")
    res = simulate(cfg, TrajectoryConfig(dt=CANONICAL_DT, duration=2.0, seed=1, decimate=CANONICAL_DECIMATE))
    assert res.unstable
    assert res.steps < round(2.0 / CANONICAL_DT)


def _random_blue(rng, stable):
    """Single blue spring plus a flat loop gain on the requested side of the threshold."""
    cfg = canonical_config(fields="blue")
    p = rng.uniform(0.01, 0.03)
    cfg = cfg.with_field("blue", P_circ=p)
    mech, stack = cfg.mechanical(), SpringStack(cfg.optical_fields())
    from optospring.feedback import required_gain

    need = required_gain(stack.friction() / mech.m, mech.gamma_m)
    K = need * (rng.uniform(1.5, 4.0) if stable else rng.uniform(0.1, 0.6))
    return replace(cfg, feedback=FeedbackKernel.flat(K)), K


@pytest.mark.slow
@pytest.mark.parametrize("stable", [True, False])
def test_random_stability_verdicts(stable):
    rng = np.random.default_rng(2024 + stable)
    for _ in range(5):
        cfg, K = _random_blue(rng, stable)
        verdict = stability(*quadratic_form(cfg.mechanical(), SpringStack(cfg.optical_fields()), K / (1 + K)))
        assert verdict.stable is stable
        grows, _ = homogeneous_growth(cfg, CANONICAL_DT, 0.2)
        assert grows is (not stable)


@pytest.mark.slow
def test_closed_loop_resonance_shift():
    cfg = canonical_config(feedback=FeedbackKernel.flat(20.0))
    mech, stack = cfg.mechanical(), SpringStack(cfg.optical_fields())
    f_pred = math.sqrt(mech.omega_m**2 + stack.stiffness() / mech.m) / TWO_PI
    res = simulate(cfg, TrajectoryConfig(dt=CANONICAL_DT, duration=8.0, seed=5, decimate=CANONICAL_DECIMATE))
    est = x_spectrum(res, 0.2, 0.05)
    sel = est.freqs > 200
    f_peak = est.freqs[sel][np.argmax(est.psd[sel])]
    assert f_peak == pytest.approx(f_pred, rel=0.05)
