import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from optospring.cavity import spring_approx, spring_exact
from optospring.errors import DomainError, NoSolutionError, UnsupportedFormError
from optospring.params import OpticalFieldInput, TWO_PI, derive_field
from optospring.spring import (SpringStack, bare_inverse_susceptibility, closed_loop_resonance, combine_springs,
                               damping_bracket, effective_susceptibility, quadratic_form, solve_detuning,
                               solve_detuning_general, stability)

from conftest import make_field


def test_empty_stack_is_bare(sample):
    mech = sample.mechanical()
    s = effective_susceptibility(mech, SpringStack(), 123.0)
    assert s.chi_inv == bare_inverse_susceptibility(mech, 123.0)
    with pytest.raises(DomainError):
        combine_springs(SpringStack(), 1.0)


def test_single_field_is_additivity_base_case(blue):
    w = np.array([1.0, 1e5, 1e7])
    assert np.array_equal(combine_springs(SpringStack([blue]), w), spring_exact(blue, w))


def test_mirror_fields_cancel_exactly():
    a, b = make_field(-2e6, 1e6, 0.3), make_field(+2e6, 1e6, 0.3)
    w = np.linspace(0, 1e7, 9)
    scale = np.abs(spring_exact(a, w))
    assert np.all(np.abs(combine_springs(SpringStack([a, b]), w)) <= 1e-14 * scale)


def test_single_blue_resonance_and_damping():
    f = make_field(-2e6, 1e6, 0.3)
    from optospring.params import OscillatorInput
    mech = OscillatorInput(1e-9, 100.0, 1e6).derive()
    st_ = SpringStack([f])
    sc = spring_approx(f, mech.m)
    G, W2 = quadratic_form(mech, st_)
    assert W2 == pytest.approx(mech.omega_m**2 + sc.omega_os_sq)
    assert G == pytest.approx(mech.gamma_m + sc.Gamma_os) and sc.Gamma_os < 0
    assert closed_loop_resonance(mech, st_) == pytest.approx(math.sqrt(W2))


def test_sample_cancellation(sample):
    mech = sample.mechanical()
    st_ = SpringStack(sample.optical_fields())
    w = math.sqrt(st_.stiffness() / mech.m)
    ratio = abs(np.imag(st_.K_tot(w))) / abs(np.imag(spring_exact(st_.springs[0], w)))
    assert ratio < 0.05


def test_closed_form_example():
    d = solve_detuning(2.0, TWO_PI * 1e6, TWO_PI * 1e6)
    assert d / TWO_PI == pytest.approx(-math.sqrt(7) * 1e6, rel=1e-14)


def test_closed_form_limits():
    assert solve_detuning(1 + 1e-12, 5.0, 3.0) == pytest.approx(-3.0, rel=1e-9)
    assert solve_detuning(3.0, 0.0, 2.0) == pytest.approx(-6.0)
    for bad in (1.0, 0.5):
        with pytest.raises(DomainError):
            solve_detuning(bad, 1.0, 1.0)


@given(kappa=st.floats(1.0001, 100), g=st.floats(0.01, 100), dr=st.floats(-100, 100))
def test_closed_form_identity(kappa, g, dr):
    d = solve_detuning(kappa, g, dr)
    assert d**2 == pytest.approx((kappa**2 - 1) * g**2 + kappa**2 * dr**2, rel=1e-12)
    # damping bracket vanishes: gamma kappa^2 / (gamma^2 + Delta_B^2) = gamma / (gamma^2 + Delta_R^2)
    assert g * kappa**2 / (g**2 + d**2) == pytest.approx(g / (g**2 + dr**2), rel=1e-10)


def _pair(p_b=0.4, p_r=0.2, gamma_hz=1e6, dr_hz=1e6, red_gamma_hz=None):
    b = OpticalFieldInput("blue", L=1e-3, lambda0=1064e-9, Delta_hz=-3e6, gamma_hz=gamma_hz, P_circ=p_b)
    r = OpticalFieldInput("red", L=1e-3, lambda0=1064e-9, Delta_hz=dr_hz, gamma_hz=red_gamma_hz or gamma_hz,
                          P_circ=p_r)
    return b, r


def test_general_solver_matches_closed_form_equal_gamma():
    b, r = _pair()
    sol = solve_detuning_general(b, r, 1e-9, mode="approx")
    fb = derive_field(replace(b, Delta_hz=sol.Delta_B / TWO_PI))
    fr = derive_field(r)
    kappa = math.sqrt(spring_approx(fb, 1.0).stiffness / -spring_approx(fr, 1.0).stiffness)
    assert sol.Delta_B == pytest.approx(solve_detuning(kappa, fr.gamma, fr.Delta), rel=1e-8)
    assert abs(damping_bracket(fb, fr, 1.0)) < 1e-8 * damping_bracket(fb, replace(fr, n_circ=0.0), 1.0)


def test_general_solver_exact_mode_zeroes_imaginary_part(sample):
    b, r = sample.field_input("blue"), sample.field_input("red")
    sol = solve_detuning_general(b, r, sample.oscillator.m, mode="exact", omega_m=sample.mechanical().omega_m)
    fb = derive_field(replace(b, Delta_hz=sol.Delta_B / TWO_PI))
    k = spring_exact(fb, sol.omega_ref) + spring_exact(derive_field(r), sol.omega_ref)
    assert abs(k.imag) < 1e-9 * abs(spring_exact(fb, sol.omega_ref).imag)
    # the sample set sits within a few percent of exact cancellation
    assert sol.Delta_B / TWO_PI == pytest.approx(-20e6, rel=0.05)


def test_general_solver_no_solution_when_red_dominates():
    b, r = _pair(p_b=0.01, p_r=5.0)
    with pytest.raises(NoSolutionError) as info:
        solve_detuning_general(b, r, 1e-9, mode="approx")
    assert info.value.sweep.shape[1] == 2


def test_stability_bare_oscillator():
    res = stability(2.0, 100.0)
    assert res.stable and res.margin == pytest.approx(1.0)


def test_stability_single_blue_unstable():
    f = make_field(-2e6, 1e6, 0.3)
    from optospring.params import OscillatorInput
    mech = OscillatorInput(1e-9, 100.0, 1e6).derive()
    assert not stability(*quadratic_form(mech, SpringStack([f]))).stable


def test_sample_ideal_feedback_stable_with_intrinsic_damping(sample):
    mech = sample.mechanical()
    G, W2 = quadratic_form(mech, SpringStack(sample.optical_fields()), 1.0)
    assert G == pytest.approx(mech.gamma_m, rel=1e-12)
    assert stability(G, W2).stable


def test_stability_rejects_non_quadratic():
    with pytest.raises(UnsupportedFormError):
        stability(1.0 + 1j, 1.0)
    with pytest.raises(UnsupportedFormError):
        stability(np.array([1.0, 2.0]), 1.0)


@given(G=st.floats(-1e3, 1e3), W2=st.floats(-1e6, 1e6))
def test_stability_verdict_rule(G, W2):
    res = stability(G, W2)
    assert res.stable == (G > 0 and W2 > 0)
    for p in res.poles:
        assert abs(p**2 + 1j * G * p - W2) <= 1e-9 * max(1.0, abs(W2), G**2)
        if G > 0 and W2 > 0:
            assert p.imag <= 0
