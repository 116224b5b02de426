"""Kernel enumeration, trace absorption, and classification round trips.

The binding checks are residual-based: every basis element must be
annihilated by the linearized Ricci operator and the tau-modified
divergence, absorption fields must reproduce their target trace with a
vanishing divergence, and classification must invert reconstruction to
round-off.  Reference coefficients appear only where a closed form was
frozen by hand.
"""

import math

import numpy as np
import pytest

from cylspec import fields as F
from cylspec.cross_section import TorusCrossSection, build_spectrum
from cylspec.deformation_solver import (
    DeformationTensor,
    classify_kernel,
    harmonic_trace_split,
    parallel_space_dimension,
    solve_reduced_system,
    trace_absorption_field,
    _absorption_profiles,
)
from cylspec.divergence_solver import lie_derivative_metric, modified_divergence
from cylspec.errors import InvalidInput, NotInKernel, ResonantTau
from cylspec.fd_oracle import fd_operator, interior_sup, sample
from cylspec.mode_ode import RadialProfile

from conftest import random_kernel_element, random_rank2_source

CS = TorusCrossSection(3, (1.0, 1.0, 1.0), 1)
CIRCLE = TorusCrossSection(1, (2.0 * math.pi,), 1)  # mu_1 = 1
UNIT_CIRCLE = TorusCrossSection(1, (1.0,), 1)  # mu_1 = 4 pi^2

SCALARS = [m for m in build_spectrum(CS, "Scalar").modes if any(m.freq)]
PHI = next(m for m in SCALARS if m.phase == "cos")


def field_close(a, b, tol=1e-12):
    scale = max(1.0, a.max_abs_coeff(), b.max_abs_coeff())
    assert (a - b).max_abs_coeff() <= tol * scale


def profiles_close(p, q, tol=1e-12):
    rs = np.linspace(0.0, 4.0, 17)
    pv = np.array([p(r) for r in rs])
    qv = np.array([q(r) for r in rs])
    scale = max(1.0, np.max(np.abs(qv)))
    assert np.max(np.abs(pv - qv)) <= tol * scale


# ---------------------------------------------------------------------------
# structural blocks
# ---------------------------------------------------------------------------


def test_structural_blocks_partition_the_field():
    rng = np.random.default_rng(11)
    h = random_rank2_source(CS, rng)
    dt = DeformationTensor(h)
    field_close(dt.tangential + dt.mixed + dt.radial, h, 0.0)
    for _key, _pk, C in dt.tangential.terms():
        assert np.all(C[0, :] == 0.0) and np.all(C[:, 0] == 0.0)
    for _key, _pk, C in dt.mixed.terms():
        assert C[0, 0] == 0.0 and np.all(C[1:, 1:] == 0.0)
    for _key, _pk, C in dt.radial.terms():
        assert np.all(C.ravel()[1:] == 0.0)


def test_structural_blocks_reject_one_forms():
    w = F.radial_one_form(CS, build_spectrum(CS, "Scalar").modes[0], RadialProfile.constant(1.0))
    with pytest.raises(InvalidInput):
        DeformationTensor(w)


# ---------------------------------------------------------------------------
# harmonic trace split
# ---------------------------------------------------------------------------


def test_trace_split_constant_trace():
    h = F.metric_field(CS).multiply_profile(RadialProfile.constant(5.0 / 4.0))
    affine, remainder = harmonic_trace_split(h)
    profiles_close(affine, RadialProfile.constant(5.0))
    assert remainder.max_abs_coeff() <= 1e-15


def test_trace_split_affine_plus_single_mode():
    # trace 3r + e^{-2 pi r} cos(2 pi x) on the unit circle: the affine leg
    # comes off the metric, the oscillating leg sits in one mu = 4 pi^2 mode
    mode = next(
        m for m in build_spectrum(UNIT_CIRCLE, "Scalar").modes
        if any(m.freq) and m.phase == "cos"
    )
    assert mode.eigenvalue == pytest.approx(4.0 * math.pi**2, rel=1e-15)
    amp = math.sqrt(2.0)
    osc = F.rr_tensor(
        UNIT_CIRCLE, mode, RadialProfile.monomial(1.0 / amp, 0, -2.0 * math.pi)
    )
    h = F.metric_field(UNIT_CIRCLE).multiply_profile(
        RadialProfile.monomial(1.5, 1, 0.0)
    ) + osc
    affine, remainder = harmonic_trace_split(h)
    profiles_close(affine, RadialProfile.monomial(3.0, 1, 0.0))
    field_close(remainder, osc)
    t = F.trace(remainder)
    assert list(t.data.keys()) == [(mode.freq, "cos")]


def test_trace_split_rejects_non_harmonic_trace():
    ramp = F.rr_tensor(CS, PHI, RadialProfile.monomial(1.0, 1, 0.0))
    with pytest.raises(InvalidInput):
        harmonic_trace_split(ramp)
    wrong_rate = F.rr_tensor(CS, PHI, RadialProfile.monomial(1.0, 0, -1.0))
    with pytest.raises(InvalidInput):
        harmonic_trace_split(wrong_rate)


# ---------------------------------------------------------------------------
# trace absorption
# ---------------------------------------------------------------------------


def test_absorption_profiles_frozen_closed_form():
    # decaying branch at mu = 1, unit coefficient:
    #   k = -(1/2)(1 - r/2) e^{-r},  l = -(1/4)(r + 1) e^{-r}
    k, l = _absorption_profiles(1.0, 0.0, 1.0)
    profiles_close(k, RadialProfile(((-0.5, 0, -1.0), (0.25, 1, -1.0))))
    profiles_close(l, RadialProfile(((-0.25, 0, -1.0), (-0.25, 1, -1.0))))


def test_absorption_single_mode_blocks():
    mode = next(
        m for m in build_spectrum(CIRCLE, "Scalar").modes
        if any(m.freq) and m.phase == "cos"
    )
    assert mode.eigenvalue == pytest.approx(1.0, rel=1e-15)
    X = trace_absorption_field(CIRCLE, {(mode.freq, "cos"): (0.0, 1.0)})
    L = lie_derivative_metric(X)
    amp = float(mode.polarization)

    # radial block (r/2) e^{-r} phi
    rr = RadialProfile(
        tuple((C[0, 0] / amp, p, lam) for (p, lam), C in L.data[(mode.freq, "cos")].items())
    )
    profiles_close(rr, RadialProfile.monomial(0.5, 1, -1.0))

    # trace comes back exactly as the requested e^{-r} phi
    field_close(F.trace(L), F.scalar_field(CIRCLE, mode, RadialProfile.monomial(1.0, 0, -1.0)))

    # and the field is divergence free
    assert F.divergence(L).max_abs_coeff() <= 1e-13 * L.max_abs_coeff()


def test_absorption_reproduces_random_traces():
    rng = np.random.default_rng(29)
    for trial in range(6):
        picks = rng.choice(len(SCALARS), size=3, replace=False)
        coeffs = {}
        target = None
        for i in picks:
            mode = SCALARS[i]
            c_plus, c_minus = rng.uniform(-2.0, 2.0, size=2)
            coeffs[(mode.freq, mode.phase)] = (c_plus, c_minus)
            s = math.sqrt(mode.eigenvalue)
            prof = RadialProfile(((c_plus, 0, s), (c_minus, 0, -s)))
            t = F.scalar_field(CS, mode, prof)
            target = t if target is None else target + t
        L = lie_derivative_metric(trace_absorption_field(CS, coeffs))
        scale = max(1.0, target.max_abs_coeff())
        assert (F.trace(L) - target).max_abs_coeff() <= 1e-10 * scale
        assert F.divergence(L).max_abs_coeff() <= 1e-12 * max(1.0, L.max_abs_coeff())


def test_absorption_rejects_affine_sector():
    cs = CS
    with pytest.raises(InvalidInput):
        trace_absorption_field(cs, {((0, 0, 0), "cos"): (1.0, 0.0)})


def test_absorption_divergence_validated_by_fd_oracle():
    cs = TorusCrossSection(2, (2.0 * math.pi, 2.0 * math.pi), 1)
    mode = next(
        m for m in build_spectrum(cs, "Scalar").modes if any(m.freq) and m.phase == "cos"
    )
    X = trace_absorption_field(cs, {(mode.freq, "cos"): (0.4, -1.1)})
    L = lie_derivative_metric(X)

    def run(n_r, n_x):
        grid = sample(L, (0.0, 6.0), n_r, n_x)
        div = fd_operator("divergence", grid)
        return interior_sup(div), grid.max_spacing

    scale = interior_sup(sample(L, (0.0, 6.0), 65, 12))
    err_coarse, h_coarse = run(65, 12)
    err_fine, h_fine = run(129, 24)
    assert err_coarse < 10.0 * h_coarse**2 * scale
    assert err_fine < 10.0 * h_fine**2 * scale
    assert err_fine < 0.5 * err_coarse


# ---------------------------------------------------------------------------
# reduced-system kernel basis
# ---------------------------------------------------------------------------


def test_reduced_basis_dimension_counts():
    n_parallel_tt = len(
        [m for m in build_spectrum(CS, "TTTensor").modes if not any(m.freq)]
    )
    assert n_parallel_tt == 5
    assert parallel_space_dimension(CS, 0.0) == n_parallel_tt + 1 + CS.dim + 1
    for tau in (0.005, 0.01, 0.05):
        assert parallel_space_dimension(CS, tau) == n_parallel_tt + 1


def test_tau_eliminates_exactly_the_parallel_gauge_families():
    at_zero = {e.label for e in solve_reduced_system(CS, 0.0)}
    at_tau = {e.label for e in solve_reduced_system(CS, 0.02)}
    assert at_zero - at_tau == {"shear_gauge", "radial_gauge"}
    dropped = [e for e in solve_reduced_system(CS, 0.0) if not e.survives_tau]
    assert len(dropped) == CS.dim + 1


@pytest.mark.parametrize("tau", [0.0, 0.02])
def test_reduced_basis_solves_both_equations(tau):
    for elem in solve_reduced_system(CS, tau):
        scale = max(1.0, elem.field.max_abs_coeff())
        ric = F.linearized_ricci(elem.field).max_abs_coeff()
        div = modified_divergence(elem.field, tau).max_abs_coeff()
        assert ric <= 1e-12 * scale, elem.label
        assert div <= 1e-12 * scale, elem.label


def test_gauge_basis_elements_carry_their_generators():
    for elem in solve_reduced_system(CS, 0.0):
        if elem.label.endswith("_gauge"):
            assert elem.generator is not None
            field_close(lie_derivative_metric(elem.generator), elem.field, 1e-14)
        else:
            assert elem.generator is None


def test_tt_exp_elements_come_in_rate_pairs():
    basis = solve_reduced_system(CS, 0.0)
    exp_meta = {e.meta for e in basis if e.label == "tt_exp"}
    branches = {}
    for freq, phase, i, branch in exp_meta:
        branches.setdefault((freq, phase, i), set()).add(branch)
    assert branches and all(v == {"plus", "minus"} for v in branches.values())


def test_resonant_tau_is_rejected():
    with pytest.raises(ResonantTau):
        solve_reduced_system(CIRCLE, 0.5)  # 4 tau^2 = 1 = mu_1
    solve_reduced_system(CIRCLE, 0.37)


def test_negative_tau_is_rejected():
    with pytest.raises(InvalidInput):
        solve_reduced_system(CS, -0.1)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", [3, 17, 88, 101])
def test_classify_round_trip_tau_zero(seed):
    rng = np.random.default_rng(seed)
    h = random_kernel_element(CS, rng, tau=0.0)
    dec = classify_kernel(h, 0.0)
    field_close(dec.reconstruct(), h, 1e-12)
    assert dec.osc_modes == {}


@pytest.mark.parametrize("seed", [5, 23])
def test_classify_round_trip_tau_positive(seed):
    rng = np.random.default_rng(seed)
    h = random_kernel_element(CS, rng, tau=0.02)
    dec = classify_kernel(h, 0.02)
    field_close(dec.reconstruct(), h, 1e-12)
    assert dec.gauge_Y.radial == 0.0 and not dec.gauge_Y.shear


def test_classify_trace_plus_decaying_tt():
    tt = next(m for m in build_spectrum(CS, "TTTensor").modes if any(m.freq))
    s = math.sqrt(tt.eigenvalue)
    h = F.metric_field(CS) - F.constant_tensor_field(
        CS, np.diag([1.0] + [0.0] * CS.dim)
    )
    h = h.scale(3.0) + F.from_mode_profile(CS, tt, RadialProfile.monomial(1.0, 0, -s))
    dec = classify_kernel(h, 0.01)
    a, a_tilde = dec.pure_trace
    assert a == pytest.approx(3.0, abs=1e-12)
    assert a_tilde == 0.0
    assert not dec.parallel_tt and not dec.linear_tt
    [(key, (a_plus, a_minus))] = list(dec.exp_modes.items())
    assert key[0] == tt.freq and key[1] == tt.phase
    assert a_plus == pytest.approx(0.0, abs=1e-12)
    assert a_minus == pytest.approx(1.0, abs=1e-12)
    assert dec.gauge_X.is_zero() and dec.gauge_Y.is_zero()


def test_classify_pure_gauge_content():
    coeffs = {(PHI.freq, PHI.phase): (0.7, -0.4)}
    h = lie_derivative_metric(trace_absorption_field(CS, coeffs))
    dec = classify_kernel(h, 0.0)
    assert dec.pure_trace == (0.0, 0.0)
    assert not dec.exp_modes
    assert not dec.gauge_X.is_zero()
    field_close(dec.reconstruct(), h, 1e-12)


def test_classify_radial_block_at_tau_zero_is_gauge():
    rr = np.zeros((CS.dim + 1, CS.dim + 1))
    rr[0, 0] = 1.0
    h = F.constant_tensor_field(CS, rr)
    dec = classify_kernel(h, 0.0)
    assert dec.gauge_Y.radial == pytest.approx(1.0, abs=1e-15)
    assert dec.gauge_Y.killing == 0.0
    field_close(dec.reconstruct(), h, 1e-15)


def test_classify_rejects_radial_block_at_positive_tau():
    rr = np.zeros((CS.dim + 1, CS.dim + 1))
    rr[0, 0] = 1.0
    h = F.constant_tensor_field(CS, rr)
    with pytest.raises(NotInKernel, match="divergence"):
        classify_kernel(h, 0.01)


def test_classify_rejects_non_kernel_field():
    h = F.rr_tensor(CS, PHI, RadialProfile.monomial(1.0, 0, -1.0))
    with pytest.raises(NotInKernel, match="Ricci residual"):
        classify_kernel(h, 0.0)


def test_classify_zero_field():
    dec = classify_kernel(F.TensorField(CS, 2), 0.0)
    assert dec.pure_trace == (0.0, 0.0)
    assert not dec.parallel_tt and not dec.exp_modes
    assert dec.gauge_X.is_zero() and dec.gauge_Y.is_zero()
    assert dec.reconstruct().max_abs_coeff() == 0.0


def test_classify_recovers_known_coefficients():
    basis = solve_reduced_system(CS, 0.0)
    tt_parallel = [e for e in basis if e.label == "tt_parallel"]
    shear = [e for e in basis if e.label == "shear_gauge"]
    h = (
        tt_parallel[2].field.scale(-1.3)
        + shear[1].field.scale(0.6)
        + next(e for e in basis if e.label == "trace_linear").field.scale(2.0)
    )
    dec = classify_kernel(h, 0.0)
    assert dec.pure_trace[1] == pytest.approx(2.0, abs=1e-12)
    assert dec.parallel_tt == {2: pytest.approx(-1.3, abs=1e-12)}
    assert dec.gauge_Y.shear == {1: pytest.approx(0.6, abs=1e-12)}


def test_classify_reports_fit_conditioning():
    rng = np.random.default_rng(53)
    h = random_kernel_element(CS, rng, tau=0.0)
    dec = classify_kernel(h, 0.0)
    present = {freq for (freq, _phase) in h.data if any(freq)}
    assert set(dec.condition_numbers) == present
    for value in dec.condition_numbers.values():
        assert np.isfinite(value) and value < 1e8


def test_classified_basis_certified_by_fd_oracle():
    cs = TorusCrossSection(2, (2.0 * math.pi, 2.0 * math.pi), 1)
    rng = np.random.default_rng(71)
    h = random_kernel_element(cs, rng, tau=0.0, decaying_only=True)
    classify_kernel(h, 0.0)

    def run(n_r, n_x):
        grid = sample(h, (0.0, 6.0), n_r, n_x)
        return interior_sup(fd_operator("linearized_ricci", grid)), grid.max_spacing

    scale = max(1.0, interior_sup(sample(h, (0.0, 6.0), 65, 12)))
    err_coarse, h_coarse = run(65, 12)
    err_fine, h_fine = run(129, 24)
    assert err_coarse < 10.0 * h_coarse**2 * scale
    assert err_fine < 10.0 * h_fine**2 * scale
