import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ab_wavelab.core import GridField, GridSpec, PhysicalConstants, Segment
from ab_wavelab.errors import (DegenerateGeometry, ErrorBudgetExceeded, InitialDataDegenerate, NoPathFound,
                               ValidationError, VanishingModulus)
from ab_wavelab.experiments import (alpha_from_peak, electric_ab, estimate_flux, fig1_spec, fig2_spec,
                                    fig3_setup, fig4_spec, fit_interference_law, interference_prediction,
                                    madelung_residual, magnetic_ab_broken, magnetic_ab_single, mirror_interferometer,
                                    resonant_k)
from ab_wavelab.solver import Dirichlet, SolverConfig, disk_grid

C = PhysicalConstants()


@given(st.floats(0.0, math.pi))
def test_alpha_from_peak_inverts_prediction(a):
    assert alpha_from_peak(interference_prediction(a)) == pytest.approx(a, abs=1e-7)


@pytest.mark.parametrize("alpha", [0.0, math.pi / 2, math.pi])
def test_fig1_peak_follows_law(alpha):
    r = magnetic_ab_single(fig1_spec(alpha))
    assert abs(r.measured_peak - r.predicted) <= 0.15 * max(r.predicted, 0.05 / 0.15)
    assert r.method_pair == ("beam:stationary", "prediction")


def test_fig1_report_json_roundtrip():
    r = magnetic_ab_single(fig1_spec(1.0))
    d = r.to_json()
    assert d["measured_peak"] == r.measured_peak
    assert set(r.numbers()) <= set(d)


def test_fit_and_estimate_need_three_values():
    reps = [magnetic_ab_single(fig1_spec(a)) for a in (0.5, 1.5)]
    with pytest.raises(ValidationError):
        estimate_flux(reps)
    reps.append(magnetic_ab_single(fig1_spec(2.5)))
    est = estimate_flux(reps)
    assert max(abs(k - v) for k, v in est.items()) < 0.1
    c, r2 = fit_interference_law(reps)
    assert c == pytest.approx(4.0, rel=0.05) and r2 > 0.95


def test_error_budget_tolerance():
    spec = dataclasses.replace(fig1_spec(1.0), tolerance=1e-12)
    with pytest.raises(ErrorBudgetExceeded):
        magnetic_ab_single(spec)


def test_resonant_k_rejects_coincident_beams():
    spec = fig1_spec(1.0)
    spec = dataclasses.replace(spec, beam_theta=spec.beam_omega)
    with pytest.raises(DegenerateGeometry):
        resonant_k(spec, 1, 80.0)


def test_unknown_oracle():
    with pytest.raises(ValidationError):
        magnetic_ab_single(fig1_spec(1.0), oracle="magic")


def test_broken_ignores_decoy_flux():
    a = magnetic_ab_broken(fig2_spec(decoy_flux=0.7))
    b = magnetic_ab_broken(fig2_spec(decoy_flux=-1.0))
    assert a.measured_peak == pytest.approx(b.measured_peak, rel=1e-3)
    assert a.measured_peak == pytest.approx(4.0, rel=0.05)
    assert a.partial_integrals["alpha"] == pytest.approx(math.pi, abs=1e-6)


def test_mirror_law():
    r = mirror_interferometer(*fig3_setup(math.pi), k=80)
    assert r.measured_peak == pytest.approx(4.0, rel=0.05)
    r0 = mirror_interferometer(*fig3_setup(0.0), k=80)
    assert r0.measured_peak < 0.05


def test_mirror_missing_path():
    p0, p1, _, o, f = fig3_setup(1.0)
    short = (Segment((3.0, 5.0), (3.0, 6.0)), Segment((-3.0, 6.0), (-3.0, 2.0)))
    with pytest.raises(NoPathFound):
        mirror_interferometer(p0, p1, short, o, f, k=80)


@pytest.fixture(scope="module")
def coarse():
    return SolverConfig(disk_grid(0.02), 2e-3, C, Dirichlet())


@pytest.mark.parametrize("alpha,detected", [(math.pi, True), (0.0, False), (2 * math.pi, False)])
def test_electric_detection_follows_quantization(coarse, alpha, detected):
    r = electric_ab(fig4_spec(alpha), coarse)
    assert r.detected is detected
    assert r.verdict
    assert r.hold_norms[0] == pytest.approx(0.5, abs=0.01)


def test_electric_connected_domain_shows_nothing(coarse):
    r = electric_ab(fig4_spec(1.0, connected=True), coarse)
    assert not r.detected and r.max_difference < 1e-8


def test_electric_one_sided_data_rejected(coarse):
    sp = fig4_spec(math.pi)
    sp.final_state = lambda x: np.exp(-(x[..., 0] ** 2 + (x[..., 1] - 0.75) ** 2) / 0.0128)
    with pytest.raises(InitialDataDegenerate):
        electric_ab(sp, coarse)


def _plane_pair(k, c, dt, t=0.1):
    g = GridSpec((-1.0, -1.0), 0.02, 101, 101)
    x = g.points()
    w = C.hbar * k * k / (2 * C.mass)
    v = lambda s: np.exp(1j * (k * x[..., 0] - w * s + c)) * (1 + 0.0 * x[..., 1])
    m = np.ones(g.shape, bool)
    return GridField(g, v(t), m), GridField(g, v(t + dt), m)


def test_madelung_plane_wave_is_exact():
    m = madelung_residual(_plane_pair(3.0, 0.0, 1e-3), C, 1e-3)
    assert m.residual_transport < 1e-8
    assert m.residual_hj < 1e-3


@settings(max_examples=15)
@given(st.floats(-math.pi, math.pi))
def test_madelung_phase_shift_invariant(c):
    a = madelung_residual(_plane_pair(3.0, 0.0, 1e-3), C, 1e-3)
    b = madelung_residual(_plane_pair(3.0, c, 1e-3), C, 1e-3)
    assert b.residual_transport == pytest.approx(a.residual_transport, abs=1e-9)
    assert b.residual_hj == pytest.approx(a.residual_hj, rel=1e-6, abs=1e-9)


def test_madelung_vanishing_modulus():
    g = GridSpec((-1.0, -1.0), 0.05, 41, 41)
    z = GridField(g, np.zeros(g.shape, complex), np.ones(g.shape, bool))
    with pytest.raises(VanishingModulus):
        madelung_residual((z, z), C, 1e-3)
