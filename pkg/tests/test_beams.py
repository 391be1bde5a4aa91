import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ab_wavelab.beams import (
    BeamSpec,
    RayGrid,
    assemble_wN,
    attach_solver,
    beam_quadrature_value,
    broken_amplitude_c0,
    broken_expansion,
    kannai_quadrature,
    kannai_stationary_phase,
    straight_expansion,
    transport_higher_order,
    validity_time,
)
from ab_wavelab.core import Disk, Domain, Obstacle, PhysicalConstants, Segment
from ab_wavelab.errors import NonconvergentTail, SupportIntersectsObstacle, UnsupportedOrder, ValidationError
from ab_wavelab.gauge import GaugeField, canonical_flux_potential
from ab_wavelab.rays import trace_broken_ray

C = PhysicalConstants()
FREE = GaugeField(C, ())


def test_validity_time():
    assert validity_time(80) == pytest.approx(80 ** -0.6)


def test_initial_data_is_cutoff_plane_wave():
    b = BeamSpec((0, 0), (0, 2), 10, 1.0, 0.5)
    assert np.allclose(b.omega, [0, 1])
    x = np.array([[0.2, 1.0], [0.0, 6.0], [1.2, 0.0]])
    u = b.initial_data(x)
    assert u[0] == pytest.approx(np.exp(10j))
    assert u[1] == 0 and u[2] == 0


def test_support_check_names_condition():
    dom = Domain((Obstacle(Disk((0.5, 3), 0.3), "o"),), ((-20, -20), (20, 20)))
    with pytest.raises(SupportIntersectsObstacle, match="transverse cutoff"):
        BeamSpec((0, 0), (0, 1), 10, 0.5, 0.5).check_support(dom)
    BeamSpec((0, 0), (0, 1), 10, 0.1, 0.5).check_support(dom)


@settings(max_examples=25)
@given(st.floats(-0.6, 0.6), st.floats(-4.5, 4.5), st.floats(0.002, 0.05))
def test_support_check_finds_small_obstacles(x, y, r):
    # exact answer for an axis-aligned strip |x| <= 0.4, |y| <= 5
    dom = Domain((Obstacle(Disk((x, y), r), "o"),), ((-20, -20), (20, 20)))
    b = BeamSpec((0, 0), (0, 1), 10, 0.4, 0.5)
    if abs(x) - r > 0.4 + 1e-9:
        b.check_support(dom)
    elif abs(x) - r < 0.4 - 1e-9:
        with pytest.raises(SupportIntersectsObstacle):
            b.check_support(dom)


def test_plane_wave_kannai_closed_form():
    k, t = 20.0, 0.05
    om = np.array([0.6, 0.8])
    x = np.array([0.3, -0.2])
    w = lambda xx, x0: np.exp(1j * k * (xx @ om - x0)) + np.exp(1j * k * (xx @ om + x0))
    v = kannai_quadrature(w, C, x, t, w_rate=k)
    exact = 2 * np.exp(-1j * k * k * t / 2 + 1j * k * x @ om)
    assert abs(v - exact) / abs(exact) < 1e-2
    assert abs(v - exact) < 1e-10


def test_kannai_of_constant_is_one():
    v = kannai_quadrature(lambda xx, x0: np.ones_like(x0), C, np.zeros(2), 0.3)
    assert v == pytest.approx(1.0, abs=1e-9)


def test_kannai_detects_nonconvergent_tail():
    with pytest.raises(NonconvergentTail):
        # w cancels the chirp, so the regularized integral grows like 1/epsilon
        a = 1 / (2 * 0.3)
        kannai_quadrature(lambda xx, x0: np.exp(-1j * a * x0 ** 2), C, np.zeros(2), 0.3)
    with pytest.raises(ValidationError):
        kannai_quadrature(lambda xx, x0: np.ones_like(x0), C, np.zeros(2), 0.0)


def test_free_beam_stationary_phase_matches_quadrature():
    spec = BeamSpec((0, 0), (0, 1), 40, 2.0, 0.5)
    e = straight_expansion(spec, FREE)
    x = np.array([0.1, 0.0])
    q = beam_quadrature_value(e, x, 0.05)
    sp = kannai_stationary_phase(e, FREE, x, 0.05)
    assert abs(q - sp) < 1e-6


@settings(max_examples=10)
@given(st.floats(0.2, 0.6), st.floats(-0.5, 0.5))
def test_stationary_phase_carries_gauge_phase(depth, off):
    f = canonical_flux_potential((off, -depth - 1), 1.0)
    spec = BeamSpec((0, 0), (0, 1), 40, 0.2, 0.5)
    e = straight_expansion(spec, f)
    x = np.zeros(2)
    v = kannai_stationary_phase(e, f, x, 0.01)
    v0 = kannai_stationary_phase(straight_expansion(spec, FREE), FREE, x, 0.01)
    assert np.angle(v / v0) == pytest.approx(float(f.ray_phase(x, spec.omega)), abs=1e-12)


def test_higher_order_transport_straight_only():
    spec = BeamSpec((0, 0), (0, 1), 40, 5.0, 0.5, order=2)
    e = straight_expansion(spec, FREE)
    with pytest.raises(ValidationError):
        transport_higher_order(e, FREE, 1, 1)
    attach_solver(e, RayGrid.around((-2, 2), (-6, 6), 2.0, 0.25, 0.1, 2))
    a1 = transport_higher_order(e, FREE, 1, 1)
    # zero initial data for n >= 1
    assert abs(a1(np.array([[0.0, 0.5]]), 0.0)[0]) < 1e-10
    assert assemble_wN(e)(np.array([[0.0, 0.5]]), 0.0)[0] == pytest.approx(np.exp(20j), abs=1e-8)
    dom = Domain((Obstacle(Segment((-5, 3), (5, 3)), "m"),), ((-20, -20), (20, 20)))
    eb = broken_expansion(BeamSpec((0, 0), (0.3, 1), 40, 0.5, 0.02), FREE, dom)
    with pytest.raises(UnsupportedOrder):
        transport_higher_order(eb, FREE, 2, 1)


def test_broken_c0_flat_mirror_keeps_unit_spreading():
    dom = Domain((Obstacle(Segment((-5, 3), (5, 3)), "m"),), ((-20, -20), (20, 20)))
    ray = trace_broken_ray((0, 0), (0.3, 1), dom)
    spec = BeamSpec((0, 0), (0.3, 1), 40, 0.5, 1.0)
    L = 5.0
    x = ray.point_at(L)
    c0 = broken_amplitude_c0(ray, FREE, x, L, spec)
    # 1/2 * cutoffs * (-1)^(2-1) / sqrt(1)
    assert c0 == pytest.approx(-0.5)
