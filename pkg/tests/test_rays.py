import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ab_wavelab.core import Disk, Domain, Obstacle, Segment
from ab_wavelab.errors import GrazingIncidence, OutsideTube, TooManyReflections, ValidationError
from ab_wavelab.rays import RayTube, eikonal_phase, reflect_direction, trace_broken_ray

BOX = ((-50, -50), (50, 50))


@given(st.floats(-math.pi, math.pi), st.floats(0.05, math.pi - 0.05))
def test_reflection_preserves_speed_and_flips_normal_part(phi, inc):
    n = np.array([math.cos(phi), math.sin(phi)])
    t = np.array([-n[1], n[0]])
    w = -math.sin(inc) * n + math.cos(inc) * t
    r = reflect_direction(w, n)
    assert np.linalg.norm(r) == pytest.approx(1.0)
    assert r @ n == pytest.approx(-(w @ n))
    assert r @ t == pytest.approx(w @ t)


def test_grazing_and_outgoing_rejected():
    with pytest.raises(GrazingIncidence):
        reflect_direction([1.0, 0.0], [0.0, 1.0])
    with pytest.raises(ValidationError):
        reflect_direction([0.0, 1.0], [0.0, 1.0])


def test_flat_mirror_trace():
    dom = Domain((Obstacle(Segment((3, -5), (3, 5)), "m"),), BOX)
    r = trace_broken_ray((0, 0), (1, 1), dom)
    assert r.hits == ("m",)
    assert np.allclose(r.legs[1].start, [3, 3])
    assert np.allclose(r.legs[1].direction, np.array([-1, 1]) / math.sqrt(2))
    assert np.allclose(r.point_at(3 * math.sqrt(2) + math.sqrt(2)), [2, 4])


def test_trapped_ray_raises():
    dom = Domain((Obstacle(Segment((1, -5), (1, 5)), "r"), Obstacle(Segment((-1, -5), (-1, 5)), "l")), BOX)
    with pytest.raises(TooManyReflections):
        trace_broken_ray((0, 0), (1, 0.01), dom, max_reflections=6)


def test_tube_jacobian_flat_and_convex():
    dom = Domain((Obstacle(Segment((3, -5), (3, 5)), "m"),), BOX)
    tube = RayTube(trace_broken_ray((0, 0), (1, 0.5), dom), 0.2, dom)
    assert tube.jacobian(0.0, 8.0, 2) == pytest.approx(1.0, abs=1e-6)
    assert tube.raw_jacobian(0.0, 8.0, 2) == pytest.approx(-1.0, abs=1e-6)
    dom = Domain((Obstacle(Disk((5, 0), 2), "d"),), BOX)
    tube = RayTube(trace_broken_ray((0, 0.5), (1, 0), dom), 0.1, dom)
    # a convex reflector spreads the family: J grows along the reflected leg
    j1, j2 = tube.jacobian(0.0, 5.0, 2), tube.jacobian(0.0, 8.0, 2)
    assert 1.0 < j1 < j2


def test_tube_locate_roundtrip():
    dom = Domain((Obstacle(Disk((5, 0), 2), "d"),), BOX)
    ray = trace_broken_ray((0, 0.5), (1, 0), dom)
    tube = RayTube(ray, 0.1, dom)
    m = tube.member(0.03)
    x = m.point_at(7.0)
    eta, s = tube.locate(x, 2)
    assert eta == pytest.approx(0.03, abs=1e-10)
    assert s == pytest.approx(7.0, abs=1e-9)
    with pytest.raises(OutsideTube):
        tube.locate(np.array([0.0, 30.0]), 2)


def test_eikonal_phase_gradient_is_unit():
    dom = Domain((Obstacle(Disk((5, 0), 2), "d"),), BOX)
    ray = trace_broken_ray((0, 0.5), (1, 0), dom)
    ph = eikonal_phase(ray, 2, 0.1, dom)
    x = ray.point_at(6.0)
    psi, grad = ph(x)
    h = 1e-5
    fd = np.array([(ph(x + e)[0] - ph(x - e)[0]) / (2 * h) for e in (np.array([h, 0]), np.array([0, h]))])
    assert np.linalg.norm(grad) == pytest.approx(1.0)
    assert np.allclose(fd, grad, atol=1e-5)
