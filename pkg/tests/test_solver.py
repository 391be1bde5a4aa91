import math

import numpy as np
import pytest

from ab_wavelab.core import Disk, Domain, GridField, GridSpec, Obstacle, PhysicalConstants, domain_mask
from ab_wavelab.errors import EdgeThroughFluxCenter, NormLossExceeded, ValidationError
from ab_wavelab.gauge import GaugeField, GaugeTransform, apply_gauge, canonical_flux_potential, smooth_bump_phase
from ab_wavelab.solver import (
    Dirichlet,
    DirichletPlusAbsorbingRim,
    MovingDomainSchedule,
    SolverConfig,
    backward_evolve,
    build_link_phases,
    disk_grid,
    evolve,
    evolve_moving_domain,
    full_link_phases,
    read_abwf,
    to_abwf,
    to_csv,
)

C = PhysicalConstants()
GRID = GridSpec((-3, -3), 0.03, 201, 201)
DOM = Domain((Obstacle(Disk((0.5, 0.4), 0.3), "o"),), ((-3.5, -3.5), (3.5, 3.5)))
FIELD = canonical_flux_potential((0.5, 0.4), 1.3, C, "o")


def packet(x0=-1.5, k0=5.0, w=0.1):
    return lambda x: np.exp(-((x[..., 0] - x0) ** 2 + x[..., 1] ** 2) / w + 1j * k0 * x[..., 0])


def test_plaquette_flux_vanishes_outside_obstacle():
    p = full_link_phases(FIELD, GRID).plaquettes()
    X1, X2 = GRID.mesh()
    cx, cy = 0.5 * (X1[:-1, :-1] + X1[1:, 1:]), 0.5 * (X2[:-1, :-1] + X2[1:, 1:])
    inside = (np.abs(cx - 0.5) < 0.015 + 1e-9) & (np.abs(cy - 0.4) < 0.015 + 1e-9)
    assert np.max(np.abs(p[~inside] - 1)) <= 1e-10
    assert np.angle(p[inside]) == pytest.approx([1.3])


def test_edge_through_flux_center_rejected():
    # an obstacle thinner than a cell leaves the edge through its center open
    g = GridSpec((0.0, 0.4), 0.1, 11, 3)
    dom = Domain((Obstacle(Disk((0.55, 0.4), 0.01), "o"),), ((-1, -1), (2, 2)))
    f = canonical_flux_potential((0.55, 0.4), 1.0, C, "o")
    with pytest.raises(EdgeThroughFluxCenter):
        build_link_phases(f, g, dom)


def test_norm_drift_per_thousand_steps():
    mask = domain_mask(DOM, GRID)
    u0 = GridField.from_function(GRID, mask, packet())
    cfg = SolverConfig(GRID, 2e-4)
    out = evolve(u0, FIELD, DOM, 0.2, cfg)[-1]
    assert abs(out.norm() - u0.norm()) / u0.norm() <= 1e-9


def test_discrete_gauge_covariance():
    mask = domain_mask(DOM, GRID)
    u0 = GridField.from_function(GRID, mask, packet())
    cfg = SolverConfig(GRID, 1e-3)
    out = evolve(u0, FIELD, DOM, 0.1, cfg)[-1]
    phi, grad = smooth_bump_phase((-1, 1), 1.0, 0.7)
    g = GaugeTransform({"o": 2}, phi, grad)
    f2 = apply_gauge(FIELD, g)
    fac = g.factor(GRID.points(), FIELD)
    out2 = evolve(GridField(GRID, u0.values * fac, mask), f2, DOM, 0.1, cfg)[-1]
    assert np.max(np.abs(out2.values - out.values * fac)) <= 1e-9


def test_free_gaussian_group_velocity():
    g = GridSpec((-2, -1.5), 0.01, 401, 301)
    dom = Domain((), ((-3, -3), (3, 3)))
    mask = domain_mask(dom, g)
    k0 = 8.0
    u0 = GridField.from_function(g, mask, packet(-1.0, k0, 0.08))
    t = 0.1
    out = evolve(u0, GaugeField(C, ()), dom, t, SolverConfig(g, 5e-4))[-1]
    X1, _ = g.mesh()
    c0 = np.sum(X1 * u0.density()) / np.sum(u0.density())
    c1 = np.sum(X1 * out.density()) / np.sum(out.density())
    v = (c1 - c0) / t
    assert v == pytest.approx(C.hbar * k0 / C.mass, rel=1e-2)


def test_absorbing_rim_removes_outgoing_packet():
    g = GridSpec((-1, -1), 0.02, 101, 101)
    dom = Domain((), ((-2, -2), (2, 2)))
    mask = domain_mask(dom, g)
    u0 = GridField.from_function(g, mask, packet(0.0, 20.0, 0.1))
    cfg = SolverConfig(g, 5e-4, C, DirichletPlusAbsorbingRim(0.3))
    out = evolve(u0, GaugeField(C, ()), dom, 0.15, cfg)[-1]
    assert out.norm() < 0.2 * u0.norm()
    with pytest.raises(ValidationError):
        SolverConfig(g, 1e-3, C, DirichletPlusAbsorbingRim(5.0))


def test_backward_evolve_inverts_forward():
    mask = domain_mask(DOM, GRID)
    u0 = GridField.from_function(GRID, mask, packet())
    cfg = SolverConfig(GRID, 1e-3)
    fwd = evolve(u0, FIELD, DOM, 0.05, cfg)[-1]
    back = backward_evolve(fwd, DOM, 0.05, cfg, FIELD)
    assert np.max(np.abs(back.values - u0.values)) < 1e-9


def test_moving_domain_schedule_masks():
    g = disk_grid(0.05)
    s = MovingDomainSchedule.standard(0.5)
    open_ = s.mask(g, 0.0)
    closed = s.mask(g, 0.7)
    assert closed.sum() < open_.sum()
    X1, X2 = g.mesh()
    # closed blocks separate the halves: no interior cell with |x2| <= h
    assert not np.any(closed & (np.abs(X2) <= 0.5))
    assert s.t_end == 1.5


def test_moving_domain_projection_guard():
    g = disk_grid(0.05)
    sched = MovingDomainSchedule(lambda t: 0.5 - 10 * t, 0.5, 0.5, lambda t: 0.0, lambda t: 0.0)
    u0 = GridField(g, np.exp(-(g.points() ** 2).sum(-1) / 0.05), sched.mask(g, 0.0))
    cfg = SolverConfig(g, 1e-2, C, Dirichlet(), norm_loss_tol=1e-3)
    with pytest.raises(NormLossExceeded):
        evolve_moving_domain(u0, sched, cfg, [0.05])


def test_abwf_roundtrip(tmp_path):
    g = GridSpec((0.5, -1), 0.25, 4, 3)
    f = GridField(g, np.arange(12).reshape(3, 4) * (1 + 2j), np.ones((3, 4), bool))
    to_abwf(f, tmp_path / "f.abwf")
    r = read_abwf(tmp_path / "f.abwf")
    assert r.spec == g
    assert np.array_equal(r.values, f.values)
    to_csv(f, tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0].startswith("x1")
