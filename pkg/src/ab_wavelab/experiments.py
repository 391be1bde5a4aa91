"""End-to-end experiments: magnetic AB with straight and broken rays, the
mirror interferometer, flux estimation and the moving-domain electric AB.

Scenario builders (``fig1_spec`` and friends) return fully specified inputs
with the default geometry used throughout the tests and demos.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad

from .beams import (
    BeamSpec,
    WavefrontExpansion,
    beam_quadrature_value,
    broken_expansion,
    kannai_stationary_phase,
    straight_expansion,
    validity_time,
)
from .core import (
    Contour,
    Disk,
    Domain,
    GridField,
    GridSpec,
    Obstacle,
    PhysicalConstants,
    Segment,
    _step,
    domain_mask,
    perp,
    signed_distance,
    unit,
    vec,
    winding_number,
)
from .errors import (
    DegenerateGeometry,
    ErrorBudgetExceeded,
    InitialDataDegenerate,
    NoPathFound,
    OutsideTube,
    ValidationError,
    VanishingModulus,
)
from .gauge import GaugeField, canonical_flux_potential, combine, line_integral_flux, signed_angle
from .rays import BrokenRay, RayTube, trace_broken_ray
from .solver import (
    Dirichlet,
    DirichletPlusAbsorbingRim,
    MovingDomainSchedule,
    SolverConfig,
    backward_evolve,
    disk_grid,
    evolve,
    evolve_moving_domain,
    replace_potentials,
)

TWO_PI = 2.0 * math.pi
DETECTION_THRESHOLD = 0.05


# ----------------------------------------------------------------------------
# specs and reports

@dataclass(frozen=True)
class Given:
    k: float


@dataclass(frozen=True)
class Resonant:
    n: int
    k0: float = 0.0


KSelection = Union[Given, Resonant]


@dataclass
class MagneticABSpec:
    """Two beams meeting at the probe.

    Straight mode: both beams are based at the probe center x^(0).  Broken
    mode: ``beam_omega`` starts at x^(1) and reaches x^(0) after reflections,
    ``beam_theta`` is the straight beam from x^(2) = x^(0) - t0 theta.
    """

    domain: Domain
    field: GaugeField
    beam_omega: BeamSpec
    beam_theta: BeamSpec
    probe_center: tuple
    probe_radius: float
    k_selection: KSelection
    time: Optional[float] = None
    broken: bool = False
    flux_obstacle: Optional[str] = None
    probe_samples: int = 9
    tolerance: Optional[float] = None

    def __post_init__(self):
        self.probe_center = tuple(float(c) for c in vec(self.probe_center))
        if self.probe_radius < 0:
            raise ValidationError("probe_radius must be >= 0")

    @property
    def constants(self) -> PhysicalConstants:
        return self.field.constants


@dataclass
class InterferenceReport:
    measured_peak: float
    predicted: float
    alpha_used: float
    alpha_estimated: float
    relative_error: float
    k: float
    method_pair: Tuple[str, str]
    time: float = 0.0
    oracle_peak: Optional[float] = None
    oracle_agreement: Optional[float] = None
    normalization: float = 1.0
    partial_integrals: Dict[str, float] = field(default_factory=dict)
    profile: Optional[np.ndarray] = None  # rows (x1, x2, |u-v|^2)

    def numbers(self) -> Dict[str, float]:
        out = {
            "measured_peak": self.measured_peak,
            "predicted": self.predicted,
            "alpha_used": self.alpha_used,
            "alpha_estimated": self.alpha_estimated,
            "relative_error": self.relative_error,
            "k": self.k,
            "time": self.time,
            "normalization": self.normalization,
        }
        if self.oracle_peak is not None:
            out["oracle_peak"] = self.oracle_peak
            out["oracle_agreement"] = self.oracle_agreement
        return out

    def to_json(self) -> dict:
        d = self.numbers()
        d["method_pair"] = list(self.method_pair)
        d["partial_integrals"] = dict(self.partial_integrals)
        return d


def interference_prediction(alpha: float) -> float:
    return 4.0 * math.sin(0.5 * alpha) ** 2


def alpha_from_peak(peak: float) -> float:
    """2 arcsin(sqrt(peak)/2), with the peak clamped to [0, 4]."""
    p = min(max(float(peak), 0.0), 4.0)
    return 2.0 * math.asin(math.sqrt(p) / 2.0)


def _wrap_flux(a: float) -> float:
    """Representative of the flux class in [0, 2 pi)."""
    r = math.fmod(a, TWO_PI)
    if r < 0:
        r += TWO_PI
    if TWO_PI - r < 1e-12:
        r = 0.0
    return r


def _relative_error(measured: float, predicted: float, floor: float = 0.05) -> float:
    return abs(measured - predicted) / max(predicted, floor)


# ----------------------------------------------------------------------------
# flux helpers

def _obstacle_extent(o: Obstacle) -> Tuple[np.ndarray, float]:
    c = vec(o.shape.interior_point())
    if isinstance(o.shape, Disk):
        return c, o.shape.radius
    lo, hi = o.shape.bounds()
    corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
    return c, float(np.max(np.linalg.norm(corners - c, axis=1)))


def obstacle_flux(field_: GaugeField, domain: Domain, oid: str) -> float:
    """Flux around one obstacle from a circular contour hugging it."""
    o = domain.obstacle(oid)
    c, r = _obstacle_extent(o)
    margin = 0.5 * r
    for other in domain.obstacles:
        if other.id != oid:
            oc, orad = _obstacle_extent(other)
            margin = min(margin, 0.45 * (float(np.linalg.norm(oc - c)) - orad - r))
    if margin <= 0:
        raise DegenerateGeometry(f"no contour separates obstacle {oid!r} from its neighbours")
    contour = Contour.circle(c, r + margin, n=256)
    return line_integral_flux(field_, contour, domain).flux


def _probe_points(center, radius: float, n: int) -> np.ndarray:
    c = vec(center)
    if radius == 0 or n <= 1:
        return c[None, :]
    s = np.linspace(-radius, radius, n)
    P = np.stack(np.meshgrid(s, s), axis=-1).reshape(-1, 2)
    P = P[np.linalg.norm(P, axis=1) <= radius * (1 + 1e-12)]
    return c + P


# ----------------------------------------------------------------------------
# resonance

def resonant_k(spec: MagneticABSpec, n: int, k0: Optional[float] = None) -> float:
    """Smallest k_j = 2 pi j hbar / (m D), j >= n, above k0 (D the path-phase mismatch)."""
    w, th = spec.beam_omega.omega, spec.beam_theta.omega
    if np.allclose(w, th, atol=1e-14):
        raise DegenerateGeometry("omega = theta: the two beams coincide")
    if k0 is None:
        k0 = spec.k_selection.k0 if isinstance(spec.k_selection, Resonant) else 0.0
    D = _phase_mismatch(spec)
    c = spec.constants
    if abs(D) < 1e-14:
        return float(k0)
    base = TWO_PI * c.hbar / (c.mass * abs(D))
    j = max(int(n), 1)
    if base * j <= k0:
        j = int(math.floor(k0 / base)) + 1
    return base * j


def _phase_mismatch(spec: MagneticABSpec) -> float:
    if spec.broken:
        return float(spec.beam_omega.x0 @ spec.beam_omega.omega - spec.beam_theta.x0 @ spec.beam_theta.omega)
    x0 = vec(spec.probe_center)
    return float(x0 @ (spec.beam_omega.omega - spec.beam_theta.omega))


def selected_k(spec: MagneticABSpec) -> float:
    sel = spec.k_selection
    if isinstance(sel, Given):
        return float(sel.k)
    return resonant_k(spec, sel.n, sel.k0)


def _with_k(spec: MagneticABSpec, k: float) -> MagneticABSpec:
    return replace(spec, beam_omega=replace(spec.beam_omega, k=k), beam_theta=replace(spec.beam_theta, k=k))


# ----------------------------------------------------------------------------
# single obstacle

@dataclass(frozen=True)
class PdeOptions:
    """Direct-solver oracle settings; ``dt`` defaults to 0.2 hbar / (m k^2)."""

    points_per_wavelength: float = 12.0
    dt: Optional[float] = None
    margin: float = 1.0
    rim: float = 0.5
    progress: Optional[Callable[[float], None]] = None


def _strip_window(spec: BeamSpec, x, lo: float, hi: float, width: float):
    s, _ = spec.coords(x)
    return _step((s - lo) / width) * _step((hi - s) / width)


def _pde_difference(spec: MagneticABSpec, beams: Sequence[Tuple[BeamSpec, complex, float]], t: float,
                    points: np.ndarray, opts: PdeOptions) -> np.ndarray:
    """|u - v|^2 at ``points`` from one direct run with initial data u0 - v0.

    ``beams`` holds (spec, weight, travel) triples; each strip is windowed to
    the part whose characteristics reach the probe region by time t.
    """
    c = spec.constants
    k = beams[0][0].k
    h = TWO_PI * c.hbar / (c.mass * k) / opts.points_per_wavelength
    m = opts.margin
    corners = []
    for b, _, travel in beams:
        for s in (-travel - m, m):
            for tau in (-b.delta1 - m, b.delta1 + m):
                corners.append(b.x0 + s * b.omega + tau * b.normal)
    corners = np.array(corners + [p for p in points])
    lo = corners.min(axis=0) - opts.rim
    hi = corners.max(axis=0) + opts.rim
    x0 = vec(points[0]) if len(points) == 1 else vec(spec.probe_center)
    nlo = np.ceil((x0 - lo) / h)
    origin = x0 - nlo * h
    n = (np.ceil((hi - origin) / h) + 1).astype(int)
    grid = GridSpec(tuple(origin), h, int(n[0]), int(n[1]))
    mask = domain_mask(spec.domain, grid)
    P = grid.points()
    u0 = np.zeros(grid.shape, complex)
    for b, wgt, travel in beams:
        win = _strip_window(b, P, -travel - m, m, 0.5 * m)
        u0 += wgt * win * b.initial_data(P)
    dt = opts.dt if opts.dt is not None else 0.2 * c.hbar / (c.mass * k * k)
    cfg = SolverConfig(grid, dt, c, DirichletPlusAbsorbingRim(opts.rim))
    out = evolve(GridField(grid, u0, mask), spec.field, spec.domain, t, cfg, progress=opts.progress)[-1]
    return np.abs(out.interpolate(points)) ** 2


def magnetic_ab_single(spec: MagneticABSpec, oracle: str = "beam", beam_method: str = "stationary",
                       pde: Optional[PdeOptions] = None) -> InterferenceReport:
    """Single-obstacle interference |u - v|^2 over the probe disk (straight beams)."""
    if spec.broken:
        return magnetic_ab_broken(spec, oracle)
    if oracle not in ("beam", "pde", "both"):
        raise ValidationError(f"unknown oracle {oracle!r}")
    k = selected_k(spec)
    spec = _with_k(spec, k)
    bw, bt = spec.beam_omega, spec.beam_theta
    if not (np.allclose(bw.x0, spec.probe_center) and np.allclose(bt.x0, spec.probe_center)):
        raise ValidationError("straight-mode beams must be based at the probe center")
    for b in (bw, bt):
        b.check_support(spec.domain, travel=b.length)
    t = spec.time if spec.time is not None else 0.5 * validity_time(k)
    oid = spec.flux_obstacle or (spec.domain.obstacles[0].id if len(spec.domain.obstacles) == 1 else None)
    if oid is None:
        raise ValidationError("flux_obstacle must name the obstacle between the beams")
    alpha = obstacle_flux(spec.field, spec.domain, oid)
    x0 = vec(spec.probe_center)
    I1 = float(spec.field.ray_phase(x0, bw.omega, np.inf))
    I2 = float(spec.field.ray_phase(x0, bt.omega, np.inf))
    tail = alpha - (-I1 + I2)
    pts = _probe_points(x0, spec.probe_radius, spec.probe_samples)
    predicted = interference_prediction(alpha)

    if spec.tolerance is not None:
        spread = spec.probe_radius * bw.kappa * float(np.linalg.norm(bw.omega - bt.omega))
        budget = abs(predicted - interference_prediction(alpha - tail)) + 4.0 * min(1.0, spread) ** 2
        if budget > spec.tolerance:
            raise ErrorBudgetExceeded(f"error budget {budget:.3g} exceeds tolerance {spec.tolerance:.3g}")

    ew, et = straight_expansion(bw, spec.field), straight_expansion(bt, spec.field)
    beam_vals = None
    if oracle in ("beam", "both"):
        if beam_method == "stationary":
            u = np.array([kannai_stationary_phase(ew, spec.field, p, t) for p in pts])
            v = np.array([kannai_stationary_phase(et, spec.field, p, t) for p in pts])
        elif beam_method == "quadrature":
            u = np.array([beam_quadrature_value(ew, p, t) for p in pts])
            v = np.array([beam_quadrature_value(et, p, t) for p in pts])
        else:
            raise ValidationError(f"unknown beam method {beam_method!r}")
        beam_vals = np.abs(u - v) ** 2
    pde_vals = None
    if oracle in ("pde", "both"):
        travel = k * t
        pde_vals = _pde_difference(spec, [(bw, 1.0, travel), (bt, -1.0, travel)], t, pts, pde or PdeOptions())
    main = beam_vals if beam_vals is not None else pde_vals
    peak = float(np.max(main))
    rep = InterferenceReport(
        measured_peak=peak,
        predicted=predicted,
        alpha_used=_wrap_flux(alpha),
        alpha_estimated=alpha_from_peak(peak),
        relative_error=_relative_error(peak, predicted),
        k=k,
        method_pair=(f"beam:{beam_method}" if beam_vals is not None else "pde", "pde" if oracle == "both" else "prediction"),
        time=t,
        partial_integrals={"I1": I1, "I2": I2, "I3_inf": tail},
        profile=np.column_stack([pts, main]),
    )
    if oracle == "both":
        rep.oracle_peak = float(np.max(pde_vals))
        rep.oracle_agreement = abs(rep.oracle_peak - peak) / max(peak, 1e-12)
    return rep


# ----------------------------------------------------------------------------
# broken rays

def _broken_geometry(spec: MagneticABSpec):
    bw, bt = spec.beam_omega, spec.beam_theta
    ray = trace_broken_ray(bw.x0, bw.omega, spec.domain)
    tube = RayTube(ray, bw.delta1, spec.domain)
    x0 = vec(spec.probe_center)
    leg = len(ray.legs)
    for p in range(len(ray.legs), 0, -1):
        try:
            eta, L = tube.locate(x0, p)
            leg = p
            break
        except OutsideTube:
            continue
    else:
        raise OutsideTube("probe center is not covered by the broken beam")
    return ray, tube, leg, eta, L


def broken_flux_integrals(spec: MagneticABSpec) -> Dict[str, float]:
    """I1 along gamma(x^(0)), I2 along beta, I3 along sigma (x^(2) -> x^(1)) and the enclosed sum."""
    ray, tube, leg, eta, L = _broken_geometry(spec)
    member = tube.member(eta)
    path = member.polyline(0.0, L)
    f = spec.field
    I1 = f.polyline_phase(path)
    x0 = vec(spec.probe_center)
    x1, x2 = spec.beam_omega.x0, spec.beam_theta.x0
    I2 = float(f.segment_phase(x2, x0))
    I3 = float(f.segment_phase(x2, x1))
    loop = Contour(list(path) + [x2])
    enclosed = 0.0
    wind = {}
    for o in spec.domain.obstacles:
        w = winding_number(loop, o.shape.interior_point())
        wind[o.id] = w
        if w:
            enclosed += w * obstacle_flux(f, spec.domain, o.id)
    return {"I1": I1, "I2": I2, "I3": I3, "alpha": I1 - I2 + I3, "enclosed": enclosed,
            "t0": L, "leg": leg, "windings": wind}


def magnetic_ab_broken(spec: MagneticABSpec, oracle: str = "beam", pde: Optional[PdeOptions] = None) -> InterferenceReport:
    """Broken-ray interference at x^(0), normalized by |2 c_0(x^(0))|^2."""
    if oracle not in ("beam", "pde", "both"):
        raise ValidationError(f"unknown oracle {oracle!r}")
    k = selected_k(spec)
    spec = _with_k(spec, k)
    bw, bt = spec.beam_omega, spec.beam_theta
    bw.check_support(spec.domain)
    ints = broken_flux_integrals(spec)
    t0 = ints["t0"]
    t = spec.time if spec.time is not None else t0 / k
    x0 = vec(spec.probe_center)
    ex = broken_expansion(bw, spec.field, spec.domain)
    c = spec.constants
    carrier = -c.mass * k * k * t / (2 * c.hbar)
    tprime = k * t
    u_center = kannai_stationary_phase(ex, spec.field, x0, t)
    # straight beam from x^(2) with amplitude matched to u at the probe center
    c0 = abs(u_center)
    sign = (-1) ** (ints["leg"] - 1)
    weight = sign * c0

    def v_at(p):
        s, tau = bt.coords(p, tprime)
        amp = bt.transverse(tau) * bt.longitudinal(s)
        ph = spec.field.ray_phase(p, bt.omega, tprime)
        return weight * amp * np.exp(1j * (carrier + bt.kappa * float(p @ bt.omega) + ph))

    pts = _probe_points(x0, spec.probe_radius, spec.probe_samples)
    norm = c0 ** 2
    if norm < 1e-12:
        raise ErrorBudgetExceeded("|c_0| vanishes at the probe center")
    vals = None
    if oracle in ("beam", "both"):
        vals = np.array([abs(kannai_stationary_phase(ex, spec.field, p, t) - v_at(p)) ** 2 for p in pts]) / norm
    pde_vals = None
    if oracle in ("pde", "both"):
        bt_w = bt
        pde_vals = _pde_difference(spec, [(bw, 1.0, t0), (bt_w, -weight, t0)], t, pts, pde or PdeOptions()) / norm
    main = vals if vals is not None else pde_vals
    peak = float(np.max(main))
    alpha = ints["alpha"]
    predicted = interference_prediction(alpha)
    rep = InterferenceReport(
        measured_peak=peak,
        predicted=predicted,
        alpha_used=_wrap_flux(alpha),
        alpha_estimated=alpha_from_peak(peak),
        relative_error=_relative_error(peak, predicted),
        k=k,
        method_pair=("beam:stationary" if vals is not None else "pde", "pde" if oracle == "both" else "prediction"),
        time=t,
        normalization=norm,
        partial_integrals={kk: float(vv) for kk, vv in ints.items() if kk != "windings"},
        profile=np.column_stack([pts, main]),
    )
    if oracle == "both":
        rep.oracle_peak = float(np.max(pde_vals))
        rep.oracle_agreement = abs(rep.oracle_peak - peak) / max(peak, 1e-12)
    return rep


# ----------------------------------------------------------------------------
# mirror interferometer

def _mirror_path(p0, p1, mirror: Segment, domain: Domain):
    a, b = vec(mirror.a), vec(mirror.b)
    d = unit(b - a)
    n = perp(d)
    # image of p1 in the mirror line
    img = p1 - 2.0 * float((p1 - a) @ n) * n
    w = img - p0
    denom = float(w @ n)
    if abs(denom) < 1e-14:
        raise NoPathFound("source ray parallel to mirror")
    s = float((a - p0) @ n) / denom
    q = p0 + s * w
    lam = float((q - a) @ d) / float(np.linalg.norm(b - a))
    if not (0 < s < 1 and 0.0 < lam < 1.0):
        raise NoPathFound("reflection point falls outside the mirror")
    return unit(q - p0), q


def mirror_interferometer(p0, p1, mirrors: Tuple[Segment, Segment], obstacle: Obstacle, field_: GaugeField,
                          k: float, delta1: float = 0.3, delta2: float = 0.05, probe_radius: float = 0.0,
                          probe_samples: int = 9) -> InterferenceReport:
    """Two single-reflection beams from p0, recombined at p1."""
    p0, p1 = vec(p0), vec(p1)
    obs = (Obstacle(mirrors[0], "M1"), Obstacle(mirrors[1], "M2"), obstacle)
    allpts = np.array([p0, p1, vec(mirrors[0].a), vec(mirrors[0].b), vec(mirrors[1].a), vec(mirrors[1].b)])
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    span = float(np.max(hi - lo)) + 10.0
    domain = Domain(obs, (tuple(lo - span), tuple(hi + span)))
    beams = []
    for j, m in enumerate(mirrors):
        w, q = _mirror_path(p0, p1, m, domain)
        L = float(np.linalg.norm(q - p0) + np.linalg.norm(p1 - q))
        ray = trace_broken_ray(p0, w, domain, max_reflections=4, s_max=L)
        if not ray.hits or ray.hits[0] != f"M{j + 1}":
            raise NoPathFound(f"path via mirror {j + 1} is blocked")
        if np.linalg.norm(ray.point_at(L) - p1) > 1e-6 * max(1.0, L):
            raise NoPathFound(f"path via mirror {j + 1} misses the target")
        spec = BeamSpec(tuple(p0), tuple(w), k, delta1, delta2, constants=field_.constants)
        spec.check_support(domain)
        beams.append((spec, ray, L))
    c = field_.constants
    (s1, r1, L1), (s2, r2, L2) = beams
    t = L1 / k
    e1 = broken_expansion(s1, field_, domain)
    e2 = broken_expansion(s2, field_, domain)
    pts = _probe_points(p1, probe_radius, probe_samples)
    u = np.array([kannai_stationary_phase(e1, field_, p, t) for p in pts])
    v = np.array([kannai_stationary_phase(e2, field_, p, t) for p in pts])
    norm = abs(u[0]) * abs(v[0])
    vals = np.abs(u - v) ** 2 / norm
    I1 = field_.polyline_phase(r1.polyline(0.0, L1))
    I2 = field_.polyline_phase(r2.polyline(0.0, L2))
    alpha = I1 - I2
    peak = float(np.max(vals))
    predicted = interference_prediction(alpha)
    return InterferenceReport(peak, predicted, _wrap_flux(alpha), alpha_from_peak(peak),
                              _relative_error(peak, predicted), k, ("beam:stationary", "prediction"), t,
                              normalization=norm, partial_integrals={"I1": I1, "I2": I2},
                              profile=np.column_stack([pts, vals]))


def estimate_flux(reports: Sequence[InterferenceReport]) -> Dict[float, float]:
    if len({round(r.alpha_used, 12) for r in reports}) < 3:
        raise ValidationError("estimate_flux needs at least three distinct flux values")
    return {r.alpha_used: alpha_from_peak(r.measured_peak) for r in reports}


def fit_interference_law(reports: Sequence[InterferenceReport]) -> Tuple[float, float]:
    """Least-squares amplitude c in peak = c sin^2(alpha/2), and R^2."""
    s = np.array([math.sin(0.5 * r.alpha_used) ** 2 for r in reports])
    y = np.array([r.measured_peak for r in reports])
    c = float(s @ y / (s @ s))
    ss_res = float(np.sum((y - c * s) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return c, 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


# ----------------------------------------------------------------------------
# electric AB

def hold_bump(T_hold: float, margin: float = 0.05):
    """Normalized smooth bump strictly inside the hold window (1/2, T + 1/2)."""
    a, b = 0.5 + margin, 0.5 + T_hold - margin
    if b <= a:
        raise ValidationError("hold window too short for the potential margin")
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    from .core import mollifier

    z = quad(lambda s: float(mollifier(s)), -1, 1, limit=200)[0] * half
    return lambda t: float(mollifier((t - mid) / half)) / z


@dataclass
class ElectricABSpec:
    schedule: MovingDomainSchedule
    initial: Union[GridField, str]
    alpha1: float
    alpha2: float
    final_state: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def alpha_difference(self) -> float:
        return self.alpha1 - self.alpha2


def packet_pair(center_offset: float = 0.75, width: float = 0.08, k0: float = 3.0):
    """Two Gaussian packets at (0, +-offset) heading towards the center."""
    def f(x):
        x = np.asarray(x, dtype=float)
        up = np.exp(-(x[..., 0] ** 2 + (x[..., 1] - center_offset) ** 2) / (2 * width ** 2) - 1j * k0 * x[..., 1])
        dn = np.exp(-(x[..., 0] ** 2 + (x[..., 1] + center_offset) ** 2) / (2 * width ** 2) + 1j * k0 * x[..., 1])
        return up + dn
    return f


def fig4_spec(alpha1: float, alpha2: float = 0.0, T_hold: float = 0.5, constants=PhysicalConstants(),
              final_state=None, connected: bool = False) -> ElectricABSpec:
    """Standard schedule with V_j = alpha_j (hbar/e) b(t).

    ``connected`` keeps tau >= 0.1 throughout and applies the spatially
    constant potential alpha1 (hbar/e) b(t) on the whole disk.
    """
    if connected:
        alpha2 = alpha1
    b = hold_bump(T_hold)
    s1 = constants.hbar / constants.charge * alpha1
    s2 = constants.hbar / constants.charge * alpha2
    V1 = lambda t: s1 * b(t)
    V2 = lambda t: s2 * b(t)
    if connected:
        T = T_hold

        def tau(t):
            if t <= 0.5:
                return 0.5 - 0.8 * t
            if t <= T + 0.5:
                return 0.1
            return min(0.1 + 0.8 * (t - 0.5 - T), 0.5)

        sched = MovingDomainSchedule(tau, 0.5, T_hold, V1, V2)
    else:
        sched = MovingDomainSchedule.standard(T_hold, V1, V2)
    return ElectricABSpec(sched, "backward", alpha1, alpha2, final_state or packet_pair())


@dataclass
class ElectricABReport:
    times: List[float]
    differences: List[float]
    verdict: bool
    detected: bool
    alpha_difference: float
    threshold: float
    hold_norms: Tuple[float, float]
    max_difference: float

    def to_json(self) -> dict:
        return {
            "times": self.times,
            "differences": self.differences,
            "verdict": self.verdict,
            "detected": self.detected,
            "alpha_difference": self.alpha_difference,
            "threshold": self.threshold,
            "hold_norms": list(self.hold_norms),
            "max_difference": self.max_difference,
        }


def electric_ab(spec: ElectricABSpec, config: SolverConfig, sample_times: Optional[Sequence[float]] = None,
                threshold: float = DETECTION_THRESHOLD) -> ElectricABReport:
    """Run the schedule with and without the potentials and compare densities after reopening."""
    sched = spec.schedule
    grid = config.grid
    T = sched.T_hold
    t_hold = T + 0.5
    if sample_times is None:
        sample_times = list(np.linspace(t_hold, T + 1.0, 11)[1:])
    zero = replace_potentials(sched)
    if isinstance(spec.initial, GridField):
        u0 = spec.initial
    else:
        mask_h = sched.mask(grid, t_hold)
        fin = GridField(grid, spec.final_state(grid.points()), mask_h)
        u0 = backward_evolve(fin, zero, t_hold, config, t_final=t_hold)
    times = sorted(set([t_hold] + [float(s) for s in sample_times]))
    ref = evolve_moving_domain(u0, zero, config, times)
    hold = ref[times.index(t_hold)]
    X2 = grid.mesh()[1]
    n_up = float(np.sum(np.abs(hold.values[X2 > 0]) ** 2))
    n_dn = float(np.sum(np.abs(hold.values[X2 < 0]) ** 2))
    tot = n_up + n_dn
    if tot == 0 or min(n_up, n_dn) < 0.01 * tot:
        raise InitialDataDegenerate("hold-window state is (nearly) empty on one component")
    run = evolve_moving_domain(u0, sched, config, times)
    diffs, out_t = [], []
    for t, a, b in zip(times, run, ref):
        if t <= t_hold:
            continue
        da, db = a.density(), b.density()
        diffs.append(float(np.linalg.norm(da - db) / max(np.linalg.norm(db), 1e-300)))
        out_t.append(t)
    mx = max(diffs) if diffs else 0.0
    detected = mx > threshold
    dal = spec.alpha_difference
    quantized = abs(dal / TWO_PI - round(dal / TWO_PI)) < 1e-9
    return ElectricABReport(out_t, diffs, detected != quantized, detected, dal, threshold,
                            (n_up / tot, n_dn / tot), mx)


# ----------------------------------------------------------------------------
# Madelung decomposition

@dataclass
class MadelungDecomposition:
    R: np.ndarray
    Phi: np.ndarray
    residual_transport: float
    residual_hj: float
    evaluation_mask: np.ndarray


def _lap4(v: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order five-point-per-axis Laplacian (valid two cells from the edge)."""
    out = np.zeros_like(v)
    c = v[2:-2, 2:-2]
    out[2:-2, 2:-2] = (
        -v[2:-2, 4:] + 16 * v[2:-2, 3:-1] - 30 * c + 16 * v[2:-2, 1:-3] - v[2:-2, :-4]
        - v[4:, 2:-2] + 16 * v[3:-1, 2:-2] - 30 * c + 16 * v[1:-3, 2:-2] - v[:-4, 2:-2]
    ) / (12 * h * h)
    return out


def unwrap_phase(v: np.ndarray, threshold: float) -> np.ndarray:
    """Flood fill from the max-|v| cell, adding wrapped neighbour increments; NaN below threshold."""
    R = np.abs(v)
    ok = R > threshold
    Phi = np.full(v.shape, np.nan)
    if not ok.any():
        return Phi
    start = np.unravel_index(np.argmax(R), v.shape)
    Phi[start] = float(np.angle(v[start]))
    q = deque([start])
    ny, nx = v.shape
    while q:
        j, i = q.popleft()
        for dj, di in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            jj, ii = j + dj, i + di
            if 0 <= jj < ny and 0 <= ii < nx and ok[jj, ii] and np.isnan(Phi[jj, ii]):
                Phi[jj, ii] = Phi[j, i] + float(np.angle(v[jj, ii] * np.conj(v[j, i])))
                q.append((jj, ii))
    return Phi


def madelung_residual(snapshot_pair: Tuple[GridField, GridField], constants: PhysicalConstants, dt: float,
                      evaluation_mask: Optional[np.ndarray] = None, threshold: float = 1e-3) -> MadelungDecomposition:
    """Residuals of -hbar R_t = (hbar^2/2m)(2 grad R.grad Phi + R Lap Phi) and
    hbar Phi_t R = (hbar^2/2m)(Lap R - R |grad Phi|^2) on a snapshot pair dt apart.

    Spatial terms use Im/Re(conj(v) Lap v)/R with a fourth-order Laplacian,
    averaged over the two snapshots; time derivatives are centred differences.
    """
    a, b = snapshot_pair
    if a.spec != b.spec:
        raise ValidationError("snapshots must share a grid")
    if not dt > 0:
        raise ValidationError("dt must be positive")
    h = a.spec.spacing
    hb, m = constants.hbar, constants.mass
    v0, v1 = a.values, b.values
    R0, R1 = np.abs(v0), np.abs(v1)
    Rm = 0.5 * (R0 + R1)
    thr = threshold * float(Rm.max()) if Rm.max() > 0 else 0.0
    interior = np.zeros(v0.shape, bool)
    interior[2:-2, 2:-2] = True
    from scipy.ndimage import binary_erosion

    dom = binary_erosion(a.mask & b.mask, iterations=2) & interior
    if evaluation_mask is None:
        sig = np.argwhere((Rm > thr) & dom)
        ev = np.zeros(v0.shape, bool)
        if len(sig):
            (j0, i0), (j1, i1) = sig.min(axis=0), sig.max(axis=0)
            ev[j0:j1 + 1, i0:i1 + 1] = True
        ev &= dom
    else:
        ev = np.asarray(evaluation_mask, bool) & dom
    good = ev & (R0 > thr) & (R1 > thr)
    if ev.sum() == 0 or good.sum() < 0.5 * ev.sum():
        raise VanishingModulus("modulus below threshold on more than half of the evaluation set")
    L0, L1 = _lap4(v0, h), _lap4(v1, h)
    with np.errstate(divide="ignore", invalid="ignore"):
        q0 = np.conj(v0) * L0 / R0
        q1 = np.conj(v1) * L1 / R1
        qm = 0.5 * (q0 + q1)
        Rt = (R1 - R0) / dt
        Pt = np.angle(v1 * np.conj(v0)) / dt
        res_tr = hb * Rt + (hb * hb / (2 * m)) * qm.imag
        res_hj = hb * Pt * Rm - (hb * hb / (2 * m)) * qm.real
    rt = float(np.sqrt(np.sum(np.abs(res_tr[good]) ** 2)) * h)
    rh = float(np.sqrt(np.sum(np.abs(res_hj[good]) ** 2)) * h)
    Phi = unwrap_phase(0.5 * (v0 + v1), thr)
    return MadelungDecomposition(Rm, Phi, rt, rh, good)


@dataclass
class RefinementStudy:
    levels: List[Tuple[float, float]]
    transport: List[float]
    hj: List[float]

    @property
    def orders(self) -> Dict[str, List[float]]:
        def rate(r):
            return [math.log2(r[i] / r[i + 1]) for i in range(len(r) - 1)]
        return {"transport": rate(self.transport), "hj": rate(self.hj)}

    def to_json(self) -> dict:
        return {"levels": [list(l) for l in self.levels], "transport": self.transport, "hj": self.hj,
                "orders": self.orders}


def madelung_refinement_study(levels: Sequence[Tuple[float, float]] = ((0.04, 4e-3), (0.02, 2e-3), (0.01, 1e-3)),
                              t: float = 0.02, width: float = 0.15, k0: float = 4.0,
                              constants: PhysicalConstants = PhysicalConstants()) -> RefinementStudy:
    """Madelung residuals of solver output on the open unit disk under joint (h, dt) refinement.

    The snapshot pair (t, t + dt) is taken before the packet reaches the
    wall: staircase reflections are not smooth and the residual does not
    converge there.
    """
    f = lambda x: np.exp(-((x[..., 0] + 0.1) ** 2 + x[..., 1] ** 2) / (2 * width ** 2) + 1j * k0 * x[..., 0])
    sched = MovingDomainSchedule.fixed(2.0)
    tr, hj = [], []
    for h, dt in levels:
        g = disk_grid(h)
        cfg = SolverConfig(g, dt, constants, Dirichlet())
        u0 = GridField(g, f(g.points()), sched.mask(g, 0.0))
        a, b = evolve_moving_domain(u0, sched, cfg, [t, t + dt])
        m = madelung_residual((a, b), constants, dt)
        tr.append(m.residual_transport)
        hj.append(m.residual_hj)
    return RefinementStudy([tuple(l) for l in levels], tr, hj)


# ----------------------------------------------------------------------------
# default scenarios

def fig1_spec(alpha: float, k: float = 80.0, L: float = 4.0, tan_phi: float = 0.05, depth: float = 2.5,
              radius: float = 0.04, delta1: float = 0.06, delta2: float = 0.09, probe_radius: float = 0.001,
              constants: PhysicalConstants = PhysicalConstants(), k_selection: Optional[KSelection] = None) -> MagneticABSpec:
    """Single obstacle below x^(0) = (0, L) between beams omega = (sin phi, cos phi) and theta = (-sin phi, cos phi)."""
    phi = math.atan(tan_phi)
    center = (0.0, L - depth)
    obst = Obstacle(Disk(center, radius), "obstacle")
    R = 5.0 * L + 20.0
    domain = Domain((obst,), ((-R, -R), (R, R)))
    fld = canonical_flux_potential(center, alpha, constants, "obstacle")
    w = (math.sin(phi), math.cos(phi))
    th = (-math.sin(phi), math.cos(phi))
    bw = BeamSpec((0.0, L), w, k, delta1, delta2, constants=constants)
    bt = BeamSpec((0.0, L), th, k, delta1, delta2, constants=constants)
    return MagneticABSpec(domain, fld, bw, bt, (0.0, L), probe_radius, k_selection or Given(k),
                          flux_obstacle="obstacle")


def pde_oracle_spec(alpha: float, k: float = 80.0, phi_deg: float = 45.0, delta1: float = 1.5,
                    depth: float = 2.26, radius: float = 0.05, time: float = 0.05,
                    constants: PhysicalConstants = PhysicalConstants()) -> MagneticABSpec:
    """Wide-angle geometry small enough for the direct solver: beams at +-phi through the origin,
    a thin solenoid ``depth`` below the probe."""
    phi = math.radians(phi_deg)
    center = (0.0, -depth)
    obst = Obstacle(Disk(center, radius), "solenoid")
    domain = Domain((obst,), ((-50, -50), (50, 50)))
    fld = canonical_flux_potential(center, alpha, constants, "solenoid")
    w = (math.sin(phi), math.cos(phi))
    th = (-math.sin(phi), math.cos(phi))
    d2 = (k * time + 1.5) * 2 / k
    bw = BeamSpec((0.0, 0.0), w, k, delta1, d2, constants=constants)
    bt = BeamSpec((0.0, 0.0), th, k, delta1, d2, constants=constants)
    return MagneticABSpec(domain, fld, bw, bt, (0.0, 0.0), 0.0, Given(k), time=time, flux_obstacle="solenoid",
                          probe_samples=1)


def _reflector(point, incoming, outgoing, radius):
    """Disk whose boundary reflects ``incoming`` into ``outgoing`` at ``point``."""
    p = vec(point)
    n = unit(-unit(incoming) + unit(outgoing))
    return Disk(tuple(p - radius * n), radius)


FIG2_POINTS = {
    "x1": (2.0, 2.0),
    "p1": (5.0, 3.0),
    "p2": (3.0, 7.0),
    "x0": (-1.0, 8.0),
    "theta": (-1.0, 8.0),
    "O3": (2.5, 4.5),
}


def fig2_spec(enclosed_flux: float = math.pi, decoy_flux: float = 0.7, k0: float = 80.0, resonant_n: int = 1,
              reflector_radius: float = 2.0, center_radius: float = 1.0, delta1: float = 0.01,
              delta2: float = 0.02, probe_radius: float = 0.002, constants: PhysicalConstants = PhysicalConstants(),
              other_flux: float = 0.0) -> MagneticABSpec:
    """Two reflecting disks and an enclosed disk, laid out as in the several-obstacle figure.

    The reflectors are placed so that the ray from x^(1) through p1 and p2
    reaches x^(0) exactly; the decoy flux sits on the first reflector.
    """
    P = {k_: vec(v) for k_, v in FIG2_POINTS.items()}
    O1 = _reflector(P["p1"], P["p1"] - P["x1"], P["p2"] - P["p1"], reflector_radius)
    O2 = _reflector(P["p2"], P["p2"] - P["p1"], P["x0"] - P["p2"], reflector_radius)
    O3 = Disk(tuple(P["O3"]), center_radius)
    domain = Domain((Obstacle(O1, "O1"), Obstacle(O2, "O2"), Obstacle(O3, "O3")), ((-30, -30), (30, 30)))
    fld = combine(
        canonical_flux_potential(O1.center, decoy_flux, constants, "O1"),
        canonical_flux_potential(O2.center, other_flux, constants, "O2"),
        canonical_flux_potential(O3.center, enclosed_flux, constants, "O3"),
    )
    t0 = float(np.linalg.norm(P["p1"] - P["x1"]) + np.linalg.norm(P["p2"] - P["p1"]) + np.linalg.norm(P["x0"] - P["p2"]))
    theta = unit(P["theta"])
    x2 = P["x0"] - t0 * theta
    bw = BeamSpec(tuple(P["x1"]), tuple(P["p1"] - P["x1"]), k0, delta1, delta2, constants=constants)
    bt = BeamSpec(tuple(x2), tuple(theta), k0, delta1, delta2, constants=constants)
    return MagneticABSpec(domain, fld, bw, bt, tuple(P["x0"]), probe_radius, Resonant(resonant_n, k0),
                          broken=True)


def fig3_setup(alpha: float, constants: PhysicalConstants = PhysicalConstants(), obstacle_radius: float = 0.5):
    """Symmetric mirror interferometer: source (0, 0), target (0, 8), mirrors at x1 = +-3."""
    m1 = Segment((3.0, 2.0), (3.0, 6.0))
    m2 = Segment((-3.0, 6.0), (-3.0, 2.0))
    obst = Obstacle(Disk((0.0, 4.0), obstacle_radius), "obstacle")
    fld = canonical_flux_potential((0.0, 4.0), alpha, constants, "obstacle")
    return (0.0, 0.0), (0.0, 8.0), (m1, m2), obst, fld


def kannai_scenario(k: float, flux: float = 1.0, offset: float = 0.3, depth: float = 0.5,
                    constants: PhysicalConstants = PhysicalConstants()):
    """Beam along x2 through the origin with a point flux ``depth`` behind and ``offset`` to the side."""
    fld = canonical_flux_potential((offset, -depth), flux, constants, "flux")
    spec = BeamSpec((0.0, 0.0), (0.0, 1.0), k, 1.0, 0.5, constants=constants)
    return spec, fld


def save_report(obj, path) -> None:
    data = obj.to_json() if hasattr(obj, "to_json") else obj
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
