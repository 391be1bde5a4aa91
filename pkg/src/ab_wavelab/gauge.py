"""Curl-free vector potentials with prescribed fluxes, and gauge transforms.

A field is a sum of canonical flux terms, one per obstacle,

    A_j(x) = (flux_j * hbar c / e) / (2 pi) * (-(x2 - c2), x1 - c1) / |x - c|^2,

plus an optional smooth compactly supported term.  Line integrals of the
canonical terms along straight segments are exact (the swept angle); the
adaptive-quadrature route in :func:`line_integral_flux` is kept independent
of that shortcut so the two can be checked against each other.

Gauge convention: a transform with phase Lambda(x) = sum_j p_j theta_j(x) +
phi(x)/hbar maps A -> A + (hbar c / e) grad Lambda and u -> exp(i Lambda) u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import integrate

from .core import Contour, Domain, PhysicalConstants, cross, signed_distance, vec, winding_number
from .errors import (
    BadBasis,
    ContourIntersectsObstacle,
    EvaluationAtCenter,
    ValidationError,
)

TWO_PI = 2.0 * math.pi


def signed_angle(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Angle in (-pi, pi] that rotates u onto v (counterclockwise positive)."""
    return np.arctan2(cross(u, v), np.sum(u * v, axis=-1))


def wrap_angle(a):
    """Reduce to [-pi, pi)."""
    return (np.asarray(a) + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class FluxTerm:
    center: tuple
    flux: float
    obstacle_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in vec(self.center)))
        if not np.isfinite(self.flux):
            raise ValidationError("flux must be finite")


def _canonical(x: np.ndarray, center, flux: float, constants: PhysicalConstants) -> np.ndarray:
    d = x - np.asarray(center)
    r2 = np.sum(d * d, axis=-1)
    if np.any(r2 == 0):
        raise EvaluationAtCenter(f"canonical potential evaluated at its center {center}")
    scale = flux / constants.coupling / TWO_PI
    return scale * np.stack([-d[..., 1], d[..., 0]], axis=-1) / r2[..., None]


@dataclass(frozen=True)
class GaugeField:
    """Vector potential A and scalar potential V."""

    constants: PhysicalConstants = PhysicalConstants()
    flux_terms: tuple = ()
    smooth_term: Optional[Callable[[np.ndarray], np.ndarray]] = None
    scalar_potential: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "flux_terms", tuple(self.flux_terms))

    # -- evaluation ---------------------------------------------------------
    def A(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for t in self.flux_terms:
            if t.flux != 0:
                out = out + _canonical(x, t.center, t.flux, self.constants)
        if self.smooth_term is not None:
            out = out + np.asarray(self.smooth_term(x), dtype=float)
        return out

    def V(self, x, t: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.scalar_potential is None:
            return np.zeros(x.shape[:-1])
        return np.broadcast_to(np.asarray(self.scalar_potential(x, t), dtype=float), x.shape[:-1])

    def divergence(self, x, h: float = 1e-5) -> np.ndarray:
        """div A; the canonical terms are divergence free."""
        x = np.asarray(x, dtype=float)
        if self.smooth_term is None:
            return np.zeros(x.shape[:-1])
        e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
        f = self.smooth_term
        return ((f(x + e1)[..., 0] - f(x - e1)[..., 0]) + (f(x + e2)[..., 1] - f(x - e2)[..., 1])) / (2 * h)

    @property
    def is_static(self) -> bool:
        return self.scalar_potential is None

    def term_for(self, obstacle_id: str) -> Optional[FluxTerm]:
        for t in self.flux_terms:
            if t.obstacle_id == obstacle_id:
                return t
        return None

    def with_flux(self, obstacle_id: str, flux: float) -> "GaugeField":
        terms = [replace(t, flux=flux) if t.obstacle_id == obstacle_id else t for t in self.flux_terms]
        if all(t.obstacle_id != obstacle_id for t in self.flux_terms):
            raise KeyError(obstacle_id)
        return replace(self, flux_terms=tuple(terms))

    def validate(self, domain: Domain) -> None:
        """Every flux center must lie strictly inside exactly one obstacle."""
        for t in self.flux_terms:
            inside = [o.id for o in domain.obstacles if o.signed_distance(np.array(t.center)) < 0]
            if len(inside) != 1:
                raise ValidationError(f"flux center {t.center} must lie inside exactly one obstacle")
            if t.obstacle_id is not None and inside[0] != t.obstacle_id:
                raise ValidationError(
                    f"flux center {t.center} lies in {inside[0]!r}, not {t.obstacle_id!r}"
                )

    # -- line integrals (fast path) ----------------------------------------
    def segment_phase(self, a, b, smooth_points: int = 8) -> np.ndarray:
        """(e/hbar c) * integral of A.dl along straight segments a -> b.

        Canonical terms use the swept angle exactly; the smooth term uses
        Gauss-Legendre with ``smooth_points`` nodes per segment.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape)[:-1])
        for t in self.flux_terms:
            if t.flux != 0:
                c = np.asarray(t.center)
                out = out + t.flux / TWO_PI * signed_angle(a - c, b - c)
        if self.smooth_term is not None:
            xg, wg = np.polynomial.legendre.leggauss(smooth_points)
            d = b - a
            acc = 0.0
            for xi, wi in zip(xg, wg):
                p = a + 0.5 * (xi + 1.0) * d
                acc = acc + 0.5 * wi * np.sum(self.smooth_term(p) * d, axis=-1)
            out = out + self.constants.coupling * acc
        return out

    def ray_phase(self, x, direction, length=np.inf) -> np.ndarray:
        """(e/hbar c) * integral_0^length direction.A(x - s direction) ds.

        This is the phase carried by a beam travelling along ``direction`` that
        arrives at ``x`` after covering ``length``; ``length`` may be inf.
        """
        x = np.asarray(x, dtype=float)
        w = np.asarray(direction, dtype=float)
        length = np.asarray(length, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], length.shape)
        out = np.zeros(shape)
        L = np.broadcast_to(length, shape)
        inf = ~np.isfinite(L)
        foot = x - np.where(inf, 0.0, L)[..., None] * w
        for t in self.flux_terms:
            if t.flux == 0:
                continue
            c = np.asarray(t.center)
            # an infinite ray starts "at" direction -w as seen from any center
            u = np.where(inf[..., None], -w, foot - c)
            out = out + t.flux / TWO_PI * signed_angle(u, x - c)
        if self.smooth_term is not None:
            out = out + self._smooth_ray_phase(x, w, length)
        return out

    def _smooth_ray_phase(self, x, w, length):
        x = np.asarray(x, dtype=float)
        length = np.broadcast_to(length, x.shape[:-1])
        flat_x = x.reshape(-1, 2)
        flat_L = np.broadcast_to(length, x.shape[:-1]).reshape(-1)
        res = np.empty(len(flat_x))
        for i, (p, L) in enumerate(zip(flat_x, flat_L)):
            f = lambda s: float(w @ self.smooth_term((p - s * w)[None, :])[0])
            # dyadic pieces so quad cannot step over a compact bump
            edges = [0.0] + [2.0 ** j for j in range(22) if 2.0 ** j < L] + [float(L)]
            res[i] = sum(integrate.quad(f, a, b, limit=200, epsabs=1e-13)[0] for a, b in zip(edges[:-1], edges[1:]))
        return self.constants.coupling * res.reshape(x.shape[:-1])

    def polyline_phase(self, points) -> float:
        p = vec(points)
        return float(np.sum(self.segment_phase(p[:-1], p[1:])))


def canonical_flux_potential(center, flux: float, constants: PhysicalConstants = PhysicalConstants(),
                             obstacle_id: Optional[str] = None) -> GaugeField:
    """Single canonical flux term as a field."""
    return GaugeField(constants, (FluxTerm(center, flux, obstacle_id),))


def combine(*fields: GaugeField) -> GaugeField:
    """Sum of fields sharing constants (smooth terms and scalar potentials add)."""
    c = fields[0].constants
    terms = tuple(t for f in fields for t in f.flux_terms)
    smooth = [f.smooth_term for f in fields if f.smooth_term is not None]
    pots = [f.scalar_potential for f in fields if f.scalar_potential is not None]
    s = (lambda x: sum(g(x) for g in smooth)) if smooth else None
    v = (lambda x, t: sum(g(x, t) for g in pots)) if pots else None
    return GaugeField(c, terms, s, v)


# ----------------------------------------------------------------------------
# flux reports

@dataclass(frozen=True)
class FluxReport:
    contour: Contour
    flux: float
    per_obstacle: Mapping[str, int]
    partial_integrals: Optional[tuple] = None

    def to_json(self, contour_id: str = "contour") -> dict:
        return {"contour_id": contour_id, "flux": self.flux, "windings": dict(self.per_obstacle)}


def _term_key(t: FluxTerm, i: int) -> str:
    return t.obstacle_id if t.obstacle_id is not None else f"term{i}"


def _quad_segment(field: GaugeField, a: np.ndarray, b: np.ndarray, tol: float) -> float:
    d = b - a

    def f(s):
        return float(field.A((a + s * d)[None, :])[0] @ d)

    val, _ = integrate.quad(f, 0.0, 1.0, epsabs=tol, epsrel=1e-13, limit=400)
    return val


def line_integral_flux(field: GaugeField, contour: Contour, domain: Optional[Domain] = None,
                       tol: float = 1e-10) -> FluxReport:
    """(e/hbar c) closed-loop integral of A by adaptive Gauss-Kronrod quadrature."""
    a, b = contour.edges()
    if domain is not None:
        for i in range(len(a)):
            s = np.linspace(0, 1, 257)[:, None]
            if np.any(signed_distance(domain, a[i] + s * (b[i] - a[i])) <= 0):
                raise ContourIntersectsObstacle(f"contour edge {i} crosses an obstacle")
    windings = {}
    for i, t in enumerate(field.flux_terms):
        windings[_term_key(t, i)] = winding_number(contour, t.center)
    per_seg_tol = tol / len(a)
    total = sum(_quad_segment(field, a[i], b[i], per_seg_tol) for i in range(len(a)))
    return FluxReport(contour, field.constants.coupling * total, windings)


def ray_integral_quadrature(field: GaugeField, x, direction, length=np.inf, tol: float = 1e-10) -> float:
    """Quadrature route for (e/hbar c) int_0^length direction.A(x - s direction) ds.

    For an infinite ray the integral is split at S = 1 and the remainder is
    handled by scipy's infinite-interval transformation; the canonical terms
    decay like 1/s^2 along the ray so the tail converges absolutely.
    """
    x = vec(x)
    w = vec(direction)

    def f(s):
        return float(w @ field.A((x - s * w)[None, :])[0])

    if np.isfinite(length):
        val = integrate.quad(f, 0.0, float(length), epsabs=tol, epsrel=1e-13, limit=400)[0]
    else:
        val = integrate.quad(f, 0.0, 1.0, epsabs=tol / 2, epsrel=1e-13, limit=400)[0]
        val += integrate.quad(f, 1.0, np.inf, epsabs=tol / 2, epsrel=1e-13, limit=400)[0]
    return field.constants.coupling * val


def flux_decomposition(field: GaugeField, x0, omega, theta, N: float, contour_flux: Optional[float] = None) -> FluxReport:
    """Partial integrals I1N, I2N, I3N of the two-ray wedge.

    I1N and I2N run along the rays arriving at ``x0`` from directions omega
    and theta over length N; I3N closes the wedge along the segment from
    x0 - N omega to x0 - N theta.  With omega to the right of theta the loop
    x0 -> x0 - N omega -> x0 - N theta -> x0 is counterclockwise and
    -I1N + I2N + I3N equals the enclosed flux.
    """
    x0, omega, theta = vec(x0), vec(omega), vec(theta)
    I1 = float(field.ray_phase(x0, omega, N))
    I2 = float(field.ray_phase(x0, theta, N))
    I3 = float(field.segment_phase(x0 - N * omega, x0 - N * theta))
    loop = Contour([x0, x0 - N * omega, x0 - N * theta])
    windings = {_term_key(t, i): winding_number(loop, t.center) for i, t in enumerate(field.flux_terms)}
    flux = -I1 + I2 + I3 if contour_flux is None else contour_flux
    return FluxReport(loop, flux, windings, (I1, I2, I3))


# ----------------------------------------------------------------------------
# gauge transforms

@dataclass(frozen=True)
class GaugeTransform:
    """g = exp(i sum_j p_j theta_j + i phi / hbar).

    ``centers`` supplies the branch point for obstacles that carry no flux
    term in the field being transformed.
    """

    windings: Mapping[str, int] = field(default_factory=dict)
    smooth_phase: Optional[Callable[[np.ndarray], np.ndarray]] = None
    smooth_phase_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    centers: Mapping[str, tuple] = field(default_factory=dict)

    def _center(self, field_: GaugeField, oid: str) -> np.ndarray:
        t = field_.term_for(oid)
        if t is not None:
            return np.asarray(t.center)
        if oid in self.centers:
            return vec(self.centers[oid])
        raise KeyError(f"no center known for obstacle {oid!r}")

    def phase(self, x, field_: GaugeField) -> np.ndarray:
        """Lambda(x) (a representative; only exp(i Lambda) is meaningful)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for oid, p in self.windings.items():
            if p:
                c = self._center(field_, oid)
                out = out + p * np.arctan2(x[..., 1] - c[1], x[..., 0] - c[0])
        if self.smooth_phase is not None:
            out = out + np.asarray(self.smooth_phase(x)) / field_.constants.hbar
        return out

    def factor(self, x, field_: GaugeField) -> np.ndarray:
        return np.exp(1j * self.phase(x, field_))

    def limit_phase(self, direction, field_: GaugeField) -> float:
        """Lambda at infinity in ``direction`` (the smooth part is compact)."""
        w = vec(direction)
        return float(sum(p * math.atan2(w[1], w[0]) for p in self.windings.values()))

    def _grad_phi(self, x):
        if self.smooth_phase_grad is not None:
            return np.asarray(self.smooth_phase_grad(x), dtype=float)
        h = 1e-6
        e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
        f = self.smooth_phase
        return np.stack([(f(x + e1) - f(x - e1)) / (2 * h), (f(x + e2) - f(x - e2)) / (2 * h)], axis=-1)


def apply_gauge(field_: GaugeField, g: GaugeTransform) -> GaugeField:
    """A' = A + (hbar c / e) grad Lambda; windings shift fluxes by 2 pi p."""
    terms = list(field_.flux_terms)
    for oid, p in g.windings.items():
        if not p:
            continue
        for i, t in enumerate(terms):
            if t.obstacle_id == oid:
                terms[i] = replace(t, flux=t.flux + TWO_PI * p)
                break
        else:
            terms.append(FluxTerm(tuple(g._center(field_, oid)), TWO_PI * p, oid))
    smooth = field_.smooth_term
    if g.smooth_phase is not None:
        scale = 1.0 / (field_.constants.charge / field_.constants.light_speed)  # c/e
        old = smooth

        def smooth(x, _old=old, _g=g, _s=scale):
            x = np.asarray(x, dtype=float)
            extra = _s * _g._grad_phi(x)
            return extra if _old is None else _old(x) + extra

    return replace(field_, flux_terms=tuple(terms), smooth_term=smooth)


def is_gauge_equivalent(f1: GaugeField, f2: GaugeField, basis: Sequence[Contour], tol: float = 1e-6) -> bool:
    """Flux criterion: every basis loop's flux differs by a multiple of 2 pi."""
    centers = {}
    for f in (f1, f2):
        for i, t in enumerate(f.flux_terms):
            centers.setdefault(_term_key(t, i), t.center)
    keys = sorted(centers)
    for c in basis:
        w = np.array([winding_number(c, centers[k]) for k in keys])
        if np.sum(np.abs(w)) != 1 or np.max(np.abs(w)) != 1:
            raise BadBasis(f"basis contour winding vector {dict(zip(keys, w.tolist()))} is not a unit vector")
        d = line_integral_flux(f1, c).flux - line_integral_flux(f2, c).flux
        if abs(float(wrap_angle(d))) >= tol:
            return False
    return True


def curl_residual(field_: GaugeField, domain: Domain, samples: int, step: float = 1e-4,
                  seed: int = 0) -> float:
    """max |d1 A2 - d2 A1| by central differences at random exterior points."""
    if samples <= 0:
        raise ValidationError("samples must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = (np.array(b) for b in domain.bounding_box)
    pts = []
    while len(pts) < samples:
        p = lo + (hi - lo) * rng.random((4 * samples, 2))
        ok = signed_distance(domain, p) > 4 * step if domain.obstacles else np.ones(len(p), bool)
        pts.extend(p[ok])
    x = np.array(pts[:samples])
    e1, e2 = np.array([step, 0.0]), np.array([0.0, step])
    d1A2 = (field_.A(x + e1)[:, 1] - field_.A(x - e1)[:, 1]) / (2 * step)
    d2A1 = (field_.A(x + e2)[:, 0] - field_.A(x - e2)[:, 0]) / (2 * step)
    return float(np.max(np.abs(d1A2 - d2A1)))


def smooth_bump_phase(center, radius: float, amplitude: float):
    """Compactly supported phase a * chi0(|x - c| / r) and its gradient."""
    from .core import mollifier, mollifier_derivative

    c = vec(center)

    def phi(x):
        r = np.linalg.norm(np.asarray(x) - c, axis=-1)
        return amplitude * mollifier(r / radius)

    def grad(x):
        d = np.asarray(x) - c
        r = np.linalg.norm(d, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        g = amplitude * mollifier_derivative(r / radius) / radius
        return (g / safe)[..., None] * d * (r > 0)[..., None]

    return phi, grad
