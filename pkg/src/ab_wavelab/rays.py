"""Broken rays: specular reflection, ray families and eikonal phases.

Arc length doubles as time (t = s), so a ray traced from ``start`` reaches the
point at arc length s at time s.  Leg indices in the public API are 1-based
to match the usual numbering of reflected legs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .core import Domain, cross, perp, signed_distance, unit, vec
from .errors import (
    FamilyCaustic,
    GrazingIncidence,
    OutsideTube,
    TooManyReflections,
    ValidationError,
)

GRAZING_TOL = 1e-6


def reflect_direction(incoming, normal) -> np.ndarray:
    """Specular law w' = w - 2 (w.n) n."""
    w, n = vec(incoming), vec(normal)
    c = float(w @ n)
    if abs(c) < GRAZING_TOL:
        raise GrazingIncidence(f"|w.n| = {abs(c):.2e} below {GRAZING_TOL}")
    if c > 0:
        raise ValidationError("incoming direction must point into the surface (w.n < 0)")
    return w - 2.0 * c * n


def first_hit(ray_start, direction, domain: Domain, eps: float = 1e-10):
    """Nearest boundary hit (point, outward normal, s) or None."""
    p, w = vec(ray_start), vec(direction)
    best = None
    for o in domain.obstacles:
        h = o.shape.ray_hit(p, w, eps)
        if h is not None and (best is None or h[0] < best[0][0]):
            best = (h, o.id)
    if best is None:
        return None
    (s, q, n), oid = best
    return q, n, s


def _first_hit_with_id(p, w, domain, eps=1e-10):
    best = None
    for o in domain.obstacles:
        h = o.shape.ray_hit(p, w, eps)
        if h is not None and (best is None or h[0] < best[0][0]):
            best = (h, o.id)
    return best


@dataclass(frozen=True)
class Leg:
    start: np.ndarray
    direction: np.ndarray
    s_start: float
    s_end: float

    def point(self, s):
        return self.start + (np.asarray(s) - self.s_start)[..., None] * self.direction

    def to_json(self):
        return {
            "start": self.start.tolist(),
            "direction": self.direction.tolist(),
            "s_start": self.s_start,
            "s_end": self.s_end if math.isfinite(self.s_end) else "inf",
        }


@dataclass(frozen=True)
class BrokenRay:
    """Legs chained at reflection points; ``hits`` names the obstacle at each joint."""

    legs: Tuple[Leg, ...]
    hits: Tuple[str, ...] = ()
    normals: Tuple[np.ndarray, ...] = ()
    domain: Optional[Domain] = field(default=None, compare=False, repr=False)
    max_reflections: int = 8

    @property
    def start(self):
        return self.legs[0].start

    @property
    def n_reflections(self):
        return len(self.legs) - 1

    def leg_index(self, s: float) -> int:
        for i, lg in enumerate(self.legs):
            if s <= lg.s_end:
                return i
        return len(self.legs) - 1

    def point_at(self, s: float) -> np.ndarray:
        """Point at arc length s; s < 0 extends the first leg backwards."""
        return self.legs[self.leg_index(s)].point(s)

    def direction_at(self, s: float) -> np.ndarray:
        return self.legs[self.leg_index(s)].direction

    def vertices(self) -> List[np.ndarray]:
        return [lg.start for lg in self.legs]

    def polyline(self, s0: float, s1: float) -> np.ndarray:
        """Vertices of the path between arc lengths s0 <= s1."""
        pts = [self.point_at(s0)]
        for lg in self.legs:
            if s0 < lg.s_start < s1:
                pts.append(lg.start)
        pts.append(self.point_at(s1))
        return np.array(pts)

    def to_json(self):
        return {"legs": [lg.to_json() for lg in self.legs], "hits": list(self.hits)}


@dataclass(frozen=True)
class SpacetimeRay:
    """t = s lift: the ray reaches arc length s at time s."""

    ray: BrokenRay

    @property
    def hit_times(self):
        return [lg.s_start for lg in self.ray.legs[1:]]

    def position(self, t: float) -> np.ndarray:
        return self.ray.point_at(t)


def trace_broken_ray(start, direction, domain: Domain, max_reflections: int = 8,
                     s_max: float = math.inf) -> BrokenRay:
    """Follow first_hit + reflect_direction until escape.

    Tracing stops early once the arc length passes ``s_max``; the last leg is
    then still reported with ``s_end = inf``.
    """
    p, w = vec(start), unit(direction)
    if domain.obstacles and signed_distance(domain, p) < 0:
        raise ValidationError("ray start lies inside an obstacle")
    if max_reflections < 0:
        raise ValidationError("max_reflections must be >= 0")
    legs, hits, normals = [], [], []
    s = 0.0
    while True:
        h = _first_hit_with_id(p, w, domain) if s <= s_max else None
        if h is None:
            legs.append(Leg(p, w, s, math.inf))
            break
        (ds, q, n), oid = h
        if len(hits) == max_reflections:
            raise TooManyReflections(f"ray still bouncing after {max_reflections} reflections")
        legs.append(Leg(p, w, s, s + ds))
        w = reflect_direction(w, n)
        hits.append(oid)
        normals.append(n)
        p, s = q, s + ds
    return BrokenRay(tuple(legs), tuple(hits), tuple(normals), domain, max_reflections)


@dataclass(frozen=True)
class RayFrame:
    base_point: np.ndarray
    direction: np.ndarray

    @property
    def normal(self):
        return perp(self.direction)

    def coords(self, x, t=0.0):
        """(s, tau) with s = (x - x0).w - t and tau = (x - x0).w_perp."""
        d = np.asarray(x, dtype=float) - self.base_point
        return d @ self.direction - t, d @ self.normal

    def point(self, s, tau, t=0.0):
        s, tau = np.asarray(s, dtype=float), np.asarray(tau, dtype=float)
        return self.base_point + (s + t)[..., None] * self.direction + tau[..., None] * self.normal


def ray_family(base, direction, domain: Domain, offsets: Sequence[float], max_reflections: int = 8,
               s_max: float = math.inf, check_at: Optional[float] = None) -> List[BrokenRay]:
    """Rays from base + offset * w_perp, all in direction w.

    When ``check_at`` is given, the endpoint map at that arc length must be
    monotone in the offset; otherwise :class:`FamilyCaustic` is raised.
    """
    b, w = vec(base), unit(direction)
    wp = perp(w)
    rays = [trace_broken_ray(b + o * wp, w, domain, max_reflections, s_max) for o in offsets]
    if check_at is not None and len(rays) > 1:
        seq = {r.hits for r in rays}
        if len(seq) > 1:
            raise FamilyCaustic("family members reflect off different obstacle sequences")
        c = rays[len(rays) // 2]
        nrm = perp(c.direction_at(check_at))
        proj = np.array([r.point_at(check_at) @ nrm for r in rays])
        order = np.argsort(offsets)
        steps = np.diff(proj[order])
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise FamilyCaustic("endpoint map of the ray family folds (Jacobian sign change)")
    return rays


@dataclass(frozen=True)
class EikonalPhase:
    leg_index: int
    evaluator: Callable[[np.ndarray], Tuple[float, np.ndarray]]

    def __call__(self, x):
        return self.evaluator(x)


class RayTube:
    """The family of rays launched across the line through x^(1) normal to w1.

    Offsets are measured along w1_perp; every quantity is computed from exact
    traces of individual family members.
    """

    def __init__(self, ray: BrokenRay, radius: float, domain: Optional[Domain] = None):
        self.ray = ray
        self.domain = domain if domain is not None else ray.domain
        if self.domain is None:
            raise ValidationError("RayTube needs the domain the ray was traced in")
        self.base = ray.start
        self.w1 = ray.legs[0].direction
        self.normal = perp(self.w1)
        self.radius = float(radius)
        self.psi0 = float(self.base @ self.w1)
        self._cache = {}

    def member(self, eta: float) -> BrokenRay:
        key = float(eta)
        r = self._cache.get(key)
        if r is None:
            r = trace_broken_ray(self.base + key * self.normal, self.w1, self.domain,
                                 self.ray.max_reflections)
            if r.hits[: len(self.ray.hits)] != self.ray.hits:
                raise OutsideTube(f"family member at offset {key:.3g} leaves the reflection sequence")
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = r
        return r

    def _leg_residual(self, eta, x, p):
        lg = self.member(eta).legs[p - 1]
        return float(cross(lg.direction, x - lg.start))

    def locate(self, x, leg: int):
        """(eta, arc length) of the family member whose leg ``leg`` passes through x."""
        x = vec(x)
        p = leg
        if p == 1:
            d = x - self.base
            eta = float(d @ self.normal)
            if abs(eta) > self.radius:
                raise OutsideTube(f"point {tuple(x)} is {abs(eta):.3g} from the leg axis")
            return eta, float(d @ self.w1)
        r = self.radius
        try:
            fa, fb = self._leg_residual(-r, x, p), self._leg_residual(r, x, p)
        except (OutsideTube, IndexError) as exc:
            raise OutsideTube(f"tube of radius {r} is not valid around leg {p}") from exc
        if fa * fb > 0:
            raise OutsideTube(f"point {tuple(x)} is outside the tube around leg {p}")
        eta = brentq(self._leg_residual, -r, r, args=(x, p), xtol=1e-14, rtol=1e-15, maxiter=200)
        lg = self.member(eta).legs[p - 1]
        along = float((x - lg.start) @ lg.direction)
        if along < -1e-9 or along > lg.s_end - lg.s_start + 1e-9:
            raise OutsideTube(f"point {tuple(x)} is not on leg {p} of its family member")
        return eta, lg.s_start + along

    def phase(self, x, leg: int):
        """psi_p(x) and its gradient (the local ray direction)."""
        eta, s = self.locate(x, leg)
        return self.psi0 + s, self.member(eta).legs[leg - 1].direction.copy()

    def raw_jacobian(self, eta: float, s: float, leg: Optional[int] = None, h: Optional[float] = None) -> float:
        """cross(direction, dX/d(eta)) along leg ``leg`` (each member's leg extended as a line).

        Every reflection reverses orientation, so away from caustics the sign
        is (-1)^(leg-1).
        """
        h = h if h is not None else 1e-6 * max(self.radius, 1.0)
        if leg is None:
            leg = self.member(eta).leg_index(s) + 1

        def pt(e):
            lg = self.member(e).legs[leg - 1]
            return lg.start + (s - lg.s_start) * lg.direction

        d = self.member(eta).legs[leg - 1].direction
        return float(cross(d, (pt(eta + h) - pt(eta - h)) / (2 * h)))

    def jacobian(self, eta: float, s: float, leg: Optional[int] = None, h: Optional[float] = None) -> float:
        """Orientation-corrected spreading; 1 at launch, positive until a caustic."""
        if leg is None:
            leg = self.member(eta).leg_index(s) + 1
        return (-1) ** (leg - 1) * self.raw_jacobian(eta, s, leg, h)


def eikonal_phase(ray: BrokenRay, leg: int, tube_radius: float = 0.5,
                  domain: Optional[Domain] = None) -> EikonalPhase:
    """psi_p near leg p; psi_1 = x.w1 and psi_p continues it by arc length."""
    if not 1 <= leg <= len(ray.legs):
        raise ValidationError(f"leg index {leg} out of range 1..{len(ray.legs)}")
    if leg == 1:
        w1 = ray.legs[0].direction.copy()
        return EikonalPhase(1, lambda x: (float(vec(x) @ w1), w1.copy()))
    tube = RayTube(ray, tube_radius, domain)
    return EikonalPhase(leg, lambda x: tube.phase(x, leg))
