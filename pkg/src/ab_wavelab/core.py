"""Geometry, mollifiers, grids and masked complex fields.

Points are plain ``numpy`` arrays with a trailing axis of length 2; every
geometric routine accepts either a single point ``(2,)`` or a stack
``(..., 2)`` and broadcasts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    OverlappingObstacles,
    PointOnContour,
    ValidationError,
)

ArrayLike = Union[Sequence[float], np.ndarray]


def vec(x: ArrayLike) -> np.ndarray:
    """Return ``x`` as a float array of shape (..., 2), checking finiteness."""
    a = np.asarray(x, dtype=float)
    if a.shape[-1:] != (2,):
        raise ValidationError(f"expected trailing dimension 2, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("non-finite coordinate")
    return a


def unit(x: ArrayLike) -> np.ndarray:
    a = vec(x)
    n = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValidationError("zero vector cannot be normalized")
    return a / n


def perp(x: np.ndarray) -> np.ndarray:
    """Rotate by +90 degrees: (x1, x2) -> (-x2, x1)."""
    x = np.asarray(x, dtype=float)
    return np.stack([-x[..., 1], x[..., 0]], axis=-1)


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True)
class PhysicalConstants:
    """hbar, mass, charge and light speed; all default to 1."""

    hbar: float = 1.0
    mass: float = 1.0
    charge: float = 1.0
    light_speed: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "mass", "charge", "light_speed"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"PhysicalConstants.{name} must be positive, got {v}")

    @property
    def coupling(self) -> float:
        """e / (hbar c): converts a line integral of A into a phase."""
        return self.charge / (self.hbar * self.light_speed)

    def wavelength(self, k: float) -> float:
        """de Broglie wavelength 2 pi hbar / (m k) of a beam with velocity k."""
        return 2 * math.pi * self.hbar / (self.mass * k)


# ----------------------------------------------------------------------------
# mollifier

def _phi(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _step(s):
    a = _phi(s)
    b = _phi(1.0 - np.asarray(s, dtype=float))
    return a / (a + b)


def _step_derivative(s):
    s = np.asarray(s, dtype=float)
    a, b = _phi(s), _phi(1.0 - s)
    da = np.zeros_like(s)
    db = np.zeros_like(s)
    m = s > 0
    da[m] = a[m] / s[m] ** 2
    m = s < 1
    db[m] = b[m] / (1.0 - s[m]) ** 2
    # d/ds [a/(a+b)] with b(s) = phi(1-s) so b' = -phi'(1-s)
    return (da * b + a * db) / (a + b) ** 2


def mollifier(t):
    """Canonical cutoff chi_0: even, 1 on [-1/2, 1/2], 0 outside (-1, 1)."""
    t = np.asarray(t, dtype=float)
    return 1.0 - _step(2.0 * np.abs(t) - 1.0)


def mollifier_derivative(t):
    t = np.asarray(t, dtype=float)
    return -2.0 * np.sign(t) * _step_derivative(2.0 * np.abs(t) - 1.0)


def mollifier_eval(t: float) -> float:
    return float(mollifier(t))


# ----------------------------------------------------------------------------
# shapes

def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    L2 = float(d @ d)
    if L2 == 0.0:
        return np.linalg.norm(p - a, axis=-1)
    s = np.clip(((p - a) @ d) / L2, 0.0, 1.0)
    q = a + s[..., None] * d
    return np.linalg.norm(p - q, axis=-1)


def _ray_circle(start, direction, center, radius, eps):
    """Smallest s > eps with |start + s*direction - center| = radius (entering)."""
    f = start - center
    b = float(f @ direction)
    c = float(f @ f) - radius * radius
    disc = b * b - c
    if disc < 0:
        return None
    r = math.sqrt(disc)
    for s in (-b - r, -b + r):
        if s > eps:
            p = start + s * direction
            n = (p - center) / radius
            if n @ direction < 0:
                return s, p, n
    return None


def _ray_segment(start, direction, a, b, eps):
    """Intersection of a ray with the segment [a, b]; returns (s, point, normal)."""
    d = b - a
    den = cross(direction, d)
    if abs(den) < 1e-300:
        return None
    w = a - start
    s = cross(w, d) / den
    u = cross(w, direction) / den
    if s > eps and -1e-12 <= u <= 1 + 1e-12:
        n = perp(d) / np.linalg.norm(d)
        if n @ direction > 0:
            n = -n
        return s, start + s * direction, n
    return None


@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in vec(self.center)))
        if not self.radius > 0:
            raise ValidationError("Disk radius must be positive")

    def signed_distance(self, p):
        return np.linalg.norm(vec(p) - np.array(self.center), axis=-1) - self.radius

    def ray_hit(self, start, direction, eps=1e-10):
        return _ray_circle(start, direction, np.array(self.center), self.radius, eps)

    def bounds(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def interior_point(self):
        return np.array(self.center)

    def curvature(self):
        return 1.0 / self.radius


@dataclass(frozen=True)
class ConvexPolygon:
    vertices: tuple

    def __post_init__(self):
        v = vec(self.vertices)
        if v.ndim != 2 or len(v) < 3:
            raise ValidationError("ConvexPolygon needs at least 3 vertices")
        e = np.roll(v, -1, axis=0) - v
        turns = cross(e, np.roll(e, -1, axis=0))
        if not np.all(turns > 0):
            raise ValidationError("ConvexPolygon vertices must be counterclockwise and strictly convex")
        object.__setattr__(self, "vertices", tuple(tuple(map(float, r)) for r in v))

    @property
    def _v(self):
        return np.array(self.vertices)

    def signed_distance(self, p):
        p = vec(p)
        v = self._v
        d = np.min([_segment_distance(p, v[i], v[(i + 1) % len(v)]) for i in range(len(v))], axis=0)
        inside = np.ones(p.shape[:-1], dtype=bool)
        for i in range(len(v)):
            e = v[(i + 1) % len(v)] - v[i]
            inside &= cross(np.broadcast_to(e, p.shape), p - v[i]) > 0
        return np.where(inside, -d, d)

    def ray_hit(self, start, direction, eps=1e-10):
        v = self._v
        best = None
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            hit = _ray_segment(start, direction, a, b, eps)
            if hit is None:
                continue
            # outward normal of a counterclockwise edge
            e = b - a
            n = np.array([e[1], -e[0]]) / np.linalg.norm(e)
            if n @ direction >= 0:
                continue
            if best is None or hit[0] < best[0]:
                best = (hit[0], hit[1], n)
        return best

    def bounds(self):
        v = self._v
        return v.min(axis=0), v.max(axis=0)

    def interior_point(self):
        return self._v.mean(axis=0)

    def curvature(self):
        return 0.0


@dataclass(frozen=True)
class Segment:
    """A mirror; thickness 0 is an ideal two-sided reflector."""

    a: tuple
    b: tuple
    thickness: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(c) for c in vec(self.a)))
        object.__setattr__(self, "b", tuple(float(c) for c in vec(self.b)))
        if self.thickness < 0:
            raise ValidationError("Segment thickness must be >= 0")
        if self.a == self.b:
            raise ValidationError("degenerate Segment")

    def signed_distance(self, p):
        return _segment_distance(vec(p), np.array(self.a), np.array(self.b)) - 0.5 * self.thickness

    def ray_hit(self, start, direction, eps=1e-10):
        a, b = np.array(self.a), np.array(self.b)
        h = 0.5 * self.thickness
        if h == 0:
            return _ray_segment(start, direction, a, b, eps)
        n = perp(b - a) / np.linalg.norm(b - a)
        cands = [
            _ray_segment(start, direction, a + h * n, b + h * n, eps),
            _ray_segment(start, direction, a - h * n, b - h * n, eps),
            _ray_circle(start, direction, a, h, eps),
            _ray_circle(start, direction, b, h, eps),
        ]
        cands = [c for c in cands if c is not None and c[2] @ direction < 0]
        return min(cands, key=lambda c: c[0]) if cands else None

    def bounds(self):
        p = np.array([self.a, self.b])
        h = 0.5 * self.thickness
        return p.min(axis=0) - h, p.max(axis=0) + h

    def interior_point(self):
        return 0.5 * (np.array(self.a) + np.array(self.b))

    def curvature(self):
        return 0.0


Shape = Union[Disk, ConvexPolygon, Segment]


def _core(shape):
    """(kind, data, inflation) with the shape = core set inflated by a radius."""
    if isinstance(shape, Disk):
        return np.array([shape.center]), shape.radius, False
    if isinstance(shape, Segment):
        return np.array([shape.a, shape.b]), 0.5 * shape.thickness, False
    return np.array(shape.vertices), 0.0, True


def _edges(pts):
    if len(pts) == 1:
        return [(pts[0], pts[0])]
    if len(pts) == 2:
        return [(pts[0], pts[1])]
    return [(pts[i], pts[(i + 1) % len(pts)]) for i in range(len(pts))]


def _segments_cross(a, b, c, d):
    d1, d2 = cross(b - a, c - a), cross(b - a, d - a)
    d3, d4 = cross(d - c, a - c), cross(d - c, b - c)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def shape_gap(s1: Shape, s2: Shape) -> float:
    """Distance between two shapes (<= 0 when the closures meet)."""
    p1, r1, poly1 = _core(s1)
    p2, r2, poly2 = _core(s2)
    # containment of a core point in a polygon
    if poly1 and np.any(ConvexPolygon(tuple(map(tuple, p1))).signed_distance(p2) <= 0):
        return -r2
    if poly2 and np.any(ConvexPolygon(tuple(map(tuple, p2))).signed_distance(p1) <= 0):
        return -r1
    best = np.inf
    for a, b in _edges(p1):
        for c, d in _edges(p2):
            if _segments_cross(a, b, c, d):
                return -(r1 + r2)
            best = min(
                best,
                float(_segment_distance(a, c, d)), float(_segment_distance(b, c, d)),
                float(_segment_distance(c, a, b)), float(_segment_distance(d, a, b)),
            )
    return best - r1 - r2


@dataclass(frozen=True)
class Obstacle:
    shape: Shape
    id: str

    def signed_distance(self, p):
        return self.shape.signed_distance(p)


@dataclass(frozen=True)
class Domain:
    """The exterior of pairwise disjoint obstacles inside a bounding box."""

    obstacles: tuple
    bounding_box: tuple

    def __post_init__(self):
        obs = tuple(self.obstacles)
        object.__setattr__(self, "obstacles", obs)
        lo, hi = (np.asarray(b, dtype=float) for b in self.bounding_box)
        if not np.all(hi > lo):
            raise ValidationError("bounding box must have positive extent")
        object.__setattr__(self, "bounding_box", (tuple(lo), tuple(hi)))
        ids = [o.id for o in obs]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"obstacle ids must be unique: {ids}")
        for o in obs:
            blo, bhi = o.shape.bounds()
            if np.any(blo <= lo) or np.any(bhi >= hi):
                raise ValidationError(f"obstacle {o.id!r} is not strictly inside the bounding box")
        for i in range(len(obs)):
            for j in range(i + 1, len(obs)):
                if shape_gap(obs[i].shape, obs[j].shape) <= 0:
                    raise OverlappingObstacles(
                        f"obstacles {obs[i].id!r} and {obs[j].id!r} overlap: "
                        "obstacle closures must be pairwise disjoint"
                    )

    def obstacle(self, oid: str) -> Obstacle:
        for o in self.obstacles:
            if o.id == oid:
                return o
        raise KeyError(oid)

    @property
    def diagonal(self) -> float:
        lo, hi = self.bounding_box
        return float(np.hypot(hi[0] - lo[0], hi[1] - lo[1]))

    def contains(self, p) -> np.ndarray:
        p = vec(p)
        lo, hi = (np.array(b) for b in self.bounding_box)
        return np.all((p > lo) & (p < hi), axis=-1)


def signed_distance(domain: Domain, point) -> np.ndarray | float:
    """Distance to the nearest obstacle boundary, negative inside an obstacle."""
    p = vec(point)
    if not domain.obstacles:
        out = np.full(p.shape[:-1], np.inf)
    else:
        out = np.min([o.signed_distance(p) for o in domain.obstacles], axis=0)
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# contours

@dataclass(frozen=True)
class Contour:
    """Closed polyline; the last point connects back to the first."""

    points: np.ndarray

    def __post_init__(self):
        p = vec(self.points)
        if p.ndim != 2 or len(p) < 3:
            raise ValidationError("Contour needs at least 3 points")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "points", p)

    @classmethod
    def circle(cls, center, radius, n=64, turns=1):
        th = np.linspace(0, 2 * np.pi * turns, n * turns, endpoint=False)
        c = vec(center)
        return cls(c + radius * np.stack([np.cos(th), np.sin(th)], axis=-1))

    @classmethod
    def rectangle(cls, lo, hi):
        (a, b), (c, d) = lo, hi
        return cls([(a, b), (c, b), (c, d), (a, d)])

    def reversed(self) -> "Contour":
        return Contour(self.points[::-1])

    def refined(self) -> "Contour":
        p = self.points
        mid = 0.5 * (p + np.roll(p, -1, axis=0))
        return Contour(np.stack([p, mid], axis=1).reshape(-1, 2))

    def edges(self):
        p = self.points
        return p, np.roll(p, -1, axis=0)

    @property
    def diagonal(self) -> float:
        p = self.points
        return float(np.linalg.norm(p.max(axis=0) - p.min(axis=0)))


def winding_number(contour: Contour, point) -> int:
    """Counterclockwise winding number of ``contour`` around ``point``."""
    q = vec(point)
    a, b = contour.edges()
    tol = 1e-12 * max(contour.diagonal, 1e-300)
    d = min(float(_segment_distance(q, a[i], b[i])) for i in range(len(a)))
    if d < tol:
        raise PointOnContour(f"point {tuple(q)} lies on the contour (distance {d:.3e})")
    u, v = a - q, b - q
    ang = np.arctan2(cross(u, v), np.sum(u * v, axis=-1))
    return int(round(ang.sum() / (2 * np.pi)))


# ----------------------------------------------------------------------------
# grids

@dataclass(frozen=True)
class GridSpec:
    """Regular grid: point (i, j) sits at origin + spacing*(i, j).

    Arrays on the grid have shape (ny, nx); rows run along x2.
    """

    origin: tuple
    spacing: float
    nx: int
    ny: int

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(c) for c in vec(self.origin)))
        if not self.spacing > 0:
            raise ValidationError("GridSpec spacing must be positive")
        if self.nx < 2 or self.ny < 2:
            raise ValidationError("GridSpec needs nx, ny >= 2")

    @classmethod
    def covering(cls, lo, hi, spacing):
        lo, hi = vec(lo), vec(hi)
        n = np.floor((hi - lo) / spacing).astype(int) + 1
        return cls(tuple(lo), spacing, int(n[0]), int(n[1]))

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def x1(self):
        return self.origin[0] + self.spacing * np.arange(self.nx)

    @property
    def x2(self):
        return self.origin[1] + self.spacing * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.x1, self.x2)

    def points(self) -> np.ndarray:
        X1, X2 = self.mesh()
        return np.stack([X1, X2], axis=-1)

    @property
    def upper(self):
        return (self.origin[0] + self.spacing * (self.nx - 1), self.origin[1] + self.spacing * (self.ny - 1))


def domain_mask(domain: Domain, grid: GridSpec) -> np.ndarray:
    """Interior cells: signed distance > 0 and strictly inside the box.

    Zero-thickness mirrors are widened to the cell diagonal so that they block
    nearest-neighbour hopping on the lattice.
    """
    pts = grid.points()
    mask = domain.contains(pts)
    for o in domain.obstacles:
        d = o.signed_distance(pts)
        if isinstance(o.shape, Segment):
            mask &= d > max(0.0, grid.spacing / math.sqrt(2) - 0.5 * o.shape.thickness)
        else:
            mask &= d > 0
    return mask


@dataclass
class GridField:
    """Complex samples on a masked grid; masked-out cells hold exactly 0."""

    spec: GridSpec
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=complex)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != self.spec.shape or self.mask.shape != self.spec.shape:
            raise ValidationError(
                f"GridField arrays must have shape {self.spec.shape}, got "
                f"{self.values.shape} and {self.mask.shape}"
            )
        self.values[~self.mask] = 0.0

    @classmethod
    def from_function(cls, spec: GridSpec, mask: np.ndarray, f: Callable[[np.ndarray], np.ndarray]):
        return cls(spec, f(spec.points()), mask)

    @classmethod
    def zeros(cls, spec: GridSpec, mask: np.ndarray):
        return cls(spec, np.zeros(spec.shape, complex), mask)

    def copy(self) -> "GridField":
        return GridField(self.spec, self.values.copy(), self.mask.copy())

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)) * self.spec.spacing)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def interpolate(self, points) -> np.ndarray:
        """Bicubic interpolation of the complex values at arbitrary points."""
        from scipy.ndimage import map_coordinates

        p = vec(points)
        i = (p[..., 0] - self.spec.origin[0]) / self.spec.spacing
        j = (p[..., 1] - self.spec.origin[1]) / self.spec.spacing
        coords = np.stack([np.ravel(j), np.ravel(i)])
        re = map_coordinates(self.values.real, coords, order=3, mode="constant")
        im = map_coordinates(self.values.imag, coords, order=3, mode="constant")
        return (re + 1j * im).reshape(p.shape[:-1])
