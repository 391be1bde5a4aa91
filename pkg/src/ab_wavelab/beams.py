"""Geometric-optics beams and the Kannai transform.

A beam is first built as a high-frequency solution of the wave equation

    ((hbar^2 / 2m) d^2/dt^2 + H) w = 0,     w = sum_n e^{i kappa (psi - t)} a_n / (ik)^n + (t -> -t),

with kappa = m k / hbar, and then turned into a Schrodinger solution by

    u(x, t) = e^{-i pi/4} sqrt(m / (2 pi hbar t)) * int e^{i m x0^2 / (2 hbar t)} w(x, x0) dx0.

Inserting the ansatz gives P(e^{i kappa(psi - t)} a) = e^{i kappa(psi - t)} (-(ik) hbar T a + P a)
with T a = a_t + w.grad a - i (e / hbar c)(w.A) a, so the amplitudes obey

    T a_0 = 0,      T a_n = (1/hbar) P a_{n-1},

and the residual of w_N is exactly e^{...} P a_N / (ik)^N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .core import Domain, GridSpec, PhysicalConstants, mollifier, perp, signed_distance, unit, vec
from .errors import (
    CausticError,
    NonconvergentTail,
    OutsideTube,
    SourceSingularity,
    SupportIntersectsObstacle,
    UnsupportedOrder,
    ValidationError,
)
from .gauge import GaugeField, GaugeTransform
from .rays import BrokenRay, EikonalPhase, Leg, RayTube, eikonal_phase

VALIDITY_EXPONENT = 0.6


def validity_time(k: float, delta3: float = VALIDITY_EXPONENT) -> float:
    """End of the plain-scaling window, T = k^(-delta3)."""
    return k ** (-delta3)


@dataclass(frozen=True)
class BeamSpec:
    """Cutoff beam launched from ``base_point`` along ``direction``.

    ``gauge`` expresses the initial data in a transformed gauge: the data is
    multiplied by exp(i Lambda) of that transform.  ``profile`` replaces the
    transverse cutoff chi_0(tau / delta1) by profile(tau / delta1).
    """

    base_point: tuple
    direction: tuple
    k: float
    delta1: float
    delta2: float
    order: int = 2
    constants: PhysicalConstants = PhysicalConstants()
    gauge: Optional[GaugeTransform] = None
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        object.__setattr__(self, "base_point", tuple(float(c) for c in vec(self.base_point)))
        object.__setattr__(self, "direction", tuple(float(c) for c in unit(self.direction)))
        if not self.k > 0:
            raise ValidationError("BeamSpec.k must be positive")
        if not (self.delta1 > 0 and self.delta2 > 0):
            raise ValidationError("BeamSpec.delta1 and delta2 must be positive")
        if self.order < 0:
            raise ValidationError("BeamSpec.order must be >= 0")

    @property
    def omega(self) -> np.ndarray:
        return np.array(self.direction)

    @property
    def normal(self) -> np.ndarray:
        return perp(self.omega)

    @property
    def x0(self) -> np.ndarray:
        return np.array(self.base_point)

    @property
    def kappa(self) -> float:
        return self.constants.mass * self.k / self.constants.hbar

    @property
    def length(self) -> float:
        """Longitudinal half-support delta2 * k."""
        return self.delta2 * self.k

    def transverse(self, tau):
        z = np.asarray(tau) / self.delta1
        return mollifier(z) if self.profile is None else self.profile(z)

    def longitudinal(self, s):
        return mollifier(np.asarray(s) / self.length)

    def coords(self, x, t=0.0):
        d = np.asarray(x, dtype=float) - self.x0
        return d @ self.omega - t, d @ self.normal

    def check_support(self, domain: Domain, travel: float = 0.0) -> None:
        """Raise if the strip |tau| <= delta1, -L <= s <= L + travel meets an obstacle."""
        if not domain.obstacles:
            return
        L = self.length
        # signed distance is 1-Lipschitz: a cell whose centre lies farther than
        # its half-diagonal from every obstacle is clear; refine the rest
        a, b = np.array([-L, -self.delta1]), np.array([L + travel, self.delta1])
        n = np.maximum(np.ceil((b - a) / (self.delta1 / 4)), 1).astype(int)
        size = (b - a) / n
        S, TAU = np.meshgrid(a[0] + (np.arange(n[0]) + 0.5) * size[0], a[1] + (np.arange(n[1]) + 0.5) * size[1])
        cells = np.column_stack([S.ravel(), TAU.ravel()])
        for _ in range(40):
            pts = self.x0 + cells[:, :1] * self.omega + cells[:, 1:] * self.normal
            d = signed_distance(domain, pts)
            half = 0.5 * float(np.hypot(*size))
            if np.any(d <= 0) or half < 1e-12:
                i = int(np.argmin(d))
                raise SupportIntersectsObstacle(
                    f"beam strip (delta1 = {self.delta1}) meets an obstacle near {tuple(np.round(pts[i], 4))}: "
                    "the transverse cutoff support must not intersect any obstacle"
                )
            cells = cells[d <= half]
            if len(cells) == 0:
                return
            size = size / 2
            q = np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]]) * (size / 2)
            cells = (cells[:, None, :] + q[None]).reshape(-1, 2)

    def initial_data(self, x) -> np.ndarray:
        """u(x, 0) = w_N(x, 0): both cutoffs times exp(i kappa x.w)."""
        x = np.asarray(x, dtype=float)
        s, tau = self.coords(x)
        val = self.transverse(tau) * self.longitudinal(s) * np.exp(1j * self.kappa * (x @ self.omega))
        return val


def _gauge_factor(spec: BeamSpec, field_: GaugeField, x) -> np.ndarray:
    if spec.gauge is None:
        return 1.0
    return spec.gauge.factor(x, field_)


def amplitude_a0(spec: BeamSpec, field_: GaugeField, x, t) -> np.ndarray:
    """a_0(x, t) = 1/2 chi(tau/d1) chi(((x - x0).w - t)/(d2 k)) exp(i (e/hbar c) int_0^t w.A(x - s w) ds)."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    s, tau = spec.coords(x, t)
    amp = 0.5 * spec.transverse(tau) * spec.longitudinal(s)
    phase = field_.ray_phase(x, spec.omega, t)
    out = amp * np.exp(1j * phase)
    if spec.gauge is not None:
        foot = x - t[..., None] * spec.omega if np.ndim(t) else x - float(t) * spec.omega
        out = out * _gauge_factor(spec, field_, foot)
    return out


# ----------------------------------------------------------------------------
# higher-order amplitudes on a ray-coordinate grid

_D1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
_D2 = np.array([-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560])
_HALF = 4  # stencil half width


def _diff(a: np.ndarray, h: float, axis: int, order: int) -> np.ndarray:
    w = (_D1 / h) if order == 1 else (_D2 / h ** 2)
    re = ndimage.correlate1d(a.real, w, axis=axis, mode="nearest")
    im = ndimage.correlate1d(a.imag, w, axis=axis, mode="nearest")
    return re + 1j * im


@dataclass
class RayGrid:
    """Nodes (s_i, tau_j, t_l) in the frame of a straight beam.

    Derivative stencils are eighth order; each nested application spoils
    ``_HALF`` nodes at every edge, so the requested ranges are padded by
    ``_HALF * (2 order + 3)`` nodes.
    """

    s: np.ndarray
    tau: np.ndarray
    t: np.ndarray

    @classmethod
    def around(cls, s_range, tau_range, t_max, h, ht, order):
        pad = _HALF * (2 * order + 3) + 2
        s = np.arange(s_range[0] - pad * h, s_range[1] + pad * h + 0.5 * h, h)
        tau = np.arange(tau_range[0] - pad * h, tau_range[1] + pad * h + 0.5 * h, h)
        n_t = int(math.ceil(t_max / ht))
        t = ht * np.arange(-pad, n_t + pad + 1)
        return cls(s, tau, t)

    @property
    def hs(self):
        return self.s[1] - self.s[0]

    @property
    def htau(self):
        return self.tau[1] - self.tau[0]

    @property
    def ht(self):
        return self.t[1] - self.t[0]

    @property
    def i0(self) -> int:
        return int(np.argmin(np.abs(self.t)))


class AmplitudeSolver:
    """Transport equations for a straight beam solved on a :class:`RayGrid`.

    Along the characteristic (s, tau fixed) the amplitude obeys
    da/dt - i q w.A a = f with q = e/(hbar c); the solution from zero data is
    a(t) = E(t) int_0^t E^{-1} f, E the accumulated flux phase.  The time
    integral uses the antiderivative of a cubic spline; the operator P is
    applied with finite differences in the (s, tau, t) coordinates:

        P a = (hbar^2/2m)(a_tt - 2 a_ts - a_tautau)
              + (i hbar e / 2mc)(div A a + 2 A_w a_s + 2 A_perp a_tau)
              + (e^2 |A|^2 / 2 m c^2) a + e V a.
    """

    def __init__(self, spec: BeamSpec, field_: GaugeField, grid: RayGrid, domain: Optional[Domain] = None):
        self.spec, self.field, self.grid = spec, field_, grid
        c = spec.constants
        S, TAU, T = np.meshgrid(grid.s, grid.tau, grid.t, indexing="ij")
        self.S, self.TAU, self.T = S, TAU, T
        X = spec.x0 + (S + T)[..., None] * spec.omega + TAU[..., None] * spec.normal
        if domain is not None and domain.obstacles and np.any(signed_distance(domain, X) <= 0):
            raise SourceSingularity("amplitude grid reaches inside an obstacle")
        self.X = X
        A = field_.A(X)
        self.A_w = A @ spec.omega
        self.A_p = A @ spec.normal
        self.A2 = np.sum(A * A, axis=-1)
        self.divA = field_.divergence(X)
        self.V = np.zeros(S.shape) if field_.scalar_potential is None else field_.V(X, 0.0)
        # E(s, tau, t) = exp(i * phase accumulated from t = 0)
        base = spec.x0 + S[..., 0][..., None] * spec.omega + TAU[..., 0][..., None] * spec.normal
        ph = np.stack([field_.segment_phase(base, X[..., l, :]) if field_.smooth_term is None
                       else self._cumulative_phase(l) for l in range(len(grid.t))], axis=-1)
        self.E = np.exp(1j * ph)
        self.orders: Dict[int, np.ndarray] = {0: self._a0()}

    def _cumulative_phase(self, l):
        # smooth terms: integrate w.A along t with a spline antiderivative
        if not hasattr(self, "_phase_cache"):
            q = self.spec.constants.coupling
            sp = CubicSpline(self.grid.t, self.A_w, axis=2).antiderivative()
            vals = sp(self.grid.t)
            self._phase_cache = q * (vals - vals[..., self.grid.i0:self.grid.i0 + 1])
        return self._phase_cache[..., l]

    def _a0(self):
        spec = self.spec
        amp = 0.5 * spec.transverse(self.TAU) * spec.longitudinal(self.S)
        a = amp * self.E
        if spec.gauge is not None:
            start = spec.x0 + self.S[..., None] * spec.omega + self.TAU[..., None] * spec.normal
            a = a * spec.gauge.factor(start, self.field)
        return a

    def apply_P(self, a: np.ndarray) -> np.ndarray:
        g, c = self.grid, self.spec.constants
        hb, m, e, cl = c.hbar, c.mass, c.charge, c.light_speed
        a_t = _diff(a, g.ht, 2, 1)
        a_tt = _diff(a, g.ht, 2, 2)
        a_ts = _diff(a_t, g.hs, 0, 1)
        a_s = _diff(a, g.hs, 0, 1)
        a_tau = _diff(a, g.htau, 1, 1)
        a_tautau = _diff(a, g.htau, 1, 2)
        out = (hb ** 2 / (2 * m)) * (a_tt - 2 * a_ts - a_tautau)
        q = e / cl
        out += (1j * hb * q / (2 * m)) * (self.divA * a + 2 * self.A_w * a_s + 2 * self.A_p * a_tau)
        out += (q * q * self.A2 / (2 * m)) * a + e * self.V * a
        return out

    def apply_T(self, a: np.ndarray) -> np.ndarray:
        """Transport operator in ray coordinates: a_t - i q/hbar (w.A) a."""
        q = self.spec.constants.coupling
        return _diff(a, self.grid.ht, 2, 1) - 1j * q * self.A_w * a

    def solve(self, n: int) -> np.ndarray:
        if n in self.orders:
            return self.orders[n]
        prev = self.solve(n - 1)
        f = self.apply_P(prev) / self.spec.constants.hbar
        g = f / self.E
        sp = CubicSpline(self.grid.t, g.real, axis=2).antiderivative()
        sq = CubicSpline(self.grid.t, g.imag, axis=2).antiderivative()
        I = sp(self.grid.t) + 1j * sq(self.grid.t)
        I = I - I[..., self.grid.i0:self.grid.i0 + 1]
        self.orders[n] = self.E * I
        return self.orders[n]

    def residual(self, N: int) -> np.ndarray:
        """Demodulated residual e^{-i kappa (psi - t)} P w_N on the grid (a-part)."""
        k = self.spec.k
        hb = self.spec.constants.hbar
        out = np.zeros(self.S.shape, complex)
        for n in range(N + 1):
            a = self.solve(n)
            out += (1j * k) ** (-n) * (-(1j * k) * hb * self.apply_T(a) + self.apply_P(a))
        return out

    def interpolator(self, n: int):
        a = self.solve(n)
        g = self.grid
        re = RegularGridInterpolator((g.s, g.tau, g.t), a.real, method="cubic", bounds_error=True)
        im = RegularGridInterpolator((g.s, g.tau, g.t), a.imag, method="cubic", bounds_error=True)
        spec = self.spec

        def amp(x, t):
            x = np.asarray(x, dtype=float)
            t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
            s, tau = spec.coords(x, t)
            pts = np.stack([s, tau, t], axis=-1)
            try:
                return re(pts) + 1j * im(pts)
            except ValueError as exc:
                raise OutsideTube("point outside the amplitude grid") from exc

        return amp


# ----------------------------------------------------------------------------
# expansions

@dataclass
class WavefrontExpansion:
    """Phases and amplitudes of w_N; keys of ``amplitudes`` are (leg, order)."""

    spec: BeamSpec
    ray: BrokenRay
    phases: list
    amplitudes: Dict[Tuple[int, int], Callable]
    field: GaugeField
    tube: Optional[RayTube] = None
    solver: Optional[AmplitudeSolver] = None

    @property
    def broken(self) -> bool:
        return self.ray.n_reflections > 0

    @property
    def order(self) -> int:
        return max(n for (_, n) in self.amplitudes)


def straight_expansion(spec: BeamSpec, field_: GaugeField, domain: Optional[Domain] = None) -> WavefrontExpansion:
    """Order-0 expansion of a straight beam (higher orders via transport_higher_order)."""
    if domain is not None:
        spec.check_support(domain)
    ray = BrokenRay((Leg(spec.x0, spec.omega, 0.0, math.inf),), domain=domain)
    a0 = lambda x, t: amplitude_a0(spec, field_, x, t)
    return WavefrontExpansion(spec, ray, [eikonal_phase(ray, 1)], {(1, 0): a0}, field_)


def broken_expansion(spec: BeamSpec, field_: GaugeField, domain: Domain, max_reflections: int = 8,
                     s_max: float = math.inf) -> WavefrontExpansion:
    """Order-0 expansion along the broken ray traced from the beam's base point."""
    from .rays import trace_broken_ray

    ray = trace_broken_ray(spec.x0, spec.omega, domain, max_reflections)
    tube = RayTube(ray, spec.delta1, domain)
    phases = [eikonal_phase(ray, p, spec.delta1, domain) for p in range(1, len(ray.legs) + 1)]
    exp = WavefrontExpansion(spec, ray, phases, {}, field_, tube=tube)
    for p in range(1, len(ray.legs) + 1):
        exp.amplitudes[(p, 0)] = (lambda x, t, _p=p: _broken_amp(exp, x, t, _p))
    return exp


def attach_solver(expansion: WavefrontExpansion, grid: RayGrid, domain: Optional[Domain] = None) -> AmplitudeSolver:
    expansion.solver = AmplitudeSolver(expansion.spec, expansion.field, grid, domain)
    return expansion.solver


def transport_higher_order(expansion: WavefrontExpansion, field_: GaugeField, p: int, n: int) -> Callable:
    """Solve T a_pn = (1/hbar) P a_p,n-1 with zero initial data and register a_pn."""
    if n < 1:
        raise ValidationError("transport_higher_order needs n >= 1")
    if p != 1 or expansion.broken:
        raise UnsupportedOrder("higher-order amplitudes are built for straight legs only")
    if expansion.solver is None:
        raise ValidationError("attach a RayGrid with attach_solver before building higher orders")
    for j in range(1, n + 1):
        if (p, j) not in expansion.amplitudes:
            expansion.solver.solve(j)
            expansion.amplitudes[(p, j)] = expansion.solver.interpolator(j)
    return expansion.amplitudes[(p, n)]


def assemble_wN(expansion: WavefrontExpansion) -> Callable:
    """w_N(x, t) = sum over legs and orders of both travelling pieces."""
    spec = expansion.spec
    kappa, k = spec.kappa, spec.k
    keys = sorted(expansion.amplitudes)

    if not expansion.broken:
        w = spec.omega

        def wN(x, t):
            x = np.asarray(x, dtype=float)
            t = np.asarray(t, dtype=float)
            psi = x @ w
            out = 0.0
            for (p, n) in keys:
                a = expansion.amplitudes[(p, n)]
                out = out + (np.exp(1j * kappa * (psi - t)) * a(x, t)
                             + np.exp(1j * kappa * (psi + t)) * a(x, -t)) / (1j * k) ** n
            return out

        return wN

    def wN_broken(x, t):
        x = vec(x)
        t = float(t)
        out = 0.0 + 0.0j
        for (p, n) in keys:
            try:
                psi, _ = expansion.phases[p - 1](x)
            except OutsideTube:
                continue
            a = expansion.amplitudes[(p, n)]
            out += (np.exp(1j * kappa * (psi - t)) * a(x, t) + np.exp(1j * kappa * (psi + t)) * a(x, -t)) / (1j * k) ** n
        return out

    return wN_broken


# ----------------------------------------------------------------------------
# broken-ray amplitudes

def _broken_amp(expansion: WavefrontExpansion, x, t, leg: int) -> complex:
    """a_p0(x, t) on leg p: c_0 with the flux phase of the last t of path."""
    x = vec(x)
    tube = expansion.tube
    spec = expansion.spec
    eta, L = tube.locate(x, leg)
    ray = tube.member(eta)
    J = tube.jacobian(eta, L, leg)
    sign = (-1) ** (leg - 1)
    if J <= 0:
        raise CausticError(f"ray family focuses on leg {leg} (Jacobian {J:.3e})")
    c0 = 0.5 * spec.transverse(eta) * spec.longitudinal(L - t) * sign / math.sqrt(abs(J))
    s0 = L - float(t)
    path = ray.polyline(min(s0, L), max(s0, L))
    ph = expansion.field.polyline_phase(path)
    if s0 > L:
        ph = -ph
    val = c0 * np.exp(1j * ph)
    if spec.gauge is not None:
        val *= spec.gauge.factor(ray.point_at(s0), expansion.field)
    return complex(val)


def broken_amplitude_c0(ray: BrokenRay, field_: GaugeField, x, tprime: float,
                        spec: Optional[BeamSpec] = None, tube: Optional[RayTube] = None) -> complex:
    """c_0 times the flux phase of the broken path ending at x after time t'.

    c_0 = 1/2 * cutoffs * (-1)^(r-1) / sqrt|J| where J is the transverse
    spreading of the ray family and r the leg containing x.
    """
    if spec is None:
        spec = BeamSpec(tuple(ray.start), tuple(ray.legs[0].direction), 1.0, 1.0, 1e12)
    if tube is None:
        tube = RayTube(ray, spec.delta1)
    exp = WavefrontExpansion(spec, ray, [], {}, field_, tube=tube)
    x = vec(x)
    errs = []
    for leg in range(len(ray.legs), 0, -1):
        try:
            return _broken_amp(exp, x, tprime, leg)
        except OutsideTube as e:
            errs.append(e)
    raise OutsideTube(f"point {tuple(x)} is not covered by the ray tube") from errs[-1]


# ----------------------------------------------------------------------------
# Kannai transform

EPSILON_SEQUENCE = (0.1, 0.05, 0.025)


def kannai_prefactor(constants: PhysicalConstants, t: float) -> complex:
    return np.exp(-1j * math.pi / 4) * math.sqrt(constants.mass / (2 * math.pi * constants.hbar * t))


def kannai_quadrature(w: Callable, constants: PhysicalConstants, x, t: float, epsilon: Optional[float] = None,
                      support: Optional[Tuple[float, float]] = None, w_rate: float = 0.0,
                      tol: float = 1e-6, points_per_wavelength: int = 12) -> complex:
    """Regularized Kannai integral by the trapezoidal rule.

    ``w(x, x0)`` must accept an array of x0.  The integrand is multiplied by
    chi_0(epsilon x0); with ``epsilon=None`` the sequence 0.1, 0.05, 0.025 is
    used and the last two values must agree to ``tol`` (relative).
    ``support`` restricts x0 to an interval outside which w vanishes, and
    ``w_rate`` bounds |d(arg w)/dx0|; the step resolves the largest local
    phase rate with ``points_per_wavelength`` nodes.
    """
    if not t > 0:
        raise ValidationError("kannai_quadrature needs t > 0")
    eps_list = EPSILON_SEQUENCE if epsilon is None else (epsilon,)
    a = constants.mass / (2 * constants.hbar * t)
    vals = []
    for eps in eps_list:
        lo, hi = -1.0 / eps, 1.0 / eps
        if support is not None:
            lo, hi = max(lo, support[0]), min(hi, support[1])
        if hi <= lo:
            vals.append(0.0j)
            continue
        rate = 2 * a * max(abs(lo), abs(hi)) + abs(w_rate)
        h = 2 * math.pi / (points_per_wavelength * max(rate, 1e-12))
        n = int(math.ceil((hi - lo) / h)) + 1
        x0 = np.linspace(lo, hi, n)
        f = mollifier(eps * x0) * np.exp(1j * a * x0 ** 2) * np.asarray(w(x, x0))
        vals.append(trapezoid(f, x0))
    vals = [kannai_prefactor(constants, t) * v for v in vals]
    if len(vals) > 1:
        ref = max(abs(vals[-1]), 1e-300)
        if abs(vals[-1] - vals[-2]) > tol * max(ref, 1.0):
            raise NonconvergentTail(
                f"Kannai integral changed by {abs(vals[-1] - vals[-2]):.3e} between the last two epsilons"
            )
    return complex(vals[-1])


def beam_support(spec: BeamSpec, x) -> Tuple[float, float]:
    """x0 interval outside which w_N(x, .) vanishes for a straight beam."""
    s = float((vec(x) - spec.x0) @ spec.omega)
    L = spec.length
    return (-abs(s) - L, abs(s) + L)


def kannai_stationary_phase(expansion: WavefrontExpansion, field_: GaugeField, x, t: float) -> complex:
    """Leading stationary-phase value of the Kannai transform (critical point x0 = kt).

    Straight beams use the infinite-ray flux integral; broken beams use the
    short-time scaling t = t'/k and the traced path of length t'.
    """
    spec = expansion.spec
    x = vec(x)
    c = spec.constants
    k = spec.k
    carrier = -c.mass * k * k * t / (2 * c.hbar)
    if not expansion.broken:
        s, tau = spec.coords(x, k * t)
        amp = spec.transverse(tau) * spec.longitudinal(s)
        ph = field_.ray_phase(x, spec.omega, np.inf)
        val = amp * np.exp(1j * (carrier + spec.kappa * float(x @ spec.omega) + ph))
        if spec.gauge is not None:
            val = val * np.exp(1j * spec.gauge.limit_phase(-spec.omega, field_))
        return complex(val)
    tprime = k * t
    for leg in range(len(expansion.ray.legs), 0, -1):
        try:
            psi, _ = expansion.phases[leg - 1](x)
            a = _broken_amp(replace(expansion, field=field_), x, tprime, leg)
        except OutsideTube:
            continue
        return complex(2.0 * a * np.exp(1j * (carrier + spec.kappa * psi)))
    raise OutsideTube(f"point {tuple(x)} is not covered by the beam tube")


def beam_quadrature_value(expansion: WavefrontExpansion, x, t: float, **kw) -> complex:
    """Kannai quadrature of the assembled w_N at (x, t)."""
    spec = expansion.spec
    wN = assemble_wN(expansion)
    if expansion.broken:
        wv = np.vectorize(lambda x0: wN(x, x0), otypes=[complex])
        f = lambda xx, x0: wv(x0)
        L = expansion.tube.locate(vec(x), len(expansion.ray.legs))[1]
        support = (-L - spec.length, L + spec.length)
    else:
        f = lambda xx, x0: wN(np.broadcast_to(xx, np.shape(x0) + (2,)), x0)
        support = beam_support(spec, x)
    kw.setdefault("w_rate", spec.kappa)
    kw.setdefault("support", support)
    return kannai_quadrature(f, spec.constants, x, t, **kw)


@dataclass
class BeamSolution:
    """u_N(x, t) by quadrature or by stationary phase."""

    expansion: WavefrontExpansion
    evaluator: Callable
    method: str
    time_scaling: str

    def __call__(self, x, t):
        return self.evaluator(x, t)

    @property
    def validity_time(self) -> float:
        if self.time_scaling == "plain":
            return validity_time(self.expansion.spec.k)
        return math.inf


def beam_solution(expansion: WavefrontExpansion, method: str = "stationary") -> BeamSolution:
    scaling = "short_time" if expansion.broken else "plain"
    if method == "stationary":
        ev = lambda x, t: kannai_stationary_phase(expansion, expansion.field, x, t)
    elif method == "quadrature":
        ev = lambda x, t: beam_quadrature_value(expansion, x, t)
    else:
        raise ValidationError(f"unknown beam method {method!r}")
    return BeamSolution(expansion, ev, method, scaling)


# ----------------------------------------------------------------------------
# residual diagnostics

def wave_residual_gN(expansion: WavefrontExpansion, field_: GaugeField, sample_region: GridSpec, t: float,
                     h: Optional[float] = None, ht: Optional[float] = None) -> float:
    """L2 norm over ``sample_region`` of the Kannai-transformed residual g_N at time t.

    The wave residual P w_N is evaluated with finite differences on a
    ray-coordinate grid at wave time kt; the Kannai transform is then taken
    at its stationary point, which doubles the a-part (the b-part lands on
    the mirror critical point with the same value).
    """
    spec = expansion.spec
    N = spec.order
    if expansion.broken:
        raise UnsupportedOrder("residuals are evaluated for straight beams")
    tw = spec.k * t
    pts = sample_region.points()
    s, tau = spec.coords(pts, tw)
    h = h if h is not None else spec.delta1 / 60
    ht = ht if ht is not None else min(h, tw / 40) if tw > 0 else h
    if tw > 0:
        ht = tw / max(1, round(tw / ht))  # wave time kt on a node
    grid = RayGrid.around((s.min(), s.max()), (tau.min(), tau.max()), tw, h, ht, N)
    R = AmplitudeSolver(spec, field_, grid).residual(N)
    lt = int(np.argmin(np.abs(grid.t - tw)))
    re = RegularGridInterpolator((grid.s, grid.tau), R[:, :, lt].real, method="cubic")
    im = RegularGridInterpolator((grid.s, grid.tau), R[:, :, lt].imag, method="cubic")
    q = np.stack([s.ravel(), tau.ravel()], axis=-1)
    vals = re(q) + 1j * im(q)
    return float(2.0 * np.sqrt(np.sum(np.abs(vals) ** 2)) * sample_region.spacing)
