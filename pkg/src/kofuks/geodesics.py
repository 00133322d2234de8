"""Geodesics of the Kobayashi-Fuks metric.

The Euler-Lagrange equation for a conformal density m(z)|dz|^2 reads
c'' = -(m_z / m)(c) (c')^2, the unique quadratic law conserving the energy
m(c)|c'|^2; trajectories are integrated as the
first-order system (z, v) with an adaptive embedded Runge-Kutta pair and a
boundary-abort event on rho.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .asymptotics import frak_h_jets
from .domains import PlanarDomain, boundary_point_at_depth, rho_jet
from .kernels import KernelError
from .metric import MetricError, MetricProvider, kf_metric

__all__ = [
    "GeodesicState",
    "Trajectory",
    "CriticalPoint",
    "CollarEstimate",
    "geodesic_rhs",
    "unit_speed_velocity",
    "integrate",
    "rho_second_derivative",
    "rho_second_derivative_direct",
    "critical_scan",
    "estimate_epsilon",
]


@dataclass(frozen=True)
class GeodesicState:
    t: float
    z: complex
    v: complex


@dataclass
class Trajectory:
    times: np.ndarray
    zs: np.ndarray  # complex positions
    vs: np.ndarray  # complex velocities
    energy: np.ndarray  # m(z) |v|^2 at stored states
    termination: str  # "horizon" | "boundary-abort" | "step-failure"
    arc_length: float
    _sol: object = field(default=None, repr=False)

    def state(self, t: float) -> GeodesicState:
        if self._sol is None:
            raise ValueError("trajectory has no dense output")
        y = self._sol(t)
        return GeodesicState(t=t, z=complex(y[0], y[1]), v=complex(y[2], y[3]))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy / self.energy[0] - 1.0)))


@dataclass(frozen=True)
class CriticalPoint:
    t_star: float
    z_star: complex
    rho_value: float
    second_derivative: float
    kind: str  # "minimum" | "maximum" | "degenerate"


@dataclass(frozen=True)
class CollarEstimate:
    eps_hat: float
    samples: int
    min_second_derivative: float
    # (depth, min over boundary samples of (rho o c)''(0) per unit Euclidean
    # speed, boundary point attaining the min) for each tested depth
    profile: tuple[tuple[float, float, complex], ...] = ()


def geodesic_rhs(z: complex, v: complex, provider: MetricProvider) -> complex:
    m, m_z = provider.density(z)
    return -(m_z / m) * v * v


def _density_clamped(provider: MetricProvider, domain: PlanarDomain,
                     z: complex) -> tuple[float, complex]:
    """Density with a radial pull-back fallback near (or past) the boundary.

    Stepper trial stages can land where a series provider cannot meet its
    tolerance within the term cap, or outside the domain entirely.  Those
    stages only ever occur past the boundary-abort event (which uses exact
    rho), so clamping them radially into the serviceable band changes no
    reported state.
    """
    try:
        return provider.density(z)
    except (KernelError, MetricError, ValueError, ZeroDivisionError):
        pass
    s = abs(z)
    u = z / s if s > 0.0 else 1.0 + 0.0j
    inner = domain.r if domain.r is not None else 0.0
    gap = 1e-4
    for _ in range(16):
        s_cl = min(max(s, inner + gap), 1.0 - gap)
        try:
            return provider.density(u * s_cl)
        except (KernelError, MetricError, ValueError, ZeroDivisionError):
            gap *= 2.0
    raise MetricError(f"metric evaluation failed near {z} even after clamping")


def unit_speed_velocity(z: complex, direction: complex, provider: MetricProvider) -> complex:
    """Rescale ``direction`` to unit metric norm at z."""
    m, _ = provider.density(z)
    return direction / (abs(direction) * math.sqrt(m))


def integrate(
    domain: PlanarDomain,
    provider: MetricProvider,
    z0: complex,
    v0: complex,
    t_span: tuple[float, float],
    rtol: float = 1e-10,
    atol: float = 1e-12,
    boundary_margin: float = 1e-6,
    max_step: float = np.inf,
) -> Trajectory:
    """Integrate the geodesic from (z0, v0) over ``t_span``.

    Aborts with reason "boundary-abort" when rho(z) rises above
    -boundary_margin (the metric blows up like 6|rho_z|^2/rho^2 there and
    step control stalls; escape would take infinite time anyway).
    """
    if not domain.contains(z0):
        raise ValueError(f"launch point {z0} is not interior")
    if v0 == 0 and t_span[1] != t_span[0]:
        raise ValueError("launch velocity must be nonzero")

    jet = domain.defining_function.jet

    def rhs(t, y):
        z = complex(y[0], y[1])
        v = complex(y[2], y[3])
        m, m_z = _density_clamped(provider, domain, z)
        a = -(m_z / m) * v * v
        return [v.real, v.imag, a.real, a.imag]

    def boundary_event(t, y):
        z = complex(y[0], y[1])
        if not domain.in_neighborhood(z):
            return boundary_margin  # already out; trip the event
        return -jet(z).rho - boundary_margin

    boundary_event.terminal = True
    boundary_event.direction = -1

    if t_span[1] == t_span[0]:
        m, _ = provider.density(z0)
        e = m * abs(v0) ** 2
        return Trajectory(
            times=np.array([t_span[0]]),
            zs=np.array([z0], dtype=complex),
            vs=np.array([v0], dtype=complex),
            energy=np.array([e]),
            termination="horizon",
            arc_length=0.0,
        )

    y0 = [z0.real, z0.imag, v0.real, v0.imag]
    sol = solve_ivp(
        rhs,
        t_span,
        y0,
        method="DOP853",
        rtol=rtol,
        atol=atol,
        dense_output=True,
        events=[boundary_event],
        max_step=max_step,
    )

    if sol.status == 1:
        termination = "boundary-abort"
    elif sol.status == 0:
        termination = "horizon"
    else:
        termination = "step-failure"

    zs = sol.y[0] + 1j * sol.y[1]
    vs = sol.y[2] + 1j * sol.y[3]
    energy = np.empty(zs.size)
    for i, (z, v) in enumerate(zip(zs, vs)):
        m, _ = _density_clamped(provider, domain, complex(z))
        energy[i] = m * abs(v) ** 2
    speeds = np.sqrt(energy)
    arc = float(np.trapezoid(speeds, sol.t))
    return Trajectory(
        times=sol.t,
        zs=zs,
        vs=vs,
        energy=energy,
        termination=termination,
        arc_length=arc,
        _sol=sol.sol,
    )


def rho_second_derivative(
    state: GeodesicState, domain: PlanarDomain, provider: MetricProvider
) -> float:
    """(rho o c)''(t) along a geodesic, from the jet-level formula.

    Expressed through the defining-function jets, the frakh jets, and
    gtilde^{-1} rho_z; every term is quadratic in the velocity.
    """
    if provider.metric_kind != "kofuks":
        raise ValueError("the second-derivative formula is specific to the KF metric")
    z, v = state.z, state.v
    rj = rho_jet(domain, z)
    kj = provider.kernel.jet(z)
    gt = kf_metric(kj)
    _, fzzb, fz2zb = frak_h_jets(rj, kj)
    rho = rj.rho
    inv_rz = rj.rho_z / gt  # gtilde^{-1} rho_z
    v2 = v * v
    term1 = -(2.0 / rho) * ((rho * fz2zb - 6.0 * rj.rho_z2zbar) * inv_rz * v2).real
    term2 = (4.0 / rho) * ((rj.rho_z * v) ** 2).real
    term3 = -(4.0 / rho) * (fzzb * inv_rz * rj.rho_z * v2).real
    term4 = 2.0 * rj.rho_zzbar * (v * v.conjugate()).real
    term5 = 2.0 * (1.0 - 6.0 / rho**2 * abs(rj.rho_z) ** 2 / gt) * (rj.rho_z2 * v2).real
    return term1 + term2 + term3 + term4 + term5


def rho_second_derivative_direct(
    state: GeodesicState, domain: PlanarDomain, provider: MetricProvider
) -> float:
    """Chain-rule route: 2 Re(rho_z c'') + 2 Re(rho_z2 v^2) + 2 rho_zzb |v|^2."""
    z, v = state.z, state.v
    rj = rho_jet(domain, z)
    acc = geodesic_rhs(z, v, provider)
    return (
        2.0 * (rj.rho_z * acc).real
        + 2.0 * (rj.rho_z2 * v * v).real
        + 2.0 * rj.rho_zzbar * abs(v) ** 2
    )


LEVEL_TOL = 1e-9  # max |(rho o c)'| below which the trajectory is "level"
ROOT_TOL = 1e-10  # time tolerance for critical-point bisection


def _rho_prime(domain: PlanarDomain, st: GeodesicState) -> float:
    rj = rho_jet(domain, st.z)
    return 2.0 * (rj.rho_z * st.v).real


def critical_scan(
    traj: Trajectory, domain: PlanarDomain, provider: MetricProvider,
    dt: float = 0.02,
) -> list[CriticalPoint]:
    """Bracket and bisect sign changes of (rho o c)' along the trajectory.

    Returns an empty list for level trajectories (e.g. the circular
    geodesic on the annulus, where rho o c is constant).
    """
    if traj.times.size < 2:
        raise ValueError("trajectory needs at least 2 samples")
    t0, t1 = float(traj.times[0]), float(traj.times[-1])
    n = max(int((t1 - t0) / dt), 2)
    ts = np.linspace(t0, t1, n + 1)
    dp = np.array([_rho_prime(domain, traj.state(t)) for t in ts])
    if np.max(np.abs(dp)) < LEVEL_TOL:
        return []  # level trajectory
    out: list[CriticalPoint] = []
    for i in range(n):
        a, b, fa, fb = ts[i], ts[i + 1], dp[i], dp[i + 1]
        if fa == 0.0 and i > 0:
            continue
        if fa * fb > 0.0:
            continue
        while b - a > ROOT_TOL:
            mid = 0.5 * (a + b)
            fm = _rho_prime(domain, traj.state(mid))
            if fa * fm <= 0.0:
                b, fb = mid, fm
            else:
                a, fa = mid, fm
        t_star = 0.5 * (a + b)
        st = traj.state(t_star)
        d2 = rho_second_derivative(st, domain, provider)
        kind = "minimum" if d2 > 0 else ("maximum" if d2 < 0 else "degenerate")
        out.append(
            CriticalPoint(
                t_star=t_star,
                z_star=st.z,
                rho_value=rho_jet(domain, st.z).rho,
                second_derivative=d2,
                kind=kind,
            )
        )
    return out


def _boundary_points(domain: PlanarDomain, n_angles: int) -> list[complex]:
    from scipy.optimize import brentq

    angles = 2.0 * math.pi * np.arange(n_angles) / n_angles
    pts = [complex(math.cos(th), math.sin(th)) for th in angles]
    if domain.kind == "annulus" and domain.r is not None:
        pts.extend(domain.r * complex(math.cos(th), math.sin(th))
                   for th in angles)
    elif domain.kind == "generic":
        # hole boundaries by ray casting outward from each anchor; the ray
        # starts at the first point inside the declared neighborhood (rho > 0
        # there, still inside the hole) and brackets the sign change
        for a in domain.hole_anchors:
            for th in angles:
                u = complex(math.cos(th), math.sin(th))

                def g(s: float) -> float:
                    return domain.rho(a + s * u)

                s_lo = 1e-3
                while s_lo < 2.0 and not domain.in_neighborhood(a + s_lo * u):
                    s_lo *= 1.25
                if s_lo >= 2.0 or g(s_lo) <= 0.0:
                    continue
                s_hi = s_lo
                while g(s_hi) > 0.0 and s_hi < 2.0:
                    s_hi *= 1.25
                if g(s_hi) > 0.0:
                    continue
                pts.append(a + brentq(g, s_lo, s_hi, xtol=1e-14) * u)
    return pts


def estimate_epsilon(
    domain: PlanarDomain,
    provider: MetricProvider,
    depths: list[float] | None = None,
    n_angles: int = 16,
    refine_bisections: int = 6,
) -> CollarEstimate:
    """Empirical collar width for the near-boundary convexity of rho o c.

    Launch points sit at prescribed rho-depths along inward normals with
    tangential directions (so (rho o c)'(0) = 0); the reported eps_hat is
    the largest tested depth below which every sampled (rho o c)''(0) is
    positive, refined by bisection between the last good and first bad
    depth.  Values are per unit Euclidean launch speed.
    """
    if depths is None:
        depths = [10 ** e for e in np.linspace(-3, math.log10(0.5), 10)]
    depths = sorted(depths)  # shallow collar first

    base_points = _boundary_points(domain, n_angles)

    def min_at_depth(depth: float) -> tuple[float, complex]:
        worst, worst_bp = math.inf, 0.0 + 0.0j
        for bp in base_points:
            z = boundary_point_at_depth(domain, bp, depth)
            rj = rho_jet(domain, z)
            tang = 1j * rj.rho_zbar / abs(rj.rho_z)  # Re(rho_z v) = 0
            for v in (tang, -tang):
                d2 = rho_second_derivative(
                    GeodesicState(t=0.0, z=z, v=v), domain, provider
                )
                if d2 < worst:
                    worst, worst_bp = d2, bp
        return worst, worst_bp

    from .domains import DomainError

    profile: list[tuple[float, float, complex]] = []
    samples = 0
    eps_hat = 0.0
    first_bad = None
    for d in depths:
        try:
            worst, bp = min_at_depth(d)
        except DomainError:
            break  # depth exceeds the domain's rho range; nothing deeper exists
        samples += 2 * len(base_points)
        profile.append((d, worst, bp))
        if worst > 0.0 and first_bad is None:
            eps_hat = d
        elif first_bad is None:
            first_bad = d
            break

    if eps_hat == 0.0:
        return CollarEstimate(
            eps_hat=0.0, samples=samples, min_second_derivative=float("nan"),
            profile=tuple(profile),
        )

    if first_bad is not None:
        lo, hi = eps_hat, first_bad
        for _ in range(refine_bisections):
            mid = math.sqrt(lo * hi)
            worst, bp = min_at_depth(mid)
            samples += 2 * len(base_points)
            profile.append((mid, worst, bp))
            if worst > 0.0:
                lo = mid
            else:
                hi = mid
        eps_hat = lo

    good = [p for p in profile if p[0] <= eps_hat * (1 + 1e-12) and p[1] > 0.0]
    min_d2 = min(p[1] for p in good)
    return CollarEstimate(
        eps_hat=eps_hat,
        samples=samples,
        min_second_derivative=min_d2,
        profile=tuple(sorted(profile)),
    )
