"""Bergman metric, the potential A_D, and the Kobayashi-Fuks metric.

Everything is a hard-coded product-rule expansion in the kernel jets
k[a][b] = K^{(a,b)}(z); no runtime symbolic algebra.  The two defining
identities in dimension one:

    g      = (K K_zzb - |K_z|^2) / K^2          (Bergman density)
    gtilde = (A A_zzb - |A_z|^2) / A^2          (Kobayashi-Fuks density)

with A = K K_zzb - K_z K_zb and the cross route gtilde = 2 g - Ric,
Ric = -(g g_zzb - |g_z|^2)/g^2.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .kernels import KernelJet

__all__ = [
    "MetricSample",
    "MetricError",
    "a_jets",
    "bergman_metric",
    "bergman_metric_z",
    "a_potential",
    "kf_metric",
    "kf_metric_z",
    "ricci",
    "MetricProvider",
    "RadialMetricCache",
    "cross_route_tolerance",
    "pullback_residual",
    "mobius",
    "rotation",
    "annulus_inversion",
]


class MetricError(ValueError):
    """Kernel jets produced an inconsistent (non-positive) metric quantity."""


@dataclass(frozen=True)
class MetricSample:
    g: float
    a_pot: float
    g_tilde: float
    g_tilde_z: complex
    ric: float  # Ricci component -(d/dz)(d/dzbar) log g
    err: float  # propagated truncation estimate

    @property
    def ricci_curvature(self) -> float:
        # The Kobayashi bound (< n+1 = 2) applies to the normalized value.
        return self.ric / self.g


def a_jets(kj: KernelJet) -> tuple[float, complex, float, complex, complex]:
    """A and its derivatives (A, A_z, A_zzb, A_z2, A_z2zb) from kernel jets.

    Derived once from A = K K_zzb - K_z K_zb; the (1,0) derivative
    telescopes to A_z = K K_z2zb - K_z2 K_zb, and similarly upward.
    """
    k = kj.k
    K = k[0, 0]
    A = K * k[1, 1] - k[1, 0] * k[0, 1]
    A_z = K * k[2, 1] - k[2, 0] * k[0, 1]
    A_zzb = K * k[2, 2] - k[2, 0] * k[0, 2]
    A_z2 = k[1, 0] * k[2, 1] + K * k[3, 1] - k[3, 0] * k[0, 1] - k[2, 0] * k[1, 1]
    A_z2zb = K * k[3, 2] + k[1, 0] * k[2, 2] - k[3, 0] * k[0, 2] - k[2, 0] * k[1, 2]
    return A.real, A_z, A_zzb.real, A_z2, A_z2zb


def bergman_metric(kj: KernelJet) -> float:
    K = kj.k[0, 0].real
    if K <= 0.0:
        raise MetricError(f"kernel value must be positive, got {K}")
    A, *_ = a_jets(kj)
    g = A / (K * K)
    if g <= 0.0:
        raise MetricError(f"non-positive Bergman metric g = {g}")
    return g


def a_potential(kj: KernelJet) -> float:
    A, *_ = a_jets(kj)
    if A <= 0.0:
        raise MetricError(f"non-positive potential A = {A}")
    return A


def kf_metric(kj: KernelJet) -> float:
    A, A_z, A_zzb, _, _ = a_jets(kj)
    gt = (A * A_zzb - (A_z * A_z.conjugate()).real) / (A * A)
    if gt <= 0.0:
        raise MetricError(f"non-positive Kobayashi-Fuks metric {gt} (jets {kj.k!r})")
    return gt


def kf_metric_z(kj: KernelJet) -> complex:
    A, A_z, A_zzb, A_z2, A_z2zb = a_jets(kj)
    A_zb = A_z.conjugate()
    return (
        A_z2zb / A
        - (2.0 * A_z * A_zzb + A_z2 * A_zb) / (A * A)
        + 2.0 * A_z * A_z * A_zb / (A * A * A)
    )


def _g_jets(kj: KernelJet) -> tuple[float, complex, float]:
    """(g, g_z, g_zzb) for the Bergman density g = A/K^2."""
    k = kj.k
    K = k[0, 0].real
    A, A_z, A_zzb, _, _ = a_jets(kj)
    K_z, K_zb, K_zzb = k[1, 0], k[0, 1], k[1, 1].real
    g = A / K**2
    g_z = A_z / K**2 - 2.0 * A * K_z / K**3
    g_zzb = (
        A_zzb / K**2
        - 2.0 * (A_z * K_zb + A_z.conjugate() * K_z).real / K**3
        - 2.0 * A * K_zzb / K**3
        + 6.0 * A * (K_z * K_zb).real / K**4
    )
    return g, g_z, g_zzb


def bergman_metric_z(kj: KernelJet) -> complex:
    return _g_jets(kj)[1]


def ricci(kj: KernelJet) -> float:
    """Ricci component -(log g)_zzb of the Bergman metric."""
    g, g_z, g_zzb = _g_jets(kj)
    ric = -(g * g_zzb - (g_z * g_z.conjugate()).real) / (g * g)
    if ric >= 2.0 * g:
        raise MetricError(
            f"Ricci component {ric} violates the Kobayashi bound (2g = {2 * g})"
        )
    return ric


def cross_route_tolerance(err: float) -> float:
    # Series providers cannot beat their own tails.
    return max(1e-8, 100.0 * err)


class MetricProvider:
    """Per-point metric sampler over a kernel provider.

    ``metric_kind`` selects the density driving geodesics: the
    Kobayashi-Fuks metric (default) or the plain Bergman metric (the
    Herbort-comparison toggle).
    """

    def __init__(self, kernel_provider, metric_kind: str = "kofuks"):
        if metric_kind not in ("kofuks", "bergman"):
            raise ValueError(f"unknown metric kind {metric_kind!r}")
        self.kernel = kernel_provider
        self.metric_kind = metric_kind

    def sample(self, z: complex) -> MetricSample:
        kj = self.kernel.jet(z)
        g = bergman_metric(kj)
        A = a_potential(kj)
        gt = kf_metric(kj)
        gt_z = kf_metric_z(kj)
        ric = ricci(kj)
        s = MetricSample(g=g, a_pot=A, g_tilde=gt, g_tilde_z=gt_z, ric=ric,
                         err=kj.truncation_error)
        if abs(gt - (2.0 * g - ric)) > cross_route_tolerance(s.err) * gt:
            raise MetricError(
                f"route disagreement at {z}: gtilde = {gt}, 2g - Ric = {2 * g - ric}"
            )
        return s

    def density(self, z: complex) -> tuple[float, complex]:
        """(metric density, its z-derivative) for geodesic integration."""
        kj = self.kernel.jet(z)
        if self.metric_kind == "kofuks":
            return kf_metric(kj), kf_metric_z(kj)
        g, g_z, _ = _g_jets(kj)
        return g, g_z


class RadialMetricCache:
    """Spline cache of a rotation-invariant metric density on an annulus.

    Geodesic work evaluates the density thousands of times; on an annulus
    the density depends on t = |z|^2 only, so a one-dimensional spline of
    F(t) = log(m (1-t)^2 (t-r^2)^2) (bounded up to both boundaries) replaces
    the series summation.  Interpolation is uniform in
    x = log((1-t)/(t-r^2)), which resolves both boundary layers.
    """

    def __init__(self, provider: MetricProvider, r: float, n: int = 4000,
                 pad: float = 2e-3):
        from scipy.interpolate import CubicSpline

        self.base = provider
        self.metric_kind = provider.metric_kind
        self.kernel = provider.kernel
        self.r = r
        r2 = r * r
        t_lo, t_hi = r2 + pad * (1.0 - r2), 1.0 - pad * (1.0 - r2)
        x_lo = math.log((1.0 - t_hi) / (t_hi - r2))
        x_hi = math.log((1.0 - t_lo) / (t_lo - r2))
        xs = np.linspace(x_lo, x_hi, n)
        # invert x(t): (1-t)/(t-r^2) = e^x  =>  t = (1 + r^2 e^x)/(1 + e^x)
        ts = (1.0 + r2 * np.exp(xs)) / (1.0 + np.exp(xs))
        fs = np.empty(n)
        ds = np.empty(n)
        for i, t in enumerate(ts):
            s = math.sqrt(t)
            m, m_z = provider.density(s + 0.0j)
            fs[i] = math.log(m * (1.0 - t) ** 2 * (t - r2) ** 2)
            # m_z = m (dlog m/dt) zbar on a radial density; sample the exact
            # derivative rather than differentiating the spline
            ds[i] = (m_z / (m * s)).real
        self._x_lo, self._x_hi = x_lo, x_hi
        self._r2 = r2
        self._spl = CubicSpline(xs, fs)
        self._dspl = CubicSpline(xs, ds)

    def density(self, z: complex) -> tuple[float, complex]:
        t = (z * z.conjugate()).real
        r2 = self._r2
        x = math.log((1.0 - t) / (t - r2)) if r2 < t < 1.0 else math.inf
        if not self._x_lo <= x <= self._x_hi:
            raise MetricError(f"|z| = {abs(z)} outside the cached radial band")
        F = float(self._spl(x))
        m = math.exp(F) / ((1.0 - t) ** 2 * (t - r2) ** 2)
        dlogm = float(self._dspl(x))
        return m, m * dlogm * z.conjugate()

    def sample(self, z: complex) -> MetricSample:
        return self.base.sample(z)


# ---------------------------------------------------------------------------
# biholomorphism pullback checks


def mobius(a: complex):
    """Disk automorphism z -> (z - a)/(1 - conj(a) z)."""

    def F(z: complex) -> complex:
        return (z - a) / (1.0 - a.conjugate() * z)

    def Fp(z: complex) -> complex:
        return (1.0 - (a * a.conjugate()).real) / (1.0 - a.conjugate() * z) ** 2

    return F, Fp


def rotation(theta: float):
    w = cmath.exp(1j * theta)
    return (lambda z: w * z), (lambda z: w)


def annulus_inversion(r: float):
    """The annulus automorphism z -> r/z swapping the boundary circles."""
    return (lambda z: r / z), (lambda z: -r / (z * z))


def pullback_residual(F, Fp, provider: MetricProvider, z: complex,
                      provider_image: MetricProvider | None = None) -> float:
    """Relative violation of gtilde(z) = |F'(z)|^2 gtilde(F(z))."""
    tgt = provider_image if provider_image is not None else provider
    left = provider.density(z)[0]
    right = abs(Fp(z)) ** 2 * tgt.density(F(z))[0]
    return abs(left - right) / left
