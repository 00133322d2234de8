"""Bounded planar domains described by smooth defining functions.

A domain is D = {rho < 0} for a defining function rho on a neighborhood of
the closure, with rho = 0 and rho_z != 0 on the boundary.  All derivatives
use the Wirtinger convention, z = x + iy.
"""

from __future__ import annotations

import cmath
import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "RhoJet",
    "DefiningFunction",
    "PlanarDomain",
    "DomainError",
    "SubharmonicityError",
    "rho_jet",
    "make_strictly_subharmonic",
    "in_compact_sublevel",
    "product_jet",
    "unit_disk",
    "annulus",
    "two_hole_domain",
    "boundary_point_at_depth",
]

# Neighborhood margin for the built-in domains (fraction of the gap scale).
_MARGIN = 0.05


class DomainError(ValueError):
    """Point outside the declared neighborhood, or an invalid domain."""


class SubharmonicityError(ValueError):
    """The exponential trick cannot produce a strictly subharmonic rho."""


@dataclass(frozen=True)
class RhoJet:
    """Values of rho and its Wirtinger derivatives up to mixed order (2,1)."""

    rho: float
    rho_z: complex
    rho_z2: complex
    rho_zzbar: float
    rho_z2zbar: complex

    @property
    def rho_zbar(self) -> complex:
        # rho is real-valued, so the (0,1) derivative is the conjugate.
        return self.rho_z.conjugate()

    def is_finite(self) -> bool:
        vals = (self.rho, self.rho_z, self.rho_z2, self.rho_zzbar, self.rho_z2zbar)
        return all(math.isfinite(abs(complex(v))) for v in vals)


@dataclass(frozen=True)
class DefiningFunction:
    """Smooth defining function evaluated through its jet.

    ``jet`` must be valid on the declared neighborhood of the closure.
    ``c1`` records the grid lower bound for rho_zzbar when the function is
    flagged strictly subharmonic.
    """

    jet: Callable[[complex], RhoJet]
    strictly_subharmonic: bool = False
    c1: float = 0.0
    description: str = "generic"


@dataclass(frozen=True)
class PlanarDomain:
    kind: str  # "unit-disk" | "annulus" | "generic"
    defining_function: DefiningFunction
    hole_anchors: tuple[complex, ...] = ()
    bounding_box: tuple[float, float, float, float] = (-1.0, -1.0, 1.0, 1.0)
    in_neighborhood: Callable[[complex], bool] = field(default=lambda z: True)
    r: float | None = None  # annulus inner radius, when applicable
    lambda_used: float | None = None

    def rho(self, z: complex) -> float:
        return rho_jet(self, z).rho

    def contains(self, z: complex) -> bool:
        return self.in_neighborhood(z) and self.rho(z) < 0.0

    def description(self) -> str:
        anchors = ",".join(f"{a.real:.17g}{a.imag:+.17g}j" for a in self.hole_anchors)
        bbox = " ".join(f"{b:.17g}" for b in self.bounding_box)
        r = "" if self.r is None else f" r={self.r:.17g}"
        lam = "" if self.lambda_used is None else f" lambda={self.lambda_used:.17g}"
        return f"kind={self.kind}{r} anchors=[{anchors}] bbox=[{bbox}]{lam} rho={self.defining_function.description}"

    def hash(self) -> str:
        return hashlib.sha256(self.description().encode()).hexdigest()[:16]


def rho_jet(domain: PlanarDomain, z: complex) -> RhoJet:
    """Evaluate the defining-function jet at ``z``."""
    if not domain.in_neighborhood(z):
        raise DomainError(f"point {z} outside the declared neighborhood of {domain.kind}")
    return domain.defining_function.jet(z)


def in_compact_sublevel(domain: PlanarDomain, z: complex, eps1: float) -> bool:
    """True iff rho(z) <= -eps1/2 (membership in the compact set K)."""
    if eps1 <= 0:
        raise ValueError("eps1 must be positive")
    return domain.rho(z) <= -eps1 / 2.0


# ---------------------------------------------------------------------------
# jet algebra helpers


def product_jet(a: RhoJet, b: RhoJet) -> RhoJet:
    """Jet of the product of two real-valued smooth functions."""
    return RhoJet(
        rho=a.rho * b.rho,
        rho_z=a.rho_z * b.rho + a.rho * b.rho_z,
        rho_z2=a.rho_z2 * b.rho + 2.0 * a.rho_z * b.rho_z + a.rho * b.rho_z2,
        rho_zzbar=(a.rho_zzbar * b.rho + (a.rho_z * b.rho_zbar).real * 2.0 + a.rho * b.rho_zzbar),
        rho_z2zbar=(
            a.rho_z2zbar * b.rho
            + a.rho_z2 * b.rho_zbar
            + 2.0 * a.rho_zzbar * b.rho_z
            + 2.0 * a.rho_z * b.rho_zzbar
            + a.rho_zbar * b.rho_z2
            + a.rho * b.rho_z2zbar
        ),
    )


def circle_jet(center: complex, radius: float, z: complex) -> RhoJet:
    """Jet of |z - center|^2 - radius^2."""
    w = z - center
    return RhoJet(
        rho=(w * w.conjugate()).real - radius * radius,
        rho_z=w.conjugate(),
        rho_z2=0.0,
        rho_zzbar=1.0,
        rho_z2zbar=0.0,
    )


# ---------------------------------------------------------------------------
# the exponential subharmonicity trick


def _grid_points(
    bbox: tuple[float, float, float, float],
    in_nbhd: Callable[[complex], bool],
    n: int,
) -> np.ndarray:
    x0, y0, x1, y1 = bbox
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    zz = (xs[None, :] + 1j * ys[:, None]).ravel()
    mask = np.fromiter((in_nbhd(complex(z)) for z in zz), dtype=bool, count=zz.size)
    return zz[mask]


def make_strictly_subharmonic(
    f: DefiningFunction,
    bbox: tuple[float, float, float, float],
    in_nbhd: Callable[[complex], bool] = lambda z: True,
    grid_n: int = 256,
    safety_factor: float = 1.1,
) -> tuple[DefiningFunction, float]:
    """Wrap ``f`` as rho~ = (exp(lambda*rho) - 1)/lambda, strictly subharmonic.

    lambda is chosen from a grid scan so that lambda*|rho_z|^2 + rho_zzbar > 0
    wherever rho_zzbar fails to be positive; the output is verified by a grid
    positivity check of the chain-rule Laplacian.

    Returns the wrapped function and the chosen lambda.
    """
    pts = _grid_points(bbox, in_nbhd, grid_n)
    if pts.size == 0:
        raise DomainError("sampling grid does not intersect the declared neighborhood")

    needed = 0.0
    for z in pts:
        j = f.jet(complex(z))
        if j.rho_zzbar > 0.0:
            continue
        gz2 = abs(j.rho_z) ** 2
        if gz2 < 1e-10:
            raise SubharmonicityError(
                f"cannot choose lambda: rho_zzbar <= 0 and |rho_z|^2 < 1e-10 at z = {z}"
            )
        needed = max(needed, -j.rho_zzbar / gz2)

    # Already subharmonic everywhere: a unit lambda keeps the wrapper
    # nondegenerate (lambda -> 0 would reduce to the identity).
    lam = safety_factor * needed if needed > 0.0 else 1.0

    base = f.jet

    def wrapped(z: complex) -> RhoJet:
        j = base(z)
        e = math.exp(lam * j.rho)
        # phi(u) = (e^{lam u} - 1)/lam, phi' = e^{lam u}, phi'' = lam e, phi''' = lam^2 e
        p1, p2, p3 = e, lam * e, lam * lam * e
        return RhoJet(
            rho=(e - 1.0) / lam,
            rho_z=p1 * j.rho_z,
            rho_z2=p2 * j.rho_z * j.rho_z + p1 * j.rho_z2,
            rho_zzbar=p2 * abs(j.rho_z) ** 2 + p1 * j.rho_zzbar,
            rho_z2zbar=(
                p3 * j.rho_z * j.rho_z * j.rho_zbar
                + 2.0 * p2 * j.rho_z * j.rho_zzbar
                + p2 * j.rho_zbar * j.rho_z2
                + p1 * j.rho_z2zbar
            ),
        )

    c1 = math.inf
    for z in pts:
        j = wrapped(complex(z))
        if j.rho_zzbar <= 0.0:
            raise SubharmonicityError(
                f"grid positivity check failed at z = {z}: rho~_zzbar = {j.rho_zzbar}"
            )
        c1 = min(c1, j.rho_zzbar)

    out = DefiningFunction(
        jet=wrapped,
        strictly_subharmonic=True,
        c1=c1,
        description=f"exp-trick(lambda={lam:.17g}, {f.description})",
    )
    return out, lam


# ---------------------------------------------------------------------------
# built-in domains


def unit_disk() -> PlanarDomain:
    """Unit disk with rho = |z|^2 - 1 (already strictly subharmonic)."""

    def jet(z: complex) -> RhoJet:
        return RhoJet(
            rho=(z * z.conjugate()).real - 1.0,
            rho_z=z.conjugate(),
            rho_z2=0.0,
            rho_zzbar=1.0,
            rho_z2zbar=0.0,
        )

    f = DefiningFunction(jet=jet, strictly_subharmonic=True, c1=1.0, description="|z|^2-1")
    return PlanarDomain(
        kind="unit-disk",
        defining_function=f,
        hole_anchors=(),
        bounding_box=(-1.02, -1.02, 1.02, 1.02),
        in_neighborhood=lambda z: abs(z) < 1.2,
    )


def _annulus_raw_jet(r: float) -> Callable[[complex], RhoJet]:
    # rho = (t - 1)(t - r^2) with t = |z|^2; P(t) = t^2 - (1 + r^2) t + r^2.
    s = 1.0 + r * r

    def jet(z: complex) -> RhoJet:
        t = (z * z.conjugate()).real
        p1 = 2.0 * t - s
        return RhoJet(
            rho=(t - 1.0) * (t - r * r),
            rho_z=p1 * z.conjugate(),
            rho_z2=2.0 * z.conjugate() * z.conjugate(),
            rho_zzbar=4.0 * t - s,
            rho_z2zbar=4.0 * z.conjugate(),
        )

    return jet


def annulus(r: float, lambda_safety: float = 1.1, grid_n: int = 256) -> PlanarDomain:
    """Annulus r < |z| < 1 with the exp-trick applied to (|z|^2-1)(|z|^2-r^2)."""
    if not 0.0 < r < 1.0:
        raise DomainError(f"annulus inner radius must lie in (0,1), got {r}")
    delta = _MARGIN * (1.0 - r)
    lo, hi = r - delta, 1.0 + delta

    def in_nbhd(z: complex) -> bool:
        return lo < abs(z) < hi

    raw = DefiningFunction(jet=_annulus_raw_jet(r), description=f"(|z|^2-1)(|z|^2-{r}^2)")
    bbox = (-hi, -hi, hi, hi)
    f, lam = make_strictly_subharmonic(raw, bbox, in_nbhd, grid_n, lambda_safety)
    return PlanarDomain(
        kind="annulus",
        defining_function=f,
        hole_anchors=(0.0 + 0.0j,),
        bounding_box=(-1.02, -1.02, 1.02, 1.02),
        in_neighborhood=in_nbhd,
        r=r,
        lambda_used=lam,
    )


def two_hole_domain(
    hole_centers: tuple[complex, complex] = (-0.45 + 0.0j, 0.45 + 0.0j),
    hole_radius: float = 0.15,
    lambda_safety: float = 1.1,
    grid_n: int = 256,
) -> PlanarDomain:
    """Unit disk minus two round holes; smoothed product defining function."""
    a, b = hole_centers
    rr = hole_radius

    def raw_jet(z: complex) -> RhoJet:
        outer = circle_jet(0.0, 1.0, z)
        h1 = circle_jet(a, rr, z)
        h2 = circle_jet(b, rr, z)
        return product_jet(product_jet(outer, h1), h2)

    pad = 0.3 * rr

    def in_nbhd(z: complex) -> bool:
        return abs(z) < 1.0 + pad and abs(z - a) > rr - pad and abs(z - b) > rr - pad

    raw = DefiningFunction(jet=raw_jet, description=f"disk-minus-2-holes(r={rr})")
    bbox = (-1.0 - pad, -1.0 - pad, 1.0 + pad, 1.0 + pad)
    f, lam = make_strictly_subharmonic(raw, bbox, in_nbhd, grid_n, lambda_safety)
    return PlanarDomain(
        kind="generic",
        defining_function=f,
        hole_anchors=(a, b),
        bounding_box=(-1.02, -1.02, 1.02, 1.02),
        in_neighborhood=in_nbhd,
        lambda_used=lam,
    )


# ---------------------------------------------------------------------------
# collar sampling


def boundary_point_at_depth(
    domain: PlanarDomain,
    boundary_point: complex,
    depth: float,
    max_dist: float | None = None,
) -> complex:
    """Point on the inward normal from ``boundary_point`` with rho = -depth."""
    j = rho_jet(domain, boundary_point)
    if abs(j.rho) > 1e-8:
        raise DomainError(f"{boundary_point} is not on the boundary (rho = {j.rho})")
    grad = 2.0 * j.rho_zbar  # real gradient of rho as a complex number
    if abs(grad) == 0.0:
        raise DomainError("vanishing gradient at the boundary point")
    inward = -grad / abs(grad)

    def g(s: float) -> float:
        return domain.rho(boundary_point + s * inward) + depth

    hi = max_dist if max_dist is not None else 0.5
    # expand until the sublevel is bracketed
    s1 = min(hi, 2.0 * depth / abs(grad))
    while g(s1) > 0.0:
        s1 *= 1.6
        if s1 > hi:
            s1 = hi
            break
    if g(s1) > 0.0:
        raise DomainError(f"cannot reach depth {depth} along the inward normal")
    return boundary_point + brentq(g, 0.0, s1, xtol=1e-15) * inward


def rotate_jet(jet: RhoJet, theta: float) -> RhoJet:
    """Tensorial rotation of a jet: components of rho(e^{i theta} z) at z."""
    w = cmath.exp(-1j * theta)
    return RhoJet(
        rho=jet.rho,
        rho_z=jet.rho_z * w,
        rho_z2=jet.rho_z2 * w * w,
        rho_zzbar=jet.rho_zzbar,
        rho_z2zbar=jet.rho_z2zbar * w,
    )
