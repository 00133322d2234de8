"""Bergman kernel diagonal derivative jets.

Three providers: the closed form on the unit disk, a bilateral Laurent
series on the annulus, and a quadrature Gram-Schmidt orthonormal basis for
generic domains.  A jet stores K^{(a,b)}(z) = d^a/dz^a d^b/dzbar^b K(z,z)
for a <= 3, b <= 2.
"""

from __future__ import annotations

import hashlib
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domains import DomainError, PlanarDomain

__all__ = [
    "KernelJet",
    "KernelError",
    "DiskKernel",
    "AnnulusKernel",
    "BasisKernel",
    "Quadrature",
    "midpoint_quadrature",
    "polar_quadrature",
    "HoloBasisFunction",
    "OrthonormalBasis",
    "build_basis",
    "kernel_jet",
    "save_basis",
    "load_basis",
    "cache_dir",
]

JET_A = 4  # orders 0..3 in z
JET_B = 3  # orders 0..2 in zbar


class KernelError(ValueError):
    """Invalid evaluation point or unreachable tolerance."""


@dataclass(frozen=True)
class KernelJet:
    """Diagonal kernel jet; ``k[a][b]`` for a <= 3, b <= 2.

    ``truncation_error`` is a relative error estimate for the stored
    entries (0 for closed forms).
    """

    k: np.ndarray  # complex, shape (4, 3)
    truncation_error: float
    provenance: str = "closed-form"

    @property
    def value(self) -> float:
        return self.k[0, 0].real


def falling(n: int, a: int) -> float:
    """Falling factorial n (n-1) ... (n-a+1); valid for negative n."""
    out = 1.0
    for i in range(a):
        out *= n - i
    return out


class DiskKernel:
    """Closed-form kernel of the unit disk, K = 1/(pi (1-|z|^2)^2)."""

    provider_name = "closed-form"

    def jet(self, z: complex) -> KernelJet:
        if abs(z) >= 1.0:
            raise KernelError(f"|z| = {abs(z)} is not inside the unit disk")
        u = 1.0 - (z * z.conjugate()).real
        k = np.zeros((JET_A, JET_B), dtype=complex)
        zb = z.conjugate()
        for a in range(JET_A):
            # d^a/dz^a u^{-2} = (a+1)! zbar^a u^{-(a+2)}
            m = a + 2
            coeff = math.factorial(a + 1)
            for b in range(JET_B):
                # d^b/dzbar^b [zbar^a u^{-m}] by the Leibniz rule
                s = 0.0 + 0.0j
                for j in range(min(a, b) + 1):
                    i = b - j  # derivatives landing on u^{-m}
                    c = math.comb(b, j) * falling(a, j)
                    mono = zb ** (a - j) if a - j else 1.0
                    # d^i/dzbar^i u^{-m} = (m+i-1)!/(m-1)! z^i u^{-m-i}
                    fac = math.factorial(m + i - 1) / math.factorial(m - 1)
                    s += c * mono * fac * z**i * u ** (-(m + i))
                k[a, b] = coeff * s / math.pi
        return KernelJet(k=k, truncation_error=0.0, provenance="closed-form")


class AnnulusKernel:
    """Laurent-series kernel on the annulus r < |z| < 1.

    K(z, z) = sum_n |z|^{2n} / ||z^n||^2 with
    ||z^n||^2 = pi (1 - r^{2n+2})/(n+1) for n != -1 and 2 pi log(1/r) at
    n = -1.  Jets come from term-wise differentiation; the remainder is
    bounded by a geometric tail estimate.
    """

    provider_name = "series"

    def __init__(self, r: float, tol: float = 1e-10, max_terms: int = 100_000):
        if not 0.0 < r < 1.0:
            raise KernelError(f"inner radius must be in (0,1), got {r}")
        self.r = r
        self.tol = tol
        self.max_terms = max_terms

    def _term_weights(self, n: np.ndarray, t: float) -> np.ndarray:
        """Stable c_n t^n: the n-th series term of K on the diagonal."""
        r = self.r
        w = np.empty(n.shape, dtype=float)
        pos = n >= 0
        npos = n[pos]
        # (n+1)/pi * t^n / (1 - r^{2n+2}); both powers underflow harmlessly
        w[pos] = (npos + 1) / math.pi * t ** npos.astype(float) / (
            1.0 - r ** (2.0 * npos + 2.0)
        )
        neg = n <= -2
        m = -n[neg].astype(float)
        # rewrite with q = r^2/t < 1 so nothing overflows for large m
        q = r * r / t
        w[neg] = (m - 1.0) / (math.pi * (1.0 - r ** (2.0 * m - 2.0))) * q**m / (r * r)
        mid = n == -1
        if mid.any():
            w[mid] = 1.0 / (t * 2.0 * math.pi * math.log(1.0 / r))
        return w

    def jet(self, z: complex, n_range: tuple[int, int] | None = None) -> KernelJet:
        t = (z * z.conjugate()).real
        if not self.r < abs(z) < 1.0:
            raise KernelError(f"|z| = {abs(z)} outside annulus ({self.r}, 1)")

        if n_range is None:
            n_lo, n_hi = self._select_range(t)
        else:
            n_lo, n_hi = n_range

        n = np.arange(n_lo, n_hi + 1)
        w = self._term_weights(n, t)
        # k[a,b] = z^{-a} zbar^{-b} sum_n c_n ff(n,a) ff(n,b) t^n: real sums
        # and two scalar monomial factors.
        nf = n.astype(float)
        fall = np.ones((JET_A, n.size))
        for a in range(1, JET_A):
            fall[a] = fall[a - 1] * (nf - (a - 1))
        s = np.einsum("an,n,bn->ab", fall, w, fall[:JET_B])
        zi, zbi = 1.0 / z, 1.0 / z.conjugate()
        za = np.array([zi**a for a in range(JET_A)])
        zbb = np.array([zbi**b for b in range(JET_B)])
        k = s * za[:, None] * zbb[None, :]

        err = self._tail_bound(t, n_lo, n_hi)
        if err > self.tol:
            raise KernelError(
                f"tolerance {self.tol} unreachable within {self.max_terms} terms "
                f"(tail bound {err:.3e} at |z| = {abs(z):.6f})"
            )
        return KernelJet(k=k, truncation_error=err, provenance="series")

    def _falling_vec(self, n: np.ndarray, a: int) -> np.ndarray:
        out = np.ones(n.shape, dtype=float)
        for i in range(a):
            out = out * (n - i)
        return out

    def _select_range(self, t: float) -> tuple[int, int]:
        # Terms on the positive side decay like t^n, on the negative side
        # like (r^2/t)^m; polynomial jet weights cost a log factor.
        r2 = self.r * self.r
        q_pos, q_neg = t, r2 / t
        target = math.log(1.0 / (self.tol * 1e-3))

        def count(q: float) -> int:
            lq = -math.log(q)
            n = (target + 6.0) / lq
            for _ in range(4):  # fixed-point for the n^5 weight
                n = (target + 5.0 * math.log(max(n, 2.0)) + 6.0) / lq
            return int(n) + 8

        n_hi = count(q_pos)
        n_lo = -count(q_neg)
        if (n_hi - n_lo + 1) > self.max_terms:
            raise KernelError(
                f"tolerance {self.tol} needs {n_hi - n_lo + 1} terms, "
                f"cap is {self.max_terms}"
            )
        return n_lo, n_hi

    def _tail_bound(self, t: float, n_lo: int, n_hi: int) -> float:
        # Relative geometric-tail bound for the worst jet (order (3,2)):
        # the term ratio beyond the cut is below q = max(t, r^2/t) times a
        # slowly varying polynomial factor, absorbed in the 1/(1-q) margin.
        r2 = self.r * self.r
        K0 = 1.0 / (math.pi * (1.0 - t) ** 2)  # scale of the sum
        bound = 0.0
        for q, n_edge in ((t, n_hi), (r2 / t, -n_lo)):
            m = abs(n_edge)
            lead = (m + 1) ** 5 / math.pi * q**m
            bound += lead * q / (1.0 - q)
        return bound / K0


# ---------------------------------------------------------------------------
# quadrature and orthonormal bases


@dataclass(frozen=True)
class Quadrature:
    nodes: np.ndarray  # complex
    weights: np.ndarray  # real, positive
    spec: str


def midpoint_quadrature(
    domain: PlanarDomain, nx: int, ny: int, refine: int = 8
) -> Quadrature:
    """Midpoint rule on the bounding box restricted to {rho < 0}.

    Cells cut by the boundary (mixed-sign corners) are refined ``refine`` x
    ``refine`` and their interior sub-midpoints kept.
    """
    x0, y0, x1, y1 = domain.bounding_box
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    xc = x0 + (np.arange(nx) + 0.5) * hx
    yc = y0 + (np.arange(ny) + 0.5) * hy
    zc = xc[None, :] + 1j * yc[:, None]

    def rho_arr(zz: np.ndarray) -> np.ndarray:
        out = np.empty(zz.shape, dtype=float)
        flat = zz.ravel()
        of = out.ravel()
        jet = domain.defining_function.jet
        nb = domain.in_neighborhood
        for i, z in enumerate(flat):
            z = complex(z)
            of[i] = jet(z).rho if nb(z) else 1.0
        return out

    # corner signs decide interior / exterior / cut
    xg = x0 + np.arange(nx + 1) * hx
    yg = y0 + np.arange(ny + 1) * hy
    rc = rho_arr(xg[None, :] + 1j * yg[:, None]) < 0.0
    inside_corners = (
        rc[:-1, :-1].astype(int) + rc[:-1, 1:] + rc[1:, :-1] + rc[1:, 1:]
    )
    full = inside_corners == 4
    cut = (inside_corners > 0) & (inside_corners < 4)

    nodes = [zc[full].ravel()]
    weights = [np.full(int(full.sum()), hx * hy)]

    if cut.any():
        iy, ix = np.nonzero(cut)
        sx = (np.arange(refine) + 0.5) / refine
        sub = (sx[None, :] * hx)[None, :, None] + 1j * (sx[:, None] * hy)[None, None, :]
        base = (x0 + ix * hx + 1j * (y0 + iy * hy))[:, None, None]
        subz = (base + sub.reshape(1, refine, refine)).ravel()
        r = rho_arr(subz)
        keep = r < 0.0
        nodes.append(subz[keep])
        weights.append(np.full(int(keep.sum()), hx * hy / refine**2))

    return Quadrature(
        nodes=np.concatenate(nodes),
        weights=np.concatenate(weights),
        spec=f"midpoint nx={nx} ny={ny} refine={refine}",
    )


def polar_quadrature(
    r_inner: float, r_outer: float, nr: int, ntheta: int, center: complex = 0.0
) -> Quadrature:
    """Gauss-Legendre (radial) x uniform (angular) rule on a disk or annulus.

    Spectrally accurate for integrands smooth up to the circles; the rule of
    choice for the rotationally symmetric built-ins.
    """
    xs, ws = np.polynomial.legendre.leggauss(nr)
    s = 0.5 * (r_outer - r_inner) * (xs + 1.0) + r_inner
    wr = 0.5 * (r_outer - r_inner) * ws * s  # radial Jacobian
    th = 2.0 * math.pi * np.arange(ntheta) / ntheta
    wt = 2.0 * math.pi / ntheta
    nodes = (center + s[:, None] * np.exp(1j * th)[None, :]).ravel()
    weights = np.repeat(wr * wt, ntheta)
    return Quadrature(
        nodes=nodes,
        weights=weights,
        spec=f"polar r=[{r_inner:.17g},{r_outer:.17g}] nr={nr} ntheta={ntheta}",
    )


@dataclass(frozen=True)
class HoloBasisFunction:
    """Monomial z^n or pole (z - a)^{-m}, with derivative jets to order 3."""

    kind: str  # "monomial" | "pole"
    power: int  # n >= 0 for monomials, m >= 1 for poles
    anchor: complex = 0.0

    def jets(self, z: np.ndarray) -> np.ndarray:
        """Array of shape (4,) + z.shape: value and first three derivatives."""
        z = np.asarray(z, dtype=complex)
        n = self.power if self.kind == "monomial" else -self.power
        w = z if self.kind == "monomial" else z - self.anchor
        out = np.empty((4,) + z.shape, dtype=complex)
        for a in range(4):
            f = falling(n, a)
            if f == 0.0:
                out[a] = 0.0
            else:
                out[a] = f * w ** (n - a)
        return out

    def descriptor(self) -> str:
        if self.kind == "monomial":
            return f"monomial {self.power}"
        return f"pole {self.anchor.real:.17g}{self.anchor.imag:+.17g}j {self.power}"

    @staticmethod
    def from_descriptor(text: str) -> "HoloBasisFunction":
        parts = text.split()
        if parts[0] == "monomial":
            return HoloBasisFunction("monomial", int(parts[1]))
        if parts[0] == "pole":
            return HoloBasisFunction("pole", int(parts[2]), complex(parts[1]))
        raise ValueError(f"unknown basis descriptor: {text!r}")


@dataclass(frozen=True)
class OrthonormalBasis:
    raw: tuple[HoloBasisFunction, ...]
    coeffs: np.ndarray  # (n_basis, n_raw): ONB functions as raw combinations
    gram_residual: float
    truncation: int  # the N used to build the spanning set
    quadrature_spec: str
    domain_hash: str


def spanning_set(domain: PlanarDomain, N: int) -> list[HoloBasisFunction]:
    fns = [HoloBasisFunction("monomial", n) for n in range(N)]
    for a in domain.hole_anchors:
        fns.extend(HoloBasisFunction("pole", m, a) for m in range(1, N + 1))
    return fns


def _gram_matrix(
    fns: list[HoloBasisFunction], quad: Quadrature, chunk: int = 200_000
) -> np.ndarray:
    m = len(fns)
    G = np.zeros((m, m), dtype=complex)
    for lo in range(0, quad.nodes.size, chunk):
        zz = quad.nodes[lo : lo + chunk]
        ww = quad.weights[lo : lo + chunk]
        F = np.empty((m, zz.size), dtype=complex)
        for i, f in enumerate(fns):
            F[i] = f.jets(zz)[0]
        G += (F * ww) @ F.conj().T
    return G


def build_basis(
    domain: PlanarDomain,
    N: int,
    quadrature: Quadrature,
    drop_tol: float = 1e-10,
    residual_tol: float = 1e-6,
) -> OrthonormalBasis:
    """Orthonormalize the monomial-plus-pole spanning set under ``quadrature``.

    Modified Gram-Schmidt with one reorthogonalization pass; functions with
    post-projection norm below ``drop_tol`` are dropped.  The basis is
    rejected when the recomputed Gram residual exceeds ``residual_tol``.
    """
    if N < 1:
        raise KernelError("N must be >= 1")
    fns = spanning_set(domain, N)
    G = _gram_matrix(fns, quadrature)

    def inner(u: np.ndarray, v: np.ndarray) -> complex:
        return u @ G @ v.conj()

    basis: list[np.ndarray] = []
    m = len(fns)
    for i in range(m):
        c = np.zeros(m, dtype=complex)
        c[i] = 1.0
        for _ in range(2):  # MGS + one reorthogonalization pass
            for b in basis:
                c = c - inner(c, b) * b
        nrm2 = inner(c, c).real
        if nrm2 < drop_tol**2:
            continue
        basis.append(c / math.sqrt(nrm2))

    C = np.array(basis)
    R = C @ G @ C.conj().T - np.eye(len(basis))
    residual = float(np.max(np.abs(R)))
    if residual > residual_tol:
        raise KernelError(
            f"quadrature too coarse: Gram residual {residual:.3e} > {residual_tol:.1e} "
            f"({quadrature.spec})"
        )
    return OrthonormalBasis(
        raw=tuple(fns),
        coeffs=C,
        gram_residual=residual,
        truncation=N,
        quadrature_spec=quadrature.spec,
        domain_hash=domain.hash(),
    )


class BasisKernel:
    """Kernel jets from an orthonormal basis: K^{(a,b)} = sum phi^(a) conj(phi^(b))."""

    provider_name = "onb"

    def __init__(self, basis: OrthonormalBasis, domain: PlanarDomain | None = None):
        self.basis = basis
        self.domain = domain
        # precompiled raw-set layout for vectorized jets
        self._mono_idx = np.array(
            [i for i, f in enumerate(basis.raw) if f.kind == "monomial"], dtype=int)
        self._mono_n = np.array(
            [basis.raw[i].power for i in self._mono_idx], dtype=int)
        self._pole_idx = np.array(
            [i for i, f in enumerate(basis.raw) if f.kind == "pole"], dtype=int)
        self._pole_m = np.array(
            [basis.raw[i].power for i in self._pole_idx], dtype=float)
        self._pole_a = np.array(
            [basis.raw[i].anchor for i in self._pole_idx], dtype=complex)
        nf = self._mono_n.astype(float)
        self._mono_fall = np.ones((4, nf.size))
        for a in range(1, 4):
            self._mono_fall[a] = self._mono_fall[a - 1] * np.maximum(
                nf - (a - 1), 0.0)
        mr = self._pole_m
        self._pole_rise = np.ones((4, mr.size))
        for a in range(1, 4):
            self._pole_rise[a] = -self._pole_rise[a - 1] * (mr + (a - 1))

    def _raw_jets(self, z: complex) -> np.ndarray:
        raw = np.empty((len(self.basis.raw), 4), dtype=complex)
        if self._mono_idx.size:
            n = self._mono_n
            for a in range(4):
                pw = np.power(z, np.maximum(n - a, 0))
                raw[self._mono_idx, a] = self._mono_fall[a] * pw
        if self._pole_idx.size:
            w = z - self._pole_a
            for a in range(4):
                raw[self._pole_idx, a] = self._pole_rise[a] * w ** (
                    -self._pole_m - a)
        return raw

    def jet(self, z: complex) -> KernelJet:
        if self.domain is not None and not self.domain.contains(z):
            raise KernelError(f"{z} is not an interior point")
        raw = self._raw_jets(z)
        phi = self.basis.coeffs @ raw  # (n_basis, 4)
        k = np.einsum("ka,kb->ab", phi, phi[:, :JET_B].conj())
        return KernelJet(
            k=k[:JET_A],
            truncation_error=self.basis.gram_residual,
            provenance="onb",
        )


def kernel_jet(provider, z: complex) -> KernelJet:
    """Dispatch to the provider; shared entry point for all three routes."""
    return provider.jet(z)


# ---------------------------------------------------------------------------
# basis cache (text format "KFBASIS v1", atomic rename discipline)


def cache_dir() -> Path:
    env = os.environ.get("KOFUKS_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "kofuks"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def save_basis(basis: OrthonormalBasis, path: Path | None = None) -> Path:
    if path is None:
        d = cache_dir()
        d.mkdir(parents=True, exist_ok=True)
        qh = hashlib.sha256(basis.quadrature_spec.encode()).hexdigest()[:12]
        key = f"{basis.domain_hash}_N{basis.truncation}_{qh}"
        path = d / f"{key}.kfbasis"
    lines = [
        "KFBASIS v1",
        f"domain {basis.domain_hash}",
        f"N {basis.truncation}",
        f"residual {_fmt(basis.gram_residual)}",
        f"quadrature {basis.quadrature_spec}",
        f"raw {len(basis.raw)}",
    ]
    lines.extend(f.descriptor() for f in basis.raw)
    lines.append(f"functions {basis.coeffs.shape[0]}")
    for row in basis.coeffs:
        lines.append(" ".join(f"{_fmt(c.real)} {_fmt(c.imag)}" for c in row))
    tmp = tempfile.NamedTemporaryFile(
        "w", dir=path.parent, suffix=".tmp", delete=False
    )
    with tmp:
        tmp.write("\n".join(lines) + "\n")
    os.replace(tmp.name, path)
    return path


def load_basis(path: Path) -> OrthonormalBasis:
    lines = Path(path).read_text().splitlines()
    if lines[0] != "KFBASIS v1":
        raise ValueError(f"{path}: not a KFBASIS v1 file")
    domain_hash = lines[1].split()[1]
    N = int(lines[2].split()[1])
    residual = float(lines[3].split()[1])
    quad_spec = lines[4].split(" ", 1)[1]
    n_raw = int(lines[5].split()[1])
    raw = tuple(
        HoloBasisFunction.from_descriptor(lines[6 + i]) for i in range(n_raw)
    )
    n_fun = int(lines[6 + n_raw].split()[1])
    coeffs = np.empty((n_fun, n_raw), dtype=complex)
    for i in range(n_fun):
        vals = [float(v) for v in lines[7 + n_raw + i].split()]
        coeffs[i] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
    return OrthonormalBasis(
        raw=raw,
        coeffs=coeffs,
        gram_residual=residual,
        truncation=N,
        quadrature_spec=quad_spec,
        domain_hash=domain_hash,
    )
