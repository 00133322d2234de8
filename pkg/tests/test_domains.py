import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kofuks.domains import (
    DomainError,
    annulus,
    boundary_point_at_depth,
    in_compact_sublevel,
    rho_jet,
    two_hole_domain,
    unit_disk,
)


def fd_jet(domain, z, h=1e-5):
    """Wirtinger first and second derivatives of rho by central differences."""
    f = domain.rho
    fx = (f(z + h) - f(z - h)) / (2 * h)
    fy = (f(z + 1j * h) - f(z - 1j * h)) / (2 * h)
    fxx = (f(z + h) - 2 * f(z) + f(z - h)) / h**2
    fyy = (f(z + 1j * h) - 2 * f(z) + f(z - 1j * h)) / h**2
    fxy = (
        f(z + h + 1j * h) - f(z + h - 1j * h) - f(z - h + 1j * h) + f(z - h - 1j * h)
    ) / (4 * h**2)
    rho_z = 0.5 * (fx - 1j * fy)
    rho_zzbar = 0.25 * (fxx + fyy)
    rho_z2 = 0.25 * (fxx - fyy - 2j * fxy)
    return rho_z, rho_z2, rho_zzbar


def check_jet_against_fd(domain, z, tol=5e-6):
    rj = rho_jet(domain, z)
    rho_z, rho_z2, rho_zzbar = fd_jet(domain, z)
    scale = max(abs(rj.rho_z), 1.0)
    assert abs(rj.rho_z - rho_z) < tol * scale
    assert abs(rj.rho_z2 - rho_z2) < tol * max(abs(rj.rho_z2), 1.0)
    assert abs(rj.rho_zzbar - rho_zzbar) < tol * max(rj.rho_zzbar, 1.0)


def test_disk_jet_values(disk):
    rj = rho_jet(disk, 0.0j)
    assert rj.rho == -1.0
    assert rj.rho_z == 0.0
    assert rj.rho_z2 == 0.0
    assert rj.rho_zzbar == 1.0
    assert rj.rho_z2zbar == 0.0
    rj = rho_jet(disk, 0.6 + 0.0j)
    assert rj.rho == pytest.approx(-0.64, abs=1e-15)
    assert rj.rho_z == pytest.approx(0.6, abs=1e-15)
    assert rj.rho_zzbar == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(
    r=st.floats(0.05, 0.9),
    th=st.floats(0.0, 2 * math.pi),
)
def test_disk_jet_matches_fd(disk, r, th):
    check_jet_against_fd(disk, r * np.exp(1j * th))


@settings(max_examples=40, deadline=None)
@given(
    r=st.floats(0.53, 0.97),
    th=st.floats(0.0, 2 * math.pi),
)
def test_annulus_jet_matches_fd(ann, r, th):
    check_jet_against_fd(ann, r * np.exp(1j * th))


def test_twohole_jet_matches_fd(twohole):
    for z in (0.0j, 0.1 + 0.5j, -0.7 + 0.1j, 0.45 + 0.35j):
        check_jet_against_fd(twohole, z, tol=2e-5)


def test_conjugate_symmetry(ann):
    rj = rho_jet(ann, 0.7 * np.exp(0.4j))
    assert rj.rho_zbar == np.conj(rj.rho_z)
    assert rj.rho_zzbar == pytest.approx(rj.rho_zzbar.real)


def test_annulus_strict_subharmonicity(ann):
    # the raw defining function has rho_zzbar = 4t - 1.25 < 0 for t < 0.3125;
    # the shipped domain must be positive everywhere in the band
    for r in np.linspace(0.52, 0.98, 40):
        for th in np.linspace(0.0, 2 * np.pi, 16, endpoint=False):
            rj = rho_jet(ann, r * np.exp(1j * th))
            assert rj.rho_zzbar > 0.0


def test_sign_conventions(ann, disk, twohole):
    assert disk.rho(0.3 + 0.1j) < 0.0
    assert disk.rho(1.01 + 0.0j) > 0.0
    assert ann.rho(0.7j) < 0.0
    assert ann.rho(0.49 + 0.0j) > 0.0
    assert twohole.rho(0.0j) < 0.0
    assert not twohole.contains(0.45 + 0.0j)  # inside a hole
    assert twohole.contains(0.0j)
    assert len(twohole.hole_anchors) == 2
    assert len(ann.hole_anchors) == 1


def test_rho_jet_outside_neighborhood_raises(ann):
    with pytest.raises(DomainError):
        rho_jet(ann, 0.1 + 0.0j)


def test_boundary_point_at_depth(ann, disk):
    for dom, bp in ((disk, np.exp(0.2j)), (ann, np.exp(1.3j)), (ann, 0.5 * np.exp(0.7j))):
        for depth in (1e-1, 1e-3):
            z = boundary_point_at_depth(dom, bp, depth)
            assert dom.rho(z) == pytest.approx(-depth, rel=1e-10)
    with pytest.raises(DomainError):
        boundary_point_at_depth(disk, np.exp(0.2j), 5.0)


def test_in_compact_sublevel(disk):
    assert in_compact_sublevel(disk, 0.0j, 0.5)
    assert not in_compact_sublevel(disk, 0.999 + 0.0j, 0.5)


def test_domain_hash_deterministic():
    assert unit_disk().hash() == unit_disk().hash()
    assert annulus(0.5).hash() == annulus(0.5).hash()
    assert annulus(0.5).hash() != annulus(0.4).hash()
    assert two_hole_domain().hash() == two_hole_domain().hash()


def test_annulus_bad_radius():
    with pytest.raises((DomainError, ValueError)):
        annulus(1.5)
