import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kofuks.kernels import DiskKernel
from kofuks.metric import (
    MetricError,
    MetricProvider,
    RadialMetricCache,
    annulus_inversion,
    bergman_metric,
    kf_metric,
    kf_metric_z,
    mobius,
    pullback_residual,
    ricci,
    rotation,
)

from conftest import interior_annulus_points, interior_disk_points


@settings(max_examples=50, deadline=None)
@given(r=st.floats(0.0, 0.95), th=st.floats(0.0, 2 * math.pi))
def test_disk_closed_forms(disk_provider, r, th):
    z = r * np.exp(1j * th)
    t = abs(z) ** 2
    s = disk_provider.sample(z)
    assert s.g == pytest.approx(2.0 / (1 - t) ** 2, rel=1e-12)
    assert s.g_tilde == pytest.approx(6.0 / (1 - t) ** 2, rel=1e-12)
    assert s.ric == pytest.approx(-2.0 / (1 - t) ** 2, rel=1e-12)
    assert s.ricci_curvature == pytest.approx(-1.0, rel=1e-12)
    assert s.a_pot == pytest.approx(2.0 / (math.pi**2 * (1 - t) ** 6), rel=1e-12)


def test_route_identity_disk(disk_provider):
    for z in interior_disk_points(200, rmax=0.95, seed=1):
        kj = disk_provider.kernel.jet(z)
        gt = kf_metric(kj)
        assert abs(gt - (2 * bergman_metric(kj) - ricci(kj))) / gt < 1e-12


def test_route_identity_annulus(ann_provider):
    for z in interior_annulus_points(100, seed=2):
        kj = ann_provider.kernel.jet(z)
        gt = kf_metric(kj)
        assert abs(gt - (2 * bergman_metric(kj) - ricci(kj))) / gt < 1e-8


def test_annulus_proportionality(ann_provider):
    # on the annulus (as on the disk) the two metrics are proportional
    for z in interior_annulus_points(50, seed=3):
        s = ann_provider.sample(z)
        assert s.g_tilde == pytest.approx(3.0 * s.g, rel=1e-9)


def test_ricci_bound(ann_provider, disk_provider):
    for z in interior_annulus_points(50, seed=4):
        assert ann_provider.sample(z).ricci_curvature < 2.0
    for z in interior_disk_points(50, seed=4):
        assert disk_provider.sample(z).ricci_curvature < 2.0


def test_kf_metric_z_matches_fd(disk_provider):
    z = 0.3 + 0.2j
    h = 1e-6
    k = disk_provider.kernel
    fx = (kf_metric(k.jet(z + h)) - kf_metric(k.jet(z - h))) / (2 * h)
    fy = (kf_metric(k.jet(z + 1j * h)) - kf_metric(k.jet(z - 1j * h))) / (2 * h)
    fd = 0.5 * (fx - 1j * fy)
    assert kf_metric_z(k.jet(z)) == pytest.approx(fd, rel=1e-7)


def test_mobius_invariance_disk(disk_provider):
    F, Fp = mobius(0.3 - 0.2j)
    for z in (0.1 + 0.4j, -0.5 + 0.2j, 0.7j):
        assert pullback_residual(F, Fp, disk_provider, z) < 1e-12


def test_rotation_invariance_annulus(ann_provider):
    F, Fp = rotation(0.7)
    for z in (0.6 + 0.2j, 0.8j):
        assert pullback_residual(F, Fp, ann_provider, z) < 1e-8


def test_inversion_invariance_annulus(ann_provider):
    F, Fp = annulus_inversion(0.5)
    for z in (0.8 + 0.1j, 0.6 * np.exp(2.0j)):
        assert pullback_residual(F, Fp, ann_provider, z) < 1e-8


def test_bergman_metric_kind():
    p = MetricProvider(DiskKernel(), metric_kind="bergman")
    z = 0.2 + 0.5j
    t = abs(z) ** 2
    m, m_z = p.density(z)
    assert m == pytest.approx(2.0 / (1 - t) ** 2, rel=1e-12)


def test_radial_cache_accuracy(ann_provider, ann_cached):
    for r in np.linspace(0.52, 0.97, 25):
        z = r * np.exp(0.3j)
        m0, mz0 = ann_provider.density(z)
        m1, mz1 = ann_cached.density(z)
        assert abs(m1 - m0) / m0 < 1e-8
        assert abs(mz1 - mz0) / max(abs(mz0), m0) < 1e-7


def test_radial_cache_rotation_symmetry(ann_cached):
    m_a, _ = ann_cached.density(0.7 + 0.0j)
    m_b, _ = ann_cached.density(0.7 * np.exp(2.3j))
    assert m_a == pytest.approx(m_b, rel=1e-13)


def test_radial_cache_band_enforced(ann_cached):
    with pytest.raises(MetricError):
        ann_cached.density(0.5001 + 0.0j)
    with pytest.raises(MetricError):
        ann_cached.density(0.99999 + 0.0j)


def test_sample_err_propagation(ann_provider):
    s = ann_provider.sample(0.7 + 0.1j)
    assert s.err >= 0.0
