import numpy as np
import pytest

from kofuks.domains import annulus, two_hole_domain, unit_disk
from kofuks.kernels import AnnulusKernel, DiskKernel
from kofuks.metric import MetricProvider, RadialMetricCache


@pytest.fixture(scope="session")
def disk():
    return unit_disk()


@pytest.fixture(scope="session")
def disk_provider():
    return MetricProvider(DiskKernel())


@pytest.fixture(scope="session")
def ann():
    return annulus(0.5)


@pytest.fixture(scope="session")
def ann_provider():
    return MetricProvider(AnnulusKernel(0.5, tol=1e-10, max_terms=2_000_000))


@pytest.fixture(scope="session")
def ann_cached(ann_provider):
    return RadialMetricCache(ann_provider, 0.5)


@pytest.fixture(scope="session")
def twohole():
    return two_hole_domain()


def interior_disk_points(n, rmax=0.8, seed=0):
    rng = np.random.default_rng(seed)
    r = rmax * np.sqrt(rng.uniform(0.0, 1.0, n))
    th = rng.uniform(0.0, 2.0 * np.pi, n)
    return r * np.exp(1j * th)


def interior_annulus_points(n, r_lo=0.55, r_hi=0.95, seed=0):
    rng = np.random.default_rng(seed)
    r = rng.uniform(r_lo, r_hi, n)
    th = rng.uniform(0.0, 2.0 * np.pi, n)
    return r * np.exp(1j * th)
