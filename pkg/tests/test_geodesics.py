import math

import numpy as np
import pytest

from kofuks.geodesics import (
    GeodesicState,
    critical_scan,
    estimate_epsilon,
    geodesic_rhs,
    integrate,
    rho_second_derivative,
    rho_second_derivative_direct,
    unit_speed_velocity,
)


def test_unit_speed_velocity(disk_provider):
    z = 0.3 + 0.1j
    v = unit_speed_velocity(z, np.exp(0.8j), disk_provider)
    m, _ = disk_provider.density(z)
    assert m * abs(v) ** 2 == pytest.approx(1.0, rel=1e-14)
    assert np.angle(v) == pytest.approx(0.8, abs=1e-14)


def test_radial_geodesic_closed_form(disk, disk_provider):
    # from the center the metric is 6/(1-t)^2 |dz|^2, a rescaled hyperbolic
    # metric; the radial unit-speed geodesic is tanh(t/sqrt(6))
    v0 = unit_speed_velocity(0.0j, 1.0 + 0.0j, disk_provider)
    tr = integrate(disk, disk_provider, 0.0j, v0, (0.0, 5.0))
    assert tr.termination == "horizon"
    for t in (1.0, 3.0, 5.0):
        z = tr.state(t).z
        assert abs(z.imag) < 1e-10
        assert z.real == pytest.approx(math.tanh(t / math.sqrt(6.0)), abs=1e-9)


def test_energy_conservation(disk, disk_provider):
    z0 = 0.2 + 0.1j
    v0 = unit_speed_velocity(z0, np.exp(0.7j), disk_provider)
    tr = integrate(disk, disk_provider, z0, v0, (0.0, 10.0))
    assert tr.termination == "horizon"
    assert tr.energy_drift() < 1e-8


def test_time_reversal(disk, disk_provider):
    z0 = 0.2 + 0.1j
    v0 = unit_speed_velocity(z0, np.exp(0.7j), disk_provider)
    fwd = integrate(disk, disk_provider, z0, v0, (0.0, 8.0))
    st = fwd.state(8.0)
    back = integrate(disk, disk_provider, st.z, -st.v, (0.0, 8.0))
    assert abs(back.state(8.0).z - z0) < 1e-7


def test_boundary_abort(disk, disk_provider):
    z0 = 0.5 + 0.0j
    v0 = unit_speed_velocity(z0, 1.0 + 0.0j, disk_provider)
    tr = integrate(disk, disk_provider, z0, v0, (0.0, 50.0))
    assert tr.termination == "boundary-abort"
    assert disk.rho(complex(tr.zs[-1])) > -1e-4
    assert tr.horizon < 50.0


def test_launch_validation(disk, disk_provider):
    with pytest.raises(ValueError):
        integrate(disk, disk_provider, 1.5 + 0.0j, 1.0 + 0.0j, (0.0, 1.0))
    with pytest.raises(ValueError):
        integrate(disk, disk_provider, 0.0j, 0.0j, (0.0, 1.0))


def test_geodesic_rhs_closed_form(disk_provider):
    # m = 6/(1-t)^2 gives m_z/m = 2 zbar/(1-t)
    z, v = 0.3 + 0.2j, 0.4 - 0.1j
    t = abs(z) ** 2
    expect = -(2.0 * np.conj(z) / (1.0 - t)) * v * v
    assert geodesic_rhs(z, v, disk_provider) == pytest.approx(expect, rel=1e-12)


def test_rho_second_derivative_routes(disk, ann, disk_provider, ann_provider):
    cases = [
        (disk, disk_provider, 0.4 + 0.2j, np.exp(0.3j)),
        (disk, disk_provider, -0.1 + 0.6j, np.exp(2.0j)),
        (ann, ann_provider, 0.7 + 0.1j, np.exp(1.1j)),
        (ann, ann_provider, 0.6 * np.exp(2.5j), np.exp(0.2j)),
    ]
    for dom, prov, z, v in cases:
        st = GeodesicState(0.0, z, v)
        a = rho_second_derivative(st, dom, prov)
        b = rho_second_derivative_direct(st, dom, prov)
        assert a == pytest.approx(b, rel=1e-8, abs=1e-10)


def test_rho_second_derivative_fd(disk, disk_provider):
    z0 = 0.1 + 0.05j
    v0 = unit_speed_velocity(z0, np.exp(0.9j), disk_provider)
    tr = integrate(disk, disk_provider, z0, v0, (0.0, 6.0))
    h = 1e-4
    for t in np.linspace(0.5, 5.5, 20):
        st = tr.state(t)
        val = rho_second_derivative(st, disk, disk_provider)
        fd = (
            disk.rho(tr.state(t + h).z)
            - 2 * disk.rho(st.z)
            + disk.rho(tr.state(t - h).z)
        ) / h**2
        assert val == pytest.approx(fd, rel=1e-4, abs=1e-4)


def test_critical_scan_chord(disk, disk_provider):
    # a chord-like geodesic has a single interior minimum of rho o c
    z0 = -0.6 + 0.1j
    v0 = unit_speed_velocity(z0, 1.0 + 0.0j, disk_provider)
    tr = integrate(disk, disk_provider, z0, v0, (0.0, 6.0))
    cps = critical_scan(tr, disk, disk_provider)
    mins = [c for c in cps if c.kind == "minimum"]
    assert len(mins) == 1
    assert mins[0].second_derivative > 0.0
    assert mins[0].rho_value < disk.rho(z0)


def test_critical_scan_level_orbit(ann, ann_cached):
    s_star = math.sqrt(0.5)
    v0 = unit_speed_velocity(s_star + 0.0j, 1j, ann_cached)
    tr = integrate(ann, ann_cached, s_star + 0.0j, v0, (0.0, 5.0))
    assert critical_scan(tr, ann, ann_cached) == []


def test_estimate_epsilon_disk(disk, disk_provider):
    ce = estimate_epsilon(disk, disk_provider, n_angles=8)
    assert ce.eps_hat > 0.05
    assert ce.min_second_derivative > 0.0
    assert ce.samples > 0
    assert len(ce.profile) > 0
    # shallow collar second derivatives blow up like 1/|rho|
    prof = sorted(ce.profile)
    assert prof[0][1] > prof[-1][1]
