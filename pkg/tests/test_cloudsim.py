import math

import numpy as np
import pytest
from scipy import integrate

from hetprobe.cloudsim import (
    CloudState,
    TrapConfig,
    cloud_radii,
    column_density,
    com_offset,
    fraction_in_probe,
    recommended_probe_offset,
    thermal_cloud,
)
from hetprobe.errors import InvalidArgumentError

TRAP = TrapConfig()


def test_cloud_radii_at_defaults():
    sigma_r, sigma_z = cloud_radii(TRAP, 60e-6)
    assert sigma_z == pytest.approx(574e-6, rel=5e-3)
    assert sigma_r == pytest.approx(161e-6, rel=5e-3)
    assert sigma_z / sigma_r == pytest.approx(75 / 21)


def test_peak_column_density():
    cloud = thermal_cloud(TRAP)
    assert column_density(cloud, 0.0, 1e-9) == pytest.approx(4.13e12, rel=5e-3)


def test_column_density_profile():
    cloud = thermal_cloud(TRAP)
    waist = 100e-6
    x = np.linspace(-2e-3, 2e-3, 9)
    profile = column_density(cloud, x, waist)
    np.testing.assert_allclose(profile, profile[::-1])
    assert np.argmax(profile) == 4
    width_sq = 2 * cloud.sigma_z**2 + waist**2 / 2
    assert column_density(cloud, 1e-3, waist) == pytest.approx(profile[4] * math.exp(-1e-6 / width_sq))


def test_column_density_is_linear_in_atom_number():
    small = thermal_cloud(TRAP, atom_number=1e6)
    large = thermal_cloud(TRAP, atom_number=2e6)
    assert column_density(large, 3e-4, 1e-4) == pytest.approx(2 * column_density(small, 3e-4, 1e-4))
    assert column_density(thermal_cloud(TRAP, atom_number=0.0), 0.0, 1e-4) == 0.0


def test_com_offset():
    cloud = thermal_cloud(TRAP, amplitude=150e-6, damping_time=0.2)
    assert com_offset(0.0, cloud) == pytest.approx(150e-6)
    period = 1 / TRAP.axial_frequency
    assert com_offset(period, cloud) == pytest.approx(150e-6 * math.exp(-period / 0.2))
    assert com_offset(0.5 * period, cloud) == pytest.approx(-150e-6 * math.exp(-0.5 * period / 0.2))
    with pytest.raises(InvalidArgumentError):
        com_offset(-1.0, cloud)


def test_undamped_motion():
    cloud = thermal_cloud(TRAP, amplitude=1e-4)
    t = np.arange(5) / TRAP.axial_frequency
    np.testing.assert_allclose(com_offset(t, cloud), 1e-4)


def test_fraction_in_probe_matches_integral():
    cloud = thermal_cloud(TRAP)
    waist = 100e-6

    def overlap(sigma, centre):
        density = lambda x: math.exp(-((x - centre) ** 2) / (2 * sigma**2)) / math.sqrt(2 * math.pi) / sigma
        weight = lambda x: math.exp(-2 * x**2 / waist**2)
        limit = centre + 10 * sigma
        return integrate.quad(lambda x: density(x) * weight(x), -limit, limit, points=[0.0, centre])[0]

    offset = 300e-6
    expected = overlap(cloud.sigma_z, offset) * overlap(cloud.sigma_r, 0.0)
    assert fraction_in_probe(cloud, waist, offset) == pytest.approx(expected, rel=1e-6)
    assert fraction_in_probe(cloud, waist) == pytest.approx(0.0257, rel=1e-2)


def test_fraction_in_probe_bounds():
    cloud = thermal_cloud(TRAP)
    assert 0 < fraction_in_probe(cloud, 1e-6) < fraction_in_probe(cloud, 1e-3) < 1


def test_recommended_offset_is_steepest_point():
    cloud = thermal_cloud(TRAP)
    waist = 100e-6
    x = np.linspace(0, 2e-3, 20001)
    slope = np.abs(np.gradient(column_density(cloud, x, waist), x))
    assert x[np.argmax(slope)] == pytest.approx(recommended_probe_offset(cloud, waist), abs=2e-7)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"atom_number": -1.0},
        {"temperature": 0.0},
        {"sigma_r": 0.0},
        {"damping_time": 0.0},
    ],
)
def test_cloud_state_rejects(kwargs):
    values = dict(atom_number=1e6, temperature=1e-6, sigma_r=1e-4, sigma_z=3e-4)
    values.update(kwargs)
    with pytest.raises(InvalidArgumentError):
        CloudState(**values)


def test_trap_rejects_bad_frequencies():
    with pytest.raises(InvalidArgumentError):
        TrapConfig(radial_frequency=0.0)
    with pytest.raises(InvalidArgumentError):
        cloud_radii(TRAP, -1.0)
    with pytest.raises(InvalidArgumentError):
        column_density(thermal_cloud(TRAP), 0.0, 0.0)


@pytest.mark.parametrize("damping_time", [0.05, 0.2, 1.0])
def test_com_offset_envelope_decays(damping_time):
    cloud = thermal_cloud(TRAP, amplitude=150e-6, damping_time=damping_time, phase=0.3)
    t = np.linspace(0, 0.5, 20001)
    offset = np.abs(com_offset(t, cloud))
    assert np.all(offset <= 150e-6 * np.exp(-t / damping_time) * (1 + 1e-12))
    period = int(round(len(t) / (0.5 * TRAP.axial_frequency)))
    peaks = [offset[i : i + period].max() for i in range(0, len(t) - period, period)]
    assert np.all(np.diff(peaks) <= 0)
