"""Thermal cloud in a harmonic magnetic trap, as seen by an offset probe beam."""

import math
from typing import Tuple

import numpy as np
from attr import dataclass
from scipy import constants

from hetprobe.errors import InvalidArgumentError

RB87_MASS = 86.909180527 * constants.physical_constants["atomic mass constant"][0]


@dataclass
class TrapConfig:
    radial_frequency: float = 75.0
    axial_frequency: float = 21.0
    field_minimum: float = 0.6e-3

    def __attrs_post_init__(self):
        if not self.radial_frequency > 0 or not self.axial_frequency > 0:
            raise InvalidArgumentError(
                f"trap frequencies must be positive, got {self.radial_frequency} x {self.axial_frequency}"
            )
        if self.field_minimum < 0:
            raise InvalidArgumentError(f"trap field minimum must be non-negative, got {self.field_minimum}")


@dataclass
class CloudState:
    atom_number: float
    temperature: float
    sigma_r: float
    sigma_z: float
    # centre-of-mass motion along the axial direction
    amplitude: float = 0.0
    frequency: float = 21.0
    damping_time: float = math.inf
    phase: float = 0.0

    def __attrs_post_init__(self):
        if self.atom_number < 0:
            raise InvalidArgumentError(f"atom number must be non-negative, got {self.atom_number}")
        if not self.temperature > 0:
            raise InvalidArgumentError(f"temperature must be positive, got {self.temperature}")
        if not self.sigma_r > 0 or not self.sigma_z > 0:
            raise InvalidArgumentError("cloud radii must be positive")
        if not self.damping_time > 0:
            raise InvalidArgumentError(f"damping time must be positive, got {self.damping_time}")


def cloud_radii(trap: TrapConfig, temperature: float, mass: float = RB87_MASS) -> Tuple[float, float]:
    """Equipartition radii (sigma_r, sigma_z)."""
    if not temperature > 0:
        raise InvalidArgumentError(f"temperature must be positive, got {temperature}")
    velocity = math.sqrt(constants.k * temperature / mass)
    return (
        velocity / (2 * math.pi * trap.radial_frequency),
        velocity / (2 * math.pi * trap.axial_frequency),
    )


def thermal_cloud(
    trap: TrapConfig,
    atom_number: float = 2.4e6,
    temperature: float = 60e-6,
    amplitude: float = 0.0,
    damping_time: float = math.inf,
    phase: float = 0.0,
) -> CloudState:
    sigma_r, sigma_z = cloud_radii(trap, temperature)
    return CloudState(
        atom_number=atom_number,
        temperature=temperature,
        sigma_r=sigma_r,
        sigma_z=sigma_z,
        amplitude=amplitude,
        frequency=trap.axial_frequency,
        damping_time=damping_time,
        phase=phase,
    )


def _check_waist(waist: float) -> None:
    if not waist > 0:
        raise InvalidArgumentError(f"probe waist must be positive, got {waist}")


def column_density(cloud: CloudState, offset, waist: float):
    _check_waist(waist)
    offset = np.asarray(offset, dtype=float)
    peak = cloud.atom_number / (2 * math.pi * cloud.sigma_z * cloud.sigma_r)
    result = peak * np.exp(-(offset**2) / (2 * cloud.sigma_z**2 + waist**2 / 2))
    return float(result) if result.ndim == 0 else result


def com_offset(t, cloud: CloudState):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidArgumentError("time must be non-negative")
    envelope = np.exp(-t / cloud.damping_time)
    result = cloud.amplitude * envelope * np.cos(2 * math.pi * cloud.frequency * t + cloud.phase)
    return float(result) if result.ndim == 0 else result


def fraction_in_probe(cloud: CloudState, waist: float, offset: float = 0.0) -> float:
    """Share of the atoms inside the probe, weighted by the beam intensity profile exp(-2r^2/w^2)."""
    _check_waist(waist)
    axial = waist / math.sqrt(waist**2 + 4 * cloud.sigma_z**2)
    radial = waist / math.sqrt(waist**2 + 4 * cloud.sigma_r**2)
    return axial * radial * math.exp(-2 * offset**2 / (waist**2 + 4 * cloud.sigma_z**2))


def recommended_probe_offset(cloud: CloudState, waist: float) -> float:
    """Offset where the column density is steepest, so centre-of-mass motion gives the largest signal."""
    _check_waist(waist)
    return math.sqrt(cloud.sigma_z**2 + waist**2 / 4)
