"""Dispersive and absorptive response of a thin atomic sample to the two-frequency probe."""

import logging
import math
import numpy as np
from attr import dataclass

from hetprobe.atomics import (
    EXCITED_SUBLEVELS,
    RB87_D2,
    AtomicLine,
    Polarization,
    line_strength,
    zeeman_detuning,
)
from hetprobe.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

# (2F'+1)/2 for the F=2 -> F'=3 line
HYPERFINE_FACTOR = 3.5
THIN_SAMPLE_LIMIT = 0.1
SATURATION_THRESHOLD = 0.1


@dataclass
class ProbeGeometry:
    waist: float

    def __attrs_post_init__(self):
        if not self.waist > 0:
            raise InvalidArgumentError(f"probe waist must be positive, got {self.waist}")

    @property
    def area(self) -> float:
        return 0.5 * math.pi * self.waist**2


@dataclass
class BeatConfig:
    center: float
    half_splitting: float

    def __attrs_post_init__(self):
        if self.half_splitting == 0:
            raise InvalidArgumentError("the two probe components must be split (half_splitting != 0)")

    @classmethod
    def from_splitting(cls, center: float, splitting: float) -> "BeatConfig":
        return cls(center=center, half_splitting=0.5 * splitting)

    @property
    def omega(self) -> float:
        return 4 * math.pi * self.half_splitting

    @property
    def upper(self):
        return self.center + self.half_splitting

    @property
    def lower(self):
        return self.center - self.half_splitting

    def shifted(self, offset) -> "BeatConfig":
        return BeatConfig(center=self.center + offset, half_splitting=self.half_splitting)


@dataclass
class BeatObservables:
    phi: object
    eps: object
    thin_sample: bool = True
    unsaturated: bool = True

    @property
    def scattered_fraction(self):
        return 2 * self.eps


def _check_density(column_density) -> None:
    if np.any(np.asarray(column_density) < 0):
        raise InvalidArgumentError(f"column density must be non-negative, got {column_density}")


def _resonant_scale(column_density, line: AtomicLine):
    return HYPERFINE_FACTOR * 3 * line.wavelength**2 * column_density / (2 * math.pi)


def _line_sum(f, field: float, pol: Polarization, line: AtomicLine, dispersive: bool):
    total = 0.0
    for m_prime in EXCITED_SUBLEVELS:
        weight = pol.fraction(m_prime) * line_strength(m_prime)
        if weight == 0:
            continue
        delta = zeeman_detuning(f, m_prime, field, line)
        numerator = line.gamma * delta if dispersive else line.gamma**2
        total = total + weight * numerator / (delta**2 + line.gamma**2)
    return total


def phase_shift(f, column_density, field: float, pol: Polarization, line: AtomicLine = RB87_D2):
    _check_density(column_density)
    return _line_sum(f, field, pol, line, dispersive=True) * _resonant_scale(column_density, line)


def _attenuation(f, column_density, field, pol, line):
    _check_density(column_density)
    return _line_sum(f, field, pol, line, dispersive=False) * _resonant_scale(column_density, line)


def attenuation(f, column_density, field: float, pol: Polarization, line: AtomicLine = RB87_D2):
    """Fractional field attenuation; only meaningful while it stays well below 1."""
    alpha = _attenuation(f, column_density, field, pol, line)
    if np.any(alpha > THIN_SAMPLE_LIMIT):
        logger.warning(
            "Attenuation %.3g exceeds %.2g; the thin-sample response is not reliable",
            float(np.max(alpha)),
            THIN_SAMPLE_LIMIT,
        )
    return alpha


def beat_observables(
    beat: BeatConfig,
    column_density,
    field: float,
    pol: Polarization,
    line: AtomicLine = RB87_D2,
    saturation: float = 0.0,
    saturation_threshold: float = SATURATION_THRESHOLD,
) -> BeatObservables:
    """Relative phase and fractional beat-amplitude change of the two components.

    ``beat.center`` may be an array, in which case phi and eps are arrays of the
    same shape. ``saturation`` is the caller's on-resonance saturation parameter
    I/I_sat; the response itself is always evaluated in the unsaturated limit.
    """
    phi = phase_shift(beat.upper, column_density, field, pol, line) - phase_shift(
        beat.lower, column_density, field, pol, line
    )
    alpha_upper = _attenuation(beat.upper, column_density, field, pol, line)
    alpha_lower = _attenuation(beat.lower, column_density, field, pol, line)
    eps = alpha_upper + alpha_lower

    thin = not bool(np.any(np.maximum(alpha_upper, alpha_lower) > THIN_SAMPLE_LIMIT))
    if not thin:
        logger.warning(
            "Attenuation of a probe component exceeds %.2g; thin-sample assumption violated",
            THIN_SAMPLE_LIMIT,
        )
    unsaturated = saturation <= saturation_threshold
    if not unsaturated:
        logger.warning(
            "Saturation parameter %.3g is above the threshold %.3g", saturation, saturation_threshold
        )
    return BeatObservables(phi=phi, eps=eps, thin_sample=thin, unsaturated=unsaturated)


def sigma_minus_scatter_prob(beat: BeatConfig, area: float, field: float, line: AtomicLine = RB87_D2):
    """sigma- excitations per atom per incident photon, summed over both components."""
    if not area > 0:
        raise InvalidArgumentError(f"beam area must be positive, got {area}")
    gamma_sq = line.gamma**2
    delta_upper = zeeman_detuning(beat.upper, 1, field, line)
    delta_lower = zeeman_detuning(beat.lower, 1, field, line)
    return (
        line.wavelength**2
        / (40 * math.pi * area)
        * (gamma_sq / (gamma_sq + delta_upper**2) + gamma_sq / (gamma_sq + delta_lower**2))
    )


def _per_atom(beat, area, field, pol, line) -> BeatObservables:
    if not area > 0:
        raise InvalidArgumentError(f"beam area must be positive, got {area}")
    return beat_observables(beat, 1.0 / area, field, pol, line)


def phase_per_atom(beat: BeatConfig, area: float, field: float, pol: Polarization, line: AtomicLine = RB87_D2):
    return _per_atom(beat, area, field, pol, line).phi


def attenuation_per_atom(
    beat: BeatConfig, area: float, field: float, pol: Polarization, line: AtomicLine = RB87_D2
):
    return _per_atom(beat, area, field, pol, line).eps
