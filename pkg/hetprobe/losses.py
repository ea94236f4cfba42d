"""Optical-pumping losses during probing.

The excited states are eliminated adiabatically: each excitation is followed
at once by a decay through the branching ratios, so the state is the five
ground-sublevel populations of F=2 and the pulse is a linear rate problem in
the scaled time s = t / T.
"""

import logging
import math
from typing import Dict, Optional

import attr
import numpy as np
from attr import dataclass

from hetprobe.atomics import (
    EXCITED_F,
    EXCITED_SUBLEVELS,
    GROUND_F,
    PROBED_M,
    RB87_D2,
    AtomicLine,
    Polarization,
    decay_branching,
    line_strength,
    transition_shift,
    transition_strength,
    zeeman_detuning,
)
from hetprobe.errors import InvalidArgumentError, NumericalError
from hetprobe.response import HYPERFINE_FACTOR, BeatConfig, sigma_minus_scatter_prob

logger = logging.getLogger(__name__)

GROUND_SUBLEVELS = tuple(range(-GROUND_F, GROUND_F + 1))
MAX_STEP_PROBABILITY = 1e-3
SIMPLE_MODEL_LIMIT = 0.2
SATURATION_LIMIT = 0.1


def _index(m: int) -> int:
    return m + GROUND_F


@dataclass
class SublevelPopulations:
    # ground[..., m + 2] for m = -2..2; excited[..., m' - 1] for m' = 1..3
    ground: np.ndarray
    excited: np.ndarray

    def __attrs_post_init__(self):
        if np.any(self.ground < -1e-12) or np.any(self.excited < -1e-12):
            raise InvalidArgumentError("populations must be non-negative")
        if np.any(self.total > 1 + 1e-9):
            raise InvalidArgumentError("populations must sum to at most 1")

    @classmethod
    def pure(cls, m: int = PROBED_M, shape=()) -> "SublevelPopulations":
        ground = np.zeros(tuple(shape) + (len(GROUND_SUBLEVELS),))
        ground[..., _index(m)] = 1.0
        return cls(ground=ground, excited=np.zeros(tuple(shape) + (len(EXCITED_SUBLEVELS),)))

    @property
    def total(self):
        return self.ground.sum(axis=-1) + self.excited.sum(axis=-1)

    def ground_population(self, m: int):
        if m not in GROUND_SUBLEVELS:
            raise InvalidArgumentError(f"ground sublevel m={m} outside -2..2")
        return self.ground[..., _index(m)]


@dataclass
class RetentionRule:
    retention: Dict[int, float] = attr.ib(factory=lambda: {2: 1.0, 1: 0.1, 0: 0.0, -1: 0.0, -2: 0.0})

    def __attrs_post_init__(self):
        if any(not 0.0 <= r <= 1.0 for r in self.retention.values()):
            raise InvalidArgumentError(f"retention probabilities must lie in [0, 1], got {self.retention}")

    @classmethod
    def weak_retention(cls, m1: float) -> "RetentionRule":
        return cls({2: 1.0, 1: m1, 0: 0.0, -1: 0.0, -2: 0.0})

    def of(self, m: int) -> float:
        return self.retention.get(m, 0.0)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.of(m) for m in GROUND_SUBLEVELS])


def _lorentzian(delta, line: AtomicLine):
    return line.gamma**2 / (delta**2 + line.gamma**2)


def _cross_section(area: float, line: AtomicLine) -> float:
    return HYPERFINE_FACTOR * 3 * line.wavelength**2 / (2 * math.pi * area)


def _stretched_rate_matrix(beat, pol, field, area, line):
    """Excitation from |m=2> only, per incident photon."""
    rates = np.zeros(np.shape(beat.center) + (len(GROUND_SUBLEVELS),) * 2)
    gross = 0.0
    source = _index(PROBED_M)
    for m_prime in EXCITED_SUBLEVELS:
        weight = pol.fraction(m_prime) * line_strength(m_prime) * _cross_section(area, line)
        if weight == 0:
            continue
        excitation = weight * sum(
            _lorentzian(zeeman_detuning(f, m_prime, field, line), line) for f in (beat.upper, beat.lower)
        )
        gross = gross + excitation
        for m, b in decay_branching(m_prime).items():
            rates[..., _index(m), source] += excitation * b
        rates[..., source, source] -= excitation
    return rates, gross


def _full_manifold_rate_matrix(beat, pol, field, area, line):
    """Every ground sublevel is excited by every polarisation component."""
    rates = np.zeros(np.shape(beat.center) + (len(GROUND_SUBLEVELS),) * 2)
    gross = 0.0
    for m in GROUND_SUBLEVELS:
        for q in (-1, 0, 1):
            m_prime = m + q
            if abs(m_prime) > EXCITED_F:
                continue
            weight = pol.fraction_for_q(q) * transition_strength(m, m_prime) * _cross_section(area, line)
            if weight == 0:
                continue
            centre = line.f_res + transition_shift(m, m_prime, field, line)
            excitation = weight * sum(_lorentzian(f - centre, line) for f in (beat.upper, beat.lower))
            gross = np.maximum(gross, excitation)
            for m_final, b in decay_branching(m_prime).items():
                rates[..., _index(m_final), _index(m)] += excitation * b
            rates[..., _index(m), _index(m)] -= excitation
    return rates, gross


def _rk4_propagator(generator: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 step for y' = M y, written as a matrix."""
    identity = np.broadcast_to(np.eye(generator.shape[-1]), generator.shape)
    step = h * generator
    step2 = step @ step
    step3 = step2 @ step
    return identity + step + step2 / 2 + step3 / 6 + step3 @ step / 24


def pump_rate_equations(
    beat: BeatConfig,
    pol: Polarization,
    field: float,
    photons: float,
    duration: float,
    area: float,
    line: AtomicLine = RB87_D2,
    full_manifold: bool = False,
    initial: Optional[SublevelPopulations] = None,
) -> SublevelPopulations:
    """Ground-state populations at the end of one probe pulse.

    ``beat.center`` may be an array; the result is then batched over it.
    """
    if photons < 0:
        raise InvalidArgumentError(f"photon number must be non-negative, got {photons}")
    if not duration > 0:
        raise InvalidArgumentError(f"pulse duration must be positive, got {duration}")
    if not area > 0:
        raise InvalidArgumentError(f"beam area must be positive, got {area}")

    build = _full_manifold_rate_matrix if full_manifold else _stretched_rate_matrix
    per_photon, gross_per_photon = build(beat, pol, field, area, line)
    generator = photons * per_photon
    shape = np.shape(beat.center)
    state = initial.ground if initial is not None else SublevelPopulations.pure(shape=shape).ground
    state = np.broadcast_to(state, shape + (len(GROUND_SUBLEVELS),))

    # peak excitation rate per atom against the natural scattering limit
    gross = photons * float(np.max(gross_per_photon)) / duration
    saturation = 2 * gross / (2 * math.pi * 2 * line.gamma)
    if saturation > SATURATION_LIMIT:
        logger.warning("Probe saturation parameter %.3g exceeds %.2g", saturation, SATURATION_LIMIT)

    out_rate = float(np.max(-np.diagonal(generator, axis1=-2, axis2=-1), initial=0.0))
    steps = max(1, int(math.ceil(out_rate / MAX_STEP_PROBABILITY)))
    propagator = np.linalg.matrix_power(_rk4_propagator(generator, 1.0 / steps), steps)
    ground = np.einsum("...ij,...j->...i", propagator, state)

    if not np.all(np.isfinite(ground)) or np.any(ground < -1e-9):
        raise NumericalError(
            "rate-equation integration failed",
            {"steps": steps, "max_out_rate": out_rate, "min_population": float(np.nanmin(ground))},
        )
    drift = float(np.max(np.abs(ground.sum(axis=-1) - state.sum(axis=-1)), initial=0.0))
    if drift > 1e-6:
        raise NumericalError("rate-equation integration lost population", {"steps": steps, "drift": drift})

    return SublevelPopulations(
        ground=np.clip(ground, 0.0, None), excited=np.zeros(shape + (len(EXCITED_SUBLEVELS),))
    )


def pulse_loss_fraction(pop: SublevelPopulations, rule: RetentionRule):
    q = 1 - pop.ground @ rule.vector
    return float(q) if np.ndim(q) == 0 else q


def loss_coefficient(rule: RetentionRule = RetentionRule(), m_prime: int = 1) -> float:
    """Probability that one excitation of m' ends as a trap loss (0.88 for sigma-)."""
    return sum(b * (1 - rule.of(m)) for m, b in decay_branching(m_prime).items())


def simple_q(eps1, photons, coefficient: Optional[float] = None):
    if coefficient is None:
        coefficient = loss_coefficient()
    exposure = np.asarray(eps1) * photons
    if np.any(exposure > SIMPLE_MODEL_LIMIT):
        logger.warning(
            "eps1 * N_photons = %.3g exceeds %.2g; the linear loss model is not valid",
            float(np.max(exposure)),
            SIMPLE_MODEL_LIMIT,
        )
    q = coefficient * exposure
    return float(q) if np.ndim(q) == 0 else q


def survival(k, q, p):
    k = np.asarray(k)
    qp = np.asarray(q) * np.asarray(p)
    if np.any(qp < 0) or np.any(qp > 1) or np.any(k < 0):
        raise InvalidArgumentError("survival needs q*p in [0, 1] and k >= 0")
    result = (1 - qp) ** k
    return float(result) if np.ndim(result) == 0 else result


@dataclass
class LossSpectrum:
    f0: np.ndarray
    q: np.ndarray
    survival: np.ndarray
    # only for perpendicular polarisation
    q_simple: Optional[np.ndarray] = None
    survival_simple: Optional[np.ndarray] = None


def loss_spectrum(
    f0,
    pol: Polarization,
    field: float,
    half_splitting: float,
    photons: float,
    duration: float,
    area: float,
    pulses: int = 200,
    probe_fraction: float = 0.012,
    rule: RetentionRule = RetentionRule(),
    line: AtomicLine = RB87_D2,
    full_manifold: bool = False,
) -> LossSpectrum:
    f0 = np.asarray(f0, dtype=float)
    if f0.ndim != 1 or f0.size == 0:
        raise InvalidArgumentError("loss spectrum needs a non-empty one-dimensional frequency grid")
    beat = BeatConfig(center=f0, half_splitting=half_splitting)
    pop = pump_rate_equations(beat, pol, field, photons, duration, area, line, full_manifold)
    q = pulse_loss_fraction(pop, rule)
    result = LossSpectrum(f0=f0, q=q, survival=survival(pulses, q, probe_fraction))
    if pol.mode == "perpendicular":
        eps1 = sigma_minus_scatter_prob(beat, area, field, line)
        q_simple = simple_q(eps1, photons, loss_coefficient(rule))
        result.q_simple = q_simple
        result.survival_simple = survival(pulses, np.clip(q_simple, 0.0, 1.0), probe_fraction)
    return result
