"""Detection chain: photon statistics, avalanche gain, electronic noise and IQ demodulation."""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from attr import dataclass
from scipy import signal

from hetprobe.errors import InvalidArgumentError
from hetprobe.streams import substream

logger = logging.getLogger(__name__)

MODE_STATISTICAL = "statistical"
MODE_TIMEDOMAIN = "timedomain"
MODES = (MODE_STATISTICAL, MODE_TIMEDOMAIN)

MIN_STATISTICAL_PHOTONS = 100
MIN_SAMPLES_PER_CYCLE = 8
# filter time constants appended to the window to collect the settling tail
FILTER_TAIL = 10


@dataclass
class PulseConfig:
    rate: float
    duration: float
    omega: float
    efficiency: float = 0.77
    excess_noise: float = 3.3
    electronic_noise: float = 0.0
    seed: int = 0
    mode: str = MODE_STATISTICAL
    lowpass_cutoff: float = 650e3
    samples_per_cycle: int = 16
    phase_noise_floor: float = 0.0
    # disables every random draw; used for closure checks
    deterministic: bool = False

    def __attrs_post_init__(self):
        if self.rate < 0:
            raise InvalidArgumentError(f"photon rate must be non-negative, got {self.rate}")
        if not self.duration > 0:
            raise InvalidArgumentError(f"pulse duration must be positive, got {self.duration}")
        if not self.omega > 0:
            raise InvalidArgumentError(f"beat angular frequency must be positive, got {self.omega}")
        if not 0 < self.efficiency <= 1:
            raise InvalidArgumentError(f"quantum efficiency must lie in (0, 1], got {self.efficiency}")
        if self.excess_noise < 1:
            raise InvalidArgumentError(f"excess noise factor must be >= 1, got {self.excess_noise}")
        if self.electronic_noise < 0:
            raise InvalidArgumentError(
                f"electronic noise constant must be non-negative, got {self.electronic_noise}"
            )
        if self.phase_noise_floor < 0:
            raise InvalidArgumentError(
                f"phase noise floor must be non-negative, got {self.phase_noise_floor}"
            )
        if self.mode not in MODES:
            raise InvalidArgumentError(f"Unknown detector mode: {self.mode}")
        cycles = self.cycles
        if abs(cycles - round(cycles)) > 1e-6 * max(1.0, cycles) or round(cycles) < 1:
            raise InvalidArgumentError(
                f"pulse must span a whole number of beat cycles, got {cycles:.6g}"
            )

    @property
    def cycles(self) -> float:
        return self.omega * self.duration / (2 * math.pi)

    @property
    def beat_frequency(self) -> float:
        return self.omega / (2 * math.pi)

    @property
    def mean_photons(self) -> float:
        return self.rate * self.duration

    @property
    def incident_photons(self) -> float:
        return self.mean_photons / self.efficiency

    @classmethod
    def from_photons(cls, photons: float, duration: float, beat_frequency: float, **kwargs) -> "PulseConfig":
        return cls(
            rate=photons / duration, duration=duration, omega=2 * math.pi * beat_frequency, **kwargs
        )


@dataclass
class DemodRecord:
    v_i: float
    v_q: float
    n_hat: float

    @property
    def phi(self) -> float:
        angle = math.atan2(self.v_q, self.v_i)
        return math.pi if angle == -math.pi else angle

    @property
    def amplitude(self) -> float:
        return math.hypot(self.v_i, self.v_q)


@dataclass
class SampleRecord:
    t: np.ndarray
    signal: np.ndarray
    in_phase: np.ndarray
    quadrature: np.ndarray


def calibrate_electronic_noise(excess_noise: float, crossing_photons: float) -> float:
    """C_e such that the electronic and avalanche terms are equal at ``crossing_photons``."""
    if not crossing_photons > 0:
        raise InvalidArgumentError(f"crossing photon number must be positive, got {crossing_photons}")
    return excess_noise * math.sqrt(2 * crossing_photons)


def _check_photons(n):
    n = np.asarray(n, dtype=float)
    if np.any(n <= 0):
        raise InvalidArgumentError("photon number must be positive")
    return n


def predicted_sigma_phi(n, excess_noise: float, electronic_noise: float, floor: float = 0.0):
    n = _check_photons(n)
    result = np.sqrt(
        (excess_noise * np.sqrt(2 / n)) ** 2 + (electronic_noise / n) ** 2 + floor**2
    )
    return float(result) if result.ndim == 0 else result


def shot_noise_sigma_phi(n):
    return predicted_sigma_phi(n, 1.0, 0.0)


def avalanche_sigma_phi(n, excess_noise: float):
    return predicted_sigma_phi(n, excess_noise, 0.0)


def sample_avalanche_gain(excess_noise: float, size, rng: np.random.Generator) -> np.ndarray:
    """Per-photon gain with mean 1 and variance X**2 - 1 (Gamma law)."""
    if excess_noise < 1:
        raise InvalidArgumentError(f"excess noise factor must be >= 1, got {excess_noise}")
    spread = excess_noise**2 - 1
    if spread == 0:
        return np.ones(size)
    return rng.gamma(1.0 / spread, spread, size)


def _rng(cfg: PulseConfig, rng: Optional[np.random.Generator]) -> np.random.Generator:
    return rng if rng is not None else substream(cfg.seed)


def _effective_phase(cfg, phi_true, rng):
    if cfg.phase_noise_floor > 0 and not cfg.deterministic:
        return phi_true + rng.normal(0.0, cfg.phase_noise_floor)
    return phi_true


def simulate_pulse_statistical(
    cfg: PulseConfig, phi_true: float, eps_true: float, rng: Optional[np.random.Generator] = None
) -> DemodRecord:
    rng = _rng(cfg, rng)
    if cfg.mean_photons < MIN_STATISTICAL_PHOTONS:
        logger.warning(
            "Statistical detector mode used with %.3g photons per pulse; the Gaussian "
            "approximation needs at least %d",
            cfg.mean_photons,
            MIN_STATISTICAL_PHOTONS,
        )
    phase = _effective_phase(cfg, phi_true, rng)

    if cfg.deterministic:
        n = float(round(cfg.mean_photons))
        noise = np.zeros(2)
    else:
        n = float(rng.poisson(cfg.mean_photons))
        shot = rng.normal(0.0, cfg.excess_noise * math.sqrt(n / 2), 2)
        electronic = rng.normal(0.0, cfg.electronic_noise / 2, 2)
        noise = shot + electronic

    # the compound Poisson-gain noise already carries the photon-number fluctuation
    level = 0.5 * cfg.mean_photons * (1 - eps_true)
    return DemodRecord(
        v_i=level * math.cos(phase) + noise[0],
        v_q=level * math.sin(phase) + noise[1],
        n_hat=n,
    )


def _lowpass_coefficients(cutoff: float, dt: float):
    alpha = 1 - math.exp(-2 * math.pi * cutoff * dt)
    return np.array([alpha]), np.array([1.0, alpha - 1.0])


def simulate_pulse_timedomain(
    cfg: PulseConfig, phi_true: float, eps_true: float, rng: Optional[np.random.Generator] = None
) -> Tuple[SampleRecord, DemodRecord]:
    if cfg.samples_per_cycle < MIN_SAMPLES_PER_CYCLE:
        raise InvalidArgumentError(
            f"sample rate too low: {cfg.samples_per_cycle} samples per beat cycle, "
            f"need at least {MIN_SAMPLES_PER_CYCLE}"
        )
    if not cfg.lowpass_cutoff > 0:
        raise InvalidArgumentError(f"low-pass cutoff must be positive, got {cfg.lowpass_cutoff}")
    rng = _rng(cfg, rng)
    phase = _effective_phase(cfg, phi_true, rng)

    n_samples = int(round(cfg.cycles)) * cfg.samples_per_cycle
    dt = cfg.duration / n_samples
    t = (np.arange(n_samples) + 0.5) * dt
    expected = cfg.rate * dt * (1 + (1 - eps_true) * np.cos(cfg.omega * t + phase))

    if cfg.deterministic:
        pulses = expected
    else:
        counts = rng.poisson(expected)
        spread = cfg.excess_noise**2 - 1
        if spread == 0:
            pulses = counts.astype(float)
        else:
            # a sum of k Gamma(1/s, s) gains is Gamma(k/s, s)
            gains = rng.gamma(np.maximum(counts, 1) / spread, spread)
            pulses = np.where(counts > 0, gains, 0.0)

    b, a = _lowpass_coefficients(cfg.lowpass_cutoff, dt)
    tail = int(math.ceil(FILTER_TAIL / (2 * math.pi * cfg.lowpass_cutoff * dt)))
    padding = np.zeros(tail)
    mixed_i = np.concatenate([pulses * np.cos(cfg.omega * t), padding])
    mixed_q = np.concatenate([-pulses * np.sin(cfg.omega * t), padding])
    in_phase = signal.lfilter(b, a, mixed_i)
    quadrature = signal.lfilter(b, a, mixed_q)

    v_i = float(np.sum(in_phase))
    v_q = float(np.sum(quadrature))
    if not cfg.deterministic:
        v_i += rng.normal(0.0, cfg.electronic_noise / 2)
        v_q += rng.normal(0.0, cfg.electronic_noise / 2)

    samples = SampleRecord(t=t, signal=pulses, in_phase=in_phase[:n_samples], quadrature=quadrature[:n_samples])
    return samples, DemodRecord(v_i=v_i, v_q=v_q, n_hat=float(np.sum(pulses)))


def simulate_pulse(
    cfg: PulseConfig, phi_true: float, eps_true: float, rng: Optional[np.random.Generator] = None
) -> DemodRecord:
    if cfg.mode == MODE_TIMEDOMAIN:
        return simulate_pulse_timedomain(cfg, phi_true, eps_true, rng)[1]
    return simulate_pulse_statistical(cfg, phi_true, eps_true, rng)


def wrap_phase(phi):
    """Map onto (-pi, pi]."""
    wrapped = np.mod(np.asarray(phi, dtype=float) + math.pi, 2 * math.pi) - math.pi
    wrapped = np.where(wrapped <= -math.pi, wrapped + 2 * math.pi, wrapped)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def _phases(records: Sequence[DemodRecord], label: str) -> np.ndarray:
    if len(records) == 0:
        raise InvalidArgumentError(f"{label} record set is empty")
    return np.array([r.phi for r in records])


def circular_mean(phases) -> float:
    phases = np.asarray(phases, dtype=float)
    return wrap_phase(math.atan2(np.mean(np.sin(phases)), np.mean(np.cos(phases))))


def estimate_phase_amp(
    with_atoms: Sequence[DemodRecord], background: Sequence[DemodRecord]
) -> Tuple[float, float]:
    phi_atoms = circular_mean(_phases(with_atoms, "with-atoms"))
    phi_background = circular_mean(_phases(background, "background"))
    amp_atoms = np.mean([r.amplitude for r in with_atoms])
    amp_background = np.mean([r.amplitude for r in background])
    if amp_background == 0:
        raise InvalidArgumentError("background records carry no beat amplitude")
    return wrap_phase(phi_atoms - phi_background), float(1 - amp_atoms / amp_background)


def phase_amp_errors(
    with_atoms: Sequence[DemodRecord], background: Sequence[DemodRecord]
) -> Tuple[float, float]:
    """Standard errors of the two quantities returned by estimate_phase_amp."""

    def spread(records: List[DemodRecord], label: str):
        phases = _phases(records, label)
        centred = wrap_phase(phases - circular_mean(phases))
        amps = np.array([r.amplitude for r in records])
        n = len(records)
        if n < 2:
            return 0.0, 0.0, float(np.mean(amps))
        return np.var(centred, ddof=1) / n, np.var(amps, ddof=1) / n, float(np.mean(amps))

    var_phi_a, var_amp_a, amp_a = spread(list(with_atoms), "with-atoms")
    var_phi_b, var_amp_b, amp_b = spread(list(background), "background")
    phi_err = math.sqrt(var_phi_a + var_phi_b)
    # first-order propagation of 1 - a/b
    eps_err = math.sqrt(var_amp_a / amp_b**2 + var_amp_b * amp_a**2 / amp_b**4)
    return phi_err, eps_err
