"""Figure of merit for dispersive detection: signal-to-noise per atom at fixed loss."""

import logging
import math
from typing import Dict, List, Sequence

import attr
import numpy as np
from attr import dataclass
from scipy import optimize

from hetprobe.atomics import RB87_D2, AtomicLine, Polarization
from hetprobe.errors import InvalidArgumentError, UnsupportedConfigurationError
from hetprobe.losses import loss_coefficient
from hetprobe.photodetect import predicted_sigma_phi
from hetprobe.response import BeatConfig, ProbeGeometry, phase_per_atom, sigma_minus_scatter_prob

logger = logging.getLogger(__name__)

REGIME_THERMAL = "thermal"
REGIME_CONDENSATE = "condensate"
# loss enhancement for a condensate, relative to a thermal cloud
CONDENSATE_Q_FACTOR = 16.0

LOW_FIELD = 10e-6
HIGH_FIELD = 650e-6


@dataclass
class FomConfig:
    splitting: float = 60e6
    waist: float = 100e-6
    field: float = LOW_FIELD
    polarization: Polarization = attr.ib(factory=Polarization.perpendicular)
    excess_noise: float = 3.3
    efficiency: float = 0.77
    regime: str = REGIME_THERMAL
    condensate_factor: float = CONDENSATE_Q_FACTOR
    # keep sqrt(0.88) instead of rounding it to 1
    pumping_factor: bool = False
    line: AtomicLine = RB87_D2

    def __attrs_post_init__(self):
        if self.splitting == 0:
            raise InvalidArgumentError("beat splitting must be non-zero")
        if not self.waist > 0:
            raise InvalidArgumentError(f"probe waist must be positive, got {self.waist}")
        if self.field < 0:
            raise InvalidArgumentError(f"magnetic field must be non-negative, got {self.field}")
        if self.excess_noise < 1:
            raise InvalidArgumentError(f"excess noise factor must be >= 1, got {self.excess_noise}")
        if not 0 < self.efficiency <= 1:
            raise InvalidArgumentError(f"quantum efficiency must lie in (0, 1], got {self.efficiency}")
        if self.regime not in (REGIME_THERMAL, REGIME_CONDENSATE):
            raise InvalidArgumentError(f"Unknown regime: {self.regime}")

    @property
    def q_scale(self) -> float:
        return self.condensate_factor if self.regime == REGIME_CONDENSATE else 1.0

    @property
    def area(self) -> float:
        return ProbeGeometry(self.waist).area

    def with_field(self, field_value: float) -> "FomConfig":
        return attr.evolve(self, field=field_value)


@dataclass
class FomPoint:
    f0: float
    value: float
    phi1: float
    eps1: float
    q_scale: float
    efficiency: float


@dataclass
class FomOptimum:
    f0: float
    point: FomPoint
    # False when the best value sits on a bound of the search interval
    interior: bool


def _check_polarization(pol: Polarization) -> None:
    if pol.fraction(2) > 0 or pol.fraction(1) != pol.fraction(3):
        raise UnsupportedConfigurationError(
            f"The figure of merit is only defined for perpendicular polarisation, got {pol.mode}"
        )


def _fom_values(f0, cfg: FomConfig):
    _check_polarization(cfg.polarization)
    beat = BeatConfig.from_splitting(f0, cfg.splitting)
    phi1 = phase_per_atom(beat, cfg.area, cfg.field, cfg.polarization, cfg.line)
    eps1 = sigma_minus_scatter_prob(beat, cfg.area, cfg.field, cfg.line)
    loss = 2 * eps1 * cfg.q_scale
    if cfg.pumping_factor:
        loss = loss * loss_coefficient()
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.abs(phi1) * math.sqrt(cfg.efficiency) / (cfg.excess_noise * np.sqrt(loss))
    return phi1, eps1, value


def figure_of_merit(f0: float, cfg: FomConfig) -> FomPoint:
    phi1, eps1, value = _fom_values(f0, cfg)
    return FomPoint(
        f0=float(f0),
        value=float(value),
        phi1=float(phi1),
        eps1=float(eps1),
        q_scale=cfg.q_scale,
        efficiency=cfg.efficiency,
    )


def fom_scan(f0: Sequence[float], cfg: FomConfig) -> List[FomPoint]:
    grid = np.asarray(f0, dtype=float)
    phi1, eps1, value = _fom_values(grid, cfg)
    return [
        FomPoint(
            f0=float(grid[i]),
            value=float(value[i]),
            phi1=float(phi1[i]),
            eps1=float(eps1[i]),
            q_scale=cfg.q_scale,
            efficiency=cfg.efficiency,
        )
        for i in range(grid.size)
    ]


def fom_scan_fields(
    f0: Sequence[float], cfg: FomConfig, fields: Sequence[float] = (LOW_FIELD, HIGH_FIELD)
) -> Dict[float, List[FomPoint]]:
    """One scan per field value, in the order given."""
    return {b: fom_scan(f0, cfg.with_field(b)) for b in fields}


def fom_optimize(cfg: FomConfig, bounds, grid_points: int = 2001) -> FomOptimum:
    lower, upper = bounds
    if not upper > lower:
        raise InvalidArgumentError(f"invalid search interval {bounds}")
    grid = np.linspace(lower, upper, grid_points)
    _, _, values = _fom_values(grid, cfg)
    values = np.where(np.isfinite(values), values, -np.inf)
    best = int(np.argmax(values))

    if best in (0, grid.size - 1):
        logger.warning(
            "Figure-of-merit maximum lies on the search bound %.6g Hz; no interior maximum found",
            grid[best],
        )
        return FomOptimum(f0=float(grid[best]), point=figure_of_merit(grid[best], cfg), interior=False)

    refined = optimize.minimize_scalar(
        lambda x: -figure_of_merit(x, cfg).value,
        bounds=(grid[best - 1], grid[best + 1]),
        method="bounded",
        options={"xatol": 1e-6 * (upper - lower) / grid_points},
    )
    f_star = float(refined.x) if -refined.fun >= values[best] else float(grid[best])
    return FomOptimum(f0=f_star, point=figure_of_merit(f_star, cfg), interior=True)


def atom_number_uncertainty(phi1: float, n: float, excess_noise: float, electronic_noise: float) -> float:
    """sigma_phi / |phi1|; infinite when the probe gives no phase per atom."""
    if phi1 == 0:
        logger.warning("Phase shift per atom is zero; atom number is not measurable")
        return math.inf
    return predicted_sigma_phi(n, excess_noise, electronic_noise) / abs(phi1)


def condensate_phase_imprint(photons: float, atoms: float, phi: float) -> float:
    if not atoms > 0:
        raise InvalidArgumentError(f"illuminated atom number must be positive, got {atoms}")
    return photons / atoms * phi


def condensate_atom_cost(fom: float, atoms: float, precision: float) -> float:
    """Atoms lost to measure ``atoms`` with relative uncertainty ``precision``."""
    if not fom > 0 or not atoms > 0 or not precision > 0:
        raise InvalidArgumentError("figure of merit, atom number and precision must be positive")
    return 1.0 / (fom**2 * precision**2 * atoms)
