"""Line data for the 87Rb D2 F=2 -> F'=3 manifold.

All frequencies are ordinary frequencies in Hz. Excited sublevels are
labelled m' and the probed ground state is |F=2, m=2>, so m'=1, 2, 3 are
reached by sigma-, pi and sigma+ light respectively.
"""

import math
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Tuple, Union

import numpy as np
from attr import dataclass
from scipy import constants

from hetprobe.errors import InvalidArgumentError

HalfInteger = Union[int, float, Fraction]

BOHR_HZ_PER_TESLA = constants.physical_constants["Bohr magneton in Hz/T"][0]

GROUND_F = 2
EXCITED_F = 3
PROBED_M = 2
EXCITED_SUBLEVELS = (1, 2, 3)


@dataclass
class AtomicLine:
    wavelength: float = 780.241e-9
    # half-width of the line, i.e. half the spontaneous decay rate
    gamma: float = 3.0333e6
    f_res: float = 0.0
    g_f: float = 0.5
    g_f_prime: float = 2.0 / 3.0
    bohr_hz_per_tesla: float = BOHR_HZ_PER_TESLA

    def __attrs_post_init__(self):
        if not self.wavelength > 0:
            raise InvalidArgumentError(f"wavelength must be positive, got {self.wavelength}")
        if not self.gamma > 0:
            raise InvalidArgumentError(f"gamma must be positive, got {self.gamma}")


RB87_D2 = AtomicLine()


@dataclass
class Polarization:
    mode: str
    # power fractions driving |m=2> -> |m'=1>, |m'=2>, |m'=3>
    fractions: Tuple[float, float, float]

    def __attrs_post_init__(self):
        if any(not 0.0 <= p <= 1.0 for p in self.fractions):
            raise InvalidArgumentError(
                f"polarisation fractions must lie in [0, 1], got {self.fractions}"
            )
        if sum(self.fractions) > 1.0 + 1e-12:
            raise InvalidArgumentError(
                f"polarisation fractions must sum to at most 1, got {self.fractions}"
            )

    @classmethod
    def perpendicular(cls) -> "Polarization":
        return cls("perpendicular", (0.5, 0.0, 0.5))

    @classmethod
    def parallel(cls) -> "Polarization":
        return cls("parallel", (0.0, 1.0, 0.0))

    @classmethod
    def explicit(cls, p1: float, p2: float, p3: float) -> "Polarization":
        return cls("explicit", (float(p1), float(p2), float(p3)))

    @classmethod
    def from_name(cls, name) -> "Polarization":
        if isinstance(name, Polarization):
            return name
        if isinstance(name, str):
            if name == "perpendicular":
                return cls.perpendicular()
            if name == "parallel":
                return cls.parallel()
            raise InvalidArgumentError(f"Unknown polarisation: {name}")
        p1, p2, p3 = name
        return cls.explicit(p1, p2, p3)

    def fraction(self, m_prime: int) -> float:
        return self.fractions[m_prime - 1]

    def fraction_for_q(self, q: int) -> float:
        """Power fraction for a Delta-m = q component (q = m' - m)."""
        return self.fractions[q + 1]


@dataclass
class TransitionSet:
    strengths: Dict[int, float]
    shifts: Dict[int, float]
    branching: Dict[int, Dict[int, float]]


def _twice(x: HalfInteger, name: str) -> int:
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x) or abs(2 * x - round(2 * x)) > 1e-9:
            raise InvalidArgumentError(f"{name}={x} is not an integer or half-integer")
        return int(round(2 * x))
    try:
        doubled = 2 * Fraction(x)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"{name}={x!r} is not a number")
    if doubled.denominator != 1:
        raise InvalidArgumentError(f"{name}={x} is not an integer or half-integer")
    return int(doubled)


@lru_cache(maxsize=4096)
def _wigner3j_sq_doubled(
    tj1: int, tj2: int, tj3: int, tm1: int, tm2: int, tm3: int
) -> Fraction:
    if tm1 + tm2 + tm3 != 0:
        return Fraction(0)
    if tj3 < abs(tj1 - tj2) or tj3 > tj1 + tj2:
        return Fraction(0)
    if (tj1 + tj2 + tj3) % 2:
        return Fraction(0)
    for tj, tm in ((tj1, tm1), (tj2, tm2), (tj3, tm3)):
        if abs(tm) > tj or (tj - tm) % 2:
            return Fraction(0)

    def half(n: int) -> int:
        return n // 2

    f = math.factorial
    triangle = Fraction(
        f(half(tj1 + tj2 - tj3)) * f(half(tj1 - tj2 + tj3)) * f(half(-tj1 + tj2 + tj3)),
        f(half(tj1 + tj2 + tj3) + 1),
    )
    projections = (
        f(half(tj1 + tm1))
        * f(half(tj1 - tm1))
        * f(half(tj2 + tm2))
        * f(half(tj2 - tm2))
        * f(half(tj3 + tm3))
        * f(half(tj3 - tm3))
    )

    tmin = max(0, half(tj2 - tj3 - tm1), half(tj1 - tj3 + tm2))
    tmax = min(half(tj1 + tj2 - tj3), half(tj1 - tm1), half(tj2 + tm2))
    racah_sum = Fraction(0)
    for t in range(tmin, tmax + 1):
        denominator = (
            f(t)
            * f(half(tj3 - tj2 + tm1) + t)
            * f(half(tj3 - tj1 - tm2) + t)
            * f(half(tj1 + tj2 - tj3) - t)
            * f(half(tj1 - tm1) - t)
            * f(half(tj2 + tm2) - t)
        )
        racah_sum += Fraction((-1) ** t, denominator)

    return triangle * projections * racah_sum**2


def wigner3j_sq_exact(
    j1: HalfInteger,
    j2: HalfInteger,
    j3: HalfInteger,
    m1: HalfInteger,
    m2: HalfInteger,
    m3: HalfInteger,
) -> Fraction:
    """Squared Wigner 3j symbol as an exact rational (Racah sum)."""
    doubled = [
        _twice(value, name)
        for value, name in zip((j1, j2, j3, m1, m2, m3), ("j1", "j2", "j3", "m1", "m2", "m3"))
    ]
    for tj, name in zip(doubled[:3], ("j1", "j2", "j3")):
        if tj < 0:
            raise InvalidArgumentError(f"{name} must be non-negative")
    return _wigner3j_sq_doubled(*doubled)


def wigner3j_sq(
    j1: HalfInteger,
    j2: HalfInteger,
    j3: HalfInteger,
    m1: HalfInteger,
    m2: HalfInteger,
    m3: HalfInteger,
) -> float:
    """Squared Wigner 3j symbol. Selection-rule violations give 0."""
    return float(wigner3j_sq_exact(j1, j2, j3, m1, m2, m3))


def _check_excited(m_prime: int, allowed=EXCITED_SUBLEVELS) -> None:
    if m_prime not in allowed:
        raise InvalidArgumentError(f"m'={m_prime} is outside {tuple(allowed)}")


def transition_strength_exact(m: int, m_prime: int) -> Fraction:
    if abs(m) > GROUND_F:
        raise InvalidArgumentError(f"ground sublevel m={m} outside -2..2")
    if abs(m_prime) > EXCITED_F:
        raise InvalidArgumentError(f"excited sublevel m'={m_prime} outside -3..3")
    if abs(m_prime - m) > 1:
        return Fraction(0)
    return wigner3j_sq_exact(EXCITED_F, 1, GROUND_F, -m_prime, m_prime - m, m)


def transition_strength(m: int, m_prime: int) -> float:
    return float(transition_strength_exact(m, m_prime))


def line_strength(m_prime: int) -> float:
    _check_excited(m_prime)
    return transition_strength(PROBED_M, m_prime)


def transition_shift(m: int, m_prime: int, field: float, line: AtomicLine = RB87_D2):
    """Zeeman shift of the |2,m> -> |3',m'> transition frequency."""
    return (line.g_f_prime * m_prime - line.g_f * m) * line.bohr_hz_per_tesla * field


def zeeman_detuning(f, m_prime: int, field: float, line: AtomicLine = RB87_D2):
    """Detuning of light at frequency f from the |2,2> -> |3',m'> line."""
    _check_excited(m_prime)
    if np.any(np.asarray(field) < 0):
        raise InvalidArgumentError(f"magnetic field must be non-negative, got {field}")
    return f - (line.f_res + transition_shift(PROBED_M, m_prime, field, line))


@lru_cache(maxsize=None)
def _decay_branching_exact(m_prime: int) -> Tuple[Tuple[int, Fraction], ...]:
    weights = {
        m: transition_strength_exact(m, m_prime)
        for m in range(-GROUND_F, GROUND_F + 1)
        if abs(m_prime - m) <= 1
    }
    total = sum(weights.values())
    return tuple((m, w / total) for m, w in sorted(weights.items()) if w)


def decay_branching(m_prime: int) -> Dict[int, float]:
    """Decay probabilities |3',m'> -> |2,m> for any m' in -3..3."""
    if abs(m_prime) > EXCITED_F:
        raise InvalidArgumentError(f"excited sublevel m'={m_prime} outside -3..3")
    return {m: float(b) for m, b in _decay_branching_exact(m_prime)}


def branching_ratios(m_prime: int) -> Dict[int, float]:
    _check_excited(m_prime)
    return decay_branching(m_prime)


def transition_set(field: float, line: AtomicLine = RB87_D2) -> TransitionSet:
    return TransitionSet(
        strengths={mp: line_strength(mp) for mp in EXCITED_SUBLEVELS},
        shifts={mp: transition_shift(PROBED_M, mp, field, line) for mp in EXCITED_SUBLEVELS},
        branching={mp: branching_ratios(mp) for mp in EXCITED_SUBLEVELS},
    )
