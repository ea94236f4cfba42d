"""Nonlinear least squares and the three model fits built on it.

``least_squares`` is a damped Gauss-Newton solver: it tries the undamped step
first and only adds Marquardt damping after a step fails to lower the cost.
Fit failures are reported through ``FitResult.status``, never raised.
"""

import logging
import math
from typing import Callable, Dict, Optional, Sequence, Tuple

import attr
import numpy as np
from attr import dataclass
from scipy import linalg, signal

from hetprobe.atomics import RB87_D2, AtomicLine, Polarization
from hetprobe.errors import InvalidArgumentError
from hetprobe.response import BeatConfig, beat_observables

logger = logging.getLogger(__name__)

STATUS_CONVERGED = "converged"
STATUS_DEGENERATE = "degenerate"
STATUS_MAXITER = "maxiter"

STEP_TOLERANCE = 1e-8
COST_TOLERANCE = 1e-10
MAX_ITERATIONS = 200
CONDITION_LIMIT = 1e-12
INITIAL_DAMPING = 1e-3
MAX_DAMPING = 1e16

Model = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class FitResult:
    params: np.ndarray
    covariance: np.ndarray
    residual_norm: float
    status: str
    iterations: int
    names: Tuple[str, ...] = ()
    dof: int = 0
    derived: Dict[str, float] = attr.ib(factory=dict)
    derived_errors: Dict[str, float] = attr.ib(factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def _index(self, name: str) -> int:
        if name not in self.names:
            raise KeyError(name)
        return self.names.index(name)

    def value(self, name: str) -> float:
        if name in self.derived:
            return self.derived[name]
        return float(self.params[self._index(name)])

    def error(self, name: str) -> float:
        if name in self.derived_errors:
            return self.derived_errors[name]
        return float(self.errors[self._index(name)])

    def as_dict(self) -> Dict[str, object]:
        summary: Dict[str, object] = {
            "status": self.status,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
        }
        for name in self.names:
            summary[name] = self.value(name)
            summary[f"{name}_err"] = self.error(name)
        for name in self.derived:
            summary[name] = self.derived[name]
            summary[f"{name}_err"] = self.derived_errors.get(name, math.nan)
        return summary


def _step_sizes(params: np.ndarray, x_scale: np.ndarray, power: float) -> np.ndarray:
    return np.finfo(float).eps ** power * np.maximum(np.abs(params), x_scale)


def forward_difference_jacobian(fun, params, x_scale=None, f0=None) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    x_scale = np.ones_like(params) if x_scale is None else np.asarray(x_scale, dtype=float)
    f0 = fun(params) if f0 is None else f0
    steps = _step_sizes(params, x_scale, 0.5)
    columns = []
    for j, h in enumerate(steps):
        shifted = params.copy()
        shifted[j] += h
        # the realised step, after rounding
        h = shifted[j] - params[j]
        columns.append((fun(shifted) - f0) / h)
    return np.column_stack(columns)


def central_difference_jacobian(fun, params, x_scale=None) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    x_scale = np.ones_like(params) if x_scale is None else np.asarray(x_scale, dtype=float)
    steps = _step_sizes(params, x_scale, 1.0 / 3.0)
    columns = []
    for j, h in enumerate(steps):
        up, down = params.copy(), params.copy()
        up[j] += h
        down[j] -= h
        columns.append((fun(up) - fun(down)) / (up[j] - down[j]))
    return np.column_stack(columns)


def _is_degenerate(jac: np.ndarray, x_scale: np.ndarray) -> bool:
    if not np.all(np.isfinite(jac)):
        return True
    singular = linalg.svdvals(jac * x_scale)
    return singular[0] == 0 or singular[-1] <= CONDITION_LIMIT * singular[0]


def _covariance(jac: np.ndarray, reduced_chi2: Optional[float]) -> np.ndarray:
    if not np.all(np.isfinite(jac)):
        return np.full((jac.shape[1],) * 2, np.inf)
    try:
        covariance = linalg.inv(jac.T @ jac)
    except linalg.LinAlgError:
        return np.full((jac.shape[1],) * 2, np.inf)
    covariance = 0.5 * (covariance + covariance.T)
    if reduced_chi2 is not None:
        covariance = covariance * reduced_chi2
    return covariance


def least_squares(
    model: Model,
    x,
    y,
    init: Sequence[float],
    sigma=None,
    names: Sequence[str] = (),
    x_scale: Optional[Sequence[float]] = None,
    max_iterations: int = MAX_ITERATIONS,
) -> FitResult:
    """Minimise sum(((y - model(x, p)) / sigma)**2) over p."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    params = np.array(init, dtype=float)
    n_params = params.size
    if y.size < n_params:
        raise InvalidArgumentError(f"{y.size} data points cannot determine {n_params} parameters")
    weighted = sigma is not None
    sigma = np.ones_like(y) if sigma is None else np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    if np.any(~(sigma > 0)):
        raise InvalidArgumentError("data uncertainties must be positive")
    scale = np.ones(n_params) if x_scale is None else np.asarray(x_scale, dtype=float)
    names = tuple(names) if names else tuple(f"p{i}" for i in range(n_params))

    def residuals(p):
        return (y - model(x, p)) / sigma

    def finish(p, status, iterations, r):
        cost = float(r @ r)
        dof = y.size - n_params
        jac = forward_difference_jacobian(residuals, p, scale, r)
        reduced = None if weighted else (cost / dof if dof > 0 else None)
        covariance = _covariance(jac, reduced)
        if status == STATUS_CONVERGED and _is_degenerate(jac, scale):
            status = STATUS_DEGENERATE
        logger.debug("least_squares finished: status=%s iterations=%d cost=%.6g", status, iterations, cost)
        return FitResult(
            params=p,
            covariance=covariance,
            residual_norm=math.sqrt(cost),
            status=status,
            iterations=iterations,
            names=names,
            dof=dof,
        )

    r = residuals(params)
    if not np.all(np.isfinite(r)):
        return finish(params, STATUS_DEGENERATE, 0, r)
    cost = float(r @ r)
    damping = 0.0

    for iteration in range(1, max_iterations + 1):
        jac = forward_difference_jacobian(residuals, params, scale, r)
        if _is_degenerate(jac, scale):
            return finish(params, STATUS_DEGENERATE, iteration, r)
        column_norms = np.linalg.norm(jac, axis=0)

        while True:
            if damping > 0:
                augmented = np.vstack([jac, np.diag(math.sqrt(damping) * column_norms)])
                rhs = np.concatenate([-r, np.zeros(n_params)])
            else:
                augmented, rhs = jac, -r
            step = linalg.lstsq(augmented, rhs)[0]
            trial = params + step
            r_trial = residuals(trial)
            cost_trial = float(r_trial @ r_trial) if np.all(np.isfinite(r_trial)) else math.inf

            small_step = np.linalg.norm(step / np.maximum(np.abs(params), scale)) < STEP_TOLERANCE
            small_change = abs(cost - cost_trial) <= COST_TOLERANCE * cost or cost_trial == 0
            if cost_trial <= cost:
                params, r, cost = trial, r_trial, cost_trial
                damping = damping / 10 if damping > INITIAL_DAMPING else 0.0
                if small_step or small_change:
                    return finish(params, STATUS_CONVERGED, iteration, r)
                break
            if small_step or small_change:
                return finish(params, STATUS_CONVERGED, iteration, r)
            damping = INITIAL_DAMPING if damping == 0 else damping * 10
            if damping > MAX_DAMPING:
                # no descent direction left at machine precision
                return finish(params, STATUS_CONVERGED, iteration, r)

    logger.warning("least_squares stopped after %d iterations without converging", max_iterations)
    return finish(params, STATUS_MAXITER, max_iterations, r)


# spectrum


def spectrum_model(f0, rho, f_offset, half_splitting, pol, field, line=RB87_D2):
    """(phi, eps) of the beat note against the scan frequency f0."""
    beat = BeatConfig(center=np.asarray(f0, dtype=float) - f_offset, half_splitting=half_splitting)
    observables = beat_observables(beat, 1.0, field, pol, line)
    return rho * observables.phi, rho * observables.eps


def _unit_phase(f0, f_offset, half_splitting, pol, field, line):
    return spectrum_model(f0, 1.0, f_offset, half_splitting, pol, field, line)[0]


def _linear_amplitude(basis, y, weights) -> Tuple[float, float]:
    norm = float(np.sum(weights * basis**2))
    if norm == 0:
        return 0.0, math.inf
    amplitude = float(np.sum(weights * basis * y)) / norm
    return amplitude, float(np.sum(weights * (y - amplitude * basis) ** 2))


def fit_spectrum(
    f0,
    phi,
    sigma=None,
    half_splitting: float = 30e6,
    pol: Optional[Polarization] = None,
    field: float = 0.0,
    line: AtomicLine = RB87_D2,
    f_offset: Optional[float] = None,
) -> FitResult:
    """Fit column density ``rho`` and scan offset ``f_offset`` to a phase spectrum.

    Passing ``f_offset`` fixes the offset; only ``rho`` is then fitted.
    """
    pol = pol or Polarization.perpendicular()
    f0 = np.asarray(f0, dtype=float)
    phi = np.asarray(phi, dtype=float)
    weights = np.ones_like(phi) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2

    if f_offset is not None:
        return least_squares(
            lambda f, p: p[0] * _unit_phase(f, f_offset, half_splitting, pol, field, line),
            f0,
            phi,
            init=[_linear_amplitude(_unit_phase(f0, f_offset, half_splitting, pol, field, line), phi, weights)[0]],
            sigma=sigma,
            names=("rho",),
            x_scale=[1e12],
        )

    # coarse search over the offset with rho solved linearly at each candidate
    centre = 0.5 * (f0.min() + f0.max())
    span = f0.max() - f0.min()
    candidates = centre + np.arange(-0.5 * span, 0.5 * span + line.gamma / 8, line.gamma / 4)
    best = None
    for candidate in candidates:
        rho, cost = _linear_amplitude(_unit_phase(f0, candidate, half_splitting, pol, field, line), phi, weights)
        if best is None or cost < best[2]:
            best = (rho, candidate, cost)
    rho0, offset0, _ = best
    if rho0 == 0:
        rho0 = 1.0

    return least_squares(
        lambda f, p: p[0] * _unit_phase(f, p[1], half_splitting, pol, field, line),
        f0,
        phi,
        init=[rho0, offset0],
        sigma=sigma,
        names=("rho", "f_offset"),
        x_scale=[1e12, line.gamma],
    )


# damped sine


def damped_sine(t, params):
    amplitude, frequency, decay_rate, phase, offset = params
    return amplitude * np.exp(-decay_rate * t) * np.cos(2 * math.pi * frequency * t + phase) + offset


PEAK_TO_FLOOR = 10.0
MIN_PERIODS = 2.0


def _spectral_peak(t: np.ndarray, y: np.ndarray) -> Optional[float]:
    dt = float(np.median(np.diff(t)))
    centred = y - y.mean()
    power = np.abs(np.fft.rfft(centred)) ** 2
    if power.size < 3 or power[1:].max() <= PEAK_TO_FLOOR * np.median(power[1:]):
        return None
    padded = 16 * centred.size
    fine = np.abs(np.fft.rfft(centred, padded)) ** 2
    k = int(np.argmax(fine[1:])) + 1
    if 0 < k < fine.size - 1:
        a, b, c = fine[k - 1], fine[k], fine[k + 1]
        denominator = a - 2 * b + c
        if denominator != 0:
            k = k + 0.5 * (a - c) / denominator
    return k / (padded * dt)


def _envelope_decay(t: np.ndarray, y: np.ndarray) -> float:
    envelope = np.abs(signal.hilbert(y - y.mean()))
    trim = max(1, t.size // 10)
    core_t, core_env = t[trim:-trim], envelope[trim:-trim]
    keep = core_env > 0
    if keep.sum() < 2:
        return 0.0
    slope = np.polyfit(core_t[keep], np.log(core_env[keep]), 1)[0]
    return max(0.0, -float(slope))


def fit_damped_sine(t, y, sigma=None) -> FitResult:
    """Fit a*exp(-k t)*cos(2 pi f t + psi) + c; the damping time 1/k is reported as derived."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    names = ("amplitude", "frequency", "decay_rate", "phase", "offset")
    if t.size < len(names) + 1:
        raise InvalidArgumentError(f"damped-sine fit needs more than {len(names)} samples")

    frequency = _spectral_peak(t, y)
    duration = float(t.max() - t.min())
    if frequency is None:
        logger.warning("No oscillation found above the noise floor")
    elif frequency * duration < MIN_PERIODS:
        logger.warning(
            "Record covers %.2f periods at %.4g Hz, fewer than %.0f", frequency * duration, frequency, MIN_PERIODS
        )
    if frequency is None or frequency * duration < MIN_PERIODS:
        return FitResult(
            params=np.full(len(names), np.nan),
            covariance=np.full((len(names),) * 2, np.inf),
            residual_norm=math.nan,
            status=STATUS_DEGENERATE,
            iterations=0,
            names=names,
        )
    decay_rate = _envelope_decay(t, y)

    # amplitude, phase and offset are linear once f and k are fixed
    envelope = np.exp(-decay_rate * t)
    design = np.column_stack(
        [
            envelope * np.cos(2 * math.pi * frequency * t),
            envelope * np.sin(2 * math.pi * frequency * t),
            np.ones_like(t),
        ]
    )
    (a_cos, a_sin, offset), *_ = linalg.lstsq(design, y)
    amplitude = math.hypot(a_cos, a_sin)
    phase = math.atan2(-a_sin, a_cos)

    spread = float(np.ptp(y)) or 1.0
    result = least_squares(
        damped_sine,
        t,
        y,
        init=[amplitude, frequency, decay_rate, phase, offset],
        sigma=sigma,
        names=names,
        x_scale=[spread, 1.0 / duration, 1.0 / duration, 1.0, spread],
    )
    if result.params[0] < 0:
        result.params[0] = -result.params[0]
        result.params[3] += math.pi
    result.params[3] = math.remainder(result.params[3], 2 * math.pi)

    k, k_err = result.params[2], result.errors[2]
    result.derived = {"damping_time": 1.0 / k if k > 0 else math.inf}
    result.derived_errors = {"damping_time": k_err / k**2 if k > 0 else math.inf}
    return result


# noise model


def noise_model(n, params):
    excess_noise, electronic_sq = params
    n = np.asarray(n, dtype=float)
    return np.sqrt(np.clip(2 * excess_noise**2 / n + electronic_sq / n**2, 0.0, None))


MIN_DECADES = 2.0
REWEIGHT_PASSES = 20
REWEIGHT_TOLERANCE = 1e-6


def fit_noise_model(n, sigma_phi, sigma=None, relative_error: Optional[float] = None) -> FitResult:
    """Fit sigma_phi(N) = sqrt(2 X^2 / N + C_e^2 / N^2) over (X, C_e^2).

    Measured deviations scatter in proportion to the true ones. With
    ``relative_error`` each point is weighted by ``relative_error`` times the
    model value rather than by its own scatter, and the fit is repeated until
    the weights settle. Weighting by the measured values favours points that
    came out low and pulls X down.
    """
    n = np.asarray(n, dtype=float)
    sigma_phi = np.asarray(sigma_phi, dtype=float)
    names = ("excess_noise", "electronic_sq")
    if np.any(n <= 0) or np.any(sigma_phi <= 0):
        raise InvalidArgumentError("photon numbers and phase deviations must be positive")
    if sigma is not None and relative_error is not None:
        raise InvalidArgumentError("pass either sigma or relative_error, not both")
    if relative_error is not None and not relative_error > 0:
        raise InvalidArgumentError("relative_error must be positive")
    if n.size < 3 or math.log10(n.max() / n.min()) < MIN_DECADES:
        logger.warning("Noise-model fit needs photon numbers spanning %.0f decades", MIN_DECADES)
        return FitResult(
            params=np.full(2, np.nan),
            covariance=np.full((2, 2), np.inf),
            residual_norm=math.nan,
            status=STATUS_DEGENERATE,
            iterations=0,
            names=names,
        )

    # sigma^2 is linear in (X^2, C_e^2); solve that with relative weights for a start
    design = np.column_stack([2 / n, 1 / n**2]) / sigma_phi[:, None] ** 2
    (x_sq, electronic_sq), *_ = linalg.lstsq(design, np.ones_like(n))
    excess_noise = math.sqrt(x_sq) if x_sq > 0 else 1.0
    scale = np.array([1.0, float(n.min()) ** 2 * float(sigma_phi.max()) ** 2])

    def fit(init, weights):
        return least_squares(noise_model, n, sigma_phi, init=init, sigma=weights, names=names, x_scale=scale)

    if relative_error is None:
        result = fit([excess_noise, electronic_sq], sigma)
    else:
        params = np.array([excess_noise, electronic_sq])
        result = fit(params, None)
        if np.all(np.isfinite(result.params)):
            params = result.params.copy()
        for _ in range(REWEIGHT_PASSES):
            weights = relative_error * noise_model(n, params)
            if not np.all(weights > 0):
                break
            result = fit(params, weights)
            settled = np.all(np.abs(result.params - params) <= REWEIGHT_TOLERANCE * np.maximum(np.abs(params), scale))
            params = result.params.copy()
            if settled or not result.converged:
                break
        else:
            logger.warning("Noise-model weights did not settle after %d passes", REWEIGHT_PASSES)
    result.params[0] = abs(result.params[0])
    electronic_sq, electronic_sq_err = result.params[1], result.errors[1]
    electronic = math.sqrt(max(electronic_sq, 0.0))
    result.derived = {"electronic_noise": electronic}
    result.derived_errors = {
        "electronic_noise": electronic_sq_err / (2 * electronic) if electronic > 0 else math.sqrt(electronic_sq_err)
    }
    return result
