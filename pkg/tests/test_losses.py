import logging

import numpy as np
import pytest

from hetprobe.atomics import Polarization, branching_ratios
from hetprobe.errors import InvalidArgumentError
from hetprobe.losses import (
    RetentionRule,
    SublevelPopulations,
    loss_coefficient,
    loss_spectrum,
    pulse_loss_fraction,
    pump_rate_equations,
    simple_q,
    survival,
)
from hetprobe.response import BeatConfig, ProbeGeometry, sigma_minus_scatter_prob

FIELD = 0.6e-3
AREA = ProbeGeometry(100e-6).area
SIGMA_MINUS = -2.8e6
PERPENDICULAR = Polarization.perpendicular()


def test_loss_coefficient_from_branching():
    ratios = branching_ratios(1)
    assert loss_coefficient() == pytest.approx(ratios[0] + 0.9 * ratios[1])
    assert loss_coefficient() == pytest.approx(0.88, abs=0.005)
    assert loss_coefficient(RetentionRule.weak_retention(1.0)) == pytest.approx(ratios[0])


def test_retention_rule():
    rule = RetentionRule()
    assert rule.of(2) == 1.0
    assert rule.of(1) == 0.1
    assert rule.of(-2) == 0.0
    np.testing.assert_array_equal(rule.vector, [0.0, 0.0, 0.0, 0.1, 1.0])
    with pytest.raises(InvalidArgumentError):
        RetentionRule.weak_retention(1.5)


def test_default_retention_is_not_shared():
    first, second = RetentionRule(), RetentionRule()
    first.retention[1] = 0.5
    assert second.of(1) == 0.1


def test_pure_population():
    pop = SublevelPopulations.pure()
    assert pop.ground_population(2) == 1.0
    assert pop.total == 1.0
    with pytest.raises(InvalidArgumentError):
        pop.ground_population(3)


def test_zero_photons_keep_everything():
    beat = BeatConfig.from_splitting(0.0, 60e6)
    pop = pump_rate_equations(beat, PERPENDICULAR, FIELD, 0.0, 30e-6, AREA)
    assert pop.ground_population(2) == pytest.approx(1.0)
    assert pulse_loss_fraction(pop, RetentionRule()) == pytest.approx(0.0, abs=1e-15)


def test_population_conserved_and_excited_empty():
    beat = BeatConfig.from_splitting(np.linspace(-60e6, 60e6, 25), 60e6)
    pop = pump_rate_equations(beat, PERPENDICULAR, FIELD, 6e5, 30e-6, AREA)
    np.testing.assert_allclose(pop.total, 1.0, atol=1e-9)
    assert np.all(pop.ground >= 0)
    assert np.all(pop.excited == 0)


def test_cycling_transition_is_lossless():
    sigma_plus_only = Polarization.explicit(0.0, 0.0, 1.0)
    beat = BeatConfig.from_splitting(8.4e6 + 30e6, 60e6)
    pop = pump_rate_equations(beat, sigma_plus_only, FIELD, 1e6, 30e-6, AREA)
    assert pop.ground_population(2) == pytest.approx(1.0, abs=1e-12)


def test_rate_equations_agree_with_simple_model_when_weak():
    f0 = np.linspace(-80e6, 80e6, 161)
    beat = BeatConfig(center=f0, half_splitting=30e6)
    q = pulse_loss_fraction(pump_rate_equations(beat, PERPENDICULAR, FIELD, 6e5, 30e-6, AREA), RetentionRule())
    q_simple = simple_q(sigma_minus_scatter_prob(beat, AREA, FIELD), 6e5)
    weak = q < 0.05
    assert weak.sum() > 100
    np.testing.assert_allclose(q_simple[weak], q[weak], rtol=0.05)


def test_loss_on_sigma_minus_resonance():
    beat = BeatConfig.from_splitting(SIGMA_MINUS + 30e6, 60e6)
    eps1 = sigma_minus_scatter_prob(beat, AREA, FIELD)
    q = pulse_loss_fraction(pump_rate_equations(beat, PERPENDICULAR, FIELD, 6e5, 30e-6, AREA), RetentionRule())
    assert q == pytest.approx(0.16, abs=0.02)
    # depletion of |m=2> makes the full model saturate below the linear estimate
    assert q < simple_q(eps1, 6e5)


def test_full_manifold_matches_stretched_model_when_weak():
    beat = BeatConfig.from_splitting(np.linspace(-80e6, 80e6, 17), 60e6)
    rule = RetentionRule()
    stretched = pump_rate_equations(beat, PERPENDICULAR, FIELD, 6e4, 30e-6, AREA)
    full = pump_rate_equations(beat, PERPENDICULAR, FIELD, 6e4, 30e-6, AREA, full_manifold=True)
    np.testing.assert_allclose(full.total, 1.0, atol=1e-9)
    assert np.all(full.ground >= 0)
    q = pulse_loss_fraction(stretched, rule)
    assert np.all(q < 0.02)
    np.testing.assert_allclose(pulse_loss_fraction(full, rule), q, rtol=0.1)


def test_pump_rate_equations_rejects():
    beat = BeatConfig.from_splitting(0.0, 60e6)
    with pytest.raises(InvalidArgumentError):
        pump_rate_equations(beat, PERPENDICULAR, FIELD, -1.0, 30e-6, AREA)
    with pytest.raises(InvalidArgumentError):
        pump_rate_equations(beat, PERPENDICULAR, FIELD, 1.0, 0.0, AREA)


def test_simple_q_validity_warning(caplog):
    with caplog.at_level(logging.WARNING):
        simple_q(1e-6, 5e5)
    assert "not valid" in caplog.text


@pytest.mark.parametrize(
    "k,q,p,expected",
    [
        (0, 0.5, 0.5, 1.0),
        (200, 0.0, 0.012, 1.0),
        (2, 0.5, 1.0, 0.25),
        (200, 0.16, 0.012, (1 - 0.16 * 0.012) ** 200),
    ],
)
def test_survival(k, q, p, expected):
    assert survival(k, q, p) == pytest.approx(expected)


def test_survival_rejects_probabilities_above_one():
    with pytest.raises(InvalidArgumentError):
        survival(1, 2.0, 1.0)


def test_loss_spectrum_shape():
    f0 = np.arange(-80e6, 80.5e6, 1e6)
    perpendicular = loss_spectrum(f0, PERPENDICULAR, FIELD, 30e6, 6e5, 30e-6, AREA)
    parallel = loss_spectrum(f0, Polarization.parallel(), FIELD, 30e6, 9e5, 30e-6, AREA)

    assert perpendicular.q_simple is not None
    assert parallel.q_simple is None
    assert np.all(parallel.survival <= perpendicular.survival + 1e-12)

    lower_half = f0 < SIGMA_MINUS
    dips = [
        f0[lower_half][np.argmin(perpendicular.survival[lower_half])],
        f0[~lower_half][np.argmin(perpendicular.survival[~lower_half])],
    ]
    assert dips[0] == pytest.approx(SIGMA_MINUS - 30e6, abs=1e6)
    assert dips[1] == pytest.approx(SIGMA_MINUS + 30e6, abs=1e6)


def test_loss_spectrum_rejects_empty_grid():
    with pytest.raises(InvalidArgumentError):
        loss_spectrum([], PERPENDICULAR, FIELD, 30e6, 6e5, 30e-6, AREA)


@pytest.mark.parametrize(
    "k, q, p",
    [
        (np.array([0, 1, 10, 100, 1000]), 0.3, 0.01),
        (50, np.linspace(0.0, 1.0, 11), 0.01),
        (50, 0.3, np.linspace(0.0, 0.2, 11)),
    ],
)
def test_survival_is_monotone(k, q, p):
    s = np.atleast_1d(survival(k, q, p))
    assert np.all(np.diff(s) <= 0)
    assert np.all((s >= 0) & (s <= 1))


@pytest.mark.parametrize("scale", [0.25, 3.0, 10.0])
def test_q_depends_on_photons_per_area(scale):
    beat = BeatConfig.from_splitting(np.array([-20e6, 0.0, 20e6]), 60e6)
    base = pump_rate_equations(beat, PERPENDICULAR, FIELD, 6e5, 30e-6, AREA)
    scaled = pump_rate_equations(beat, PERPENDICULAR, FIELD, scale * 6e5, 30e-6, scale * AREA)
    np.testing.assert_allclose(
        pulse_loss_fraction(scaled, RetentionRule()),
        pulse_loss_fraction(base, RetentionRule()),
        rtol=1e-6,
    )
