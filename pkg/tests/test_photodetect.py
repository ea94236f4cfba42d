import math

import attr
import numpy as np
import pytest

from hetprobe.errors import InvalidArgumentError
from hetprobe.photodetect import (
    MODE_STATISTICAL,
    MODE_TIMEDOMAIN,
    DemodRecord,
    PulseConfig,
    avalanche_sigma_phi,
    calibrate_electronic_noise,
    circular_mean,
    estimate_phase_amp,
    phase_amp_errors,
    predicted_sigma_phi,
    sample_avalanche_gain,
    shot_noise_sigma_phi,
    simulate_pulse,
    simulate_pulse_statistical,
    simulate_pulse_timedomain,
    wrap_phase,
)
from hetprobe.streams import substream


def pulse(photons=1e4, **kwargs):
    # 1 MHz beat keeps the time-domain record short
    return PulseConfig.from_photons(photons, 10e-6, 1e6, **kwargs)


def test_pulse_config_properties():
    cfg = PulseConfig.from_photons(3e5, 10e-6, 60e6)
    assert cfg.mean_photons == pytest.approx(3e5)
    assert cfg.incident_photons == pytest.approx(3e5 / 0.77)
    assert cfg.cycles == pytest.approx(600)
    assert cfg.beat_frequency == pytest.approx(60e6)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"efficiency": 0.0},
        {"excess_noise": 0.9},
        {"electronic_noise": -1.0},
        {"mode": "analog"},
        {"phase_noise_floor": -1e-3},
    ],
)
def test_pulse_config_rejects(kwargs):
    with pytest.raises(InvalidArgumentError):
        pulse(**kwargs)


def test_pulse_must_span_whole_cycles():
    with pytest.raises(InvalidArgumentError):
        PulseConfig.from_photons(1e4, 10.25e-6, 1e6)


@pytest.mark.parametrize("mode", [MODE_STATISTICAL, MODE_TIMEDOMAIN])
def test_deterministic_pulse_recovers_phase_and_amplitude(mode):
    cfg = pulse(deterministic=True, mode=mode)
    record = simulate_pulse(cfg, 0.3, 0.1)
    assert record.phi == pytest.approx(0.3, abs=1e-3)
    assert record.amplitude == pytest.approx(0.5 * 1e4 * 0.9, rel=1e-3)


def test_timedomain_rejects_low_sample_rate():
    with pytest.raises(InvalidArgumentError):
        simulate_pulse_timedomain(pulse(samples_per_cycle=4, mode=MODE_TIMEDOMAIN), 0.0, 0.0)


def test_timedomain_sample_record():
    cfg = pulse(mode=MODE_TIMEDOMAIN, deterministic=True)
    samples, _ = simulate_pulse_timedomain(cfg, 0.0, 0.0)
    assert samples.t.size == 10 * cfg.samples_per_cycle
    assert samples.in_phase.size == samples.t.size
    assert np.sum(samples.signal) == pytest.approx(1e4)


def test_same_stream_same_record():
    cfg = pulse()
    first = simulate_pulse(cfg, 0.2, 0.0, substream(7, 1, 2))
    second = simulate_pulse(cfg, 0.2, 0.0, substream(7, 1, 2))
    other = simulate_pulse(cfg, 0.2, 0.0, substream(7, 1, 3))
    assert first == second
    assert first != other


def test_seed_used_without_generator():
    assert simulate_pulse(pulse(seed=3), 0.0, 0.0) == simulate_pulse(pulse(seed=3), 0.0, 0.0)


def test_statistical_phase_noise_matches_prediction():
    cfg = pulse(electronic_noise=calibrate_electronic_noise(3.3, 5800))
    count = 2000
    phases = np.array([simulate_pulse_statistical(cfg, 0.0, 0.0, substream(0, k)).phi for k in range(count)])
    expected = predicted_sigma_phi(1e4, 3.3, cfg.electronic_noise)
    standard_error = 1 / math.sqrt(2 * (count - 1))
    assert np.std(phases, ddof=1) == pytest.approx(expected, rel=4 * standard_error)


def test_detector_modes_agree():
    count = 4000
    records = {}
    for mode in (MODE_STATISTICAL, MODE_TIMEDOMAIN):
        cfg = pulse(mode=mode)
        records[mode] = np.array(
            [
                (r.v_i, r.v_q)
                for r in (simulate_pulse(cfg, 0.4, 0.1, substream(11, k)) for k in range(count))
            ]
        )
    statistical, timedomain = records[MODE_STATISTICAL], records[MODE_TIMEDOMAIN]

    expected_mean = 0.5 * 1e4 * 0.9 * np.array([math.cos(0.4), math.sin(0.4)])
    np.testing.assert_allclose(statistical.mean(axis=0), expected_mean, rtol=0.05)
    np.testing.assert_allclose(timedomain.mean(axis=0), expected_mean, rtol=0.05)

    # the variance of a variance estimate is 2 sigma^4 / (n - 1)
    band = max(0.05, 4 * math.sqrt(2 * 2 / (count - 1)))
    np.testing.assert_allclose(statistical.var(axis=0, ddof=1), timedomain.var(axis=0, ddof=1), rtol=band)
    np.testing.assert_allclose(statistical.var(axis=0, ddof=1), 3.3**2 * 1e4 / 2, rtol=band)


def test_avalanche_gain_moments():
    gains = sample_avalanche_gain(3.3, 200_000, substream(1))
    assert gains.mean() == pytest.approx(1.0, abs=0.03)
    assert gains.var() == pytest.approx(3.3**2 - 1, rel=0.08)
    np.testing.assert_array_equal(sample_avalanche_gain(1.0, 5, substream(1)), np.ones(5))


def test_noise_curves():
    n = np.array([1e3, 1e4, 1e5])
    np.testing.assert_allclose(shot_noise_sigma_phi(n), np.sqrt(2 / n))
    np.testing.assert_allclose(avalanche_sigma_phi(n, 3.3), 3.3 * np.sqrt(2 / n))
    assert predicted_sigma_phi(1e4, 1.0, 0.0, floor=1e-3) == pytest.approx(math.sqrt(2e-4 + 1e-6))
    with pytest.raises(InvalidArgumentError):
        predicted_sigma_phi(0.0, 1.0, 0.0)


def test_electronic_noise_calibration():
    ce = calibrate_electronic_noise(3.3, 5800)
    assert ce == pytest.approx(355.4, rel=1e-3)
    # electronic and avalanche contributions are equal at the crossing
    assert ce / 5800 == pytest.approx(avalanche_sigma_phi(5800, 3.3))


@pytest.mark.parametrize(
    "phi,expected",
    [
        (0.5, 0.5),
        (math.pi, math.pi),
        (-math.pi, math.pi),
        (3 * math.pi / 2, -math.pi / 2),
        (-7.0, -7.0 + 2 * math.pi),
    ],
)
def test_wrap_phase(phi, expected):
    assert wrap_phase(phi) == pytest.approx(expected)


def test_circular_mean_across_branch_cut():
    assert abs(circular_mean([math.pi - 0.1, -math.pi + 0.1])) == pytest.approx(math.pi)


def test_demod_record_phase_range():
    assert DemodRecord(v_i=-1.0, v_q=-0.0, n_hat=1.0).phi == pytest.approx(math.pi)


def test_estimate_phase_amp_closure():
    cfg = pulse(deterministic=True)
    atoms = [simulate_pulse(cfg, 0.3, 0.1)] * 4
    background = [simulate_pulse(cfg, 0.0, 0.0)] * 4
    phi, eps = estimate_phase_amp(atoms, background)
    assert phi == pytest.approx(0.3)
    assert eps == pytest.approx(0.1)
    assert phase_amp_errors(atoms, background) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_estimate_phase_amp_rejects_empty():
    with pytest.raises(InvalidArgumentError):
        estimate_phase_amp([], [simulate_pulse(pulse(deterministic=True), 0.0, 0.0)])


def test_phase_error_matches_noise():
    cfg = pulse()
    shots = 400
    atoms = [simulate_pulse(cfg, 0.1, 0.0, substream(2, k, 0)) for k in range(shots)]
    background = [simulate_pulse(cfg, 0.0, 0.0, substream(2, k, 1)) for k in range(shots)]
    phi, _ = estimate_phase_amp(atoms, background)
    phi_err, _ = phase_amp_errors(atoms, background)
    expected = predicted_sigma_phi(1e4, 3.3, 0.0) * math.sqrt(2 / shots)
    assert phi_err == pytest.approx(expected, rel=0.15)
    assert phi == pytest.approx(0.1, abs=5 * expected)


def test_phase_noise_floor_adds_in_quadrature():
    cfg = attr.evolve(pulse(), phase_noise_floor=0.05)
    phases = np.array([simulate_pulse(cfg, 0.0, 0.0, substream(4, k)).phi for k in range(2000)])
    expected = predicted_sigma_phi(1e4, 3.3, 0.0, floor=0.05)
    assert np.std(phases, ddof=1) == pytest.approx(expected, rel=4 / math.sqrt(2 * 1999))


@pytest.mark.parametrize("phi_true", [0.0, 0.1, -0.1, 1.0, -1.0])
def test_phase_estimate_is_unbiased(phi_true):
    cfg = pulse()
    runs = 500
    phases = np.array([simulate_pulse(cfg, phi_true, 0.0, substream(4, k)).phi for k in range(runs)])
    sigma = predicted_sigma_phi(1e4, 3.3, 0.0)
    assert abs(phases.mean() - phi_true) < 3 * sigma / math.sqrt(runs)


@pytest.mark.parametrize("mode", [MODE_STATISTICAL, MODE_TIMEDOMAIN])
def test_amplitude_does_not_depend_on_phase(mode):
    deterministic = pulse(deterministic=True, mode=mode)
    amplitudes = [simulate_pulse(deterministic, phi, 0.2).amplitude for phi in (0.0, 0.7, -1.9, 3.0)]
    np.testing.assert_allclose(amplitudes, amplitudes[0], rtol=1e-4)

    runs = 300
    cfg = pulse(mode=mode)
    # each quadrature carries X^2 N / 2 of variance
    standard_error = math.sqrt(3.3**2 * 1e4 / 2 / runs)
    for phi in (0.0, 1.2, -2.5):
        mean = np.mean([simulate_pulse(cfg, phi, 0.2, substream(6, k)).amplitude for k in range(runs)])
        assert mean == pytest.approx(0.5 * 1e4 * 0.8, abs=4 * standard_error)
