import os

import pytest
import yaml

from hetprobe.config import (
    SCENARIOS,
    ScenarioConfig,
    apply_overrides,
    choose_config_file,
    dump_config,
    read_yaml_config,
    validate_config,
)
from hetprobe.errors import ConfigError


def test_empty_config_gives_defaults():
    cfg = validate_config({})
    assert cfg == ScenarioConfig()
    assert cfg.probe.waist == pytest.approx(100e-6)
    assert cfg.probe.splitting == pytest.approx(60e6)
    assert cfg.detector.excess_noise == 3.3
    assert cfg.detector.electronic_noise is None
    assert cfg.trap.field_minimum == pytest.approx(0.6e-3)
    assert cfg.fom_scan.fields == pytest.approx([10e-6, 650e-6])
    assert validate_config(None) == cfg


def test_user_units_are_converted():
    cfg = validate_config({"probe": {"splitting_mhz": 60, "waist_um": 2}, "cloud": {"temperature_uk": 30}})
    assert cfg.probe.splitting == pytest.approx(6e7)
    assert cfg.probe.waist == pytest.approx(2e-6)
    assert cfg.cloud.temperature == pytest.approx(30e-6)


def test_scenario_argument_wins():
    assert validate_config({"scenario": "spectrum"}, scenario="fom-scan").scenario == "fom-scan"


def test_negative_waist_names_the_key():
    with pytest.raises(ConfigError) as e:
        validate_config({"probe": {"waist_um": -5}})
    assert e.value.errors == ["probe.waist_um: must be positive"]
    assert "probe.waist_um" in str(e.value)


def test_all_errors_are_collected():
    raw = {
        "scenario": "calibration",
        "threads": 0,
        "detector": {"efficiency": 1.2, "mode": "analog"},
        "trap": {"axial_frequency_hz": "fast"},
    }
    with pytest.raises(ConfigError) as e:
        validate_config(raw)
    keys = [error.split(":")[0] for error in e.value.errors]
    assert keys == ["scenario", "threads", "detector.efficiency", "detector.mode", "trap.axial_frequency_hz"]


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError) as e:
        validate_config({"colour": "blue", "probe": {"waist": 100}})
    assert e.value.errors == ["colour: unknown key", "probe.waist: unknown key"]


def test_section_must_be_a_mapping():
    with pytest.raises(ConfigError) as e:
        validate_config({"probe": [1, 2]})
    assert e.value.errors == ["probe: expected a mapping"]


def test_config_must_be_a_mapping():
    with pytest.raises(ConfigError):
        validate_config(["noise-curve"])


def test_booleans_are_not_numbers():
    with pytest.raises(ConfigError):
        validate_config({"seed": True})


def test_required_value_cannot_be_null():
    with pytest.raises(ConfigError) as e:
        validate_config({"probe": {"waist_um": None}})
    assert e.value.errors == ["probe.waist_um: a value is required"]
    assert validate_config({"cloud": {"probe_offset_um": None}}).cloud.probe_offset is None


def test_cross_checks():
    with pytest.raises(ConfigError) as e:
        validate_config({"spectrum": {"f0_min_mhz": 10, "f0_max_mhz": -10}, "noise_curve": {"photons_max": 10}})
    assert len(e.value.errors) == 2


@pytest.mark.parametrize(
    "polarization,valid",
    [
        ("perpendicular", True),
        ("parallel", True),
        ([0.25, 0.5, 0.25], True),
        ("circular", False),
        ([0.6, 0.0, 0.6], False),
        ([0.5, 0.5], False),
    ],
)
def test_polarization_values(polarization, valid):
    raw = {"probe": {"polarization": polarization}}
    if valid:
        assert validate_config(raw).probe.polarization == polarization
    else:
        with pytest.raises(ConfigError):
            validate_config(raw)


def test_apply_overrides():
    raw = {"probe": {"waist_um": 50}}
    tree = apply_overrides(
        raw, ["probe.splitting_mhz=40", "seed=7", "detector.mode=timedomain", "fom_scan.fields_mt=[0.01]"]
    )
    assert tree == {
        "probe": {"waist_um": 50, "splitting_mhz": 40},
        "seed": 7,
        "detector": {"mode": "timedomain"},
        "fom_scan": {"fields_mt": [0.01]},
    }
    # the caller's tree is left alone
    assert raw == {"probe": {"waist_um": 50}}
    assert validate_config(tree).probe.splitting == pytest.approx(40e6)


@pytest.mark.parametrize("override", ["waist", "a.b.c=1", "probe.waist_um=[1, 2", "=3"])
def test_bad_overrides(override):
    with pytest.raises(ConfigError):
        apply_overrides({}, [override])


def test_override_into_scalar_is_rejected():
    with pytest.raises(ConfigError):
        apply_overrides({"seed": 1}, ["seed.value=2"])


def test_dump_config_round_trip():
    cfg = validate_config({"probe": {"waist_um": 2, "polarization": "parallel"}, "seed": 11, "threads": 3})
    dumped = dump_config(cfg)
    assert dumped["probe"]["waist_um"] == pytest.approx(2)
    assert dumped["fom_scan"]["fields_mt"] == pytest.approx([0.01, 0.65])
    reloaded = validate_config(yaml.safe_load(yaml.safe_dump(dumped)))
    assert reloaded.seed == 11
    assert reloaded.probe.waist == pytest.approx(cfg.probe.waist)
    assert reloaded.cloud.damping_time == pytest.approx(cfg.cloud.damping_time)
    assert reloaded.probe.polarization == "parallel"


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_every_scenario_is_accepted(scenario):
    assert validate_config({"scenario": scenario}).scenario == scenario


def test_read_yaml_config_with_include(tmp_path):
    probe = tmp_path / "probe.yml"
    probe.write_text("waist_um: 20\nsplitting_mhz: 40\n")
    main = tmp_path / "hetprobe.yml"
    main.write_text(f"scenario: spectrum\nprobe: !include {probe}\n")

    raw = read_yaml_config(str(main))
    assert raw == {"scenario": "spectrum", "probe": {"waist_um": 20, "splitting_mhz": 40}}
    assert validate_config(raw).probe.waist == pytest.approx(20e-6)


def test_read_empty_yaml_config(tmp_path):
    empty = tmp_path / "empty.yml"
    empty.write_text("")
    assert read_yaml_config(str(empty)) == {}


def test_choose_config_file(tmp_path):
    missing = os.path.join(tmp_path, "missing.yml")
    present = tmp_path / "present.yml"
    present.write_text("seed: 1\n")
    assert choose_config_file([missing, str(present)]) == str(present)
    assert choose_config_file([missing]) == ""
