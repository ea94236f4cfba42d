import os
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import attr
import yaml
from attr import dataclass

from hetprobe.errors import ConfigError

CONFIG_FILE_PATHS = [
    os.path.join(os.getcwd(), "hetprobe.yml"),
    os.path.join(os.path.expanduser("~"), ".config", "hetprobe", "hetprobe.yml"),
]

SCENARIOS = ("noise-curve", "spectrum", "oscillation", "loss-scan", "fom-scan", "fit")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


# value parsers: raise ValueError with a short reason


def _number(value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"expected a number, got {value!r}")
    return float(value)


def _integer(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"expected an integer, got {value!r}")
    return value


def _string(value) -> str:
    if not isinstance(value, str):
        raise ValueError(f"expected a string, got {value!r}")
    return value


def _boolean(value) -> bool:
    if not isinstance(value, bool):
        raise ValueError(f"expected true or false, got {value!r}")
    return value


def _numbers(value) -> List[float]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ValueError(f"expected a non-empty list of numbers, got {value!r}")
    return [_number(v) for v in value]


def _polarization(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple)) and len(value) == 3:
        return [_number(v) for v in value]
    raise ValueError(f"expected 'perpendicular', 'parallel' or three power fractions, got {value!r}")


# checks: return an error message or None


def positive(value) -> Optional[str]:
    return None if value > 0 else "must be positive"


def non_negative(value) -> Optional[str]:
    return None if value >= 0 else "must be non-negative"


def unit_interval(value) -> Optional[str]:
    return None if 0 <= value <= 1 else "must lie in [0, 1]"


def efficiency(value) -> Optional[str]:
    return None if 0 < value <= 1 else "must lie in (0, 1]"


def at_least(bound) -> Callable[[Any], Optional[str]]:
    def check(value):
        return None if value >= bound else f"must be at least {bound}"

    return check


def one_of(*choices) -> Callable[[Any], Optional[str]]:
    def check(value):
        return None if value in choices else f"must be one of {', '.join(map(str, choices))}"

    return check


def all_positive(values) -> Optional[str]:
    return None if all(v > 0 for v in values) else "must all be positive"


def all_non_negative(values) -> Optional[str]:
    return None if all(v >= 0 for v in values) else "must all be non-negative"


def polarization_name(value) -> Optional[str]:
    if isinstance(value, str):
        return one_of("perpendicular", "parallel")(value)
    if any(not 0 <= v <= 1 for v in value) or sum(value) > 1 + 1e-12:
        return "power fractions must lie in [0, 1] and sum to at most 1"
    return None


def setting(default, parse, key: Optional[str] = None, scale: float = 1.0, check=None, optional=False):
    """A config entry.

    ``key`` is the user-facing YAML name (defaults to the attribute name) and
    ``scale`` converts the user value to SI.
    """
    return attr.ib(
        default=default,
        metadata={"key": key, "parse": parse, "scale": scale, "check": check, "optional": optional},
    )


@dataclass
class LineSection:
    wavelength: float = setting(780.241e-9, _number, "wavelength_nm", 1e-9, positive)
    gamma: float = setting(3.0333e6, _number, "gamma_mhz", 1e6, positive)
    f_res: float = setting(0.0, _number, "f_res_mhz", 1e6)
    g_f: float = setting(0.5, _number)
    g_f_prime: float = setting(2.0 / 3.0, _number)


@dataclass
class ProbeSection:
    waist: float = setting(100e-6, _number, "waist_um", 1e-6, positive)
    splitting: float = setting(60e6, _number, "splitting_mhz", 1e6, positive)
    polarization: Any = setting("perpendicular", _polarization, check=polarization_name)
    saturation_parameter: float = setting(0.0, _number, check=non_negative)
    saturation_threshold: float = setting(0.1, _number, check=positive)


@dataclass
class DetectorSection:
    efficiency: float = setting(0.77, _number, check=efficiency)
    excess_noise: float = setting(3.3, _number, check=at_least(1.0))
    # None: calibrated from crossing_photons
    electronic_noise: Optional[float] = setting(None, _number, check=non_negative, optional=True)
    crossing_photons: float = setting(5800.0, _number, check=positive)
    mode: str = setting("statistical", _string, check=one_of("statistical", "timedomain"))
    lowpass_cutoff: float = setting(650e3, _number, "lowpass_khz", 1e3, positive)
    samples_per_cycle: int = setting(16, _integer, check=at_least(8))
    # None: simulate at the real beat frequency (the probe splitting)
    beat_frequency: Optional[float] = setting(None, _number, "beat_frequency_mhz", 1e6, positive, optional=True)
    phase_noise_floor: float = setting(0.0, _number, "phase_noise_floor_mrad", 1e-3, non_negative)


@dataclass
class TrapSection:
    radial_frequency: float = setting(75.0, _number, "radial_frequency_hz", 1.0, positive)
    axial_frequency: float = setting(21.0, _number, "axial_frequency_hz", 1.0, positive)
    field_minimum: float = setting(0.6e-3, _number, "field_minimum_mt", 1e-3, non_negative)


@dataclass
class CloudSection:
    atom_number: float = setting(2.4e6, _number, check=non_negative)
    temperature: float = setting(60e-6, _number, "temperature_uk", 1e-6, positive)
    amplitude: float = setting(300e-6, _number, "amplitude_um", 1e-6, non_negative)
    damping_time: float = setting(0.2, _number, "damping_time_ms", 1e-3, positive)
    phase: float = setting(0.0, _number)
    # None: the steepest point of the column density
    probe_offset: Optional[float] = setting(None, _number, "probe_offset_um", 1e-6, optional=True)


@dataclass
class NoiseCurveSection:
    photons_min: float = setting(1e3, _number, check=positive)
    photons_max: float = setting(1e6, _number, check=positive)
    points: int = setting(8, _integer, check=at_least(2))
    repetitions: int = setting(50, _integer, check=at_least(2))
    duration: float = setting(10e-6, _number, "duration_us", 1e-6, positive)


@dataclass
class SpectrumSection:
    f0_min: float = setting(-80e6, _number, "f0_min_mhz", 1e6)
    f0_max: float = setting(80e6, _number, "f0_max_mhz", 1e6)
    f0_step: float = setting(2e6, _number, "f0_step_mhz", 1e6, positive)
    column_density: float = setting(2.2e12, _number, check=non_negative)
    shots: int = setting(16, _integer, check=at_least(1))
    duration: float = setting(10e-6, _number, "duration_us", 1e-6, positive)
    detected_photons: float = setting(3e5, _number, check=positive)
    # None: the trap field minimum
    field: Optional[float] = setting(None, _number, "field_mt", 1e-3, non_negative, optional=True)


@dataclass
class OscillationSection:
    points: int = setting(120, _integer, check=at_least(8))
    spacing: float = setting(1e-3, _number, "spacing_ms", 1e-3, positive)
    detected_photons: float = setting(4e5, _number, check=positive)
    duration: float = setting(50e-6, _number, "duration_us", 1e-6, positive)
    # beat centre frequency f0 above the sigma- line
    sigma_minus_offset: float = setting(13e6, _number, "sigma_minus_offset_mhz", 1e6)
    probe_fraction: float = setting(0.012, _number, check=unit_interval)
    field: Optional[float] = setting(None, _number, "field_mt", 1e-3, non_negative, optional=True)


@dataclass
class LossScanSection:
    f0_min: float = setting(-80e6, _number, "f0_min_mhz", 1e6)
    f0_max: float = setting(80e6, _number, "f0_max_mhz", 1e6)
    f0_step: float = setting(1e6, _number, "f0_step_mhz", 1e6, positive)
    pulses: int = setting(200, _integer, check=at_least(0))
    duration: float = setting(30e-6, _number, "duration_us", 1e-6, positive)
    photons_perpendicular: float = setting(6e5, _number, check=non_negative)
    photons_parallel: float = setting(9e5, _number, check=non_negative)
    probe_fraction: float = setting(0.012, _number, check=unit_interval)
    m1_retention: float = setting(0.1, _number, check=unit_interval)
    field: Optional[float] = setting(None, _number, "field_mt", 1e-3, non_negative, optional=True)
    full_manifold: bool = setting(False, _boolean)


@dataclass
class FomScanSection:
    f0_min: float = setting(-100e6, _number, "f0_min_mhz", 1e6)
    f0_max: float = setting(100e6, _number, "f0_max_mhz", 1e6)
    f0_step: float = setting(0.25e6, _number, "f0_step_mhz", 1e6, positive)
    fields: List[float] = setting([10e-6, 650e-6], _numbers, "fields_mt", 1e-3, all_non_negative)
    condensate_waist: float = setting(2e-6, _number, "condensate_waist_um", 1e-6, positive)
    condensate_factor: float = setting(16.0, _number, check=positive)
    condensate_atoms: float = setting(1e3, _number, check=positive)
    precision: float = setting(0.1, _number, check=positive)
    pumping_factor: bool = setting(False, _boolean)


@dataclass
class FitSection:
    kind: str = setting("noise", _string, check=one_of("noise", "spectrum", "oscillation"))
    # None: fit freshly simulated data, `repetitions` times
    data_file: Optional[str] = setting(None, _string, optional=True)
    repetitions: int = setting(50, _integer, check=at_least(1))


SECTIONS = {
    "line": LineSection,
    "probe": ProbeSection,
    "detector": DetectorSection,
    "trap": TrapSection,
    "cloud": CloudSection,
    "noise_curve": NoiseCurveSection,
    "spectrum": SpectrumSection,
    "oscillation": OscillationSection,
    "loss_scan": LossScanSection,
    "fom_scan": FomScanSection,
    "fit": FitSection,
}


@dataclass
class ScenarioConfig:
    scenario: str = setting("noise-curve", _string, check=one_of(*SCENARIOS))
    seed: int = setting(0, _integer, check=lambda v: None if 0 <= v < 2**64 else "must lie in [0, 2**64)")
    output_dir: str = setting(os.environ.get("HETPROBE_OUTPUT_DIR") or "results", _string)
    threads: int = setting(1, _integer, check=at_least(1))
    log_file: Optional[str] = setting(None, _string, optional=True)
    log_level: str = setting("INFO", _string, check=one_of(*LOG_LEVELS))
    line: LineSection = attr.ib(factory=LineSection)
    probe: ProbeSection = attr.ib(factory=ProbeSection)
    detector: DetectorSection = attr.ib(factory=DetectorSection)
    trap: TrapSection = attr.ib(factory=TrapSection)
    cloud: CloudSection = attr.ib(factory=CloudSection)
    noise_curve: NoiseCurveSection = attr.ib(factory=NoiseCurveSection)
    spectrum: SpectrumSection = attr.ib(factory=SpectrumSection)
    oscillation: OscillationSection = attr.ib(factory=OscillationSection)
    loss_scan: LossScanSection = attr.ib(factory=LossScanSection)
    fom_scan: FomScanSection = attr.ib(factory=FomScanSection)
    fit: FitSection = attr.ib(factory=FitSection)


def _settings(cls) -> List[attr.Attribute]:
    return [a for a in attr.fields(cls) if "parse" in a.metadata]


def _key(a: attr.Attribute) -> str:
    return a.metadata["key"] or a.name


def _convert(a: attr.Attribute, value, where: str, errors: List[str]):
    meta = a.metadata
    if value is None:
        if meta["optional"]:
            return None
        errors.append(f"{where}: a value is required")
        return a.default
    try:
        parsed = meta["parse"](value)
    except ValueError as e:
        errors.append(f"{where}: {e}")
        return a.default
    if meta["check"] is not None:
        problem = meta["check"](parsed)
        if problem:
            errors.append(f"{where}: {problem}")
            return a.default
    scale = meta["scale"]
    if scale != 1.0:
        parsed = [v * scale for v in parsed] if isinstance(parsed, list) else parsed * scale
    return parsed


def _build(cls, raw: Mapping, prefix: str, errors: List[str]):
    values = {}
    known = set()
    for a in _settings(cls):
        key = _key(a)
        known.add(key)
        if key in raw:
            values[a.name] = _convert(a, raw[key], f"{prefix}{key}", errors)
    for key in raw:
        if key not in known and not (cls is ScenarioConfig and key in SECTIONS):
            errors.append(f"{prefix}{key}: unknown key")
    return values


def _cross_checks(cfg: ScenarioConfig, errors: List[str]) -> None:
    for name in ("spectrum", "loss_scan", "fom_scan"):
        section = getattr(cfg, name)
        if section.f0_max <= section.f0_min:
            errors.append(f"{name}.f0_max_mhz: must be larger than f0_min_mhz")
    if cfg.noise_curve.photons_max <= cfg.noise_curve.photons_min:
        errors.append("noise_curve.photons_max: must be larger than photons_min")


def validate_config(raw: Optional[Mapping] = None, scenario: Optional[str] = None) -> ScenarioConfig:
    """Build a ScenarioConfig from a parsed YAML tree, collecting every violation.

    Raises ConfigError listing all offending keys.
    """
    errors: List[str] = []
    raw = {} if raw is None else raw
    if not isinstance(raw, Mapping):
        raise ConfigError([f"config must be a mapping, got {type(raw).__name__}"])
    raw = dict(raw)
    if scenario is not None:
        raw["scenario"] = scenario

    top = _build(ScenarioConfig, raw, "", errors)
    for name, cls in SECTIONS.items():
        section_raw = raw.get(name) or {}
        if not isinstance(section_raw, Mapping):
            errors.append(f"{name}: expected a mapping")
            continue
        top[name] = cls(**_build(cls, section_raw, f"{name}.", errors))

    cfg = ScenarioConfig(**top)
    _cross_checks(cfg, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def apply_overrides(raw: Optional[Mapping], overrides: Sequence[str]) -> Dict[str, Any]:
    """Apply `section.key=value` strings; values are parsed as YAML scalars."""
    tree: Dict[str, Any] = {k: (dict(v) if isinstance(v, Mapping) else v) for k, v in (raw or {}).items()}
    errors = []
    for override in overrides:
        path, sep, text = override.partition("=")
        if not sep or not path:
            errors.append(f"--set {override}: expected key=value")
            continue
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError:
            errors.append(f"--set {override}: value is not valid YAML")
            continue
        parts = path.split(".")
        if len(parts) == 1:
            tree[parts[0]] = value
        elif len(parts) == 2:
            section = tree.setdefault(parts[0], {})
            if not isinstance(section, dict):
                errors.append(f"--set {override}: {parts[0]} is not a section")
                continue
            section[parts[1]] = value
        else:
            errors.append(f"--set {override}: keys are at most two levels deep")
    if errors:
        raise ConfigError(errors)
    return tree


def _dump_section(obj) -> Dict[str, Any]:
    tree = {}
    for a in _settings(type(obj)):
        value = getattr(obj, a.name)
        scale = a.metadata["scale"]
        if value is not None and scale != 1.0:
            value = [v / scale for v in value] if isinstance(value, list) else value / scale
        tree[_key(a)] = value
    return tree


def dump_config(cfg: ScenarioConfig) -> Dict[str, Any]:
    """The resolved config in user units, loadable by validate_config."""
    tree = _dump_section(cfg)
    for name in SECTIONS:
        tree[name] = _dump_section(getattr(cfg, name))
    return tree


def choose_config_file(paths: List[str]) -> str:
    for path in paths:
        if os.path.isfile(path):
            return path
    return ""


# YAML loader with !include support
class CustomLoader(yaml.SafeLoader):
    pass


def include_constructor(loader, node):
    file_path = loader.construct_scalar(node)
    with open(file_path, "r") as include_file:
        return yaml.load(include_file, Loader=CustomLoader)


CustomLoader.add_constructor("!include", include_constructor)


def read_yaml_config(file_path: str) -> Dict[str, Any]:
    with open(file_path, "r") as file:
        return yaml.load(file, Loader=CustomLoader) or {}
