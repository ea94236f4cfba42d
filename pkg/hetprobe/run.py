#!/usr/bin/env python

import sys

MIN_PYTHON = (3, 12)
MAX_PYTHON = (3, 14)
if sys.version_info < MIN_PYTHON or sys.version_info >= MAX_PYTHON:
    sys.exit(
        f"Python >={MIN_PYTHON[0]}.{MIN_PYTHON[1]},<{MAX_PYTHON[0]}.{MAX_PYTHON[1]} is required "
        f"(found {sys.version_info.major}.{sys.version_info.minor})."
    )

import argparse
import datetime
import logging
from typing import List, Optional

import yaml

import hetprobe
from hetprobe.cli import CLIRunListener
from hetprobe.composite import CompositeRunListener
from hetprobe.config import (
    CONFIG_FILE_PATHS,
    LOG_LEVELS,
    SCENARIOS,
    apply_overrides,
    choose_config_file,
    read_yaml_config,
    validate_config,
)
from hetprobe.errors import ConfigError
from hetprobe.logging_utils import LoggingRunListener
from hetprobe.session import EXIT_INVALID, RunSession

logger = logging.getLogger("hetprobe")

default_exception_handler = sys.excepthook


def exception_handler(type, value, traceback):
    logger.exception("Uncaught exception", exc_info=(type, value, traceback))
    print("An uncaught exception occurred. Re-run with --log_file to keep the traceback.")
    default_exception_handler(type, value, traceback)


sys.excepthook = exception_handler


def parse_args(argv: Optional[List[str]] = None):
    parser = argparse.ArgumentParser(
        description="Simulate and analyse two-frequency dispersive detection of trapped atoms. "
        "Each scenario writes one CSV per curve and a summary.yml to the output directory."
    )
    parser.add_argument(
        "scenario",
        type=str,
        choices=SCENARIOS,
        help="The scenario to run.",
    )
    parser.add_argument(
        "--config",
        "-c",
        type=str,
        default=None,
        help="YAML config file. Defaults to ./hetprobe.yml or ~/.config/hetprobe/hetprobe.yml if present.",
    )
    parser.add_argument(
        "--set",
        type=str,
        action="append",
        default=[],
        dest="overrides",
        metavar="SECTION.KEY=VALUE",
        help="Override a config value, e.g. --set probe.splitting_mhz=60. May be given multiple times.",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Random seed in [0, 2**64). Overrides the config file.",
    )
    parser.add_argument(
        "--out",
        type=str,
        default=None,
        dest="output_dir",
        help="Output directory. Overrides the config file and $HETPROBE_OUTPUT_DIR.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Number of worker threads. Results do not depend on it.",
    )
    parser.add_argument(
        "--log_file",
        type=str,
        default=None,
        help="The file to write logs to. Supports strftime format codes.",
    )
    parser.add_argument(
        "--log_level",
        type=str,
        default=None,
        choices=LOG_LEVELS,
        help="The log level to use",
    )
    parser.add_argument(
        "--version",
        "-v",
        action="version",
        version=f"hetprobe v{hetprobe.__version__}",
        help="Print the version number and exit.",
    )

    return parser.parse_args(argv)


def load_raw_config(args) -> dict:
    config_file_path = args.config or choose_config_file(CONFIG_FILE_PATHS)
    raw = read_yaml_config(config_file_path) if config_file_path else {}
    raw = apply_overrides(raw, args.overrides)
    for key in ("seed", "output_dir", "threads", "log_file", "log_level"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    return raw


def setup_logging(log_file: Optional[str], log_level: str):
    if log_file is not None:
        logging.basicConfig(
            filename=datetime.datetime.now().strftime(log_file),
            level=log_level,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        )
    else:
        logging.basicConfig(
            level=logging.WARNING,
            format="%(name)s - %(levelname)s - %(message)s",
        )


def run(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    cli_listener = CLIRunListener()
    listener = CompositeRunListener([cli_listener, LoggingRunListener()])

    try:
        cfg = validate_config(load_raw_config(args), scenario=args.scenario)
    except ConfigError as e:
        cli_listener.on_error(e)
        return EXIT_INVALID
    except (OSError, yaml.YAMLError) as e:
        cli_listener.on_error(ConfigError([f"cannot read config: {e}"]))
        return EXIT_INVALID

    setup_logging(cfg.log_file, cfg.log_level)
    logger.info("Starting hetprobe v%s, scenario %s", hetprobe.__version__, cfg.scenario)
    return RunSession(listener).run(cfg)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
