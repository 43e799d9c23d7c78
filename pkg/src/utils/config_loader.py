"""
Config Loader - Settings file resolution and logging setup
"""
import copy
import logging
import os

import yaml
from dotenv import load_dotenv

from utils.errors import ConfigurationError

DEFAULT_SETTINGS_PATH = os.path.join("config", "settings.yaml")
SETTINGS_ENV_VAR = "NEWSVENDOR_SETTINGS"

REQUIRED_SECTIONS = ("paths", "generation", "economics", "transport", "solver", "simulation", "sweep", "logging")


def resolve_settings_path(path=None):
    """
    Pick the settings file: explicit path, then $NEWSVENDOR_SETTINGS, then config/settings.yaml

    A .env file in the working directory is loaded first so it can set the variable.
    """
    load_dotenv()
    if path:
        return path
    return os.environ.get(SETTINGS_ENV_VAR) or DEFAULT_SETTINGS_PATH


def load_settings(path=None):
    """
    Load the YAML settings

    Args:
        path: Optional settings file path

    Returns:
        Settings dictionary with every known section present (possibly empty)
    """
    settings_path = resolve_settings_path(path)
    if not os.path.exists(settings_path):
        raise ConfigurationError(f"Settings file not found: {settings_path}")

    try:
        with open(settings_path, "r", encoding="utf-8") as f:
            settings = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Settings file {settings_path} is not valid YAML: {e}") from e

    if not isinstance(settings, dict):
        raise ConfigurationError(f"Settings file {settings_path} must hold a mapping")
    for section in REQUIRED_SECTIONS:
        value = settings.get(section)
        if value is None:
            settings[section] = {}
        elif not isinstance(value, dict):
            raise ConfigurationError(f"Settings section '{section}' must be a mapping")

    settings["_source"] = os.path.abspath(settings_path)
    return settings


def apply_overrides(settings, section, **overrides):
    """Copy of settings with non-None overrides written into one section"""
    updated = copy.deepcopy(settings)
    target = updated.setdefault(section, {})
    for key, value in overrides.items():
        if value is not None:
            target[key] = value
    return updated


def setup_logging(config, verbose=False):
    """Setup logging configuration"""
    log_config = config.get("logging", {})
    level_name = "DEBUG" if verbose else str(log_config.get("level", "INFO")).upper()
    log_level = getattr(logging, level_name, None)
    if not isinstance(log_level, int):
        raise ConfigurationError(f"Unknown logging level {level_name!r}")
    log_format = log_config.get("format", "%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    handlers = []

    if log_config.get("console_logging", True):
        handlers.append(logging.StreamHandler())

    if log_config.get("file_logging", False):
        log_dir = config.get("paths", {}).get("output_logs", "output/logs")
        os.makedirs(log_dir, exist_ok=True)
        handlers.append(logging.FileHandler(os.path.join(log_dir, log_config.get("file_name", "newsvendor.log"))))

    if not handlers:
        handlers.append(logging.NullHandler())

    logging.basicConfig(
        level=log_level,
        format=log_format,
        handlers=handlers,
        force=True,
    )
