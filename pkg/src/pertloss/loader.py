#!/usr/bin/env python3
"""
Experiment config loader - Parse and validate YAML/JSON experiment documents
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Union

import yaml
from pydantic import ValidationError

from .config import ExperimentConfig
from .errors import ConfigError


class ConfigLoader:
    """Load and validate experiment configs"""

    CONFIG_EXTENSIONS = ('.yaml', '.yml', '.json')
    MANIFEST_NAME = 'manifest.json'

    @staticmethod
    def load_file(filepath: Union[str, Path]) -> Dict[str, Any]:
        """Load a config file and return its raw mapping"""
        filepath = Path(filepath)

        if not filepath.exists():
            raise FileNotFoundError(f"Config file not found: {filepath}")

        if filepath.suffix not in ConfigLoader.CONFIG_EXTENSIONS:
            raise ValueError(
                f"Expected one of {', '.join(ConfigLoader.CONFIG_EXTENSIONS)}, "
                f"got {filepath.suffix or 'no extension'}"
            )

        try:
            text = filepath.read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError(f"Error reading config file: {e}") from e

        return ConfigLoader.load_from_string(text)

    @staticmethod
    def load_from_string(text: str) -> Dict[str, Any]:
        """Parse a config document from a string (JSON is accepted as YAML)"""
        if not text or not text.strip():
            raise ValueError("Config cannot be empty")

        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"Malformed config: {e}") from e

        if not isinstance(data, dict):
            raise ConfigError("Config must be a mapping of keys to values")
        return data

    @staticmethod
    def validate(data: Dict[str, Any]) -> ExperimentConfig:
        """Validate a raw mapping into an ExperimentConfig"""
        try:
            return ExperimentConfig.model_validate(data)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(part) for part in err['loc']) or 'config'}: {err['msg']}"
                for err in e.errors()
            )
            raise ConfigError(f"Invalid config: {problems}") from e

    @staticmethod
    def load_config(filepath: Union[str, Path]) -> ExperimentConfig:
        """Load and validate a config file"""
        try:
            data = ConfigLoader.load_file(filepath)
        except (FileNotFoundError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e
        return ConfigLoader.validate(data)

    @staticmethod
    def load_manifest(path: Union[str, Path]) -> ExperimentConfig:
        """Rebuild the resolved config recorded in a run's manifest.json"""
        path = Path(path)
        if path.is_dir():
            path = path / ConfigLoader.MANIFEST_NAME
        if not path.exists():
            raise FileNotFoundError(f"Manifest not found: {path}")
        manifest = json.loads(path.read_text(encoding='utf-8'))
        if 'config' not in manifest:
            raise ConfigError(f"{path} has no config section")
        return ConfigLoader.validate(manifest['config'])

    @staticmethod
    def find_config_files(directory: Union[str, Path]) -> List[Path]:
        """Find all config files in a directory"""
        directory = Path(directory)

        if not directory.is_dir():
            raise NotADirectoryError(f"Not a directory: {directory}")

        return sorted(
            path for path in directory.iterdir()
            if path.suffix in ConfigLoader.CONFIG_EXTENSIONS
            and path.name != ConfigLoader.MANIFEST_NAME
        )
