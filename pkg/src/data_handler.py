"""
Collective QSV - Data Handler

This module handles loading and saving of toolkit data: JSON experiment
configurations, versioned CSV result tables, circuit text files and custom
target amplitudes.
"""

import csv
import json
import logging
import os

from src import config
from src.qstate_core import ParameterError

logger = logging.getLogger(__name__)


class ConfigError(ParameterError):
    """An experiment configuration is missing, malformed or inconsistent"""


def _ensure_parent(file_path):
    parent = os.path.dirname(os.path.abspath(file_path))
    os.makedirs(parent, exist_ok=True)


class DataHandler:
    """Handles loading and saving of toolkit data"""

    @staticmethod
    def load_json(file_path, strict=False):
        """Load data from a JSON file

        Args:
            file_path (str): Path to the JSON file
            strict (bool): Raise instead of returning {} when the file is
                missing or unreadable

        Returns:
            dict: The loaded data, or an empty dict if the file doesn't exist

        Raises:
            ConfigError: If the file is malformed, or missing in strict mode
        """
        if not os.path.exists(file_path):
            if strict:
                raise ConfigError(f"config file not found: {file_path}")
            logger.warning("File not found: %s", file_path)
            return {}
        try:
            with open(file_path, 'r') as file:
                return json.load(file)
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON in {file_path}: {e}") from e

    @staticmethod
    def save_json(data, file_path):
        """Save data to a JSON file

        Args:
            data (dict): The data to save
            file_path (str): Path to the JSON file

        Returns:
            str: The path written
        """
        _ensure_parent(file_path)
        with open(file_path, 'w') as file:
            json.dump(data, file, indent=4, sort_keys=True)
            file.write("\n")
        logger.info("Wrote %s", file_path)
        return file_path

    @classmethod
    def load_experiment_config(cls, file_path, section):
        """Load one subcommand section of an experiment configuration

        Args:
            file_path (str): JSON file with one object per subcommand
            section (str): Subcommand name, e.g. "analytic"

        Returns:
            dict: The section, empty if the file has none
        """
        data = cls.load_json(file_path, strict=True)
        if not isinstance(data, dict):
            raise ConfigError(f"{file_path} must hold a JSON object")
        values = data.get(section, {})
        if not isinstance(values, dict):
            raise ConfigError(f"section '{section}' in {file_path} must be a JSON object")
        if not values:
            logger.warning("No '%s' section in %s; using defaults", section, file_path)
        return values

    @staticmethod
    def format_value(value):
        """CSV cell text: blank for None, 12 significant digits for floats"""
        if value is None:
            return ""
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return config.CSV_FLOAT_FORMAT.format(value)
        return str(value)

    @classmethod
    def save_csv(cls, rows, file_path, columns=None):
        """Write result rows below the schema line and a header

        Args:
            rows (list): One dict per row; missing columns are left blank
            file_path (str): Output path
            columns (list, optional): Column order, RESULT_COLUMNS by default

        Returns:
            str: The path written
        """
        columns = columns or config.RESULT_COLUMNS
        _ensure_parent(file_path)
        with open(file_path, 'w', newline='') as file:
            file.write(config.CSV_SCHEMA_LINE + "\n")
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                unknown = set(row) - set(columns)
                if unknown:
                    raise ParameterError(f"row has columns outside the schema: {sorted(unknown)}")
                writer.writerow([cls.format_value(row.get(name)) for name in columns])
        logger.info("Wrote %d rows to %s", len(rows), file_path)
        return file_path

    @staticmethod
    def load_csv(file_path):
        """Read a CSV written by save_csv

        Returns:
            list: One dict of strings per row
        """
        with open(file_path, 'r', newline='') as file:
            schema = file.readline().rstrip("\n")
            if schema != config.CSV_SCHEMA_LINE:
                raise ConfigError(f"{file_path} does not start with '{config.CSV_SCHEMA_LINE}'")
            return list(csv.DictReader(file))

    @staticmethod
    def save_text(text, file_path):
        _ensure_parent(file_path)
        with open(file_path, 'w') as file:
            file.write(text)
        logger.info("Wrote %s", file_path)
        return file_path

    @classmethod
    def load_amplitudes(cls, file_path):
        """Custom target amplitudes: a JSON list, or an object with an "amplitudes" list"""
        data = cls.load_json(file_path, strict=True)
        if isinstance(data, dict):
            data = data.get("amplitudes")
        if not isinstance(data, list) or not data:
            raise ConfigError(f"{file_path} holds no amplitude list")
        return data
