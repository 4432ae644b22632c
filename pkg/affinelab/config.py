"""
Settings loader for affinelab.
Defaults come from config/defaults.yaml; a .env file or the environment
may point AFFINELAB_CONFIG at another YAML file.
"""

import os
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict

logger = logging.getLogger(__name__)

load_dotenv()

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config" / "defaults.yaml"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometrySettings(_Section):
    degenerate_frame: float = 1e-12
    positive_definite: float = 1e-12
    isothermal: float = 1e-9
    equiaffine: float = 1e-8
    grid: int = 21


class UmbilicSettings(_Section):
    grid: int = 64
    tol: float = 1e-9
    region_tol: float = 1e-6
    max_k: int = 3
    zero_jet: float = 1e-9
    semi_homogeneous: float = 1e-6
    angles: int = 4096
    newton_iterations: int = 40
    max_halvings: int = 6


class CongruenceSettings(_Section):
    grid: int = 21
    curl_tol: float = 1e-9
    holonomy_tol: float = 1e-8
    quadrature_nodes: int = 8


class RotationalSettings(_Section):
    quadrature_rtol: float = 1e-10
    root_tol: float = 1e-12
    certificate_tol: float = 1e-8
    endpoint_margin: float = 1e-3
    samples: int = 201


class FoliationSettings(_Section):
    step: float = 0.02
    min_step: float = 1e-6
    max_steps: int = 400
    max_turn_deg: float = 60.0
    umbilic_tol: float = 1e-7
    stop_radius: float = 0.02
    seeds: int = 6
    csv_grid: int = 50


class ReportSettings(_Section):
    significant_digits: int = 12


class Settings(_Section):
    """All tunable tolerances, grouped per module."""
    geometry: GeometrySettings = GeometrySettings()
    umbilics: UmbilicSettings = UmbilicSettings()
    congruence: CongruenceSettings = CongruenceSettings()
    rotational: RotationalSettings = RotationalSettings()
    foliation: FoliationSettings = FoliationSettings()
    report: ReportSettings = ReportSettings()

    def merged(self, overrides: Dict[str, Dict[str, Any]]) -> "Settings":
        """Return a copy with per-section overrides applied.

        Args:
            overrides: Mapping of section name to {field: value}

        Returns:
            New Settings instance
        """
        data = self.model_dump()
        for section, values in overrides.items():
            if values:
                data.setdefault(section, {}).update(
                    {k: v for k, v in values.items() if v is not None})
        return Settings.model_validate(data)


def load_settings(path: Optional[str] = None) -> Settings:
    """Load settings from YAML.

    Args:
        path: Explicit YAML path; falls back to AFFINELAB_CONFIG, then defaults

    Returns:
        Validated Settings
    """
    config_path = Path(path or os.getenv("AFFINELAB_CONFIG", DEFAULT_CONFIG_PATH))
    if not config_path.exists():
        logger.warning(f"Config file {config_path} not found, using built-in defaults")
        return Settings()

    with open(config_path) as f:
        raw = yaml.safe_load(f) or {}
    logger.debug(f"Loaded settings from {config_path}")
    return Settings.model_validate(raw)


def parse_overrides(items: Iterable[str]) -> Dict[str, Dict[str, Any]]:
    """Turn "section.field=value" strings into a `Settings.merged` mapping.

    Values are read as YAML scalars, so "1e-7" becomes a float and "12" an int.

    Raises:
        ValueError: an item is not of the form section.field=value
    """
    overrides: Dict[str, Dict[str, Any]] = {}
    for item in items:
        key, sep, raw = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not (sep and dot and section and name):
            raise ValueError(f"override '{item}' is not of the form section.field=value")
        value = yaml.safe_load(raw)
        # YAML 1.1 reads 1e-7 as a string
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                pass
        overrides.setdefault(section, {})[name] = value
    return overrides
