"""Flat ``key = value`` config files -> ``ExperimentConfig`` and the task family it names.

Format::

    # comment
    family.kind = quadratic
    family.centers = 0, 0; 1, 0.5      # ';' between vectors, ',' inside one
    family.curvatures = 1, 4
    K_list = 100, 400, 1600

A single vector center needs a trailing ``;`` (``family.centers = 0, 1;``),
otherwise ``0, 1`` reads as two 1-D centers.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import ValidationError

from minimax_lab.core.tasks import TaskFamily, gap_family, quadratic_family, random_quadratic_family
from minimax_lab.models.experiment_config import ExperimentConfig, FamilyConfig

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


def _parse_value(raw: str) -> Any:
    if ";" in raw:
        parts = [p.strip() for p in raw.split(";")]
        return [[x.strip() for x in p.split(",")] for p in parts if p]
    if "," in raw:
        return [x.strip() for x in raw.split(",")]
    return raw


def parse_config_text(text: str) -> dict[str, Any]:
    """Nest dotted keys into dictionaries; values stay strings for pydantic to coerce."""
    out: dict[str, Any] = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {n}", f"expected 'key = value', got {line!r}")
        if not value:
            raise ConfigError(key, "empty value")

        *parents, leaf = key.split(".")
        node = out
        for i, part in enumerate(parents):
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(".".join(parents[: i + 1]), "is a value and a section at once")
            node = child
        if leaf in node:
            raise ConfigError(key, "given more than once")
        node[leaf] = _parse_value(value)
    return out


def _loc(err: dict[str, Any]) -> str:
    return ".".join(str(p) for p in err["loc"] if not isinstance(p, int))


def build_experiment_config(raw: dict[str, Any], *, overrides: Optional[dict[str, Any]] = None) -> ExperimentConfig:
    data = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = _loc(first)
        raise ConfigError(key, first["msg"]) from e


def load_config(path: Path, *, overrides: Optional[dict[str, Any]] = None) -> ExperimentConfig:
    """Read and validate ``path``. A missing file raises ``FileNotFoundError``."""
    text = Path(path).read_text(encoding="utf-8")
    config = build_experiment_config(parse_config_text(text), overrides=overrides)
    logger.debug("loaded config %s (family=%s, seed=%d)", path, config.family.kind, config.seed)
    return config


def build_family(spec: FamilyConfig, *, seed: int = 0) -> TaskFamily:
    if spec.kind == "gap":
        return gap_family(
            spec.T if spec.T is not None else 4,
            spec.noise_sigma,
            domain_radius=spec.domain_radius if spec.domain_radius is not None else 1.0,
        )
    if spec.kind == "quadratic":
        return quadratic_family(
            spec.centers,
            spec.curvatures,
            spec.noise_sigma,
            domain_radius=spec.domain_radius,
        )
    rng = np.random.default_rng(seed)
    return random_quadratic_family(rng, T=spec.T, dim=spec.dim, noise_sigma=spec.noise_sigma)
