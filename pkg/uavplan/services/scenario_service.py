# uavplan/services/scenario_service.py
import json
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import ValidationError

from uavplan.config import settings
from uavplan.errors import ScenarioValidationError
from uavplan.models.scenario_model import Scenario, ScenarioSpec

logger = logging.getLogger(__name__)

_UNSET = object()


def load_scenario(path: Union[str, Path], prop_limit=_UNSET) -> Scenario:
    """
    Load and validate a scenario file

    dB quantities are converted to linear units here, once. prop_limit, when
    given, overrides the file's prop_limit_w (None removes the limit).
    """
    path = Path(path)
    if not path.is_file():
        raise ScenarioValidationError(f"Scenario file not found: {path}")

    try:
        raw = json.loads(path.read_text())
        if prop_limit is not _UNSET:
            raw["prop_limit_w"] = prop_limit
        scenario = ScenarioSpec.model_validate(raw).to_scenario()
    except json.JSONDecodeError as e:
        raise ScenarioValidationError(f"{path}: not valid JSON ({e})") from e
    except ValidationError as e:
        fields = sorted({".".join(str(part) for part in err["loc"]) or "<root>" for err in e.errors()})
        raise ScenarioValidationError(f"{path}: invalid scenario ({', '.join(fields)}): {e}") from e

    logger.info("Loaded scenario %s: K=%d, N=%d, T=%.0f s", path.name, scenario.num_gns, scenario.slots,
                scenario.period)
    return scenario


def list_scenarios(directory: Optional[Union[str, Path]] = None) -> List[Path]:
    """Scenario files of a directory, sorted by name (the bundled set by default)"""
    directory = Path(directory or settings.SCENARIO_DIR)
    if not directory.is_dir():
        raise ScenarioValidationError(f"Scenario directory not found: {directory}")
    return sorted(directory.glob("*.json"))


def generate_layout(num_gns: int, side_m: float = 1000.0, seed: int = 7) -> List[List[float]]:
    """K GN positions uniform in a side x side square centred at the origin"""
    if num_gns < 1:
        raise ValueError(f"num_gns must be positive, got {num_gns}")
    rng = np.random.default_rng(seed)
    return rng.uniform(-side_m / 2.0, side_m / 2.0, size=(num_gns, 2)).round(3).tolist()


def write_scenario(spec: ScenarioSpec, path: Union[str, Path]) -> Path:
    """Write a scenario file in the on-disk schema"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(spec.model_dump_json(indent=2))
    return path
