# uavplan/models/scenario_model.py
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from uavplan.errors import InfeasibleScenarioError

# Aircraft constants giving a 100 W minimum propulsion power at 30 m/s
DEFAULT_C1 = 9.26e-4
DEFAULT_C2 = 2250.0
GRAVITY = 9.8


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def dbm_to_watts(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def min_level_flight_power(c1: float, c2: float, v_min: float, v_max: float) -> float:
    """Smallest a=0 propulsion power reachable with a speed in [v_min, v_max]"""
    v_star = (c2 / (3.0 * c1)) ** 0.25
    speed = min(max(v_star, v_min), v_max)
    return c1 * speed**3 + c2 / speed


# Scenario file schema (dB units, as written by users)
class ScenarioSpec(BaseModel):
    """Scenario file as stored on disk"""

    model_config = ConfigDict(extra="forbid")

    gn_positions: List[Tuple[float, float]] = Field(..., min_length=1, description="GN coordinates [[x, y], ...] in m")
    altitude_m: float = Field(..., gt=0, description="UAV altitude H")
    period_s: float = Field(..., gt=0, description="Flight period T")
    slots: int = Field(..., ge=4, description="Number of time slots N")
    ref_snr_db: float = Field(..., description="Reference SNR at 1 m, dB")
    peak_power_dbm: float = Field(..., description="GN peak transmit power, dBm")
    prop_limit_w: Optional[float] = Field(None, gt=0, description="Average propulsion power limit; null disables it")
    bandwidth_hz: float = Field(..., gt=0, description="Bandwidth W")
    v_min: float = Field(..., gt=0, description="Minimum speed, m/s")
    v_max: float = Field(..., gt=0, description="Maximum speed, m/s")
    a_max: float = Field(..., gt=0, description="Maximum acceleration, m/s^2")
    c1: float = Field(DEFAULT_C1, gt=0, description="Parasitic power constant")
    c2: float = Field(DEFAULT_C2, gt=0, description="Induced power constant")

    def to_scenario(self) -> "Scenario":
        """Convert dB quantities to linear ones, once"""
        return Scenario(
            gn_positions=self.gn_positions,
            altitude=self.altitude_m,
            period=self.period_s,
            slots=self.slots,
            ref_snr=db_to_linear(self.ref_snr_db),
            peak_power=dbm_to_watts(self.peak_power_dbm),
            prop_limit=self.prop_limit_w,
            bandwidth=self.bandwidth_hz,
            v_min=self.v_min,
            v_max=self.v_max,
            a_max=self.a_max,
            c1=self.c1,
            c2=self.c2,
        )


# Internal problem instance (linear units only)
class Scenario(BaseModel):
    """Immutable problem instance shared by every service"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    gn_positions: List[Tuple[float, float]] = Field(..., min_length=1)
    altitude: float = Field(..., gt=0)
    period: float = Field(..., gt=0)
    slots: int = Field(..., ge=4)
    ref_snr: float = Field(..., gt=0, description="gamma0 = beta0 / sigma^2, linear")
    peak_power: float = Field(..., gt=0, description="P_peak, W")
    prop_limit: Optional[float] = Field(None, gt=0, description="P_lim, W")
    bandwidth: float = Field(..., gt=0)
    v_min: float = Field(..., gt=0)
    v_max: float = Field(..., gt=0)
    a_max: float = Field(..., gt=0)
    c1: float = Field(DEFAULT_C1, gt=0)
    c2: float = Field(DEFAULT_C2, gt=0)
    g: float = Field(GRAVITY, gt=0)

    @model_validator(mode="after")
    def _check_physics(self) -> "Scenario":
        if self.v_min >= self.v_max:
            raise ValueError(f"v_min ({self.v_min}) must be below v_max ({self.v_max})")
        if self.prop_limit is not None:
            floor = min_level_flight_power(self.c1, self.c2, self.v_min, self.v_max)
            # not a ValueError, so pydantic lets it through unwrapped
            if self.prop_limit < floor:
                raise InfeasibleScenarioError(
                    f"prop_limit ({self.prop_limit:.3f} W) is below the minimum achievable "
                    f"propulsion power ({floor:.3f} W)"
                )
        return self

    @property
    def num_gns(self) -> int:
        return len(self.gn_positions)

    @property
    def slot_len(self) -> float:
        return self.period / self.slots

    @cached_property
    def gn_array(self) -> np.ndarray:
        """GN positions as a read-only (K, 2) array"""
        arr = np.array(self.gn_positions, dtype=float).reshape(-1, 2)
        arr.setflags(write=False)
        return arr

    @property
    def centroid(self) -> np.ndarray:
        return self.gn_array.mean(axis=0)

    def with_prop_limit(self, prop_limit: Optional[float]) -> "Scenario":
        """Copy with another propulsion limit (None removes the constraint)"""
        return Scenario(**{**self.model_dump(), "prop_limit": prop_limit})
