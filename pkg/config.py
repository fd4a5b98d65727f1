"""
Environment defaults and the scenario file schema.

A scenario is one JSON document; every section is optional. CLI flags
(--seed, --out, --workers) override the file.
"""

import json
import logging
import os
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigurationError, ScenarioValidationError
from process.adversary import AttackConfig, AttackMode
from process.detector import AvailabilityModel, DeadTimeCurve
from process.protocol import ProtocolConfig
from process.timetag import (DEFAULT_BIN_WIDTH, DEFAULT_MAX_GAP, DEFAULT_MIN_COUNT,
                             DEFAULT_RESOLUTION)
from utils.loader_curve import get_curve_path, load_curve_csv

logger = logging.getLogger(__name__)

# ===============================
# ENV CONFIG
# ===============================
# ค่าเริ่มต้นอ่านจาก ENV (แก้ได้ตอน deploy)
OUTPUT_DIR = os.environ.get("RIE_OUTPUT_DIR", "./output")
WORKERS = int(os.environ.get("RIE_WORKERS", "1"))
LOG_LEVEL = os.environ.get("RIE_LOG_LEVEL", "INFO").upper()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _non_empty(values, name):
    if values is not None and len(values) == 0:
        raise ValueError(f"{name} grid is empty")
    return values


class CurveSource(_Section):
    """Exactly one of points / csv_path / constant / preset."""

    points: Optional[List[Tuple[float, float]]] = None
    csv_path: Optional[str] = None
    constant: Optional[float] = Field(default=None, gt=0)
    preset: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self):
        given = [k for k in ("points", "csv_path", "constant", "preset") if getattr(self, k) is not None]
        if not given:
            self.preset = "default"
        elif len(given) > 1:
            raise ValueError(f"dead_time_curve takes exactly one source, got {given}")
        if self.points is not None and not self.points:
            raise ValueError("dead_time_curve.points is empty")
        return self

    def build(self) -> DeadTimeCurve:
        if self.points is not None:
            return DeadTimeCurve.from_points(self.points)
        if self.csv_path is not None:
            return load_curve_csv(self.csv_path)
        if self.constant is not None:
            return DeadTimeCurve.constant(self.constant)
        return load_curve_csv(get_curve_path(self.preset))


class DetectorSection(_Section):
    p0: float = Field(default=1.0, gt=0, le=1)
    availability_model: AvailabilityModel = AvailabilityModel.EXPONENTIAL
    transmission: float = Field(default=1.0, ge=0, le=1)
    background_rate: float = Field(default=0.0, ge=0)
    dark_count_rate: float = Field(default=0.0, ge=0)
    detection_window: float = Field(default=1e-9, ge=0)


class ProtocolSection(_Section):
    n_rounds: int = Field(default=100_000, ge=1)
    abort_threshold: float = Field(default=0.11, gt=0, lt=0.5)
    basis_prior: float = Field(default=0.5, gt=0, lt=1)
    fixed_alice: Optional[str] = None
    chunk_size: int = Field(default=65_536, ge=1)

    @field_validator("fixed_alice")
    @classmethod
    def _state_label(cls, v):
        if v is None:
            return v
        v = str(v).strip().upper()
        if v not in ("Z0", "Z1", "X0", "X1"):
            raise ValueError(f"fixed_alice must be one of Z0, Z1, X0, X1, got {v!r}")
        return v


class AttackSection(_Section):
    mode: AttackMode = AttackMode.NONE
    lambda_parallel: float = Field(default=0.0, ge=0)
    lambda_perp: float = Field(default=0.0, ge=0)
    delta: float = Field(default=0.0, ge=0)
    eve_basis_prior: float = Field(default=0.5, ge=0, le=1)

    @model_validator(mode="after")
    def _delta_for_deterministic(self):
        if self.mode is AttackMode.RIE_DETERMINISTIC and not self.delta > 0:
            raise ValueError("rie_deterministic needs delta > 0")
        return self


class SweepSection(_Section):
    # true incident rates beta
    rates: List[float] = Field(default_factory=lambda: [1e6, 4e6, 10e6, 20e6, 40e6, 80e6, 150e6])
    duration: float = Field(default=0.01, gt=0)
    events_per_point: Optional[int] = Field(default=200_000, ge=1)
    bin_width: float = Field(default=DEFAULT_BIN_WIDTH, gt=0)
    min_count: int = Field(default=DEFAULT_MIN_COUNT, ge=1)
    max_gap: float = Field(default=DEFAULT_MAX_GAP, gt=0)

    @field_validator("rates")
    @classmethod
    def _rates(cls, v):
        _non_empty(v, "sweep.rates")
        if any(not r > 0 for r in v):
            raise ValueError("sweep rates must be > 0")
        return v


class ScanSection(_Section):
    lambda_par: List[float] = Field(default_factory=lambda: [1e6, 2e6, 5e6, 10e6])
    lambda_perp: Optional[List[float]] = None
    lambda_perp_min: float = Field(default=0.0, ge=0)
    lambda_perp_max: float = Field(default=35e6, ge=0)
    lambda_perp_points: int = Field(default=71, ge=1)
    e_abort: float = Field(default=0.11, gt=0, lt=0.5)

    @field_validator("lambda_par", "lambda_perp")
    @classmethod
    def _grid(cls, v, info):
        return _non_empty(v, f"scan.{info.field_name}")

    def perp_grid(self) -> List[float]:
        if self.lambda_perp is not None:
            return [float(x) for x in self.lambda_perp]
        return [float(x) for x in np.linspace(self.lambda_perp_min, self.lambda_perp_max,
                                               self.lambda_perp_points)]


class MutualInfoSection(_Section):
    r_values: Optional[List[float]] = None
    r_min: float = Field(default=0.0, ge=0)
    r_max: float = Field(default=1.0, ge=0)
    r_points: int = Field(default=101, ge=1)
    e_abort: float = Field(default=0.11, gt=0, lt=0.5)

    @field_validator("r_values")
    @classmethod
    def _grid(cls, v):
        _non_empty(v, "mutualinfo.r_values")
        if v is not None and any(r < 0 for r in v):
            raise ValueError("r values must be >= 0")
        return v

    def grid(self) -> List[float]:
        if self.r_values is not None:
            return [float(r) for r in self.r_values]
        # rounded so the default grid reads 0.00, 0.01, ... in the CSV
        return [round(float(r), 12) for r in np.linspace(self.r_min, self.r_max, self.r_points)]


class ExtractSection(_Section):
    timestamp_file: Optional[str] = None
    bin_width: float = Field(default=DEFAULT_BIN_WIDTH, gt=0)
    min_count: int = Field(default=DEFAULT_MIN_COUNT, ge=1)
    max_gap: float = Field(default=DEFAULT_MAX_GAP, gt=0)
    resolution: float = Field(default=DEFAULT_RESOLUTION, gt=0)


class GenerateSection(_Section):
    beta: float = Field(default=5e6, gt=0)
    duration: float = Field(default=0.01, gt=0)
    # None applies the scenario curve at its self-consistent rate
    constant_t_d: Optional[float] = Field(default=None, gt=0)
    name: str = "timestamps.txt"


class ScenarioConfig(_Section):
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default_factory=lambda: WORKERS, ge=1)
    out_dir: str = Field(default_factory=lambda: OUTPUT_DIR)
    dead_time_curve: CurveSource = Field(default_factory=CurveSource)
    detector: DetectorSection = Field(default_factory=DetectorSection)
    protocol: ProtocolSection = Field(default_factory=ProtocolSection)
    attack: AttackSection = Field(default_factory=AttackSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    scan: ScanSection = Field(default_factory=ScanSection)
    mutualinfo: MutualInfoSection = Field(default_factory=MutualInfoSection)
    extract: ExtractSection = Field(default_factory=ExtractSection)
    generate: GenerateSection = Field(default_factory=GenerateSection)

    def curve(self) -> DeadTimeCurve:
        return self.dead_time_curve.build()

    def protocol_config(self, curve: Optional[DeadTimeCurve] = None) -> ProtocolConfig:
        det, proto = self.detector, self.protocol
        return ProtocolConfig(
            n_rounds=proto.n_rounds,
            abort_threshold=proto.abort_threshold,
            basis_prior=proto.basis_prior,
            p0=det.p0,
            dead_time_curve=curve or self.curve(),
            availability_model=det.availability_model,
            seed=self.seed,
            transmission=det.transmission,
            background_rate=det.background_rate,
            dark_count_rate=det.dark_count_rate,
            detection_window=det.detection_window,
            fixed_alice=proto.fixed_alice,
            chunk_size=proto.chunk_size,
        )

    def attack_config(self) -> AttackConfig:
        return AttackConfig(**self.attack.model_dump())


def load_scenario(path: Optional[str] = None, overrides: Optional[dict] = None) -> ScenarioConfig:
    """Read and validate a scenario; overrides with value None are ignored."""
    data = {}
    if path:
        if not os.path.exists(path):
            raise ConfigurationError(f"❌ Scenario file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ScenarioValidationError(f"❌ {path}: invalid JSON: {e}") from None
        if not isinstance(data, dict):
            raise ScenarioValidationError(f"❌ {path}: scenario must be a JSON object")
    # merge ค่า override จาก CLI ทีละ section (None = ไม่ override)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict):
            current = data.get(key)
            section = dict(current) if isinstance(current, dict) else {}
            section.update({k: v for k, v in value.items() if v is not None})
            if section:
                data[key] = section
        elif value is not None:
            data[key] = value
    try:
        scenario = ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ScenarioValidationError(f"❌ Invalid scenario {path or '<defaults>'}:\n{e}") from None
    logger.info("✅ Scenario loaded: %s (seed=%d, workers=%d)", path or "<defaults>",
                scenario.seed, scenario.workers)
    return scenario
