from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

EXPERIMENTS = (
    "theory-t0",
    "general-t",
    "derivative-check",
    "definiteness",
    "monotonicity",
    "periodic-example",
    "segment-singleton",
    "grf-empirical",
)

ExperimentName = Literal[
    "theory-t0",
    "general-t",
    "derivative-check",
    "definiteness",
    "monotonicity",
    "periodic-example",
    "segment-singleton",
    "grf-empirical",
]

DEFAULT_REPLICATES = 2000
REPLICATES_BY_EXPERIMENT = {"periodic-example": 10_000}

CurveKind = Literal["E", "cov", "gamma", "cor", "kmm", "set-covariance"]


class SecondOrderCurve(BaseModel):
    kind: CurveKind
    r_grid: List[float]
    values: List[Optional[float]]
    provenance: Literal["closed-form", "quadrature", "empirical"]
    stderr: Optional[List[Optional[float]]] = None
    replicates: Optional[int] = None

    @model_validator(mode="after")
    def _check_shape(self):
        if len(self.values) != len(self.r_grid):
            raise ValueError("values and r_grid must have equal length")
        if any(b <= a for a, b in zip(self.r_grid, self.r_grid[1:])):
            raise ValueError("r_grid must be strictly ascending")
        if self.provenance == "empirical" and not self.replicates:
            raise ValueError("empirical curves carry a replicate count")
        return self


class CrossoverRow(BaseModel):
    n: int
    a_n: float
    a_lower: float
    b_upper: float
    holds: bool


class MonotonicityReport(BaseModel):
    tag: Literal["f0", "g0"]
    order: int
    precision_bits: int
    coefficients: List[float]
    min_coefficient: float
    min_index: int
    tolerance: float
    crossover: List[CrossoverRow] = Field(default_factory=list)
    circle_samples: int = 0
    circle_max: Optional[float] = None
    circle_argmax: Optional[float] = None
    h2_at_one: Optional[float] = None
    verdict: Literal["verified-to-order-N", "failed"]
    failures: List[str] = Field(default_factory=list)


class DefinitenessReport(BaseModel):
    method: Literal["fourier-periodic", "gram-matrix", "max-at-origin"]
    verdict: Literal["pd-consistent", "not-pd", "cnd-consistent", "not-cnd"]
    witness: Optional[Dict[str, Any]] = None
    tolerance: float
    details: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _witness_for_violation(self):
        if self.verdict in ("not-pd", "not-cnd") and not self.witness:
            raise ValueError(f"verdict {self.verdict} needs a witness")
        return self

    @property
    def violated(self) -> bool:
        return self.verdict in ("not-pd", "not-cnd")


class CovarianceParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: Literal["gaussian", "exponential", "cosine", "matern", "constant"] = "gaussian"
    length_scale: float = Field(1.0, gt=0)
    nu: Optional[float] = Field(None, gt=0)


class GridParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dimension: Literal[1, 2] = 1
    nodes: Optional[int] = Field(None, ge=1, description="nodes per axis; experiment default when unset")
    spacing: Optional[float] = Field(None, gt=0)
    periodic: bool = True


class ExperimentConfig(BaseModel):
    """JSON experiment configuration; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentName
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    output_dir: Optional[Path] = None
    workers: Optional[int] = Field(None, ge=1)
    tolerance_scale: float = Field(1.0, gt=0)
    tolerances: Dict[str, float] = Field(default_factory=dict)

    # model
    t: float = 0.0
    thresholds: List[float] = Field(default_factory=lambda: [-1.0, 0.0, 1.0])
    covariance: CovarianceParams = Field(default_factory=CovarianceParams)
    p_values: List[float] = Field(default_factory=lambda: [0.7, 0.8, 0.9])
    p: float = 0.3

    # numerics
    rho_points: int = Field(21, ge=3)
    order: int = Field(60, ge=1)
    bound_order: int = Field(200, ge=30)
    precision_bits: Optional[int] = Field(None, ge=80)
    circle_samples: int = Field(720, ge=8)
    mc_pairs: int = Field(1_000_000, ge=1000)

    # simulation and estimation
    grid: GridParams = Field(default_factory=GridParams)
    replicates: int = Field(DEFAULT_REPLICATES, ge=1, description="2000, or 10000 for periodic-example")
    lags: Optional[List[float]] = None
    eps_ladder: Optional[List[float]] = None

    @model_validator(mode="before")
    @classmethod
    def _experiment_replicates(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("replicates") is None:
            default = REPLICATES_BY_EXPERIMENT.get(data.get("experiment"), DEFAULT_REPLICATES)
            data = {**data, "replicates": default}
        return data

    @field_validator("tolerances")
    @classmethod
    def _known_tolerances(cls, value: Dict[str, float]) -> Dict[str, float]:
        from markset.config.config import Tolerances

        unknown = set(value) - set(Tolerances.model_fields)
        if unknown:
            raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
        return value

    @field_validator("p_values")
    @classmethod
    def _periodic_range(cls, value: List[float]) -> List[float]:
        for p in value:
            if not 2.0 / 3.0 < p <= 1.0:
                raise ValueError(f"periodic example needs p in (2/3, 1], got {p}")
        return value


class CheckResult(BaseModel):
    name: str
    passed: bool
    measured: Any = None
    expected: Any = None
    tolerance: Optional[float] = None
    message: Optional[str] = None


class RunManifest(BaseModel):
    experiment: ExperimentName
    config_hash: str
    code_version: str
    seed: int
    started_at: datetime
    wall_time_s: float = 0.0
    checks: List[CheckResult] = Field(default_factory=list)
    artifacts: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _unique_checks(self):
        names = [c.name for c in self.checks]
        duplicated = sorted({n for n in names if names.count(n) > 1})
        if duplicated:
            raise ValueError(f"checks recorded more than once: {duplicated}")
        return self

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)
