# svann-interpretation/models/pinn_models.py

from enum import Enum
from typing import Any, Callable, Dict, List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.network_models import Activation, OptimizerKind

# --- Enums ---

class LossMode(str, Enum):
    SQUARED = "squared"
    PAPER_LINEAR = "paper_linear"


class SigmoidRule(str, Enum):
    CALCULUS = "calculus"
    # sigma' written as sigma * (1 + sigma), as in the hand-worked transport example
    SHIFTED = "shifted"


class SolutionConvention(str, Enum):
    DECAYING = "decaying"
    PAPER = "paper"


class Model(str, Enum):
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"


# --- Problem definition ---

class ConditionSample(BaseModel):
    """Initial/boundary sample: coordinates plus the value the solution must take there."""
    coords: Tuple[float, ...]
    target: float


class PDEProblem(BaseModel):
    """
    `residual(tape, u, partials, coefficients)` appends the residual node, where
    `partials(var, order)` returns the node of d^order u / d var^order and
    `coefficients` maps names to per-collocation-point input nodes.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    variables: List[str]
    bounds: List[Tuple[float, float]]
    collocation: np.ndarray
    conditions: List[ConditionSample]
    coefficients: Dict[str, np.ndarray] = Field(default_factory=dict)
    residual: Callable[..., int]

    @field_validator("collocation")
    @classmethod
    def as_matrix(cls, v):
        v = np.asarray(v, dtype=np.float64)
        return v.reshape(-1, 1) if v.ndim == 1 else v

    @model_validator(mode="after")
    def check_problem(self):
        d = len(self.variables)
        if len(set(self.variables)) != d:
            raise ValueError(f"coordinate names must be unique, got {self.variables}")
        if len(self.bounds) != d:
            raise ValueError(f"{d} coordinates need {d} bounds, got {len(self.bounds)}")
        for var, (lo, hi) in zip(self.variables, self.bounds):
            if lo >= hi:
                raise ValueError(f"empty domain for {var}: [{lo}, {hi}]")
        if self.collocation.ndim != 2 or self.collocation.shape[1] != d or self.collocation.shape[0] == 0:
            raise ValueError(f"collocation must be a non-empty (N, {d}) array, got {self.collocation.shape}")
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        outside = np.any((self.collocation < lo) | (self.collocation > hi), axis=1)
        if outside.any():
            first = int(np.argmax(outside))
            raise ValueError(f"collocation point {first} {self.collocation[first].tolist()} lies outside the domain")
        if not self.conditions:
            raise ValueError("a problem needs at least one initial/boundary condition sample")
        for i, c in enumerate(self.conditions):
            if len(c.coords) != d:
                raise ValueError(f"condition {i} has {len(c.coords)} coordinates, expected {d}")
        n = self.collocation.shape[0]
        for key, arr in self.coefficients.items():
            if np.shape(arr) != (n,):
                raise ValueError(f"coefficient '{key}' must hold one value per collocation point ({n})")
        return self

    @property
    def dimension(self) -> int:
        return len(self.variables)

    def condition_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        coords = np.array([c.coords for c in self.conditions], dtype=np.float64)
        targets = np.array([c.target for c in self.conditions], dtype=np.float64)
        return coords, targets


class PinnLoss(BaseModel):
    """A built loss tape plus the fixed (non-parameter) input assignments it needs."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    tape: Any
    mode: LossMode
    loss_id: int
    residual_id: int
    residual_term_id: int
    condition_term_id: int
    output_id: int
    fixed: Dict[str, Any]
    parameter_names: List[str]


# --- Worked-example trace ---

class TraceRow(BaseModel):
    loop: int = Field(..., ge=0)
    w1: float
    w2: float
    w3: float
    w4: float
    w5: float
    w6: float
    y_hat: float
    loss: float


TRACE_COLUMNS = ["loop", "w1", "w2", "w3", "w4", "w5", "w6", "y_hat", "loss"]


# --- Transport solver ---

class TransportConfig(BaseModel):
    velocity: float = 3.0
    x_range: Tuple[float, float] = (0.0, 1.0)
    t_range: Tuple[float, float] = (0.0, 0.5)
    hidden_layers: List[int] = Field(default_factory=lambda: [10, 10])
    activation: Activation = Activation.TANH
    collocation_x: int = Field(16, ge=1)
    collocation_t: int = Field(8, ge=1)
    initial_points: int = Field(32, ge=1)
    boundary_points: int = Field(16, ge=0)
    epochs: int = Field(2500, ge=0)
    learning_rate: float = Field(0.01, ge=0)
    lr_decay: float = Field(0.9995, gt=0, le=1)
    optimizer: OptimizerKind = OptimizerKind.ADAM
    seed: int = 7
    eval_nx: int = Field(50, ge=2)
    eval_nt: int = Field(25, ge=2)

    @field_validator("x_range", "t_range")
    @classmethod
    def check_range(cls, v):
        if v[0] >= v[1]:
            raise ValueError(f"range must satisfy lo < hi, got {v}")
        return v

    @field_validator("hidden_layers")
    @classmethod
    def check_hidden(cls, v):
        if any(n < 1 for n in v):
            raise ValueError("hidden layer sizes must be positive")
        return v


class TransportReport(BaseModel):
    rmse: float
    max_abs_error: float
    final_loss: float
    residual_mean_abs: float
    residual_rms: float
    epochs: int
    collocation_points: int
    eval_points: int
    loss_history: List[float] = Field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        doc = self.model_dump(exclude={"loss_history"})
        return pd.DataFrame([{"metric": k, "value": float(v)} for k, v in doc.items()], columns=["metric", "value"])


# --- Heterogeneity experiment ---

class ZoneProblemSpec(BaseModel):
    """Q'' + Q' - forcing = 0 on [0, 1] with Q(0) = left, Q(1) = right."""
    name: str
    forcing: float
    left: float
    right: float


def _default_zones() -> List[ZoneProblemSpec]:
    return [
        ZoneProblemSpec(name="flat", forcing=1.0, left=0.0, right=1.0),
        ZoneProblemSpec(name="stepped", forcing=-4.0, left=1.0, right=0.0),
    ]


class HeterogeneityConfig(BaseModel):
    zones: List[ZoneProblemSpec] = Field(default_factory=_default_zones)
    hidden_layers: List[int] = Field(default_factory=lambda: [10])
    activation: Activation = Activation.TANH
    collocation_points: int = Field(32, ge=1)
    epochs: int = Field(800, ge=1)
    learning_rate: float = Field(0.01, ge=0)
    lr_decay: float = Field(0.999, gt=0, le=1)
    seeds: List[int] = Field(default_factory=lambda: list(range(10)))
    eval_points: int = Field(101, ge=2)
    workers: int = Field(1, ge=1, description="seeds trained in parallel processes")

    @field_validator("zones")
    @classmethod
    def two_zones(cls, v):
        if len(v) != 2:
            raise ValueError(f"the experiment compares exactly 2 zones, got {len(v)}")
        if v[0].name == v[1].name:
            raise ValueError("zone names must differ")
        return v

    @field_validator("seeds")
    @classmethod
    def some_seeds(cls, v):
        if not v:
            raise ValueError("at least one seed is required")
        return v


class ErrorCell(BaseModel):
    seed: int
    model: Model
    zone: str
    error_avg: float


class HeterogeneityReport(BaseModel):
    zones: List[str]
    cells: List[ErrorCell] = Field(default_factory=list)

    def error(self, seed: int, model: Model, zone: str) -> float:
        for c in self.cells:
            if c.seed == seed and c.model == model and c.zone == zone:
                return c.error_avg
        raise KeyError((seed, model, zone))

    def seeds(self) -> List[int]:
        return sorted({c.seed for c in self.cells})

    def postulate_holds(self, seed: int, zone_index: int) -> bool:
        """Error of the pooled model exceeds the zone's own model on that zone."""
        zone = self.zones[zone_index]
        local = Model.M1 if zone_index == 0 else Model.M2
        return self.error(seed, Model.M3, zone) > self.error(seed, local, zone)

    def postulate_counts(self) -> Dict[str, int]:
        return {
            zone: sum(self.postulate_holds(s, k) for s in self.seeds())
            for k, zone in enumerate(self.zones)
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"seed": c.seed, "model": c.model.value, "zone": c.zone, "error_avg": c.error_avg} for c in self.cells],
            columns=["seed", "model", "zone", "error_avg"],
        )

