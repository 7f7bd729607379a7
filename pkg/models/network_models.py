# svann-interpretation/models/network_models.py

from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# --- Enums ---

class Activation(str, Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    LINEAR = "linear"


class InitKind(str, Enum):
    CONSTANT = "constant"
    UNIFORM = "uniform"
    XAVIER = "xavier"


class LossKind(str, Enum):
    MSE = "mse"
    BCE = "binary_cross_entropy"
    CUSTOM = "custom"


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


# --- Architecture / initialization ---

class Architecture(BaseModel):
    """Dense layer sizes input..output with one activation per weight layer."""
    model_config = ConfigDict(frozen=True)

    layer_sizes: List[int]
    activations: List[Activation]

    @field_validator("layer_sizes")
    @classmethod
    def check_sizes(cls, v):
        if len(v) < 2:
            raise ValueError("an architecture needs at least 2 layers (input and output)")
        if any(n < 1 for n in v):
            raise ValueError("layer sizes must be positive")
        return v

    @model_validator(mode="after")
    def check_activations(self):
        if len(self.activations) != len(self.layer_sizes) - 1:
            raise ValueError(
                f"{len(self.layer_sizes)} layers need {len(self.layer_sizes) - 1} activations, "
                f"got {len(self.activations)}"
            )
        return self

    @classmethod
    def dense(cls, layer_sizes: List[int], hidden: Activation, output: Activation) -> "Architecture":
        return cls(layer_sizes=layer_sizes, activations=[hidden] * (len(layer_sizes) - 2) + [output])

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]


class InitScheme(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: InitKind = InitKind.UNIFORM
    value: float = Field(0.5, description="constant(c)")
    low: float = -0.5
    high: float = 0.5

    @model_validator(mode="after")
    def check_bounds(self):
        if self.kind == InitKind.UNIFORM and self.low >= self.high:
            raise ValueError(f"uniform init needs lo < hi, got ({self.low}, {self.high})")
        return self

    @classmethod
    def constant(cls, value: float) -> "InitScheme":
        return cls(kind=InitKind.CONSTANT, value=value)

    @classmethod
    def uniform(cls, low: float, high: float) -> "InitScheme":
        return cls(kind=InitKind.UNIFORM, low=low, high=high)


# --- Network ---

class Network(BaseModel):
    """
    Weights are one (out, in) matrix per layer; weights[l][j][i] connects input i
    of layer l to its unit j.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    architecture: Architecture
    weights: List[np.ndarray]
    biases: Optional[List[np.ndarray]] = None
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_shapes(self):
        sizes = self.architecture.layer_sizes
        if len(self.weights) != len(sizes) - 1:
            raise ValueError(f"expected {len(sizes) - 1} weight matrices, got {len(self.weights)}")
        for layer, w in enumerate(self.weights):
            expected = (sizes[layer + 1], sizes[layer])
            if np.shape(w) != expected:
                raise ValueError(f"layer {layer} weights have shape {np.shape(w)}, expected {expected}")
        if self.biases is not None:
            for layer, b in enumerate(self.biases):
                if np.shape(b) != (sizes[layer + 1],):
                    raise ValueError(f"layer {layer} biases have shape {np.shape(b)}")
        return self

    @property
    def use_bias(self) -> bool:
        return self.biases is not None

    def parameter_count(self) -> int:
        count = sum(int(np.size(w)) for w in self.weights)
        if self.biases is not None:
            count += sum(int(np.size(b)) for b in self.biases)
        return count


class TrainConfig(BaseModel):
    learning_rate: float = Field(0.1, ge=0, description="0 leaves the weights unchanged")
    epochs: int = Field(100, ge=1)
    batch_size: Optional[int] = Field(None, ge=1, description="None for full batch")
    loss: LossKind = LossKind.BCE
    optimizer: OptimizerKind = OptimizerKind.SGD
    use_bias: bool = False
    seed: int = 0
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    lr_decay: float = Field(1.0, gt=0, le=1, description="learning rate multiplier applied after every epoch")


class TrainingHistory(BaseModel):
    losses: List[float] = Field(default_factory=list)

    @property
    def final_loss(self) -> Optional[float]:
        return self.losses[-1] if self.losses else None


class TrainingData(BaseModel):
    """Per-sample feature rows and targets (one column per output unit)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    features: np.ndarray
    targets: np.ndarray

    @field_validator("features", "targets")
    @classmethod
    def as_matrix(cls, v):
        v = np.asarray(v, dtype=np.float64)
        return v.reshape(-1, 1) if v.ndim == 1 else v

    @model_validator(mode="after")
    def check_rows(self):
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("features and targets must have the same number of rows")
        return self

    @property
    def size(self) -> int:
        return int(self.features.shape[0])
