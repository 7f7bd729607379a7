# svann-interpretation/models/metric_models.py

from typing import List

from pydantic import BaseModel, ConfigDict, Field

# --- Confusion counts ---

class ConfusionMatrix(BaseModel):
    """2x2 contingency counts with wetland as the positive class."""
    model_config = ConfigDict(frozen=True)

    tp: int = Field(0, ge=0)
    tn: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            tp=self.tp + other.tp, tn=self.tn + other.tn,
            fp=self.fp + other.fp, fn=self.fn + other.fn,
        )


class MetricSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    precision: float
    recall: float
    f1: float
    accuracy: float
    degenerate: List[str] = Field(default_factory=list, description="metrics whose denominator was 0")


# --- Report rows ---

METRIC_COLUMNS = ["model", "zone", "tn", "fp", "fn", "tp", "precision", "recall", "f1", "accuracy"]


class MetricRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: str
    zone: str
    tn: int
    fp: int
    fn: int
    tp: int
    precision: float
    recall: float
    f1: float
    accuracy: float

    @property
    def confusion(self) -> ConfusionMatrix:
        return ConfusionMatrix(tp=self.tp, tn=self.tn, fp=self.fp, fn=self.fn)
