# svann-interpretation/models/autodiff_models.py

from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

# --- Enums ---

class NodeKind(str, Enum):
    INPUT = "input"
    CONSTANT = "constant"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    NEG = "neg"
    EXP = "exp"
    LOG = "log"
    POW_INT = "pow_int"
    SIN = "sin"
    COS = "cos"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    MEAN = "mean"


ARITY: Dict[NodeKind, int] = {
    NodeKind.INPUT: 0,
    NodeKind.CONSTANT: 0,
    NodeKind.ADD: 2,
    NodeKind.SUB: 2,
    NodeKind.MUL: 2,
    NodeKind.DIV: 2,
    NodeKind.NEG: 1,
    NodeKind.EXP: 1,
    NodeKind.LOG: 1,
    NodeKind.POW_INT: 1,
    NodeKind.SIN: 1,
    NodeKind.COS: 1,
    NodeKind.SIGMOID: 1,
    NodeKind.TANH: 1,
    NodeKind.MEAN: 1,
}


class Node(NamedTuple):
    """One tape entry. `param` holds the constant value, the integer power, or the input name."""
    id: int
    kind: NodeKind
    operands: Tuple[int, ...]
    param: Any = None


class GradientRecord(BaseModel):
    """Adjoints d(output)/d(node) from one reverse sweep."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    output_id: int
    adjoints: Dict[int, Any]

    def __getitem__(self, node_id: int):
        return self.adjoints.get(node_id, 0.0)


class GradientCheckEntry(BaseModel):
    name: str
    analytic: float
    numeric: float
    relative_error: float


class GradientCheckReport(BaseModel):
    entries: List[GradientCheckEntry] = Field(default_factory=list)
    max_relative_error: float = 0.0
    tolerance: float
    step: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error <= self.tolerance


# --- JSON graph description (for `ad trace --config`) ---

class GraphNodeSpec(BaseModel):
    name: str
    kind: NodeKind
    operands: List[str] = Field(default_factory=list)
    param: Optional[float] = None


class GraphSpec(BaseModel):
    inputs: Dict[str, float]
    constants: Dict[str, float] = Field(default_factory=dict)
    nodes: List[GraphNodeSpec]
    output: str
