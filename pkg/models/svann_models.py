# svann-interpretation/models/svann_models.py

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.metric_models import MetricRow, MetricSummary
from models.network_models import Architecture
from models.raster_models import BBox, Tile

# --- Enums ---

class ZonalMode(str, Enum):
    SVANN_I = "svann-i"
    SVANN_E = "svann-e"
    OSFA = "osfa"


class ModelFamily(str, Enum):
    RULE = "rule-based"
    PINN = "pinn"
    SVANN = "svann"
    OSFA = "osfa"


# simulatability, decomposability, algorithmic transparency
INTERPRETABILITY_PROFILE: Dict[ModelFamily, Tuple[str, str, str]] = {
    ModelFamily.RULE: ("High", "High", "High"),
    ModelFamily.PINN: ("High", "High", "High"),
    ModelFamily.SVANN: ("Low", "Medium", "Low"),
    ModelFamily.OSFA: ("Low", "Low", "Low"),
}


# --- Zones ---

class Zone(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1)
    extent: BBox


class ZoneAssignment(BaseModel):
    """Tiles per zone (by tile centre) in zone order, plus the tiles no zone claims."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    zones: List[Zone]
    tiles: Dict[str, List[Tile]]
    unassigned: List[Tuple[int, int]] = Field(default_factory=list)

    def zone_ids(self) -> List[str]:
        return [z.id for z in self.zones]

    def counts(self) -> Dict[str, int]:
        return {z: len(t) for z, t in self.tiles.items()}


# --- Registry ---

class RegistrySpec(BaseModel):
    """
    What to train. SVANN modes train one network per (zone, index); `zone_hidden`
    overrides the hidden layer sizes of single zones (SVANN-E only).
    """
    mode: ZonalMode = ZonalMode.SVANN_I
    indices: List[str] = Field(default_factory=lambda: ["NDVI", "NDWI"])
    hidden: List[int] = Field(default_factory=lambda: [8])
    zone_hidden: Dict[str, List[int]] = Field(default_factory=dict)

    @field_validator("indices")
    @classmethod
    def check_indices(cls, v):
        if not v:
            raise ValueError("at least one index feature is required")
        v = [i.upper() for i in v]
        if len(set(v)) != len(v):
            raise ValueError(f"index features listed twice: {v}")
        return v

    @model_validator(mode="after")
    def check_overrides(self):
        if self.zone_hidden and self.mode != ZonalMode.SVANN_E:
            raise ValueError(f"per-zone architectures need mode svann-e, got {self.mode.value}")
        return self


class RegistryEntry(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    zone: Optional[str] = Field(None, description="None for the OSFA model applied everywhere")
    features: List[str]
    architecture: Architecture
    network: Any = None
    model_ref: str = ""
    val_metrics: Optional[MetricSummary] = None


class ZonalRegistry(BaseModel):
    """Immutable once trained."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mode: ZonalMode
    entries: List[RegistryEntry]

    @model_validator(mode="after")
    def check_mode(self):
        if not self.entries:
            raise ValueError("a registry needs at least one entry")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError(f"registry entry names must be unique, got {names}")
        if self.mode == ZonalMode.OSFA:
            if len(self.entries) != 1:
                raise ValueError(f"an OSFA registry holds exactly one model, got {len(self.entries)}")
            if self.entries[0].zone is not None:
                raise ValueError("the OSFA model is not bound to a zone")
            return self
        if any(e.zone is None for e in self.entries):
            raise ValueError(f"{self.mode.value} entries must name their zone")
        if self.mode == ZonalMode.SVANN_I:
            shapes = {tuple(e.architecture.layer_sizes) for e in self.entries}
            acts = {tuple(a.value for a in e.architecture.activations) for e in self.entries}
            if len(shapes) > 1 or len(acts) > 1:
                raise ValueError(f"svann-i requires one architecture for every zone, got {sorted(shapes)}")
        return self

    def zones(self) -> List[str]:
        seen: List[str] = []
        for e in self.entries:
            if e.zone is not None and e.zone not in seen:
                seen.append(e.zone)
        return seen

    def entries_for(self, zone: str) -> List[RegistryEntry]:
        """Candidates serving `zone` in listed order; the OSFA model serves every zone."""
        if self.mode == ZonalMode.OSFA:
            return list(self.entries)
        return [e for e in self.entries if e.zone == zone]


# --- Comparative report ---

class AgreementEntry(BaseModel):
    black_box: str
    interpretable: str
    zone: str
    agreement: float = Field(..., ge=0.0, le=1.0)
    f1_gap: float
    rank: int = Field(..., ge=1)


class ComparativeReport(BaseModel):
    metrics: List[MetricRow] = Field(default_factory=list)
    agreements: List[AgreementEntry] = Field(default_factory=list)
    families: Dict[str, ModelFamily] = Field(default_factory=dict)

    def interpretation(self, black_box: str, zone: str) -> Optional[AgreementEntry]:
        for a in self.agreements:
            if a.black_box == black_box and a.zone == zone and a.rank == 1:
                return a
        return None

    def black_boxes(self) -> List[str]:
        seen: List[str] = []
        for a in self.agreements:
            if a.black_box not in seen:
                seen.append(a.black_box)
        return seen
