# svann-interpretation/models/experiment_models.py

from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from models.network_models import LossKind, OptimizerKind, TrainConfig
from models.raster_models import BBox
from models.rule_models import BuiltinRuleSet
from models.svann_models import RegistrySpec

SCENE_BANDS = ["Blue", "Green", "Red", "NIR"]

# --- Synthetic scene ---

Range = Tuple[float, float]


class ZoneSpec(BaseModel):
    """A rectangular zone whose labels are generated by one built-in rule set."""
    id: str = Field(..., min_length=1)
    bbox: BBox
    rule: BuiltinRuleSet = BuiltinRuleSet.NDVI_DEFAULT
    noise: float = Field(0.0, ge=0.0, lt=1.0, description="probability of flipping a generated label")
    band_ranges: Dict[str, Range] = Field(default_factory=dict)

    @field_validator("band_ranges")
    @classmethod
    def check_ranges(cls, v):
        for band, (lo, hi) in v.items():
            if not lo < hi:
                raise ValueError(f"band {band}: range needs lo < hi, got ({lo}, {hi})")
        return v


class SceneSpec(BaseModel):
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    pixel_size: float = Field(30.0, gt=0)
    value_range: Range = (0.02, 0.6)
    zones: List[ZoneSpec]

    @field_validator("zones")
    @classmethod
    def check_zones(cls, v):
        if not v:
            raise ValueError("a scene needs at least one zone")
        ids = [z.id for z in v]
        if len(set(ids)) != len(ids):
            raise ValueError(f"zone ids must be unique, got {ids}")
        return v

    @model_validator(mode="after")
    def check_bands(self):
        if not self.value_range[0] < self.value_range[1]:
            raise ValueError(f"value_range needs lo < hi, got {self.value_range}")
        for z in self.zones:
            unknown = set(z.band_ranges) - set(SCENE_BANDS)
            if unknown:
                raise ValueError(f"zone {z.id}: unknown bands {sorted(unknown)}; scenes carry {SCENE_BANDS}")
        return self


# --- Experiment ---

class PreprocessSpec(BaseModel):
    upsample_factor: int = Field(4, ge=1)
    tile_size: int = Field(8, ge=1)
    split: Tuple[float, float, float] = (0.6, 0.2, 0.2)
    drop_partial: bool = True
    bbox: Optional[BBox] = None


def _default_train() -> TrainConfig:
    return TrainConfig(
        learning_rate=0.05, epochs=300, loss=LossKind.BCE, optimizer=OptimizerKind.ADAM, use_bias=True,
    )


class ZoneDef(BaseModel):
    id: str
    bbox: BBox


class ExperimentConfig(BaseModel):
    """
    A study: the scene (synthetic spec, or raster + ground-truth paths), preprocessing,
    the zonal models to train and the interpretable rule models to compare against.
    """
    name: str = "experiment"
    scene: Optional[SceneSpec] = None
    scene_path: Optional[str] = None
    truth_path: Optional[str] = Field(None, description="mask .svr or polygon .geojson")
    zones: List[ZoneDef] = Field(default_factory=list, description="required with scene_path")
    preprocess: PreprocessSpec = Field(default_factory=PreprocessSpec)
    registry: RegistrySpec = Field(default_factory=RegistrySpec)
    train: TrainConfig = Field(default_factory=_default_train)
    rulesets: List[str] = Field(default_factory=lambda: ["ndvi_default", "ndwi_default"])
    seed: int = 7
    output_dir: str = "out"

    @model_validator(mode="after")
    def check_source(self):
        if (self.scene is None) == (self.scene_path is None):
            raise ValueError("give exactly one of 'scene' (synthetic) or 'scene_path'")
        if self.scene_path is not None:
            if self.truth_path is None:
                raise ValueError("'scene_path' needs a 'truth_path'")
            if not self.zones:
                raise ValueError("'scene_path' needs explicit 'zones'")
        elif self.zones:
            raise ValueError("synthetic scenes define their zones in 'scene.zones'")
        if not self.rulesets:
            raise ValueError("at least one interpretable rule set is required")
        return self
