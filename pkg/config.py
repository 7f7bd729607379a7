# svann-interpretation/config.py

import os
from typing import Tuple
from pydantic import model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="SVANN_", extra="ignore")

    # Application settings
    APP_NAME: str = "svann-interpretation"
    APP_VERSION: str = "1.0.0"

    # Logging
    LOG_LEVEL: str = os.getenv("SVANN_LOG_LEVEL", "INFO")
    LOG_DIR: str = os.getenv("SVANN_LOG_DIR", "logs")
    LOG_FILE_NAME: str = "svann_activity.log"
    LOG_TO_FILE: bool = os.getenv("SVANN_LOG_TO_FILE", "False").lower() == "true"

    # Reproducibility
    DEFAULT_SEED: int = int(os.getenv("SVANN_DEFAULT_SEED", "7"))

    # Preprocessing defaults (Landsat-8 study setup)
    DEFAULT_TILE_SIZE: int = 256
    DEFAULT_UPSAMPLE_FACTOR: int = 4
    DEFAULT_SPLIT: Tuple[float, float, float] = (0.8, 0.1, 0.1)

    # Gradient oracle
    GRADCHECK_STEP: float = 1e-5
    GRADCHECK_TOLERANCE: float = 1e-6

    # Zonal training
    MAX_TRAIN_PIXELS_PER_ZONE: int = int(os.getenv("SVANN_MAX_TRAIN_PIXELS_PER_ZONE", "4000"))

    # Report output
    CSV_FLOAT_FORMAT: str = "%.6f"

    @model_validator(mode="after")
    def check_defaults(self):
        if self.DEFAULT_TILE_SIZE < 1:
            raise ValueError("DEFAULT_TILE_SIZE must be a positive pixel count")
        if self.DEFAULT_UPSAMPLE_FACTOR < 1:
            raise ValueError("DEFAULT_UPSAMPLE_FACTOR must be >= 1")
        if any(f <= 0 for f in self.DEFAULT_SPLIT) or abs(sum(self.DEFAULT_SPLIT) - 1.0) > 1e-9:
            raise ValueError("DEFAULT_SPLIT fractions must be positive and sum to 1")
        return self

settings = Settings()
