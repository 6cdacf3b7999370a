"""Application configuration"""
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # App
    APP_NAME: str = "ldtk"
    VERSION: str = "1.0.0"

    # Paths
    OUTPUT_DIR: Path = Path("results")

    # Parallelism (LDTK_THREADS)
    THREADS: int = Field(default=1, ge=1)

    # Numerics
    DEFAULT_GRID_N: int = 128
    FLOAT_FORMAT: str = "%.17g"
    DENSE_EIGEN_MAX: int = 1024
    DENSE_STATIONARY_MAX: int = 4096

    LOG_LEVEL: str = "INFO"

    model_config = SettingsConfigDict(env_prefix="LDTK_", env_file=".env", case_sensitive=True,
                                      extra="ignore")


settings = Settings()
