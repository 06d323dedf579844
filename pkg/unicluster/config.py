from pydantic_settings import BaseSettings
from functools import lru_cache


class Settings(BaseSettings):
    """Engine and CLI configuration from environment variables."""

    # Output
    output_dir: str = "out"              # Default directory for reports
    golden_dir: str = ""                 # Empty → packaged golden tables

    # Logging
    log_level: str = "INFO"

    # Numerics
    float_tolerance: float = 1e-9        # Polylines and float comparisons
    max_local_maxima: int = 10_000       # Guard for 1D density models

    # Engines
    default_separation: str = "disjoint"  # disjoint | tau:<p/q>
    default_depth: int = 6
    max_workers: int = 4                  # Threads for independent levels/components

    # Tests
    hypothesis_profile: str = "default"

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        env_prefix = "UNICLUSTER_"


@lru_cache()
def get_settings() -> Settings:
    """Cached settings instance."""
    return Settings()
