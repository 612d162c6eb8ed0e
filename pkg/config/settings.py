"""Application settings and configuration."""
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit settings loaded from environment variables (prefix ``CORTICAL_``)."""

    # Logging
    log_level: str = "INFO"
    log_file: str = "logs/cortical.log"

    # Storage
    cache_dir: str = "kernel_cache"
    output_dir: str = "runs"

    # Covering grid defaults
    v_max: float = 10.0
    grid_dx: float = 1.0
    grid_dy: float = 1.0
    grid_dt: float = 1.0
    grid_n_theta: int = 36
    grid_dv: float = 0.5
    domain_size: float = 200.0

    # Kernel estimation
    kernel_paths: int = 100_000
    spill_tolerance: float = 0.0
    path_block: int = 8192

    # Spectral
    residual_tolerance: float = 1e-8

    # Execution
    jobs: int = 1

    model_config = SettingsConfigDict(
        env_prefix="CORTICAL_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()
