from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="LESS_",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    log_level: str = "INFO"

    # Truncated SVD / leverage scores
    max_rank: int = 50
    rank_tol: float = 1e-10
    svd_max_iter: int = 300
    svd_tol: float = 1e-10
    svd_seed: int = 0
    svd_oversample: int = 10

    # Execution
    threads: int = 1

    # Benchmark defaults
    repetitions: int = 30
    time_budget_secs: float = 3600.0
    test_fraction: float = 0.25
    output_dir: str = "bench_results"

    # Data loading
    csv_delimiter: str = ","
    label_column: Optional[int] = None

    # Planted dataset generator
    planted_amplification: float = 10.0
    planted_latent_count: int = 3
    planted_positive_rate: float = 0.8

    # Artifact schemas
    model_schema_version: int = 1
    bench_schema_version: int = 1


# Global settings instance
settings = Settings()
