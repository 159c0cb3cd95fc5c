"""
Configuration management using Pydantic Settings.

All configuration is loaded from environment variables (prefix ``PROPHETLAB_``)
or a .env file. This is the single source of truth for numerical knobs,
capacity limits and parallelism.
"""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Parallelism (never changes results, only wall time)
    threads: int = Field(
        default=1, ge=1, description="Worker threads for simulation and enumeration"
    )

    # Application Settings
    log_level: str = Field(default="INFO", description="Logging level")
    default_seed: int = Field(default=0, ge=0, description="Seed used when none is given")

    # Distributions
    quantile_grid_points: int = Field(
        default=10_000, ge=2, description="Quantile grid used to discretize parametric laws"
    )
    support_grid_cap: int = Field(
        default=100_000, description="Largest merged support grid accepted by exact benchmarks"
    )

    # Kertz curve
    kertz_tolerance: float = Field(default=1e-10, description="Residual tolerance for beta")
    kertz_grid_size: int = Field(default=4096, ge=100, description="Nodes of the y(t) table")
    worst_case_grid_points: int = Field(
        default=2048, ge=16, description="Grid points of the worst-case c.d.f. on [0, r*(q)]"
    )
    tightness_min_n: int = Field(
        default=2000, ge=2, description="Smallest n of tightness instances"
    )

    # Oracles
    subset_dp_max_n: int = Field(default=20, description="Largest n for subset dynamic programs")

    # Simulation
    sim_block_size: int = Field(default=4096, ge=1, description="Trials per seeded block")
    default_trials: int = Field(default=100_000, ge=1, description="Default Monte Carlo trials")
    removal_multiplier: float = Field(
        default=1.0, gt=0, description="Constant in front of eps^-2 log(1/eps) removal budgets"
    )

    # Ordering
    cp_max_iter: int = Field(default=100_000, description="Iteration cap of the concave solver")
    cp_rel_tol: float = Field(default=1e-9, description="Relative improvement stopping threshold")
    cp_patience: int = Field(default=50, description="Window (iterations) for the stopping rule")
    cp_batch_size: int = Field(default=512, ge=1, description="Fixings solved per batch")
    ordering_fixing_cap: int = Field(default=200_000, description="Cap on enumerated fixings")

    model_config = SettingsConfigDict(
        env_prefix="PROPHETLAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()
