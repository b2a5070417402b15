from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Случайность
    seed: int = 0

    # Численные допуски
    tail_eps: float = 1e-12
    quad_tol: float = 1e-10
    quad_window: float = 40.0
    max_population: float = 1e30

    # Монте-Карло
    mc_runs: int = 100000

    # Артефакты
    schema_version: str = "1"
    output_format: str = "csv"

    # App settings
    log_level: str = "INFO"
    debug: bool = False

    model_config = SettingsConfigDict(
        env_prefix="GEOLEADER_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()
