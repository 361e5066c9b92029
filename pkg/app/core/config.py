from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Application metadata
    PROJECT_NAME: str = "Curtainwalk"
    PROJECT_VERSION: str = "1.0.0"
    ENVIRONMENT: str = "development"
    DEBUG: bool = False

    # Logging
    LOG_LEVEL: str = "INFO"

    # Trial workers (1 = run in-process)
    WORKERS: int = 1

    # Output settings
    OUTPUT_DIR: str = "runs"

    # Cache settings
    CACHE_MAX_ENTRIES: int = 200000  # per-process memo entries per cache

    @property
    def worker_count(self) -> int:
        """Worker count clamped to at least one process."""
        return max(1, self.WORKERS)

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True
        extra = "ignore"  # Ignore extra fields in .env files


settings = Settings()
