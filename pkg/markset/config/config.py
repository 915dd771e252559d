import os
import logging
from pathlib import Path
from typing import Dict, Any

from dotenv import load_dotenv
from pydantic import BaseModel, Field

from markset.errors import ConfigError
from markset.utils.logger import LOG_LEVELS

# Set up logger
logger = logging.getLogger(__name__)


class Tolerances(BaseModel):
    """Numeric tolerances used by library defaults and experiment checks."""

    identity_abs: float = Field(1e-10, gt=0, description="boundary identities, orthant quadrature")
    integral_abs: float = Field(1e-9, gt=0, description="C_t quadrature, integral identity")
    oracle_abs: float = Field(1e-6, gt=0, description="2-D tensor quadrature oracle")
    fd_rel: float = Field(1e-3, gt=0, description="finite-difference derivative checks")
    eigen_rel: float = Field(1e-8, gt=0, description="Gram eigenvalue / max-at-origin sign calls")
    fourier_abs: float = Field(1e-3, gt=0, description="published Fourier coefficient")
    closed_form_abs: float = Field(1e-8, gt=0, description="periodic example integral")
    psd_clip: float = Field(1e-10, gt=0, description="negative eigenvalues clipped silently below this")
    mc_sigmas: float = Field(3.0, gt=0, description="Monte Carlo agreement in standard errors")

    def scaled(self, factor: float) -> "Tolerances":
        """Return a copy with every tolerance multiplied by ``factor``."""
        if factor <= 0:
            raise ConfigError(f"tolerance scale must be positive, got {factor}")
        data = {name: value * factor for name, value in self.model_dump().items()}
        return Tolerances(**data)


class Config:
    """Configuration manager for markset runs."""

    def __init__(self):
        # Load environment variables
        env_path = Path(__file__).parent.parent.parent / '.env'
        load_dotenv(dotenv_path=env_path)

        self.BASE_DIR = Path(__file__).parent.parent.parent
        self.OUTPUT_DIR = Path(os.getenv('MARKSET_OUTPUT_DIR', 'results'))
        self.LOG_DIR = Path(os.getenv('MARKSET_LOG_DIR', 'logs'))
        self.LOG_LEVEL = os.getenv('MARKSET_LOG_LEVEL', 'INFO').upper()

        # Numeric settings
        self.WORKERS = self._int_env('MARKSET_WORKERS', 1)
        self.PRECISION_BITS = self._int_env('MARKSET_PRECISION_BITS', 128)
        self.SEED = self._int_env('MARKSET_SEED', 20240611)
        self.TOLERANCE_SCALE = self._float_env('MARKSET_TOLERANCE_SCALE', 1.0)

        # Validate configuration
        self._validate()

        self.TOLERANCES = Tolerances().scaled(self.TOLERANCE_SCALE)

        # Create necessary directories
        self.create_directories()

    @staticmethod
    def _int_env(name: str, default: int) -> int:
        raw = os.getenv(name)
        if raw is None or raw == '':
            return default
        try:
            return int(raw)
        except ValueError as e:
            raise ConfigError(f"{name} must be an integer, got {raw!r}") from e

    @staticmethod
    def _float_env(name: str, default: float) -> float:
        raw = os.getenv(name)
        if raw is None or raw == '':
            return default
        try:
            return float(raw)
        except ValueError as e:
            raise ConfigError(f"{name} must be a number, got {raw!r}") from e

    def create_directories(self) -> None:
        """Create output and log directories if they don't exist."""
        for directory in (self.OUTPUT_DIR, self.LOG_DIR):
            directory.mkdir(parents=True, exist_ok=True)
            logger.debug(f"Ensured directory exists: {directory}")

    def _validate(self) -> None:
        """Validate the configuration."""
        if self.WORKERS < 1:
            raise ConfigError("MARKSET_WORKERS must be at least 1")
        if self.PRECISION_BITS < 80:
            raise ConfigError("MARKSET_PRECISION_BITS must be at least 80")
        if self.SEED < 0 or self.SEED >= 2**64:
            raise ConfigError("MARKSET_SEED must fit in an unsigned 64-bit integer")
        if self.TOLERANCE_SCALE <= 0:
            raise ConfigError("MARKSET_TOLERANCE_SCALE must be positive")
        if self.LOG_LEVEL not in LOG_LEVELS:
            raise ConfigError(f"Unknown MARKSET_LOG_LEVEL {self.LOG_LEVEL!r}")

    def get_run_defaults(self) -> Dict[str, Any]:
        """Get defaults the CLI falls back on when flags are absent."""
        return {
            'output_dir': self.OUTPUT_DIR,
            'workers': self.WORKERS,
            'precision_bits': self.PRECISION_BITS,
            'seed': self.SEED,
            'tolerance_scale': self.TOLERANCE_SCALE,
        }


# Create a global config instance
config = Config()
