import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from .models import VehicleSpec
from .services.grpo_service import GrpoConfig
from .services.policy_service import DEFAULT_INIT_LOG_STD, LOG_STD_MAX, LOG_STD_MIN
from .services.reward_service import RewardWeights

logger = logging.getLogger(__name__)

ENV_PREFIX = "TRAJGRPO_"
VALID_LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
VALID_OPTIMIZERS = ["adam", "sgd"]


def load_env_file(env_path: Path) -> bool:
    """Load a .env file without overriding variables already set in the process."""
    if not env_path.exists():
        return False
    loaded = load_dotenv(env_path, override=False, encoding="utf-8")
    logger.debug(f"Loaded environment from {env_path}")
    return loaded


def _env(name: str) -> Optional[str]:
    value = os.getenv(ENV_PREFIX + name)
    if value is None:
        return None
    value = value.strip().strip('"').strip("'")
    return value or None


class Config:
    def __init__(self, env_file: Optional[Path] = None):
        self.base_dir = Path(__file__).parent
        self.project_root = self.base_dir.parent
        self.config_dir = self.base_dir / "config"

        env_file = env_file or self.project_root / ".env"
        if not load_env_file(env_file):
            logger.debug(f".env file not found at {env_file}, using environment variables and defaults")

        self._engine_config = self._load_engine_config()

    def _int(self, name: str, default: int, low: int, high: int) -> int:
        raw = _env(name)
        if raw is None:
            return default
        try:
            value = int(raw)
        except ValueError:
            logger.warning(f"⚠️  {ENV_PREFIX}{name}={raw!r} is not an integer, using default {default}")
            return default
        if value < low or value > high:
            logger.warning(f"⚠️  {ENV_PREFIX}{name}={value} outside [{low}, {high}], using default {default}")
            return default
        return value

    def _float(self, name: str, default: Optional[float], low: float, high: float = float("inf"), strict_low: bool = False):
        raw = _env(name)
        if raw is None:
            return default
        try:
            value = float(raw)
        except ValueError:
            logger.warning(f"⚠️  {ENV_PREFIX}{name}={raw!r} is not a number, using default {default}")
            return default
        too_low = value <= low if strict_low else value < low
        if too_low or value > high or value != value:
            logger.warning(f"⚠️  {ENV_PREFIX}{name}={value} out of range, using default {default}")
            return default
        return value

    @property
    def log_level(self) -> str:
        level = (_env("LOG_LEVEL") or "info").upper()
        return level if level in VALID_LOG_LEVELS else "INFO"

    @property
    def log_json(self) -> bool:
        return (_env("LOG_JSON") or "false").lower() in ["true", "1", "yes"]

    @property
    def log_file(self) -> Optional[str]:
        return _env("LOG_FILE")

    @property
    def seed(self) -> int:
        return self._int("SEED", 0, 0, 2**32 - 1)

    @property
    def group_size(self) -> int:
        return self._int("GROUP_SIZE", 6, 2, 64)

    @property
    def beta(self) -> float:
        return self._float("BETA", 0.04, 0.0)

    @property
    def learning_rate(self) -> float:
        return self._float("LEARNING_RATE", 1e-2, 0.0, strict_low=True)

    @property
    def optimizer(self) -> str:
        value = (_env("OPTIMIZER") or "adam").lower()
        if value not in VALID_OPTIMIZERS:
            logger.warning(f"⚠️  {ENV_PREFIX}OPTIMIZER={value!r} is not one of {VALID_OPTIMIZERS}, using adam")
            return "adam"
        return value

    @property
    def iterations(self) -> int:
        return self._int("ITERATIONS", 500, 0, 10_000_000)

    @property
    def penalty_cap(self) -> float:
        return self._float("PENALTY_CAP", 100.0, 0.0, strict_low=True)

    @property
    def decimals(self) -> int:
        return self._int("DECIMALS", 6, 1, 9)

    @property
    def workers(self) -> int:
        return self._int("WORKERS", 1, 1, 64)

    @property
    def init_log_std(self) -> float:
        return self._float("INIT_LOG_STD", DEFAULT_INIT_LOG_STD, LOG_STD_MIN, LOG_STD_MAX)

    @property
    def clip_range(self) -> Optional[float]:
        return self._float("CLIP_RANGE", None, 0.0, strict_low=True)

    @property
    def reward_weights(self) -> RewardWeights:
        raw = _env("REWARD_WEIGHTS") or "1,1,1,1"
        try:
            return RewardWeights.parse(raw)
        except ValueError as e:
            logger.warning(f"⚠️  Invalid {ENV_PREFIX}REWARD_WEIGHTS: {e}, using 1,1,1,1")
            return RewardWeights()

    def vehicle_spec(self) -> VehicleSpec:
        defaults = self._engine_config.get("vehicle_defaults", {})
        try:
            return VehicleSpec(**defaults)
        except (TypeError, ValueError) as e:
            logger.warning(f"⚠️  Invalid vehicle_defaults in engine config: {e}, using built-in defaults")
            return VehicleSpec()

    def grpo_config(self, **overrides: Any) -> GrpoConfig:
        """GrpoConfig from the environment; non-None overrides (CLI flags) win."""
        values: Dict[str, Any] = {
            "group_size": self.group_size,
            "beta": self.beta,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "iterations": self.iterations,
            "seed": self.seed,
            "weights": self.reward_weights,
            "penalty_cap": self.penalty_cap,
            "decimals": self.decimals,
            "clip_range": self.clip_range,
            "init_log_std": self.init_log_std,
            "workers": self.workers,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return GrpoConfig(**values)

    def _load_engine_config(self) -> Dict[str, Any]:
        filename = _env("CONFIG_FILE") or "engine_config.json"
        path = Path(filename) if Path(filename).is_absolute() else self.config_dir / filename
        try:
            with open(path, "r", encoding="utf-8") as f:
                config = json.load(f)
            logger.debug(f"Loaded config from {path}")
            return config
        except FileNotFoundError:
            logger.warning(f"Config file not found: {path}, using built-in messages")
        except json.JSONDecodeError as e:
            logger.error(f"Invalid JSON in config {path}: {e}")
        return self._get_minimal_engine_config()

    def _get_minimal_engine_config(self) -> Dict[str, Any]:
        return {
            "app_info": {"name": "trajgrpo", "description": "GRPO trajectory planning engine"},
            "vehicle_defaults": {},
            "error_messages": {"generic_error": "An error occurred"},
            "log_messages": {},
        }

    @property
    def engine_config(self) -> Dict[str, Any]:
        return self._engine_config

    def get_config_messages(self, config_type: str) -> Dict[str, Any]:
        return self._engine_config.get(config_type, {})

    def message(self, config_type: str, key: str, **values: Any) -> str:
        """Catalogue message formatted with values; falls back to the key itself."""
        template = self.get_config_messages(config_type).get(key)
        if template is None:
            template = self.get_config_messages("error_messages").get("generic_error", key)
        try:
            return template.format(**values)
        except (KeyError, IndexError):
            return template
