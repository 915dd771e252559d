from markset.config.config import Config, Tolerances, config

__all__ = ["Config", "Tolerances", "config"]
