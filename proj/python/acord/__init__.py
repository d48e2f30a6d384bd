"""Python bindings for the acord simulator core."""

from ._acord import *  # noqa: F401,F403
from ._acord import ExperimentConfig, AcordError

__all__ = [name for name in dir() if not name.startswith("_")]


def config(**settings):
    """ExperimentConfig from keyword settings; lists become comma-separated values."""
    cfg = ExperimentConfig()
    for key, value in settings.items():
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        cfg.set(key, str(value))
    return cfg
