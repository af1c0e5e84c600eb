"""Python front end for the hrm_lab core.

Configs are plain dicts using the same keys as the JSON files read by the
``hrm_lab`` command-line tool. Missing keys keep their defaults.
"""

from __future__ import annotations

import json
from typing import Any, Optional, Sequence

import numpy as np

from . import _core
from ._core import GenerationError, IoError, TrainingError

__all__ = [
    "GenerationError",
    "IoError",
    "TrainingError",
    "default_config",
    "fit_baseline",
    "generate_selection",
    "generate_selection_tests",
    "metrics",
    "mse",
    "run_experiment",
    "run_hrm",
    "selftest",
]


def _dump(config: Optional[dict]) -> str:
    return json.dumps(config) if config else ""


def _labels(env: Optional[Sequence[int]]) -> Optional[list]:
    return None if env is None else [int(e) for e in env]


def default_config(kind: str) -> dict:
    """Defaults for ``"selection"``, ``"hrm"``, ``"baseline"`` or ``"experiment"``."""
    return json.loads(_core.default_config(kind))


def generate_selection(seed: int, config: Optional[dict] = None) -> dict:
    """Pooled selection-bias training set with hidden environment labels."""
    return _core.generate_selection(_dump(config), seed)


def generate_selection_tests(r_values: Sequence[float], n_per_env: int, seed: int,
                             config: Optional[dict] = None) -> list:
    return _core.generate_selection_tests(_dump(config), list(r_values), n_per_env, seed)


def run_hrm(X: np.ndarray, y: np.ndarray, config: Optional[dict] = None,
            env: Optional[Sequence[int]] = None) -> dict:
    """Runs the alternating gate/clustering loop.

    ``env`` is optional ground truth, used only to report partition agreement.
    """
    return _core.run_hrm(np.asarray(X, float), np.asarray(y, float), _dump(config), _labels(env))


def fit_baseline(method: str, X: np.ndarray, y: np.ndarray,
                 env: Optional[Sequence[int]] = None, config: Optional[dict] = None) -> dict:
    """ERM, IRM (needs ``env``) or DRO."""
    return _core.fit_baseline(method, np.asarray(X, float), np.asarray(y, float),
                              _labels(env), _dump(config))


def mse(model: dict, X: np.ndarray, y: np.ndarray) -> float:
    return _core.mse(np.asarray(model["theta"], float), float(model["intercept"]),
                     np.asarray(X, float), np.asarray(y, float))


def metrics(losses: Sequence[float]) -> dict:
    return _core.metrics(list(losses))


def run_experiment(spec: dict) -> dict:
    """Runs a full experiment and returns its manifest."""
    return json.loads(_core.run_experiment(json.dumps(spec)))


def selftest(seed: int = 0) -> list[tuple[str, bool, str]]:
    return _core.selftest(seed)
