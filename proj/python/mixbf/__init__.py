"""Bayes factors from mixture hypermodels."""

import json as _json

from ._core import (
    BoundsViolation,
    ConfigError,
    Error,
    InvalidArgument,
    SingularSystem,
    analytic_bf_ex3,
    bayes_factors,
    bayes_factors_from_moments,
    dirichlet_moments,
    forward_posterior_means,
    integrals,
    simulate_sir,
    two_model_bf,
)
from . import _core


def default_config(experiment):
    """Default configuration for an experiment kind as a dict."""
    return _json.loads(_core.default_config(experiment))


def normalize_config(config):
    """Validated config with every default filled in."""
    return _json.loads(_core.normalize_config(_json.dumps(config)))


def fit(config, threads=1, write_files=False):
    """Run the configured experiment and return the summary as a dict."""
    text = config if isinstance(config, str) else _json.dumps(config)
    return _core.fit_json(text, threads, write_files)


__all__ = [
    "BoundsViolation",
    "ConfigError",
    "Error",
    "InvalidArgument",
    "SingularSystem",
    "analytic_bf_ex3",
    "bayes_factors",
    "bayes_factors_from_moments",
    "default_config",
    "dirichlet_moments",
    "fit",
    "forward_posterior_means",
    "integrals",
    "normalize_config",
    "simulate_sir",
    "two_model_bf",
]
