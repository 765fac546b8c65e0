"""Python access to the colored eigenvector moment flow laboratory."""

import json

from ._cemf import (
    CemfError,
    ConfigurationSpace,
    FreeConvolutionProfile,
    ansatz_identity,
    assemble_generator,
    eigh,
    gaussian_wick_moment,
    kernel_projection,
    poincare_constant,
    sample_goe,
)
from . import _cemf

__all__ = [
    "CemfError",
    "ConfigurationSpace",
    "FreeConvolutionProfile",
    "ansatz_identity",
    "assemble_generator",
    "default_config",
    "eigh",
    "gaussian_wick_moment",
    "kernel_projection",
    "poincare_constant",
    "run_experiment",
    "sample_ensemble",
    "sample_goe",
]


def sample_ensemble(spec):
    """Draw a matrix from an ensemble spec dict, e.g. {"kind": "goe", "N": 50, "seed": 1}."""
    return _cemf.sample_ensemble(json.dumps(spec))


def default_config(kind):
    return json.loads(_cemf.default_config_json(kind))


def run_experiment(config):
    """Run an experiment config dict and return the summary dict."""
    return json.loads(_cemf.run_experiment_json(json.dumps(config)))
