"""Neural ODEs with depth-varying parameters, adjoint training and benchmarks."""

import json

from ._depthflow import (
    ConfigError,
    DivergenceError,
    DomainError,
    Model,
    ShapeError,
    StiffnessError,
    dataset_names,
    dopri5,
    export_flow,
    gradcheck,
    make_dataset,
    preset_description,
    preset_names,
    rk4,
)
from ._depthflow import preset_json as _preset_json
from ._depthflow import run_experiment_json as _run_experiment_json

__all__ = [
    "ConfigError",
    "DivergenceError",
    "DomainError",
    "Model",
    "ShapeError",
    "StiffnessError",
    "dataset_names",
    "dopri5",
    "export_flow",
    "gradcheck",
    "make_dataset",
    "preset",
    "preset_description",
    "preset_names",
    "rk4",
    "run_experiment",
]


def preset(name):
    """Embedded preset configuration as a dict."""
    return json.loads(_preset_json(name))


def run_experiment(config, out_dir=""):
    """Train and evaluate every run of `config` (dict or preset name); returns the report dict."""
    if isinstance(config, str):
        config = preset(config)
    return json.loads(_run_experiment_json(json.dumps(config), str(out_dir)))
