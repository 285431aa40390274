"""Domain-flexible neural operators on diffeomorphically mapped domains.

Thin Python layer over the native core. Arrays are numpy float64; grid
fields come back shaped (ry, rx) with the row index running along y.
"""

from ._core import (
    DiffeoError,
    certify_pocket_part,
    dds,
    generate_sample,
    harmonic_map,
    load_dataset,
    mesh_polygon,
    ncc,
    predict,
    sample_polygon,
    solve_darcy,
    volume_parameterize,
)
from ._core import run_command as _run_command

__all__ = [
    "DiffeoError",
    "certify_pocket_part",
    "dds",
    "generate_sample",
    "harmonic_map",
    "load_dataset",
    "mesh_polygon",
    "ncc",
    "predict",
    "sample_polygon",
    "solve_darcy",
    "volume_parameterize",
    "gen",
    "train",
    "evaluate",
    "dds_report",
    "volparam_check",
]


def _paths(config):
    return {k: str(v) if hasattr(v, "__fspath__") else v for k, v in config.items()}


def gen(**config):
    """Generate a dataset; same settings as `diffeo-op gen`, `out` required."""
    return _run_command("gen", _paths(config))


def train(**config):
    """Train a model; model settings go in a nested `model` dict."""
    return _run_command("train", _paths(config))


def evaluate(**config):
    """Relative L2 errors of a checkpoint on a labelled dataset."""
    return _run_command("eval", _paths(config))


def dds_report(**config):
    """DDS of candidate samples against a training set, with correlations."""
    return _run_command("dds", _paths(config))


def volparam_check(**config):
    """Volume-map certificate for a surface file or a synthetic part."""
    return _run_command("volparam-check", _paths(config))
