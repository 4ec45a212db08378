"""Sparsity-constrained distributed unmixing of hyperspectral cubes."""

from hsunmix.hyperdata import (
    Abundances,
    Cube,
    Signatures,
    SpectralLibrary,
    default_library_path,
    drop_bands,
    load_spectral_library,
    read_cube,
    write_cube,
)
from hsunmix.graph import NeighborGraph, auto_lambda, build_graph, theta
from hsunmix.synth import NoiseSpec, SceneSpec, add_noise, render_scene
from hsunmix.unmix import AlgoConfig, UnmixResult, project_simplex, run_unmixing
from hsunmix.evaluation import MetricReport, aad, evaluate, match_endmembers, run_sweep, sad

__version__ = "0.1.0"

__all__ = [
    "Abundances",
    "AlgoConfig",
    "Cube",
    "MetricReport",
    "NeighborGraph",
    "NoiseSpec",
    "SceneSpec",
    "Signatures",
    "SpectralLibrary",
    "UnmixResult",
    "aad",
    "add_noise",
    "auto_lambda",
    "build_graph",
    "default_library_path",
    "drop_bands",
    "evaluate",
    "load_spectral_library",
    "match_endmembers",
    "project_simplex",
    "read_cube",
    "render_scene",
    "run_sweep",
    "run_unmixing",
    "sad",
    "theta",
    "write_cube",
]
