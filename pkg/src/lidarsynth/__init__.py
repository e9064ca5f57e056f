"""Synthetic LiDAR scans of posed human bodies, with augmentation,
1D-heatmap targets, losses and pose metrics."""

__version__ = "0.1.0"

from .body_model import BodyModel, PosedBody, forward, gen_toy_model, load_body_model, save_body_model
from .dataset_io import Dataset, DatasetWriter, SampleMeta, SyntheticSample
from .errors import (DegenerateError, DimensionError, FormatError, GenerationAborted, InputError,
                     LidarSynthError)
from .lidar import LaserGrid, build_bvh, effective_window, raycast
from .masking import apply_mask, plan_mask
from .pipeline import GenConfig, Synthesizer, evaluate_dataset, synth
from .scene import SceneConfig, place_scene

__all__ = [
    "BodyModel", "PosedBody", "forward", "gen_toy_model", "load_body_model", "save_body_model",
    "Dataset", "DatasetWriter", "SampleMeta", "SyntheticSample",
    "DegenerateError", "DimensionError", "FormatError", "GenerationAborted", "InputError", "LidarSynthError",
    "LaserGrid", "build_bvh", "effective_window", "raycast",
    "apply_mask", "plan_mask",
    "GenConfig", "Synthesizer", "evaluate_dataset", "synth",
    "SceneConfig", "place_scene",
]
