"""Hyperspectral unmixing laboratory.

Simulate mixing scenes (checkerboard, intimate sand, spatial patterns,
board reflection), estimate abundances with seven solvers spanning linear,
kernel, bilinear, polynomial, multilinear, and intimate models, extract
endmembers, and score everything against ground truth.
"""

from .calibration import CalibrationFrames, bw_normalize, simulate_frames
from .core import (AbundanceMap, AbundanceVector, EndmemberMatrix, GroundTruth,
                   HyperCube, Spectrum, apply_band_mask, clip_center,
                   satisfies_anc, satisfies_asc)
from .endmembers import extract_pure_mean, match_endmembers, nfindr, vca
from .errors import (DimensionError, ExtractionError, FormatError,
                     GenerationError, NumericalError, OutOfModelError,
                     UnmixError)
from .hapke import HapkeGeometry, albedo_to_reflectance, reflectance_to_albedo
from .io import (MixtureTable, ReportRecord, append_report, bundled_table_path,
                 read_config, read_cube, read_endmembers, read_ground_truth,
                 read_report, write_abundance_png, write_config, write_cube,
                 write_endmembers, write_report)
from .metrics import reconstruction_error, rmse, sad, sid
from .simulate import (SceneSpec, gen_bilinear_scene, gen_intimate_scene,
                       gen_linear_scene, gen_pattern_scene, pattern_field,
                       synth_endmembers)
from .unmix import (ALGOS, SolverConfig, fcls, gbm, hapke_unmix, khype, mlm,
                    mlm_forward, mlm_transform, ncls, nnls_gram, plinear,
                    resolve_workers, simplex_qp, unmix_cube)

__version__ = "0.1.0"

__all__ = [
    "ALGOS", "AbundanceMap", "AbundanceVector", "CalibrationFrames",
    "DimensionError", "EndmemberMatrix", "ExtractionError", "FormatError",
    "GenerationError", "GroundTruth", "HapkeGeometry", "HyperCube",
    "MixtureTable", "NumericalError", "OutOfModelError", "ReportRecord",
    "SceneSpec", "SolverConfig", "Spectrum", "UnmixError",
    "albedo_to_reflectance", "append_report", "apply_band_mask",
    "bundled_table_path", "bw_normalize", "clip_center", "extract_pure_mean",
    "fcls", "gbm", "gen_bilinear_scene", "gen_intimate_scene",
    "gen_linear_scene", "gen_pattern_scene", "hapke_unmix", "khype",
    "match_endmembers", "mlm", "mlm_forward", "mlm_transform", "ncls",
    "nfindr", "nnls_gram", "pattern_field", "plinear", "read_config",
    "read_cube", "read_endmembers", "read_ground_truth", "read_report",
    "reconstruction_error", "reflectance_to_albedo", "resolve_workers",
    "rmse", "sad", "satisfies_anc", "satisfies_asc", "sid", "simplex_qp",
    "simulate_frames", "synth_endmembers", "unmix_cube",
    "write_abundance_png", "write_config", "write_cube", "write_endmembers",
    "write_report", "vca",
]
