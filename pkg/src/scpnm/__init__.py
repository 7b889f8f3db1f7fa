"""Learning to undo channelwise distortions of simplex-structured mixtures.

Observations follow ``x = g(A s)`` with ``s`` on the probability simplex and
each ``g_m`` monotone. A channelwise autoencoder trained under the
constraint ``sum_m f_m(x_m) = 1`` recovers the linear mixture up to an
affine map per channel; linear unmixing then recovers ``s``.
"""

from .datagen import (
    Dataset,
    NoiseSpec,
    Post,
    Pre,
    inject_pure_samples,
    load_dataset,
    sample_mixing,
    sample_simplex,
    save_dataset,
    synthesize,
)
from .errors import DomainError, FormatError, ParameterError, RankError, ScpnmError, TrainingError
from .identifiability import build_counterexample, build_g, check_bound, sigma_min, solve_tau
from .metrics import affinity_report, curvature_residual, permutation_mse, subspace_distance
from .network import MLPBank, ScalarMLP
from .nonlinearity import Distortion, DistortionBank, benchmark_bank, random_bank
from .recovery import UnmixResult, unmix
from .training import CnaeModel, TrainConfig, TrainReport, make_segments, proposition1_check, train

__version__ = "0.1.0"

__all__ = [
    "CnaeModel", "Dataset", "Distortion", "DistortionBank", "DomainError", "FormatError",
    "MLPBank", "NoiseSpec", "ParameterError", "Post", "Pre", "RankError", "ScalarMLP",
    "ScpnmError", "TrainConfig", "TrainReport", "TrainingError", "UnmixResult",
    "affinity_report", "build_counterexample", "build_g", "check_bound", "curvature_residual",
    "inject_pure_samples", "load_dataset", "make_segments", "benchmark_bank", "permutation_mse",
    "proposition1_check", "random_bank", "sample_mixing", "sample_simplex", "save_dataset",
    "sigma_min", "solve_tau", "subspace_distance", "synthesize", "train", "unmix",
]
