"""Conditional generative modeling by velocity-field transport.

Train a network to match the transport velocity of the noise-to-data
interpolant, then sample by integrating the learned ODE (or its
marginal-equivalent SDE) from Gaussian noise, conditioned on side
information. Includes closed-form oracles for finite-atom targets,
synthetic benchmark generators, and evaluation metrics.
"""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig
from .core import DataSpec, Dataset, FlowConfig, RngStream, RowStreams, interpolant
from .flow import (SamplePath, euler_batch, euler_sample, one_step_generate,
                   sample_batch, sde_sample)
from .metrics import (EvalReport, IntervalReport, Kde1D, coverage, kde_fit,
                      moment_mse, prediction_interval, t_quantile, tv_distance,
                      w2_1d)
from .nn import MlpConfig, MlpParams
from .oracle import (DiscreteConditionalTarget, exact_quantile,
                     interpolant_density, interpolant_quantile, oracle_velocity,
                     posterior_mean, score_from_velocity, self_check)
from .synthdata import (REGRESSION_MODELS, SHAPES, RegressionModelSpec,
                        ScalingRecord, ShapeSpec, gen_regression, gen_shape,
                        load_csv, regression_truth, save_csv,
                        shape_conditional_density)
from .training import (OneStepGenerator, TrainConfig, VelocityModel, distill,
                       make_batch, monte_carlo_loss, train_velocity,
                       velocity_gap_mc)

__version__ = "1.0.0"

__all__ = [
    "CheckpointError", "load_checkpoint", "save_checkpoint",
    "ConfigError", "ExperimentConfig",
    "DataSpec", "Dataset", "FlowConfig", "RngStream", "RowStreams",
    "interpolant",
    "SamplePath", "euler_batch", "euler_sample", "one_step_generate",
    "sample_batch", "sde_sample",
    "EvalReport", "IntervalReport", "Kde1D", "coverage", "kde_fit",
    "moment_mse", "prediction_interval", "t_quantile", "tv_distance", "w2_1d",
    "MlpConfig", "MlpParams",
    "DiscreteConditionalTarget", "exact_quantile", "interpolant_density",
    "interpolant_quantile", "oracle_velocity", "posterior_mean",
    "score_from_velocity", "self_check",
    "REGRESSION_MODELS", "SHAPES", "RegressionModelSpec", "ScalingRecord",
    "ShapeSpec", "gen_regression", "gen_shape", "load_csv", "regression_truth",
    "save_csv", "shape_conditional_density",
    "OneStepGenerator", "TrainConfig", "VelocityModel", "distill",
    "make_batch", "monte_carlo_loss", "train_velocity", "velocity_gap_mc",
]
