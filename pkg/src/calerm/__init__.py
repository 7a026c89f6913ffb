"""Empirical risk minimisation with convex losses: complexity estimates, calibrated Huber fits
and Monte Carlo experiments on synthetic linear regression problems."""
from .losses import LOGISTIC, SQUARED, LossSpec, calibrate_huber, huber, loss_deriv, loss_second_deriv, loss_value, rho
from .geometry import (ConstraintSet, full_space, l1_ball, l1_l2_intersection, l2_ball, project, support_value,
                       symmetric_support)
from .decomposition import Sample, decompose
from .erm import SolverOptions, fit
from .synthdata import DesignKind, NoiseKind, TargetSpec, sample_dataset
from .complexity import gaussian_width, predict_rates, solve_fixed_point
from .experiments import ExperimentConfig, config_from_dict, run_experiment

__version__ = "0.1.0"
