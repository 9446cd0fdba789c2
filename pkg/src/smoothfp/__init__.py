"""Smooth fictitious play in discounted stochastic games.

Discrete-time learners (model-based and model-free), their continuous-time
best-response dynamics, ground-truth oracles and an experiment harness.
"""

from .auxiliary import AuxiliaryContext, duality_gap, regularized_matrix_game_solve, smooth_best_response
from .dynamics import BestResponseField, LambdaPolicy, RateFunction, initial_continuous_state, integrate
from .game import (
    GameClass,
    NoiseSpec,
    StochasticGame,
    check_ergodicity,
    classify,
    fixture,
    load,
    random_ergodic_game,
    save,
    validate,
)
from .harness import ExperimentConfig, emit_plot_data, run_experiment
from .learners import Schedule, advance, initial_state, mfp_step, run, sfp_step
from .oracles import equilibrium_residuals, soft_value_iteration, solve, zs_regularized_value_iteration
from .regularizers import ENTROPY, TSALLIS_NONSTEEP, get_regularizer

__version__ = "0.1.0"
