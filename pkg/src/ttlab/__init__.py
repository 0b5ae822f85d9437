"""Theory-training laboratory for a coupled solidification ODE system.

Small tanh networks are trained to satisfy the governing equations and
initial conditions directly (no external data), with an exact analytical
solution for benchmarking, a partial-regularization training schedule, a
backward-Euler baseline, and an experiment harness CLI.
"""

__version__ = "0.1.0"

from .autodiff import Dual, Tape, Var, forward_tangent, loss_gradient
from .fdm import FdmConfig, convergence_study, solve
from .loss import (
    LossConfig,
    TrainingSet,
    gamma_at,
    initial_lr,
    make_training_set,
    regularized_loss,
    standard_loss,
)
from .network import Network, NetworkShape, init
from .optim import Adam, QuasiNewtonConfig, quasi_newton_minimize
from .physics import (
    DEFAULT_PARAMS,
    ErrorReport,
    ModelParams,
    ResidualBundle,
    StateTriple,
    error_norms,
    exact_state,
    ic_errors,
    is_mushy_valid,
    residuals,
)
from .trainer import (
    RunRecord,
    TrainSchedule,
    oscillation_metric,
    train,
    weight_stats,
)

__all__ = [
    "Dual",
    "Tape",
    "Var",
    "forward_tangent",
    "loss_gradient",
    "FdmConfig",
    "convergence_study",
    "solve",
    "LossConfig",
    "TrainingSet",
    "gamma_at",
    "initial_lr",
    "make_training_set",
    "regularized_loss",
    "standard_loss",
    "Network",
    "NetworkShape",
    "init",
    "Adam",
    "QuasiNewtonConfig",
    "quasi_newton_minimize",
    "DEFAULT_PARAMS",
    "ErrorReport",
    "ModelParams",
    "ResidualBundle",
    "StateTriple",
    "error_norms",
    "exact_state",
    "ic_errors",
    "is_mushy_valid",
    "residuals",
    "RunRecord",
    "TrainSchedule",
    "oscillation_metric",
    "train",
    "weight_stats",
]
