"""Multitask policy-gradient learning for LQG control via input-output
history lifting, with bisimulation-based heterogeneity certificates."""

from ._backend import backend_name
from .tasks import (LqgTask, TaskDistributionSpec, make_cartpole_task,
                    make_pendulum_task, nominal_task, sample_training_set)
from .lifting import HistoryLift, LiftedController, build_s_star, lifted_optimal_controller
from .cost import cost_exact, gradient_exact, innovation_statistics, optimality_gap
from .heterogeneity import (BisimCertificate, CertificateConfig, average_heterogeneity,
                            bisim_heterogeneity, epsilon_het_exact)
from .rollout import RolloutConfig, simulate_trajectory, zo_gradient_onepoint
from .trainer import TrainConfig, TrainLog, evaluate_generalization, initial_controller, train_multitask

__version__ = "0.1.0"

__all__ = [
    "backend_name", "LqgTask", "TaskDistributionSpec", "make_cartpole_task",
    "make_pendulum_task", "nominal_task", "sample_training_set", "HistoryLift",
    "LiftedController", "build_s_star", "lifted_optimal_controller", "cost_exact",
    "gradient_exact", "innovation_statistics", "optimality_gap", "BisimCertificate",
    "CertificateConfig", "average_heterogeneity", "bisim_heterogeneity",
    "epsilon_het_exact", "RolloutConfig", "simulate_trajectory", "zo_gradient_onepoint",
    "TrainConfig", "TrainLog", "evaluate_generalization", "initial_controller",
    "train_multitask",
]
