"""Deterministic federated-learning simulator with variance- and
semi-variance-regularized server aggregation, fair-aggregation baselines,
and brute-force oracles for every objective."""

from ._kernels import backend_name as kernel_backend
from .aggregate import (
    STRATEGY_TAGS,
    AggregateOutcome,
    StrategyConfig,
    fedavg_aggregate,
    semivred_aggregate,
    semivred_weights,
    vred_aggregate,
    vred_weights,
)
from .data import (
    ClientDataset,
    Dataset,
    Federation,
    LabeledPool,
    dirichlet_partition,
    make_gaussian_mixture,
    one_vs_rest_partition,
    shared_pool_clients,
    train_test_split,
)
from .engine import RunConfig, run_experiment, run_round
from .errors import ConfigError, DivergenceError
from .localtrain import ClientReport, LocalConfig, local_sgd
from .metrics import FairnessReport, comparison_report, fairness_report
from .models import Mlp, ModelParams, SoftmaxRegression, init_params
from .rng import Rng

__version__ = "0.1.0"

__all__ = [
    "AggregateOutcome",
    "ClientDataset",
    "ClientReport",
    "ConfigError",
    "Dataset",
    "DivergenceError",
    "FairnessReport",
    "Federation",
    "LabeledPool",
    "LocalConfig",
    "Mlp",
    "ModelParams",
    "Rng",
    "RunConfig",
    "STRATEGY_TAGS",
    "SoftmaxRegression",
    "StrategyConfig",
    "comparison_report",
    "dirichlet_partition",
    "fairness_report",
    "fedavg_aggregate",
    "init_params",
    "kernel_backend",
    "local_sgd",
    "make_gaussian_mixture",
    "one_vs_rest_partition",
    "run_experiment",
    "run_round",
    "semivred_aggregate",
    "semivred_weights",
    "shared_pool_clients",
    "train_test_split",
    "vred_aggregate",
    "vred_weights",
    "__version__",
]
