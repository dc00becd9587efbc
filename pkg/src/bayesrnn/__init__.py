"""Bayesian recurrent units, exact inference oracles, and gated baselines."""

from .estimator import RecurrentSequenceClassifier
from .network import Network, NetworkConfig, param_count
from .oracle import OracleModel, bayes_filter, enumerate_posteriors, forward_backward
from .tasks import gen_delayed_cue_task, gen_latent_feature_task
from .trainer import TrainConfig, evaluate, train

__all__ = [
    "RecurrentSequenceClassifier",
    "Network",
    "NetworkConfig",
    "param_count",
    "OracleModel",
    "bayes_filter",
    "enumerate_posteriors",
    "forward_backward",
    "gen_delayed_cue_task",
    "gen_latent_feature_task",
    "TrainConfig",
    "evaluate",
    "train",
]

__version__ = "0.1.0"
