"""Federated semi-supervised learning under a changing set of classes.

A desk-scale simulator: a numpy MLP, FedAvg aggregation, a server-side
monitor that estimates per-class sample-count change ratios from aggregated
output rows, and ratio-aware self-training on the clients.
"""

from .dataset import (ClientDataset, ClientSpec, GaussianSpec, LabeledSet, ScenarioSchedule,
                      UnlabeledSet, active_clients, true_class_counts)
from .errors import ConfigError, ContractError, DegenerateInputWarning, MonitorInconclusive
from .federation import (AggregationWeights, FederationConfig, Mode, RoundReport, ServerState,
                         aggregate, carry_forward, run_round, run_scenario)
from .metrics import MetricsRecord, compute_metrics, confusion
from .monitor import ChangeRatioReport, ClassCase, MonitorThresholds, compute_report
from .nn_core import ModelParams, TrainConfig, init_params, train_local
from .selftrain import SelfTrainConfig, self_train

__version__ = "0.1.0"
