"""Round orchestration: broadcast, local training, aggregation, monitoring.

Three modes share one loop:

``fcvi``
    Monitor on every change in the number of active clients, carry vanished
    classes' output rows forward, and self-train with the monitor's mu in
    the following round.
``fedavg_supervised``
    Plain FedAvg on labeled data only.
``fedavg_selftrain_uniform``
    Same self-training trigger as ``fcvi`` but with mu = 1 for every class
    and no monitor or carry-forward. Isolates what the monitor contributes.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .dataset import (ClientDataset, LabeledSet, ScenarioSchedule, active_clients,
                      build_client_dataset, build_test_set)
from .errors import ContractError, MonitorInconclusive
from .metrics import MetricsRecord, evaluate
from .monitor import (ChangeRatioReport, MonitorThresholds, compute_report,
                      default_eps_denominator)
from .nn_core import (ModelParams, TrainConfig, init_params, output_row, output_rows,
                      predict, set_output_row, train_local)
from .seeding import derive_seed
from .selftrain import SelfTrainConfig, self_train

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    FCVI = "fcvi"
    FEDAVG_SUPERVISED = "fedavg_supervised"
    FEDAVG_SELFTRAIN_UNIFORM = "fedavg_selftrain_uniform"


class AggregationWeights(str, enum.Enum):
    UNIFORM = "uniform"
    LABELED_SIZE = "labeled_size"

    def weights(self, labeled_sizes) -> np.ndarray:
        sizes = np.asarray(labeled_sizes, dtype=np.float64)
        if self is AggregationWeights.UNIFORM or sizes.sum() == 0:
            return np.full(len(sizes), 1.0 / len(sizes))
        return sizes / sizes.sum()


@dataclass(frozen=True)
class FederationConfig:
    hidden_width: int = 32
    train: TrainConfig = field(default_factory=TrainConfig)
    monitor: MonitorThresholds = field(default_factory=MonitorThresholds)
    selftrain: SelfTrainConfig = field(default_factory=SelfTrainConfig)
    weighting: AggregationWeights = AggregationWeights.UNIFORM
    monitor_every_round: bool = False

    def __post_init__(self):
        if int(self.hidden_width) != self.hidden_width or self.hidden_width < 1:
            raise ContractError(f"hidden_width must be a positive integer, got {self.hidden_width}")


@dataclass(frozen=True, eq=False)
class ServerState:
    theta_current: ModelParams
    theta_prev_broadcast: ModelParams | None = None
    last_deltas: np.ndarray | None = None
    k_prev: int | None = None
    mu_current: np.ndarray | None = None
    round: int = 0


@dataclass(eq=False)
class RoundReport:
    round: int
    active_clients: list
    k: int
    aggregated: ModelParams
    monitor: ChangeRatioReport | None = None
    monitor_triggered: bool = False
    carry_forward_classes: list = field(default_factory=list)
    mu_applied: list | None = None
    self_train: dict = field(default_factory=dict)
    test_metrics: MetricsRecord | None = None
    wall_time: float = 0.0

    def to_json(self) -> dict:
        """JSONL record. Wall time is left out so logs stay reproducible."""
        rec = {
            "round": self.round,
            "k": self.k,
            "active_clients": list(self.active_clients),
        }
        if self.monitor is not None:
            rec["monitor"] = dict(self.monitor.to_json(), triggered=self.monitor_triggered)
        rec["carry_forward"] = list(self.carry_forward_classes)
        if self.mu_applied is not None:
            rec["mu_applied"] = list(self.mu_applied)
        if self.self_train:
            rec["self_train"] = {str(cid): d.to_json() for cid, d in self.self_train.items()}
        rec["metrics"] = None if self.test_metrics is None else self.test_metrics.to_json()
        return rec


def aggregate(params_list, weights, order_keys=None) -> ModelParams:
    """Weighted elementwise average of client parameters.

    Summation runs in ``order_keys`` order (list order if omitted), so the
    result doesn't depend on how the caller ordered the clients. The result
    is clipped to the per-element client range to absorb rounding.
    """
    params_list = list(params_list)
    if not params_list:
        raise ContractError("aggregate needs at least one parameter set")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(params_list),):
        raise ContractError(f"need {len(params_list)} weights, got shape {w.shape}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ContractError(f"weights must be nonnegative and sum to 1, got {w}")
    shape = params_list[0].shape_key
    if any(p.shape_key != shape for p in params_list):
        raise ContractError("client parameter shapes differ")
    order = range(len(params_list)) if order_keys is None else np.argsort(
        np.asarray(order_keys), kind="stable")
    out = []
    for k in range(4):
        stack = [params_list[i].arrays()[k] for i in order]
        acc = w[order[0]] * stack[0]
        for i, a in zip(order[1:], stack[1:]):
            acc = acc + w[i] * a
        lo = np.minimum.reduce(stack)
        hi = np.maximum.reduce(stack)
        out.append(np.clip(acc, lo, hi))
    return ModelParams(*out)


def carry_forward(theta_new: ModelParams, theta_old: ModelParams, vanished) -> ModelParams:
    """Restore the output rows of ``vanished`` classes from ``theta_old``."""
    if theta_new.shape_key != theta_old.shape_key:
        raise ContractError("shape mismatch in carry_forward")
    out = theta_new
    for l in vanished:
        out = set_output_row(out, l, output_row(theta_old, l))
    return out


def local_seed(run_seed: int, round_: int, client_id: int) -> int:
    return derive_seed(run_seed, "local-train", round_, client_id)


def initial_state(schedule: ScenarioSchedule, cfg: FederationConfig, seed: int) -> ServerState:
    theta0 = init_params(schedule.data.dim, cfg.hidden_width, schedule.num_classes,
                         derive_seed(seed, "init"))
    return ServerState(theta_current=theta0)


def run_round(state: ServerState, clients: Mapping[int, ClientDataset], cfg: FederationConfig,
              mode: Mode = Mode.FCVI, seed: int = 0,
              test_set: LabeledSet | None = None) -> tuple[ServerState, RoundReport]:
    """One federated round. ``clients`` maps client id to its data."""
    if not clients:
        raise ContractError("run_round needs at least one active client")
    mode = Mode(mode)
    started = time.perf_counter()
    t = state.round + 1
    theta_t = state.theta_current
    ids = sorted(clients)
    K = len(ids)
    mu = state.mu_current if mode is not Mode.FEDAVG_SUPERVISED else None

    local, diags = [], {}
    for cid in ids:
        data = clients[cid]
        tc = replace(cfg.train, rng_seed=local_seed(seed, t, cid))
        if mu is None:
            local.append(train_local(theta_t, data.labeled, tc))
        else:
            params, diag = self_train(theta_t, data, mu, cfg.selftrain, tc)
            local.append(params)
            diags[cid] = diag
    w = cfg.weighting.weights([len(clients[cid].labeled) for cid in ids])
    agg = aggregate(local, w, order_keys=ids)
    deltas = output_rows(agg) - output_rows(theta_t)

    k_changed = state.k_prev is not None and K != state.k_prev
    report, carry, next_mu = None, [], None
    if mode is Mode.FCVI and state.last_deltas is not None and (k_changed or cfg.monitor_every_round):
        eps = default_eps_denominator(theta_t, cfg.monitor.eps_denominator_rel)
        try:
            report = compute_report(state.last_deltas, deltas, state.k_prev, K, cfg.monitor, eps)
        except MonitorInconclusive as exc:
            report = exc.report
            log.warning("round %d: monitor inconclusive, mu falls back to all ones", t)
        if k_changed:
            carry = report.vanished
            agg = carry_forward(agg, theta_t, carry)
            next_mu = report.mu.copy()
    elif mode is Mode.FEDAVG_SELFTRAIN_UNIFORM and state.last_deltas is not None and k_changed:
        next_mu = np.ones(theta_t.num_classes)

    metrics = None
    if test_set is not None:
        metrics = evaluate(predict(agg, test_set.features), test_set.labels, agg.num_classes)

    new_state = ServerState(theta_current=agg, theta_prev_broadcast=theta_t, last_deltas=deltas,
                            k_prev=K, mu_current=next_mu, round=t)
    rep = RoundReport(
        round=t, active_clients=ids, k=K, aggregated=agg, monitor=report,
        monitor_triggered=report is not None and k_changed, carry_forward_classes=carry,
        mu_applied=None if mu is None else [float(m) for m in mu], self_train=diags,
        test_metrics=metrics, wall_time=time.perf_counter() - started)
    return new_state, rep


def run_scenario(schedule: ScenarioSchedule, cfg: FederationConfig, mode: Mode = Mode.FCVI,
                 seed: int = 0,
                 on_round: Callable[[RoundReport], None] | None = None) -> list[RoundReport]:
    """Run every round of ``schedule``; deterministic in ``seed``."""
    if schedule.data.dim < 1:
        raise ContractError("feature dimension must be >= 1")
    datasets = {c.client_id: build_client_dataset(schedule, c.client_id, seed)
                for c in schedule.clients}
    test_set = build_test_set(schedule, seed)
    state = initial_state(schedule, cfg, seed)
    reports = []
    for t in range(1, schedule.total_rounds + 1):
        active = {cid: datasets[cid] for cid in active_clients(schedule, t)}
        state, rep = run_round(state, active, cfg, mode, seed, test_set)
        reports.append(rep)
        if on_round is not None:
            on_round(rep)
    return reports
