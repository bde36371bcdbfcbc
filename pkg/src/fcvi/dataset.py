"""Synthetic Gaussian-blob data, labeled/unlabeled splits and churn schedules.

The unlabeled pools keep the true label of every item in
``UnlabeledSet.oracle_labels`` so evaluation code can score pseudo-labels.
Training code only ever receives ``UnlabeledSet.features``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError
from .seeding import derive_seed


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabeledSet:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = _frozen(self.features, np.float64)
        y = _frozen(self.labels, np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ContractError(f"features {X.shape} and labels {y.shape} disagree")
        if len(y) and (y.min() < 0 or y.max() >= self.num_classes):
            raise ContractError("label outside [0, num_classes)")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    @classmethod
    def empty(cls, d: int, L: int) -> "LabeledSet":
        return cls(np.zeros((0, d)), np.zeros(0, dtype=np.int64), L)


@dataclass(frozen=True, eq=False)
class UnlabeledSet:
    features: np.ndarray
    oracle_labels: np.ndarray  # evaluation only; never read on the training path

    def __post_init__(self):
        X = _frozen(self.features, np.float64)
        y = _frozen(self.oracle_labels, np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ContractError(f"features {X.shape} and oracle labels {y.shape} disagree")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "oracle_labels", y)

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class ClientDataset:
    labeled: LabeledSet
    unlabeled: UnlabeledSet


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Isotropic Gaussian class-conditional distributions."""

    class_means: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        means = _frozen(self.class_means, np.float64)
        if means.ndim != 2 or means.shape[0] < 2:
            raise ContractError("class_means must be an (L, d) matrix with L >= 2")
        if not self.sigma > 0:
            raise ContractError(f"sigma must be positive, got {self.sigma}")
        diffs = means[:, None, :] - means[None, :, :]
        off = ~np.eye(len(means), dtype=bool)
        if np.any(np.all(diffs[off] == 0.0, axis=-1)):
            raise ContractError("class means must be pairwise distinct")
        object.__setattr__(self, "class_means", means)

    @property
    def num_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]

    @classmethod
    def simplex(cls, num_classes: int, dim: int = 16, scale: float = 3.0,
                sigma: float = 1.0) -> "GaussianSpec":
        """Means at ``scale * e_l``: every pair sits ``scale * sqrt(2)`` apart."""
        if num_classes > dim:
            raise ContractError(f"simplex means need dim >= num_classes ({dim} < {num_classes})")
        means = np.zeros((num_classes, dim))
        means[np.arange(num_classes), np.arange(num_classes)] = scale
        return cls(means, sigma)


def generate_class_data(spec: GaussianSpec, counts, seed: int):
    """Draw exactly ``counts[l]`` samples of every class ``l``.

    Returns ``(features, labels)`` grouped by class in ascending order.
    """
    counts = np.asarray(counts)
    if counts.shape != (spec.num_classes,) or np.any(counts < 0):
        raise ContractError(f"counts must be {spec.num_classes} nonnegative integers")
    rng = np.random.default_rng(seed)
    n = int(counts.sum())
    labels = np.repeat(np.arange(spec.num_classes), counts)
    noise = rng.standard_normal((n, spec.dim))
    return spec.class_means[labels] + spec.sigma * noise, labels


def stratified_labeled_counts(class_counts, beta: float) -> np.ndarray:
    """How many items of each class go to the labeled side for fraction ``beta``.

    The total is ``round(beta * N)`` (half rounds up) and each class gets
    ``floor(beta * n_l)`` or one more, extra units going to the largest
    fractional remainders (lowest class index on ties).
    """
    if not 0.0 <= beta <= 1.0:
        raise ContractError(f"beta must lie in [0, 1], got {beta}")
    counts = np.asarray(class_counts, dtype=np.int64)
    exact = beta * counts
    base = np.floor(exact).astype(np.int64)
    target = int(np.floor(beta * counts.sum() + 0.5))
    extra = target - int(base.sum())
    frac = exact - base
    # stable sort keeps lower class index first among equal remainders
    order = np.argsort(-frac, kind="stable")
    room = [l for l in order if base[l] < counts[l]]
    for l in room[:max(extra, 0)]:
        base[l] += 1
    return base


def split_labeled_unlabeled(features, labels, beta: float, seed: int,
                            num_classes: int | None = None):
    """Stratified split into a labeled set and an unlabeled pool."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ContractError("features and labels disagree in length")
    L = num_classes if num_classes is not None else (int(y.max()) + 1 if len(y) else 1)
    take = stratified_labeled_counts(np.bincount(y, minlength=L), beta)
    return split_by_counts(X, y, take, seed, L)


def split_by_counts(features, labels, labeled_counts, seed: int, num_classes: int):
    """Put exactly ``labeled_counts[l]`` random items of class ``l`` on the labeled side."""
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    L = num_classes
    take = np.asarray(labeled_counts, dtype=np.int64)
    if take.shape != (L,) or np.any(take > np.bincount(y, minlength=L)[:L]) or np.any(take < 0):
        raise ContractError("labeled_counts must be per-class and not exceed the class sizes")
    rng = np.random.default_rng(seed)
    lab_idx, unl_idx = [], []
    for l in range(L):
        idx = np.flatnonzero(y == l)
        idx = idx[rng.permutation(len(idx))]
        lab_idx.append(np.sort(idx[:take[l]]))
        unl_idx.append(np.sort(idx[take[l]:]))
    lab = np.concatenate(lab_idx).astype(np.int64)
    unl = np.concatenate(unl_idx).astype(np.int64)
    return LabeledSet(X[lab], y[lab], L), UnlabeledSet(X[unl], y[unl])


@dataclass(frozen=True, eq=False)
class ClientSpec:
    """One edge server: when it participates and what data it brings."""

    client_id: int
    join_round: int
    leave_round: int
    labeled_counts: np.ndarray
    unlabeled_counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labeled_counts", _frozen(self.labeled_counts, np.int64))
        object.__setattr__(self, "unlabeled_counts", _frozen(self.unlabeled_counts, np.int64))

    @classmethod
    def from_totals(cls, client_id: int, join_round: int, leave_round: int,
                    counts, beta: float) -> "ClientSpec":
        counts = np.asarray(counts, dtype=np.int64)
        lab = stratified_labeled_counts(counts, beta)
        return cls(client_id, join_round, leave_round, lab, counts - lab)

    @property
    def total_counts(self) -> np.ndarray:
        return self.labeled_counts + self.unlabeled_counts

    def is_active(self, t: int) -> bool:
        return self.join_round <= t < self.leave_round


@dataclass(frozen=True, eq=False)
class ScenarioSchedule:
    """Scripted churn over ``total_rounds`` federated rounds.

    Clients are active for ``join_round <= t < leave_round``; a client that
    leaves takes its data with it and never comes back.
    """

    total_rounds: int
    data: GaussianSpec
    clients: tuple[ClientSpec, ...]
    beta: float = 0.3
    test_per_class: int = 200
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "clients", tuple(sorted(self.clients, key=lambda c: c.client_id)))
        self.validate()

    @property
    def num_classes(self) -> int:
        return self.data.num_classes

    def validate(self) -> None:
        T, L = self.total_rounds, self.num_classes
        if int(T) != T or T < 1:
            raise ConfigError(f"must be a positive integer, got {T}", "scenario.rounds")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"must lie in [0, 1], got {self.beta}", "scenario.beta")
        if self.test_per_class < 1:
            raise ConfigError("must be >= 1", "scenario.test_per_class")
        if not self.clients:
            raise ConfigError("at least one client is required", "clients")
        ids = [c.client_id for c in self.clients]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate client ids in {ids}", "clients.id")
        for c in self.clients:
            key = f"clients[id={c.client_id}]"
            if not 1 <= c.join_round < c.leave_round <= T + 1:
                raise ConfigError(
                    f"need 1 <= join < leave <= rounds+1, got join={c.join_round} "
                    f"leave={c.leave_round}", key)
            for name, arr in (("labeled", c.labeled_counts), ("unlabeled", c.unlabeled_counts)):
                if arr.shape != (L,):
                    raise ConfigError(f"{name} counts need {L} entries, got {arr.shape}", key + ".counts")
                if np.any(arr < 0):
                    raise ConfigError(f"{name} counts must be nonnegative", key + ".counts")
        for t in range(1, T + 1):
            if not any(c.is_active(t) for c in self.clients):
                raise ConfigError(f"no active client in round {t}", "clients")

    def client(self, client_id: int) -> ClientSpec:
        for c in self.clients:
            if c.client_id == client_id:
                return c
        raise ContractError(f"unknown client id {client_id}")

    def num_active(self, t: int) -> int:
        return len(active_clients(self, t))

    def change_rounds(self) -> list[int]:
        """Rounds t >= 2 whose active-client count differs from round t-1."""
        return [t for t in range(2, self.total_rounds + 1)
                if self.num_active(t) != self.num_active(t - 1)]


def active_clients(schedule: ScenarioSchedule, t: int) -> list[int]:
    if not 1 <= t <= schedule.total_rounds:
        raise ContractError(f"round {t} outside 1..{schedule.total_rounds}")
    return [c.client_id for c in schedule.clients if c.is_active(t)]


def true_class_counts(schedule: ScenarioSchedule, t: int) -> np.ndarray:
    """Labeled per-class totals over the clients active in round ``t``.

    Ground truth for tests and evaluation; the protocol never calls this.
    """
    total = np.zeros(schedule.num_classes, dtype=np.int64)
    for cid in active_clients(schedule, t):
        total += schedule.client(cid).labeled_counts
    return total


def build_client_dataset(schedule: ScenarioSchedule, client_id: int, seed: int) -> ClientDataset:
    c = schedule.client(client_id)
    X, y = generate_class_data(schedule.data, c.total_counts,
                               derive_seed(seed, "client-data", client_id))
    lab, unl = split_by_counts(X, y, c.labeled_counts,
                               derive_seed(seed, "client-split", client_id), schedule.num_classes)
    return ClientDataset(lab, unl)


def build_test_set(schedule: ScenarioSchedule, seed: int) -> LabeledSet:
    """Balanced held-out set covering every class."""
    counts = np.full(schedule.num_classes, schedule.test_per_class)
    X, y = generate_class_data(schedule.data, counts, derive_seed(seed, "test-set"))
    return LabeledSet(X, y, schedule.num_classes)
