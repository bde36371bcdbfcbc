"""Server-side estimation of per-class sample-count change ratios.

The server only sees aggregated parameters. For each class ``l`` it takes
the change of output row ``l`` over a round (aggregate minus the model it
broadcast), compares that against the previous round's change, and rescales
by the client counts:

    R_l = (K_curr / K_prev) * r_l,   r_l = <d_curr, d_prev> / <d_prev, d_prev>

``r_l`` is the least-squares scale fitting ``d_curr ~ r * d_prev``; the
learning rate and batch-size factors cancel in it.

Presence test: hidden activations are ReLU outputs (>= 0) and the bias
input is 1, so a sample of class ``q != l`` can only move row ``l`` down,
coordinate by coordinate. A row delta with no coordinate above the noise
floor therefore had no class-``l`` samples behind it. That is how the
zero-count cases are told apart from small-but-positive ratios.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, MonitorInconclusive
from .nn_core import ModelParams, output_rows


class ClassCase(str, enum.Enum):
    INCREASE = "increase"
    DECREASE = "decrease"
    STEADY = "steady"
    VANISHED = "vanished"
    NEW = "new"

    @property
    def positive(self) -> bool:
        return self in (ClassCase.INCREASE, ClassCase.DECREASE, ClassCase.STEADY)


@dataclass(frozen=True, eq=False)
class ClassDelta:
    cls: int
    delta: np.ndarray


@dataclass(frozen=True)
class MonitorThresholds:
    eps_zero: float = 0.05
    eps_steady: float = 0.05
    eps_denominator_rel: float = 1e-9

    def __post_init__(self):
        if not (self.eps_zero >= 0 and self.eps_steady >= 0 and self.eps_denominator_rel >= 0):
            raise ContractError("monitor thresholds must be nonnegative")
        if not self.eps_zero < 1 - self.eps_steady:
            raise ContractError("need eps_zero < 1 - eps_steady")


@dataclass(frozen=True, eq=False)
class ChangeRatioReport:
    """Monitor output for one round.

    ``ratios[l]`` is None for a class that had no samples in the earlier
    round (its ratio is undefined). ``reversed_classes`` lists classes whose
    fitted ratio came out negative; they fall through to the ``mu = 1``
    branch like undefined ratios.
    """

    ratios: tuple
    cases: tuple
    r_min: float | None
    mu: np.ndarray
    k_prev: int
    k_curr: int
    reversed_classes: tuple = field(default=())

    @property
    def vanished(self) -> list[int]:
        return [l for l, c in enumerate(self.cases) if c is ClassCase.VANISHED]

    def to_json(self) -> dict:
        return {
            "R": [None if r is None else float(r) for r in self.ratios],
            "cases": [c.value for c in self.cases],
            "r_min": None if self.r_min is None else float(self.r_min),
            "mu": [float(m) for m in self.mu],
            "k_prev": self.k_prev,
            "k_curr": self.k_curr,
            "reversed": list(self.reversed_classes),
        }


def per_class_deltas(theta_before: ModelParams, theta_after: ModelParams) -> list[ClassDelta]:
    if theta_before.shape_key != theta_after.shape_key:
        raise ContractError(
            f"shape mismatch {theta_before.shape_key} vs {theta_after.shape_key}")
    D = output_rows(theta_after) - output_rows(theta_before)
    return [ClassDelta(l, D[l]) for l in range(D.shape[0])]


def default_eps_denominator(theta_before: ModelParams, rel: float = 1e-9) -> float:
    return rel * (1.0 + float(np.max(np.abs(theta_before.flat()))))


def has_own_signal(delta: np.ndarray, eps: float) -> bool:
    """True if some coordinate of a row delta rose by more than ``eps``."""
    return bool(np.max(delta) > eps)


def ratio_scalar(delta_prev, delta_curr, eps_denominator: float) -> float | None:
    """Least-squares ``r`` with ``delta_curr ~ r * delta_prev``.

    Returns None when ``delta_prev`` is (numerically) zero. A negative
    result is returned as is.
    """
    p = np.asarray(delta_prev, dtype=np.float64)
    c = np.asarray(delta_curr, dtype=np.float64)
    if p.shape != c.shape or p.ndim != 1:
        raise ContractError(f"delta shapes differ: {p.shape} vs {c.shape}")
    if np.linalg.norm(p) < eps_denominator:
        return None
    return float(c @ p / (p @ p))


def estimate_R(r: float | None, k_prev: int, k_curr: int) -> float | None:
    if k_prev < 1 or k_curr < 1:
        raise ContractError(f"client counts must be >= 1, got {k_prev}, {k_curr}")
    if r is None:
        return None
    return (k_curr / k_prev) * r


def classify_case(R: float | None, eps_zero: float = 0.05, eps_steady: float = 0.05) -> ClassCase:
    if not eps_zero < 1 - eps_steady:
        raise ContractError("need eps_zero < 1 - eps_steady")
    if R is None or R < 0:
        return ClassCase.NEW
    if R < eps_zero:
        return ClassCase.VANISHED
    if abs(R - 1.0) <= eps_steady:
        return ClassCase.STEADY
    return ClassCase.INCREASE if R > 1.0 else ClassCase.DECREASE


def summarize_ratios(ratios, k_prev: int, k_curr: int,
                     thresholds: MonitorThresholds = MonitorThresholds()) -> ChangeRatioReport:
    """Cases, R_min and mu from already-estimated ratios.

    Raises MonitorInconclusive (carrying the report with ``mu = 1``) when no
    class has a positive ratio.
    """
    ratios = tuple(None if r is None else float(r) for r in ratios)
    cases = tuple(classify_case(r, thresholds.eps_zero, thresholds.eps_steady) for r in ratios)
    positive = [r for r, c in zip(ratios, cases) if c.positive]
    reversed_ = tuple(l for l, r in enumerate(ratios) if r is not None and r < 0)
    mu = np.ones(len(ratios))
    if not positive:
        report = ChangeRatioReport(ratios, cases, None, mu, k_prev, k_curr, reversed_)
        raise MonitorInconclusive(report)
    r_min = min(positive)
    for l, (r, c) in enumerate(zip(ratios, cases)):
        if c.positive:
            mu[l] = r_min / r
    return ChangeRatioReport(ratios, cases, r_min, mu, k_prev, k_curr, reversed_)


def compute_report(deltas_prev, deltas_curr, k_prev: int, k_curr: int,
                   thresholds: MonitorThresholds = MonitorThresholds(),
                   eps_denominator: float = 1e-9) -> ChangeRatioReport:
    """Per-class change ratios between two consecutive rounds' row deltas.

    ``deltas_prev``/``deltas_curr`` are lists of ClassDelta or (L, s+1)
    arrays. A class with no own signal in the current round gets R = 0
    (vanished); one with no own signal in the previous round gets an
    undefined ratio (new).
    """
    P = _as_matrix(deltas_prev)
    C = _as_matrix(deltas_curr)
    if P.shape != C.shape:
        raise ContractError(f"delta matrices differ: {P.shape} vs {C.shape}")
    ratios = []
    for p, c in zip(P, C):
        if not has_own_signal(c, eps_denominator):
            ratios.append(0.0)
        elif not has_own_signal(p, eps_denominator):
            ratios.append(None)
        else:
            ratios.append(estimate_R(ratio_scalar(p, c, eps_denominator), k_prev, k_curr))
    return summarize_ratios(ratios, k_prev, k_curr, thresholds)


def _as_matrix(deltas) -> np.ndarray:
    if isinstance(deltas, np.ndarray):
        return np.asarray(deltas, dtype=np.float64)
    return np.vstack([d.delta if isinstance(d, ClassDelta) else d for d in deltas])
