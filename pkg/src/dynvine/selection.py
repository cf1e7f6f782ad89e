"""WAIC from pointwise log-likelihood draws and the dependence-type ladder.

Per edge we compare zero (independence), static and dynamic dependence.  A
more complex type is adopted only when its WAIC undercuts the current one by
at least ``kappa`` standard errors of the pointwise difference (default 2;
larger values give sparser models).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp


class DependenceType(str, Enum):
    DYNAMIC = "dynamic"
    STATIC = "static"
    ZERO = "zero"


@dataclass
class WaicResult:
    pointwise: np.ndarray
    lppd: np.ndarray
    penalty: np.ndarray

    @property
    def total(self) -> float:
        return float(self.pointwise.sum())

    @property
    def lppd_total(self) -> float:
        return float(self.lppd.sum())

    @property
    def penalty_total(self) -> float:
        return float(self.penalty.sum())

    @classmethod
    def zero(cls, T: int) -> "WaicResult":
        z = np.zeros(T)
        return cls(pointwise=z, lppd=z.copy(), penalty=z.copy())


def estimate_waic(loglik: np.ndarray) -> WaicResult:
    """Pointwise WAIC from an R' x T matrix of post-burn-in log likelihoods.

    waic_t = -2 * (log mean_r exp(loglik[r, t]) - var_r(loglik[r, t])), with
    a stable log-mean-exp and the unbiased sample variance as penalty.
    """
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim != 2 or ll.shape[0] < 2:
        raise ValueError("loglik must be R x T with R >= 2")
    if np.any(np.all(np.isneginf(ll), axis=0)):
        raise ValueError("degenerate pointwise likelihood: a column is identically zero")
    R = ll.shape[0]
    lppd = logsumexp(ll, axis=0) - math.log(R)
    penalty = np.var(ll, axis=0, ddof=1)
    return WaicResult(pointwise=-2.0 * (lppd - penalty), lppd=lppd, penalty=penalty)


def waic_diff_se(a: WaicResult, b: WaicResult) -> tuple[float, float]:
    """Difference of totals and its standard error from pointwise components."""
    if a.pointwise.shape != b.pointwise.shape:
        raise ValueError("WAIC results must cover the same observations")
    T = a.pointwise.shape[0]
    if T < 2:
        raise ValueError("need at least two observations for a standard error")
    delta = a.pointwise - b.pointwise
    return float(delta.sum()), float(math.sqrt(T * np.var(delta, ddof=1)))


def _upgrade(challenger: WaicResult, incumbent: WaicResult, kappa: float) -> bool:
    if math.isinf(kappa):
        return False
    diff, se = waic_diff_se(challenger, incumbent)
    return diff <= -kappa * se


def select_dependence(
    waic_dyn: WaicResult | None,
    waic_stat: WaicResult | None,
    kappa: float = 2.0,
) -> DependenceType:
    """Climb the complexity ladder zero -> static -> dynamic.

    Each step requires the candidate's WAIC to be at least kappa standard
    errors below the current model's.  ``None`` skips a rung (used when a
    fit restricts the allowed dependence types).
    """
    ref = waic_dyn if waic_dyn is not None else waic_stat
    if ref is None:
        return DependenceType.ZERO
    current = WaicResult.zero(ref.pointwise.shape[0])
    chosen = DependenceType.ZERO
    if waic_stat is not None and _upgrade(waic_stat, current, kappa):
        current = waic_stat
        chosen = DependenceType.STATIC
    if waic_dyn is not None and _upgrade(waic_dyn, current, kappa):
        chosen = DependenceType.DYNAMIC
    return chosen
