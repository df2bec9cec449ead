"""Subblock CuSum detector and companion statistics.

The detector updates once per subblock with the estimate-matched payload LLR
sum (pilots never enter the sum; they act only through the state estimate):

    W_j = 0                                   for j <= eta
    W_j = max(W_{j-1}, 0) + increment_j       for j > eta

and stops at the first j > eta with W_j >= b, declaring symbol time j*(L+1).
Runs that reach the horizon without crossing report the censoring sentinel
n+1.

Two companion statistics mirror the proof apparatus and serve as oracles in
tests: a change-aware CuSum that stays flat until the change subblock (on
shared increments the plain detector always stops first or simultaneously),
and a modified Shiryaev-Roberts recursion R_j = (R_{j-1} + 1) * exp(inc_j)
kept in log domain, which dominates exp(W_j) pathwise and has
E[R_j - j] = 1 - eta under the no-change law.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .channel_core import DiscreteChannelFamily


class ThresholdWarning(UserWarning):
    """Threshold at or below zero: the detector is degenerate-fast."""


@dataclass(frozen=True)
class DetectorConfig:
    """Stopping threshold (nats) plus the frame parameters it is read against."""

    threshold_b: float
    L: int
    eta: int
    alpha: float | None = None

    def __post_init__(self):
        if self.L < 1 or self.eta < 1:
            raise ValueError("L and eta must be >= 1")
        if not math.isfinite(self.threshold_b):
            raise ValueError("threshold_b must be finite")
        if self.threshold_b <= 0:
            warnings.warn(
                f"threshold b={self.threshold_b:.4f} <= 0: the detector stops at the "
                "first monitored subblock with high probability",
                ThresholdWarning, stacklevel=2,
            )

    @classmethod
    def from_alpha(cls, alpha: float, L: int, eta: int) -> "DetectorConfig":
        """Threshold b = -log(alpha*(L+1)) meeting the false-alarm target alpha."""
        if not 0 < alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        return cls(threshold_b=-math.log(alpha * (L + 1)), L=L, eta=eta, alpha=alpha)


@dataclass(frozen=True)
class ScsState:
    """Detector state after j subblocks; W is the CuSum statistic in nats."""

    eta: int
    j: int = 0
    w: float = 0.0
    stopped_at: int | None = None


def subblock_llr(family: DiscreteChannelFamily, s_hat: int, x_sub, y_sub) -> float:
    """Payload LLR sum sum_i log(p^(s_hat)(y_i|x_i) / p^(0)(y_i|x_i))."""
    x_sub = np.asarray(x_sub)
    y_sub = np.asarray(y_sub)
    if x_sub.shape != y_sub.shape:
        raise ValueError("x and y subblocks must have equal length")
    return float(family.llr_table(s_hat)[x_sub, y_sub].sum())


def scs_update(state: ScsState, s_hat: int, x_sub, y_sub,
               family: DiscreteChannelFamily) -> ScsState:
    """Advance the detector by one subblock of L payload symbols."""
    j = state.j + 1
    if j <= state.eta:
        return replace(state, j=j, w=0.0)
    inc = subblock_llr(family, s_hat, x_sub, y_sub)
    return replace(state, j=j, w=max(state.w, 0.0) + inc)


def stop_check(state: ScsState, cfg: DetectorConfig, k: int | None = None):
    """Symbol-time stopping decision for the current state.

    Returns j*(L+1) at the first monitored subblock with W >= b; the sentinel
    n+1 = k*(L+1)+1 when the horizon k has been reached without crossing; and
    None while still running.
    """
    if state.j > cfg.eta and state.w >= cfg.threshold_b:
        return state.j * (cfg.L + 1)
    if k is not None and state.j >= k:
        return k * (cfg.L + 1) + 1
    return None


def nu_aware_update(state: ScsState, s_hat: int, x_sub, y_sub,
                    family: DiscreteChannelFamily, j_nu: int) -> ScsState:
    """Change-aware variant: flat at 0 through subblock j_nu + eta - 1, CuSum after.

    Fed the same increments as the plain detector, its statistic never exceeds
    the plain one, so stop(plain) <= stop(aware) pathwise.  Oracle use only;
    j_nu is the subblock containing the change point.
    """
    j = state.j + 1
    if j <= j_nu + state.eta - 1:
        return replace(state, j=j, w=0.0)
    inc = subblock_llr(family, s_hat, x_sub, y_sub)
    return replace(state, j=j, w=max(state.w, 0.0) + inc)


def sr_update(log_r_prev: float, s_hat: int, x_sub, y_sub,
              family: DiscreteChannelFamily) -> float:
    """One step of the modified Shiryaev-Roberts recursion, in log domain.

    R_j = (R_{j-1} + 1) * exp(increment), with R_eta = 1 (log 0.0); apply once
    per subblock j > eta.  log(R + 1) = logaddexp(log R, 0) >= max(log R, 0)
    holds exactly in floats, so log R_j >= W_j is a pathwise float-level
    guarantee, not just a real-arithmetic one.
    """
    inc = subblock_llr(family, s_hat, x_sub, y_sub)
    return float(np.logaddexp(log_r_prev, 0.0) + inc)


SR_INIT_LOG = 0.0  # log R_eta = log 1
