"""Seeded parallel Monte Carlo estimators for detection and decoding metrics.

Estimators run in fixed-size batches; each batch owns a counter-derived
random stream keyed by (master seed, estimator tag, sweep-point index, batch
index) and batches are merged in index order, so results are bit-identical
for any worker count.  The worker pool size honors the ISACQCD_THREADS
environment variable.

The detection engine is batch-vectorized over trials and steps one subblock
at a time.  Payload log-likelihood increments are sampled directly from the
deployed composition's per-input output counts, which has exactly the law of
materializing a uniformly permuted codeword and pushing it through the
memoryless channel (the increment is permutation-invariant), so no codeword
needs to exist during detection runs.  Change points inside a subblock split
the composition with a multivariate hypergeometric draw.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln
from scipy.stats import norm

from .channel_core import NO_CHANGE, ChannelPair, StatePath, sample_outputs
from .jccs_codec import (
    EstimateTrace,
    JccsConfig,
    ScalingWarning,
    UnsupportedConfig,
    decode,
    estimate_state,
    generate_codebook,
)
from .scs_detector import (
    SR_INIT_LOG,
    ScsState,
    scs_update,
    sr_update,
    stop_check,
    subblock_llr,
)

_BATCH = 4096

# estimator tags keep the per-point seed streams disjoint
_TAG_FAR = 1
_TAG_WADD = 2
_TAG_PE = 3
_TAG_MLE = 4
_TAG_TRACE = 5
_TAG_DIAG = 6
_TAG_SLOPE = 7
_TAG_SCALAR = 8


class InsufficientTrials(ValueError):
    """Too few trials for the estimator's guarantees to mean anything."""


@dataclass(frozen=True)
class ExperimentSpec:
    """Channel, code, detector, and sweep description for one experiment."""

    pair: ChannelPair
    jccs: JccsConfig
    detector: DetectorConfig
    trials: int
    confidence: float = 0.99
    nu_grid: tuple = (1,)
    post_states: tuple | None = None
    messages_sampled: int = 32

    def __post_init__(self):
        if self.trials < 100:
            raise InsufficientTrials(f"trials={self.trials} < 100")
        if not 0.5 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0.5, 1)")
        n = self.jccs.n
        for nu in self.nu_grid:
            if not 1 <= nu <= n:
                raise ValueError(f"nu={nu} outside [1, n={n}]")
        if self.post_states is None:
            object.__setattr__(self, "post_states", self.pair.sensing.states)

    @property
    def master_seed(self) -> int:
        return self.jccs.master_seed


@dataclass
class EstimateWithCI:
    """Point estimate with a confidence half-width and censoring bookkeeping."""

    value: float
    ci_halfwidth: float
    censored_frac: float
    trials: int
    confidence: float
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# confidence-interval helpers


def z_quantile(confidence: float, two_sided: bool = True) -> float:
    p = 0.5 + confidence / 2.0 if two_sided else confidence
    return float(norm.ppf(p))


def mean_ci(samples: np.ndarray, confidence: float) -> tuple[float, float]:
    """Sample mean and two-sided normal half-width."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    mean = float(samples.mean())
    if n < 2:
        return mean, math.inf
    half = z_quantile(confidence) * float(samples.std(ddof=1)) / math.sqrt(n)
    return mean, half


def wilson_interval(successes: int, n: int, confidence: float,
                    two_sided: bool = True) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = z_quantile(confidence, two_sided=two_sided)
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


def wilson_upper(successes: int, n: int, confidence: float) -> float:
    """One-sided Wilson upper confidence bound."""
    return wilson_interval(successes, n, confidence, two_sided=False)[1]


# ---------------------------------------------------------------------------
# batch plumbing


def _worker_count() -> int:
    env = os.environ.get("ISACQCD_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _merge(parts):
    first = parts[0]
    if isinstance(first, np.ndarray):
        return np.concatenate(parts)
    if isinstance(first, (int, np.integer)):
        return int(sum(parts))
    if isinstance(first, dict):
        return {key: _merge([p[key] for p in parts]) for key in first}
    raise TypeError(f"cannot merge batch results of type {type(first)!r}")


def _run_batched(master_seed: int, point_key: tuple, total: int, fn):
    """Split ``total`` trials into fixed batches and run ``fn(seed_seq, size)``.

    Results merge in batch-index order, so the output is independent of the
    worker count and scheduling.
    """
    sizes = [_BATCH] * (total // _BATCH)
    if total % _BATCH:
        sizes.append(total % _BATCH)
    seeds = [
        np.random.SeedSequence(master_seed, spawn_key=tuple(point_key) + (i,))
        for i in range(len(sizes))
    ]
    workers = min(_worker_count(), len(sizes))
    if workers <= 1:
        parts = [fn(seed, size) for seed, size in zip(seeds, sizes)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, seeds, sizes))
    return _merge(parts)


# ---------------------------------------------------------------------------
# vectorized detection engine


def _group_increment(rng, comp, llr_tab, d, base_rows, post_rows, g, worst_y):
    """LLR increments for g trials whose subblock uses composition ``comp``.

    ``d`` payload symbols fall before the change (sampled from the base rows)
    and the rest after.  ``worst_y`` forces every pre-change output to a fixed
    symbol instead of sampling (adversarial-prefix mode).
    """
    nx = comp.size
    L = int(comp.sum())
    inc = np.zeros(g)
    pre_counts = None
    if 0 < d < L:
        pre_counts = rng.multivariate_hypergeometric(comp, d, size=g)
    for x in range(nx):
        c = int(comp[x])
        if c == 0:
            continue
        llr_row = llr_tab[x]
        if d == L:
            n_pre, n_post = c, 0
        elif d == 0:
            n_pre, n_post = 0, c
        else:
            n_pre = pre_counts[:, x]
            n_post = c - n_pre
        if np.any(n_pre):
            if worst_y is not None:
                inc += n_pre * llr_row[worst_y]
            else:
                counts = rng.multinomial(n_pre, base_rows[x], size=g if np.isscalar(n_pre) else None)
                inc += counts @ llr_row
        if np.any(n_post):
            counts = rng.multinomial(n_post, post_rows[x], size=g if np.isscalar(n_post) else None)
            inc += counts @ llr_row
    return inc


class _EngineTables:
    """Per-run constant lookups shared by the engine loops."""

    def __init__(self, pair: ChannelPair, jccs: JccsConfig):
        sensing = pair.sensing
        self.states = np.asarray(sensing.states)
        self.nx = sensing.input_alphabet_size
        self.logp = sensing.log_transition()
        self.cdf = np.cumsum(sensing.transition, axis=2)
        self.llr_tabs = [sensing.llr_table(s) for s in sensing.states]
        self.comps = [np.asarray(jccs.compositions[s].counts) for s in sensing.states]
        self.base_rows = sensing.transition[0]

    def post_rows(self, pair, s_post):
        return pair.sensing.transition[s_post]


def _pre_change_payload(nu: float, j: int, L: int) -> int:
    """How many of subblock j's L payload symbols precede the change."""
    if nu == NO_CHANGE:
        return L
    return min(max(int(nu) - 1 - (j - 1) * (L + 1), 0), L)


def _sample_pilot(rng, tables: _EngineTables, t_state: int, size: int, worst_y):
    x = rng.integers(0, tables.nx, size=size)
    if worst_y is not None and t_state == 0:
        y = np.full(size, worst_y, dtype=np.int64)
    else:
        u = rng.random(size)
        y = (u[:, None] >= tables.cdf[t_state][x, :-1]).sum(axis=1)
    return x, y


def _estimate_indices(rng, tables: _EngineTables, j, eta, px_ring, py_ring, size):
    """Index (into the post-state list) of the ML estimate for each trial."""
    if j <= eta:
        return rng.integers(0, tables.states.size, size=size)
    cols = (np.arange(j - eta, j) - 1) % eta
    px = px_ring[:, cols]
    py = py_ring[:, cols]
    scores = np.empty((size, tables.states.size))
    for si, s in enumerate(tables.states):
        scores[:, si] = tables.logp[s][px, py].sum(axis=1)
    return np.argmax(scores, axis=1)  # first max: smallest state wins ties


def _stop_batch(pair, jccs, b, nu, s_post, seed, count, worst_y=None):
    """Stop subblock per trial (0 = censored at the horizon)."""
    tables = _EngineTables(pair, jccs)
    L, k, eta = jccs.L, jccs.k, jccs.eta
    post_rows = tables.post_rows(pair, s_post) if nu != NO_CHANGE else tables.base_rows
    rng = np.random.default_rng(seed)

    stops = np.zeros(count, dtype=np.int64)
    orig = np.arange(count)
    active = count
    W = np.zeros(count)
    px_ring = np.zeros((count, eta), dtype=np.int64)
    py_ring = np.zeros((count, eta), dtype=np.int64)

    for j in range(1, k + 1):
        if active == 0:
            break
        if j > eta:
            # nothing before subblock eta+1 can affect the statistic, so the
            # engine samples payloads only from here on
            shat_idx = _estimate_indices(rng, tables, j, eta, px_ring, py_ring, active)
            d = _pre_change_payload(nu, j, L)
            inc = np.zeros(active)
            for si in range(tables.states.size):
                mask = shat_idx == si
                g = int(mask.sum())
                if g == 0:
                    continue
                inc[mask] = _group_increment(
                    rng, tables.comps[si], tables.llr_tabs[si], d,
                    tables.base_rows, post_rows, g, worst_y,
                )
            W = np.maximum(W, 0.0) + inc
            crossed = W >= b
            if crossed.any():
                stops[orig[crossed]] = j
                keep = ~crossed
                orig, W = orig[keep], W[keep]
                px_ring, py_ring = px_ring[keep], py_ring[keep]
                active = orig.size
                if active == 0:
                    break
        t_pilot = s_post if (nu != NO_CHANGE and j * (L + 1) >= nu) else 0
        x_p, y_p = _sample_pilot(rng, tables, t_pilot, active, worst_y)
        slot = (j - 1) % eta
        px_ring[:, slot] = x_p
        py_ring[:, slot] = y_p
    return stops


def _diagnostics_batch(pair, jccs, nu, s_post, horizon, b_values, seed, count,
                       track=("sr", "nu_aware", "no_reset")):
    """Fixed-horizon run tracking the companion statistics on shared increments."""
    tables = _EngineTables(pair, jccs)
    L, eta = jccs.L, jccs.eta
    if horizon > jccs.k:
        raise ValueError("horizon exceeds the configured subblock count")
    post_rows = tables.post_rows(pair, s_post) if nu != NO_CHANGE else tables.base_rows
    j_nu = 1 if nu == NO_CHANGE else (int(nu) + L) // (L + 1)
    rng = np.random.default_rng(seed)

    W = np.zeros(count)
    W_nu = np.zeros(count)
    W_plain = np.zeros(count)  # no-reset variant
    log_r = np.zeros(count)
    stops = {name: {b: np.zeros(count, dtype=np.int64) for b in b_values}
             for name in ("scs", "nu_aware", "no_reset")}
    sr_lt_w = 0
    w_lt_nu = 0
    w_lt_plain = 0

    px_ring = np.zeros((count, eta), dtype=np.int64)
    py_ring = np.zeros((count, eta), dtype=np.int64)
    nu_start = j_nu + eta - 1

    for j in range(1, horizon + 1):
        if j > eta:
            shat_idx = _estimate_indices(rng, tables, j, eta, px_ring, py_ring, count)
            d = _pre_change_payload(nu, j, L)
            inc = np.zeros(count)
            for si in range(tables.states.size):
                mask = shat_idx == si
                g = int(mask.sum())
                if g == 0:
                    continue
                inc[mask] = _group_increment(
                    rng, tables.comps[si], tables.llr_tabs[si], d,
                    tables.base_rows, post_rows, g, None,
                )
            W = np.maximum(W, 0.0) + inc
            W_plain = W_plain + inc
            if "sr" in track:
                log_r = np.logaddexp(log_r, 0.0) + inc
                sr_lt_w += int((log_r < W).sum())
            if "nu_aware" in track and j > nu_start:
                W_nu = np.maximum(W_nu, 0.0) + inc
                # before this window W_nu is pinned at 0 while W may go
                # negative, so the ordering only binds once both are live
                w_lt_nu += int((W < W_nu).sum())
            if "no_reset" in track:
                w_lt_plain += int((W < W_plain).sum())
            for b in b_values:
                rec = stops["scs"][b]
                rec[(rec == 0) & (W >= b)] = j
                if "nu_aware" in track and j > nu_start:
                    rec = stops["nu_aware"][b]
                    rec[(rec == 0) & (W_nu >= b)] = j
                if "no_reset" in track:
                    rec = stops["no_reset"][b]
                    rec[(rec == 0) & (W_plain >= b)] = j
        t_pilot = s_post if (nu != NO_CHANGE and j * (L + 1) >= nu) else 0
        x_p, y_p = _sample_pilot(rng, tables, t_pilot, count, None)
        slot = (j - 1) % eta
        px_ring[:, slot] = x_p
        py_ring[:, slot] = y_p

    return {
        "w_final": W,
        "log_r_final": log_r,
        "stops": stops,
        "sr_lt_w": sr_lt_w,
        "w_lt_nu_aware": w_lt_nu,
        "w_lt_no_reset": w_lt_plain,
    }


def _trace_batch(pair, jccs, nu, s_post, seed, count):
    """Estimate traces (count, k) from the pilot stream only."""
    sensing = pair.sensing
    states = np.asarray(sensing.states)
    L, k, eta = jccs.L, jccs.k, jccs.eta
    nx = sensing.input_alphabet_size
    cdf = np.cumsum(sensing.transition, axis=2)
    logp = sensing.log_transition()
    rng = np.random.default_rng(seed)

    px = rng.integers(0, nx, size=(count, k))
    pilot_states = np.array(
        [s_post if (nu != NO_CHANGE and j * (L + 1) >= nu) else 0 for j in range(1, k + 1)]
    )
    u = rng.random((count, k))
    py = np.empty((count, k), dtype=np.int64)
    for t in np.unique(pilot_states):
        cols = pilot_states == t
        py[:, cols] = (u[:, cols, None] >= cdf[t][px[:, cols], :-1]).sum(axis=2)

    out = np.empty((count, k), dtype=np.int64)
    head = rng.integers(0, states.size, size=(count, min(eta, k)))
    out[:, : min(eta, k)] = states[head]
    if k > eta:
        ll = np.stack([logp[s][px, py] for s in states])  # (S, count, k)
        cs = np.cumsum(ll, axis=2)
        for j in range(eta + 1, k + 1):
            hi = cs[:, :, j - 2]
            lo = cs[:, :, j - eta - 2] if j - eta - 2 >= 0 else 0.0
            scores = hi - lo  # (S, count)
            out[:, j - 1] = states[np.argmax(scores, axis=0)]
    return out


def simulate_estimate_traces(spec: ExperimentSpec, path: StatePath, trials: int | None = None):
    """Simulate per-subblock state-estimate traces under ``path``.

    Returns an (trials, k) integer array of estimates; randomness follows the
    shared batched seeding scheme.
    """
    total = trials if trials is not None else spec.trials
    nu = path.change_point
    point = (_TAG_TRACE, int(0 if nu == NO_CHANGE else nu), path.post_state)
    return _run_batched(
        spec.master_seed, point, total,
        lambda seed, size: _trace_batch(spec.pair, spec.jccs, nu, path.post_state, seed, size),
    )


def simulate_detection_diagnostics(spec: ExperimentSpec, path: StatePath, horizon: int,
                                   b_values=(), trials: int | None = None,
                                   track=("sr", "nu_aware", "no_reset")):
    """Companion-statistic run over a fixed horizon on shared increments.

    Returns final W and log R arrays, first-crossing subblocks for the plain,
    change-aware, and no-reset statistics at each threshold, and pathwise
    violation counters (all exactly zero when the implementation is sound).
    """
    total = trials if trials is not None else spec.trials
    nu = path.change_point
    point = (_TAG_DIAG, int(0 if nu == NO_CHANGE else nu), path.post_state, horizon)
    return _run_batched(
        spec.master_seed, point, total,
        lambda seed, size: _diagnostics_batch(
            spec.pair, spec.jccs, nu, path.post_state, horizon,
            tuple(b_values), seed, size, track,
        ),
    )


# ---------------------------------------------------------------------------
# estimators


def _stop_symbols(stops: np.ndarray, jccs: JccsConfig) -> np.ndarray:
    """Symbol-time stopping values with the n+1 censoring sentinel."""
    frame = jccs.L + 1
    return np.where(stops > 0, stops * frame, jccs.n + 1)


def estimate_far(spec: ExperimentSpec) -> EstimateWithCI:
    """False alarm rate max_m 1/mean(N(m)) under the no-change law.

    Messages are sampled uniformly (capped at ``messages_sampled``); each gets
    its own trial block.  Censored runs count at the sentinel n+1, which
    biases 1/mean upward, so the estimate is conservative.  If every run of
    every message censors, the reported value degrades to the structural
    bound 1/(n+1) with the ``all_censored`` flag set.
    """
    import random as _random

    jccs = spec.jccs
    M = jccs.M_count
    n_msgs = min(M, spec.messages_sampled)
    picker = _random.Random(spec.master_seed ^ 0x5A17)
    message_ids = sorted(picker.randrange(1, M + 1) for _ in range(n_msgs))

    base, extra = divmod(spec.trials, n_msgs)
    if base < 1:
        raise InsufficientTrials(f"trials={spec.trials} cannot cover {n_msgs} messages")
    b = spec.detector.threshold_b
    z = z_quantile(spec.confidence, two_sided=False)

    per_message = []
    total_censored = 0
    worst = None
    for slot in range(n_msgs):
        t_m = base + (1 if slot < extra else 0)
        stops = _run_batched(
            spec.master_seed, (_TAG_FAR, slot), t_m,
            lambda seed, size: _stop_batch(spec.pair, jccs, b, NO_CHANGE, 0, seed, size),
        )
        N = _stop_symbols(stops, jccs).astype(float)
        censored = int((stops == 0).sum())
        total_censored += censored
        mean = float(N.mean())
        se = float(N.std(ddof=1)) / math.sqrt(t_m) if t_m > 1 else math.inf
        far_m = 1.0 / mean
        lcb = mean - z * se
        ucb_m = 1.0 / lcb if lcb > 0 else 1.0
        rec = {
            "message": message_ids[slot], "trials": t_m, "mean_stop_symbols": mean,
            "far": far_m, "far_ucb": ucb_m, "censored": censored,
        }
        per_message.append(rec)
        if worst is None or far_m > worst["far"]:
            worst = rec

    all_censored = total_censored == spec.trials
    value = 1.0 / (jccs.n + 1) if all_censored else worst["far"]
    ucb = max(rec["far_ucb"] for rec in per_message)
    return EstimateWithCI(
        value=value,
        ci_halfwidth=max(0.0, ucb - value),
        censored_frac=total_censored / spec.trials,
        trials=spec.trials,
        confidence=spec.confidence,
        extras={
            "far_ucb": ucb,
            "threshold_b": b,
            "messages": message_ids,
            "per_message": per_message,
            "all_censored": all_censored,
        },
    )


def _delay_point(spec: ExperimentSpec, nu: int, s: int, b: float, point_key,
                 worst_y=None) -> EstimateWithCI:
    stops = _run_batched(
        spec.master_seed, point_key, spec.trials,
        lambda seed, size: _stop_batch(spec.pair, spec.jccs, b, nu, s, seed, size, worst_y),
    )
    N = _stop_symbols(stops, spec.jccs).astype(float)
    delays = np.maximum(N - nu + 1.0, 0.0)
    censored = int((stops == 0).sum())
    mean, half = mean_ci(delays, spec.confidence)
    return EstimateWithCI(
        value=mean,
        ci_halfwidth=half,
        censored_frac=censored / spec.trials,
        trials=spec.trials,
        confidence=spec.confidence,
        extras={
            "nu": nu, "post_state": s, "threshold_b": b,
            "uncensored": spec.trials - censored,
            "mean_stop_symbols": float(N.mean()),
            "worst_prefix_y": worst_y,
        },
    )


def estimate_wadd(spec: ExperimentSpec, s: int, worst_prefix: bool = False) -> dict:
    """Mean detection delay (N - nu + 1)^+ per change point, plus the grid max.

    Censored runs contribute the sentinel delay n + 2 - nu (conservative).
    ``worst_prefix`` additionally searches a fixed adversarial value for every
    pre-change sensing output and keeps the worst mean per nu; the grid max is
    a lower bound on the essential-supremum delay either way.
    """
    b = spec.detector.threshold_b
    ny = spec.pair.sensing.output_alphabet_size
    per_nu = {}
    for i, nu in enumerate(spec.nu_grid):
        if worst_prefix and nu > 1:
            candidates = [
                _delay_point(spec, int(nu), s, b, (_TAG_WADD, s, i, 1 + o), worst_y=o)
                for o in range(ny)
            ]
            per_nu[nu] = max(candidates, key=lambda e: e.value)
        else:
            per_nu[nu] = _delay_point(spec, int(nu), s, b, (_TAG_WADD, s, i, 0))
    worst_nu = max(per_nu, key=lambda nu: per_nu[nu].value)
    return {"per_nu": per_nu, "wadd": per_nu[worst_nu], "argmax_nu": worst_nu}


def estimate_delay_slope(spec: ExperimentSpec, s: int, b_values) -> dict:
    """Least-squares slope of mean delay (at nu=1) against the threshold b.

    Needs at least three increasing thresholds.  Returns the per-b estimates,
    the fitted slope (symbols per nat), and its reciprocal, the empirical
    detection-speed constant.
    """
    b_values = [float(b) for b in b_values]
    if len(b_values) < 3 or any(b2 <= b1 for b1, b2 in zip(b_values, b_values[1:])):
        raise ValueError("need >= 3 strictly increasing threshold values")
    per_b = {}
    for i, b in enumerate(b_values):
        per_b[b] = _delay_point(spec, 1, s, b, (_TAG_SLOPE, s, i))
    xs = np.array(b_values)
    ys = np.array([per_b[b].value for b in b_values])
    slope, intercept = np.polyfit(xs, ys, 1)
    return {
        "per_b": per_b,
        "slope": float(slope),
        "intercept": float(intercept),
        "delta_hat_nats": 1.0 / float(slope),
    }


def estimate_mle_error(spec: ExperimentSpec, s: int, eta_grid) -> dict:
    """Empirical state-estimation error against the (|S|-1) rho^eta bound.

    Measures P(s_hat != s) at the first index where the window holds eta
    post-change pilots (change at nu=1).  Returns one estimate per eta with a
    one-sided Wilson upper bound and the analytic bound in ``extras``.
    """
    from .channel_core import rho_max

    sensing = spec.pair.sensing
    states = np.asarray(sensing.states)
    rho = rho_max(sensing)
    results = {}
    for idx, eta in enumerate(eta_grid):
        eta = int(eta)
        if eta < 1:
            raise ValueError("eta values must be >= 1")

        def batch(seed, size, eta=eta):
            rng = np.random.default_rng(seed)
            nx = sensing.input_alphabet_size
            px = rng.integers(0, nx, size=(size, eta))
            u = rng.random((size, eta))
            cdf = np.cumsum(sensing.transition, axis=2)
            py = (u[..., None] >= cdf[s][px][..., :-1]).sum(axis=2)
            logp = sensing.log_transition()
            scores = np.stack([logp[q][px, py].sum(axis=1) for q in states])
            shat = states[np.argmax(scores, axis=0)]
            return (shat != s).astype(np.int8)

        errors = _run_batched(spec.master_seed, (_TAG_MLE, idx), spec.trials, batch)
        wrong = int(errors.sum())
        rate = wrong / spec.trials
        lo, hi = wilson_interval(wrong, spec.trials, spec.confidence)
        results[eta] = EstimateWithCI(
            value=rate,
            ci_halfwidth=(hi - lo) / 2.0,
            censored_frac=0.0,
            trials=spec.trials,
            confidence=spec.confidence,
            extras={
                "wilson_upper": wilson_upper(wrong, spec.trials, spec.confidence),
                "bound": (len(states) - 1) * rho**eta,
                "rho": rho,
                "wrong": wrong,
            },
        )
    return results


# -- decoding error ---------------------------------------------------------


def _comm_outputs(rng, comm, state_arr, x_arr):
    cdf = np.cumsum(comm.transition, axis=2)
    u = rng.random(x_arr.size)
    out = np.empty(x_arr.size, dtype=np.int64)
    for t in np.unique(state_arr):
        mask = state_arr == t
        out[mask] = (u[mask, None] >= cdf[t][x_arr[mask], :-1]).sum(axis=1)
    return out


def _pe_enumerate_batch(pair, jccs, path, seed, size):
    """Per-trial fresh-codebook maximum-likelihood decoding at desk scale."""
    rng = np.random.default_rng(seed)
    sensing, comm = pair.sensing, pair.comm
    L, k, eta, frame = jccs.L, jccs.k, jccs.eta, jccs.L + 1
    M = jccs.M_count
    errors = np.zeros(size, dtype=np.int8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScalingWarning)
        for t in range(size):
            cfg = replace(jccs, master_seed=int(rng.integers(0, 2**62)))
            book = generate_codebook(cfg)
            m_true = int(rng.integers(1, M + 1))
            pilot_pairs = []
            estimates = []
            ytilde = np.empty(cfg.n, dtype=np.int64)
            for j in range(1, k + 1):
                if j <= eta:
                    shat = int(sensing.states[rng.integers(0, len(sensing.states))])
                else:
                    shat = estimate_state(pilot_pairs, sensing, eta)
                estimates.append(shat)
                base = (j - 1) * frame
                x_pay = book.payload_subblock(m_true, j, shat)
                states_pay = np.array([path.state_at(base + i + 1) for i in range(L)])
                ytilde[base : base + L] = _comm_outputs(rng, comm, states_pay, x_pay)
                x_p = book.pilot(j)
                t_state = path.state_at(j * frame)
                y_p, yt_p = sample_outputs(pair, x_p, t_state, rng)
                ytilde[base + L] = yt_p
                pilot_pairs.append((x_p, y_p))
            m_hat = decode(book, cfg, estimates, ytilde, comm)
            errors[t] = 1 if m_hat != m_true else 0
    return errors


def _pe_conditional_eligible(comm) -> tuple[bool, str]:
    if comm.input_alphabet_size != 2:
        return False, "conditional decoder analysis needs a binary input alphabet"
    if not comm.is_state_independent():
        return False, "conditional decoder analysis needs a state-independent comm channel"
    row0 = comm.row(0, 0)
    o0 = int(np.argmax(row0))
    if row0[o0] != 1.0:
        return False, "conditional decoder analysis needs a deterministic x=0 comm row"
    return True, ""


def _pe_conditional_batch(pair, jccs, path, seed, size):
    """Exact message-averaged conditional error probability per trial.

    For a binary-input, state-independent comm channel whose x=0 row is a
    point mass at o0, a competing codeword's subblock score is either an
    exact tie with the true codeword (iff its ones cover every non-o0
    output) or -inf.  Coverage is hypergeometric in the codeword ensemble,
    so conditioning on the trial's outputs gives the error probability
    averaged over messages and codebooks in closed form.  The estimator's
    mean is exactly the ensemble-average error rate, and each trial value
    lies in [0, 1].
    """
    comm = pair.comm
    row0 = comm.row(0, 0)
    o0 = int(np.argmax(row0))
    p_flip = 1.0 - comm.row(0, 1)[o0]  # P(output != o0 | x=1)
    L, k = jccs.L, jccs.k
    M = jccs.M_count
    ln_M = math.log(M)

    seed_trace, seed_noise = seed.spawn(2)
    traces = _trace_batch(pair, jccs, path.change_point, path.post_state, seed_trace, size)
    rng = np.random.default_rng(seed_noise)
    c1_lut = np.zeros(max(jccs.compositions) + 1, dtype=np.int64)
    for s_, comp in jccs.compositions.items():
        c1_lut[s_] = comp.counts[1]
    c1 = c1_lut[traces]
    w = rng.binomial(c1, p_flip)

    # log coverage probability per subblock: C(L-w, c1-w) / C(L, c1)
    def log_binom(n, r):
        return gammaln(n + 1) - gammaln(r + 1) - gammaln(n - r + 1)

    log_cov = log_binom(L - w, c1 - w) - log_binom(L, c1)
    log_q = log_cov.sum(axis=1)

    ln_Mq = ln_M + log_q
    with np.errstate(over="ignore", under="ignore"):
        q = np.exp(log_q)
        ln_q_eff = np.where(
            log_q > -50.0,
            np.log(-np.log1p(-np.minimum(q, 1.0))),
            log_q,
        )
        t = -np.exp(np.minimum(ln_M + ln_q_eff, 709.0))
    small = ln_Mq < -37.0
    big = ln_Mq > 700.0
    mid = ~(small | big)
    p_err = np.empty(size)
    m_factor = (M - 1) / M if M < 2**50 else 1.0
    p_err[small] = 0.5 * np.exp(ln_Mq[small]) * m_factor
    p_err[big] = -np.expm1(-ln_Mq[big])
    p_err[mid] = 1.0 + np.expm1(t[mid]) * np.exp(-ln_Mq[mid])
    return np.clip(p_err, 0.0, 1.0)


def estimate_pe(spec: ExperimentSpec, method: str = "auto",
                post_state: int | None = None) -> EstimateWithCI:
    """Average decoding-error probability under a change at nu = 1.

    ``method`` is ``enumerate`` (per-trial fresh codebook, full ML decoding;
    desk-scale message counts only), ``conditional`` (closed-form
    message-and-codebook-averaged conditional error per trial; needs the
    binary-input deterministic-zero-row structure), or ``auto`` to pick
    enumeration when the message count allows it.
    """
    s = post_state if post_state is not None else spec.pair.sensing.states[0]
    path = StatePath(change_point=1, post_state=s)
    M = spec.jccs.M_count
    if method == "auto":
        method = "enumerate" if M <= 4096 else "conditional"
    if method == "enumerate":
        if M > 4096:
            raise UnsupportedConfig(f"enumeration over M={M} messages is not desk-scale")
        errors = _run_batched(
            spec.master_seed, (_TAG_PE, 0), spec.trials,
            lambda seed, size: _pe_enumerate_batch(spec.pair, spec.jccs, path, seed, size),
        )
        wrong = int(errors.sum())
        rate = wrong / spec.trials
        lo, hi = wilson_interval(wrong, spec.trials, spec.confidence)
        return EstimateWithCI(
            value=rate, ci_halfwidth=(hi - lo) / 2.0, censored_frac=0.0,
            trials=spec.trials, confidence=spec.confidence,
            extras={"method": "enumerate", "wrong": wrong, "message_count": M,
                    "wilson_upper": wilson_upper(wrong, spec.trials, spec.confidence)},
        )
    if method == "conditional":
        ok, why = _pe_conditional_eligible(spec.pair.comm)
        if not ok:
            raise UnsupportedConfig(why)
        vals = _run_batched(
            spec.master_seed, (_TAG_PE, 1), spec.trials,
            lambda seed, size: _pe_conditional_batch(spec.pair, spec.jccs, path, seed, size),
        )
        mean, half = mean_ci(vals, spec.confidence)
        return EstimateWithCI(
            value=mean, ci_halfwidth=half, censored_frac=0.0,
            trials=spec.trials, confidence=spec.confidence,
            extras={"method": "conditional", "message_count": M},
        )
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# scalar reference trial


def run_single_trial(spec: ExperimentSpec, path: StatePath, message: int = 1,
                     trial_seed: int = 0) -> dict:
    """Full-fidelity single trial: codebook, feedback loop, detector, SR statistic.

    Slow scalar reference used by the trace subcommand and cross-checks; the
    vectorized engine must agree with it in distribution.
    """
    from .jccs_codec import encode_step

    jccs, det = spec.jccs, spec.detector
    pair = spec.pair
    L, k, eta, frame = jccs.L, jccs.k, jccs.eta, jccs.L + 1
    book = generate_codebook(jccs)
    rng = np.random.default_rng(
        np.random.SeedSequence(spec.master_seed, spawn_key=(_TAG_SCALAR, trial_seed))
    )
    estimates: list[int] = []
    pilot_pairs: list[tuple[int, int]] = []
    feedback: list[int] = []
    rows = []
    state = ScsState(eta=eta)
    log_r = SR_INIT_LOG
    stop_symbols = None
    y_payload = np.empty(L, dtype=np.int64)
    x_payload = np.empty(L, dtype=np.int64)
    for j in range(1, k + 1):
        if j <= eta:
            shat = int(pair.sensing.states[rng.integers(0, len(pair.sensing.states))])
        else:
            shat = estimate_state(pilot_pairs, pair.sensing, eta)
        estimates.append(shat)
        for i in range(L):
            x = encode_step(jccs, book, message, estimates, feedback)
            sym = (j - 1) * frame + i + 1
            y, _yt = sample_outputs(pair, x, path.state_at(sym), rng)
            feedback.append(y)
            x_payload[i] = x
            y_payload[i] = y
        x_p = encode_step(jccs, book, message, estimates, feedback)
        y_p, _yt = sample_outputs(pair, x_p, path.state_at(j * frame), rng)
        feedback.append(y_p)
        pilot_pairs.append((x_p, y_p))
        state = scs_update(state, shat, x_payload, y_payload, pair.sensing)
        if j > eta:
            log_r = sr_update(log_r, shat, x_payload, y_payload, pair.sensing)
        rows.append({
            "j": j, "s_hat": shat,
            "increment": subblock_llr(pair.sensing, shat, x_payload, y_payload) if j > eta else 0.0,
            "W": state.w, "log_R": log_r if j > eta else 0.0,
        })
        if stop_symbols is None:
            hit = stop_check(state, det)
            if hit is not None:
                stop_symbols = hit
    if stop_symbols is None:
        stop_symbols = jccs.n + 1
    return {
        "rows": rows,
        "stop_symbols": stop_symbols,
        "censored": stop_symbols == jccs.n + 1,
        "estimates": np.array(estimates),
        "trace": EstimateTrace(
            estimates=np.array(estimates),
            correct=np.array([s == path.state_at(j * frame) for j, s in enumerate(estimates, 1)]),
        ),
    }
