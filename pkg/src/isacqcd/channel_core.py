"""State-dependent channel models and information functionals.

Discrete memoryless families carry one row-stochastic transition matrix per
state, with state 0 reserved for the base (pre-change) law.  A channel pair
couples a sensing (echo) family with a communication family sharing the input
alphabet; given (x, s) the two outputs are sampled independently.  MIMO
Gaussian models carry per-state gain matrices under an identity-covariance
noise convention.

All divergences, log-likelihood ratios, and thresholds are natural-log
internally; mutual information and anything user-facing that says "bits" is
converted at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)

#: Change-point sentinel: the whole horizon stays in the base state.
NO_CHANGE = math.inf

# Rows closer than this (sup norm) are treated as identical when checking
# state distinguishability; configs are written with exact decimals, so any
# genuine difference is far larger.
_ROW_EQ_TOL = 1e-15

_STOCHASTIC_TOL = 1e-12


class AbsoluteContinuityViolation(ValueError):
    """p puts mass where q does not, so log(p/q) statistics are unbounded."""


class DegenerateFamily(ValueError):
    """Two states of the family are statistically indistinguishable."""


def _as_prob_matrix(rows, name: str) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D row-stochastic matrix, got shape {arr.shape}")
    if np.any(arr < 0):
        raise ValueError(f"{name}: negative probability entry")
    gaps = np.abs(arr.sum(axis=1) - 1.0)
    if np.any(gaps > _STOCHASTIC_TOL):
        x = int(np.argmax(gaps))
        raise ValueError(f"{name}: row {x} sums to {arr[x].sum()!r}, not 1")
    return arr


class DiscreteChannelFamily:
    """A finite family {p^(s)(y|x)} with base state 0 and post-change states 1..S.

    ``transition`` has shape (S+1, |X|, |Y|) with transition[0] the base law.
    Construction enforces:

    * every row is a probability vector (1e-12 tolerance);
    * absolute continuity both ways between each state and the base, per
      input, so every log-likelihood ratio is finite;
    * unless ``require_distinguishable=False``, every ordered pair
      (s1 post-change, s2 in {0} | post) differs on at least one input row.
      Communication-side families are often deliberately state-independent
      and opt out of that check.
    """

    def __init__(self, transition, require_distinguishable: bool = True):
        arr = np.asarray(transition, dtype=float)
        if arr.ndim != 3 or arr.shape[0] < 2:
            raise ValueError(
                "transition must have shape (num_states+1, |X|, |Y|) with at least one post state"
            )
        for s in range(arr.shape[0]):
            _as_prob_matrix(arr[s], f"state {s}")
        base_support = arr[0] > 0
        for s in range(1, arr.shape[0]):
            support = arr[s] > 0
            if np.any(support != base_support):
                x, y = np.argwhere(support != base_support)[0]
                raise AbsoluteContinuityViolation(
                    f"state {s}, input {x}, output {y}: support differs from the base state"
                )
        if require_distinguishable:
            self._check_distinguishable(arr)
        arr.setflags(write=False)
        self.transition = arr
        self.states: tuple[int, ...] = tuple(range(1, arr.shape[0]))
        self.input_alphabet_size: int = arr.shape[1]
        self.output_alphabet_size: int = arr.shape[2]
        with np.errstate(divide="ignore"):
            logp = np.where(arr > 0, np.log(np.where(arr > 0, arr, 1.0)), -np.inf)
        logp.setflags(write=False)
        self._log_transition = logp

    @staticmethod
    def _check_distinguishable(arr: np.ndarray) -> None:
        num = arr.shape[0]
        for s1 in range(1, num):
            for s2 in range(num):
                if s1 == s2:
                    continue
                if np.max(np.abs(arr[s1] - arr[s2])) <= _ROW_EQ_TOL:
                    raise DegenerateFamily(
                        f"states ({s1}, {s2}) have identical transition rows for every input"
                    )

    @property
    def num_post_states(self) -> int:
        return len(self.states)

    def row(self, s: int, x: int) -> np.ndarray:
        return self.transition[s, x]

    def log_row(self, s: int, x: int) -> np.ndarray:
        return self._log_transition[s, x]

    def log_transition(self) -> np.ndarray:
        """(S+1, |X|, |Y|) table of log p, with -inf at zero-probability cells."""
        return self._log_transition

    def llr_table(self, s: int) -> np.ndarray:
        """(|X|, |Y|) table of log(p^(s)/p^(0)); zero-probability cells give 0."""
        with np.errstate(invalid="ignore"):
            table = self._log_transition[s] - self._log_transition[0]
        return np.where(np.isnan(table), 0.0, table)

    def is_state_independent(self) -> bool:
        return all(
            np.max(np.abs(self.transition[s] - self.transition[0])) <= _ROW_EQ_TOL
            for s in self.states
        )

    def __repr__(self) -> str:
        return (
            f"DiscreteChannelFamily(|X|={self.input_alphabet_size}, "
            f"|Y|={self.output_alphabet_size}, post_states={self.states})"
        )


@dataclass(frozen=True)
class ChannelPair:
    """Sensing (echo) and communication families driven by one input symbol.

    Given (x, s) the sensing output y and comm output y-tilde are conditionally
    independent; that product form is the only coupling.
    """

    sensing: DiscreteChannelFamily
    comm: DiscreteChannelFamily

    def __post_init__(self):
        if self.sensing.input_alphabet_size != self.comm.input_alphabet_size:
            raise ValueError("sensing and comm families must share the input alphabet")
        if self.sensing.states != self.comm.states:
            raise ValueError("sensing and comm families must share the state set")


@dataclass(frozen=True)
class StatePath:
    """Step change: base state before ``change_point``, ``post_state`` from it on.

    ``change_point`` is a 1-based symbol index, or ``NO_CHANGE`` (math.inf) for
    a horizon that never leaves the base state.
    """

    change_point: float
    post_state: int

    def __post_init__(self):
        nu = self.change_point
        if nu != NO_CHANGE and (nu != int(nu) or nu < 1):
            raise ValueError(f"change_point must be a positive integer or NO_CHANGE, got {nu!r}")
        if self.post_state < 1:
            raise ValueError("post_state must be a post-change label (>= 1)")

    def state_at(self, i: int) -> int:
        """State governing symbol i (1-based)."""
        return self.post_state if i >= self.change_point else 0


# ---------------------------------------------------------------------------
# information functionals


def kl_divergence(p, q) -> float:
    """KL divergence sum(p * log(p/q)) in nats, with 0*log(0/q) = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    mask = p > 0
    if np.any(q[mask] == 0):
        y = int(np.argmax(mask & (q == 0)))
        raise AbsoluteContinuityViolation(f"p({y}) > 0 while q({y}) = 0")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def conditional_kl(family: DiscreteChannelFamily, s1: int, s2: int, p_x) -> float:
    """sum_x p_x(x) * D(p^(s1)(.|x) || p^(s2)(.|x)) in nats; linear in p_x."""
    p_x = np.asarray(p_x, dtype=float)
    if p_x.shape != (family.input_alphabet_size,):
        raise ValueError("p_x must be a distribution over the input alphabet")
    return float(
        sum(
            p_x[x] * kl_divergence(family.row(s1, x), family.row(s2, x))
            for x in range(family.input_alphabet_size)
            if p_x[x] > 0
        )
    )


def mutual_information(family: DiscreteChannelFamily, s: int, p_x) -> float:
    """I(X; Y) in bits under input law p_x and the state-s transition matrix."""
    p_x = np.asarray(p_x, dtype=float)
    W = family.transition[s]
    p_y = p_x @ W
    total = 0.0
    for x in range(family.input_alphabet_size):
        if p_x[x] > 0:
            total += p_x[x] * kl_divergence(W[x], p_y)
    return total / LN2


def llr(family: DiscreteChannelFamily, s: int, y: int, x: int) -> float:
    """log(p^(s)(y|x) / p^(0)(y|x)) in nats."""
    num = family.transition[s, x, y]
    den = family.transition[0, x, y]
    if num == 0.0 and den == 0.0:
        return 0.0
    if num == 0.0 or den == 0.0:
        # cannot happen for a constructed family; guards ad-hoc matrices
        raise AbsoluteContinuityViolation(f"state {s}, x={x}, y={y}: one-sided zero probability")
    return math.log(num / den)


def gamma_max_llr(family: DiscreteChannelFamily) -> float:
    """max over (s, x, y) of |llr|, restricted to positive-probability cells."""
    best = 0.0
    for s in family.states:
        best = max(best, float(np.max(np.abs(family.llr_table(s)))))
    return best


def bhattacharyya(family: DiscreteChannelFamily, s1: int, s2: int, x: int) -> float:
    """sum_y sqrt(p^(s1)(y|x) * p^(s2)(y|x)), in (0, 1]."""
    return float(np.sum(np.sqrt(family.row(s1, x) * family.row(s2, x))))


def rho_max(family: DiscreteChannelFamily) -> float:
    """Largest input-averaged Bhattacharyya coefficient over post-state pairs.

    Runs over unordered pairs of post-change states only.  A single post state
    gives 0 by the empty-max convention (the estimation-error bound
    (|S|-1) * rho^eta is then vacuously 0, matching a never-wrong estimator).
    Equality with 1 means two post states are indistinguishable.
    """
    states = family.states
    if len(states) < 2:
        return 0.0
    nx = family.input_alphabet_size
    best = 0.0
    for i, s1 in enumerate(states):
        for s2 in states[i + 1 :]:
            avg = sum(bhattacharyya(family, s1, s2, x) for x in range(nx)) / nx
            best = max(best, avg)
    if best >= 1.0 - 1e-15:
        raise DegenerateFamily("a pair of post states has averaged Bhattacharyya coefficient 1")
    return best


def second_moment_bound(family: DiscreteChannelFamily) -> float:
    """max over (s, x) of E_{p^(s)(.|x)}[llr^2]; a valid second-moment constant."""
    best = 0.0
    for s in family.states:
        table = family.llr_table(s)
        best = max(best, float(np.max(np.sum(family.transition[s] * table**2, axis=1))))
    return best


def sample_outputs(pair: ChannelPair, x: int, s: int, rng: np.random.Generator):
    """Draw (sensing y, comm y-tilde) independently given (x, s)."""
    y = int(rng.choice(pair.sensing.output_alphabet_size, p=pair.sensing.row(s, x)))
    yt = int(rng.choice(pair.comm.output_alphabet_size, p=pair.comm.row(s, x)))
    return y, yt


# ---------------------------------------------------------------------------
# MIMO Gaussian model


def steering_vector(M: int, theta: float) -> np.ndarray:
    """ULA steering vector: component m is exp(1j*pi*m*sin(theta)), m = 0..M-1."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return np.exp(1j * np.pi * np.arange(M) * math.sin(theta))


class MimoChannelModel:
    """Gaussian MIMO echo/comm model with unit-covariance noise.

    ``sensing_gains`` / ``comm_gains`` map each post state to a gain matrix
    with ``tx_antennas`` columns (real or complex; complex noise is treated as
    circularly symmetric with total covariance I).  The echo is pure noise
    before the change.  Rates use the real pre-log 1/2; detection speed is
    reported in nats.
    """

    def __init__(self, tx_antennas: int, sensing_gains: dict, comm_gains: dict,
                 power_budget: float):
        if tx_antennas < 1:
            raise ValueError("tx_antennas must be >= 1")
        if power_budget <= 0:
            raise ValueError("power_budget must be positive")
        if set(sensing_gains) != set(comm_gains):
            raise ValueError("sensing and comm gain maps must cover the same states")
        self.tx_antennas = tx_antennas
        self.power_budget = float(power_budget)
        self.sensing_gains = {}
        self.comm_gains = {}
        for s, H in sensing_gains.items():
            H = np.atleast_2d(np.asarray(H))
            if H.shape[1] != tx_antennas:
                raise ValueError(f"sensing gain for state {s} must have {tx_antennas} columns")
            H.setflags(write=False)
            self.sensing_gains[s] = H
        for s, H in comm_gains.items():
            H = np.atleast_2d(np.asarray(H))
            if H.shape[1] != tx_antennas:
                raise ValueError(f"comm gain for state {s} must have {tx_antennas} columns")
            H.setflags(write=False)
            self.comm_gains[s] = H
        self.states = tuple(sorted(sensing_gains))

    def gram(self, s: int) -> np.ndarray:
        """Sensing Gram matrix H^H H for state s (Hermitian PSD)."""
        H = self.sensing_gains[s]
        return H.conj().T @ H

    def rate_bits(self, s: int, sigma: np.ndarray) -> float:
        """(1/2) log2 det(I + H~ Sigma H~^H) for state s."""
        H = self.comm_gains[s]
        G = np.eye(H.shape[0]) + H @ sigma @ H.conj().T
        sign, logdet = np.linalg.slogdet(G)
        if sign.real <= 0:
            raise ValueError("non-positive determinant; sigma is not PSD")
        return float(logdet.real) / (2.0 * LN2)

    def delta_nats(self, s: int, sigma: np.ndarray) -> float:
        """(1/2) tr(H^H H Sigma) for state s, in nats."""
        return float(np.trace(self.gram(s) @ sigma).real) / 2.0


# ---------------------------------------------------------------------------
# worked example instances


def bibo_example_pair() -> ChannelPair:
    """Binary-input binary-output pair used throughout the worked examples.

    Comm: state-independent Z-channel, p(0|0)=1, p(1|1)=0.8.
    Sensing: base BSC(0.1); state 1 has crossover (0.1, 0.3); state 2 the
    mirror image (0.3, 0.1).
    """
    comm_rows = [[1.0, 0.0], [0.2, 0.8]]
    comm = DiscreteChannelFamily(
        [comm_rows, comm_rows, comm_rows], require_distinguishable=False
    )
    sensing = DiscreteChannelFamily(
        [
            [[0.9, 0.1], [0.1, 0.9]],
            [[0.9, 0.1], [0.3, 0.7]],
            [[0.7, 0.3], [0.1, 0.9]],
        ]
    )
    return ChannelPair(sensing=sensing, comm=comm)


def bibo_single_state_pair() -> ChannelPair:
    """Single-post-state reduction of the worked example (state 1 only).

    With one post state the estimator is degenerate and the detector's delay
    behaviour isolates the pure CuSum asymptotics.
    """
    comm_rows = [[1.0, 0.0], [0.2, 0.8]]
    comm = DiscreteChannelFamily([comm_rows, comm_rows], require_distinguishable=False)
    sensing = DiscreteChannelFamily(
        [
            [[0.9, 0.1], [0.1, 0.9]],
            [[0.9, 0.1], [0.3, 0.7]],
        ]
    )
    return ChannelPair(sensing=sensing, comm=comm)


def mimo_example_model() -> MimoChannelModel:
    """Two-antenna example: P = 10 with distinct sensing/comm gains per state."""
    return MimoChannelModel(
        tx_antennas=2,
        sensing_gains={
            1: np.array([[2.0, 0.0], [0.0, 1.0]]),
            2: np.array([[1.0, 0.0], [0.0, 2.0]]),
        },
        comm_gains={
            1: np.array([[1.0, 0.0], [1.0, -1.0]]),
            2: np.array([[1.0 / math.sqrt(2), 1.0 / math.sqrt(2)], [1.0, 0.0]]),
        },
        power_budget=10.0,
    )


def beam_example_model(theta_target: float = 0.0, theta_comm: float = math.pi / 2,
                       M: int = 2, power: float = 10.0) -> MimoChannelModel:
    """ULA beam-steering example: rank-one echo toward ``theta_target`` and a
    single-antenna receiver at ``theta_comm``."""
    a_r = steering_vector(M, theta_target)
    a_t = steering_vector(M, theta_target)
    H1 = np.outer(a_r, a_t.conj())
    Ht = steering_vector(M, theta_comm).conj()[np.newaxis, :]
    return MimoChannelModel(
        tx_antennas=M,
        sensing_gains={1: H1},
        comm_gains={1: Ht},
        power_budget=power,
    )
