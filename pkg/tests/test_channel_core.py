import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isacqcd.channel_core import (
    LN2,
    NO_CHANGE,
    AbsoluteContinuityViolation,
    DegenerateFamily,
    DiscreteChannelFamily,
    MimoChannelModel,
    StatePath,
    bhattacharyya,
    bibo_example_pair,
    conditional_kl,
    gamma_max_llr,
    kl_divergence,
    llr,
    mimo_example_model,
    mutual_information,
    rho_max,
    sample_outputs,
    second_moment_bound,
    steering_vector,
)
from tests.conftest import random_full_support_family

# closed-form constants for the worked binary example, computed independently
D_NATS = 0.15366358680379852
D_BITS = 0.22168969464705088
RHO = 0.966930474076265
V_BOUND = 0.4062959475472856
CAP_BITS = 0.6182313659549212
CAP_PX1 = 0.43566363631516214


def _prob_vectors(n, floor=0.02):
    return (
        st.lists(st.floats(floor, 1.0), min_size=n, max_size=n)
        .map(lambda v: np.array(v) / np.sum(v))
    )


class TestKnownValues:
    def test_kl_divergence_post_vs_base(self):
        got = kl_divergence([0.3, 0.7], [0.1, 0.9])
        assert got == pytest.approx(0.3 * math.log(3.0) + 0.7 * math.log(7.0 / 9.0), abs=1e-15)
        assert got == pytest.approx(D_NATS, abs=1e-15)

    def test_conditional_kl_all_ones_input(self, bibo):
        d = conditional_kl(bibo.sensing, 1, 0, [0.0, 1.0])
        assert d == pytest.approx(D_NATS, abs=1e-15)
        assert d / LN2 == pytest.approx(D_BITS, abs=1e-15)

    def test_conditional_kl_zero_against_self(self, bibo):
        assert conditional_kl(bibo.sensing, 1, 1, [0.5, 0.5]) == 0.0

    def test_llr_values(self, bibo):
        assert llr(bibo.sensing, 1, y=0, x=1) == pytest.approx(math.log(3.0), abs=1e-15)
        assert llr(bibo.sensing, 1, y=1, x=1) == pytest.approx(-0.2513144282809062, abs=1e-15)
        # state 1 leaves the x=0 row untouched
        assert llr(bibo.sensing, 1, y=0, x=0) == 0.0
        assert llr(bibo.sensing, 1, y=1, x=0) == 0.0

    def test_gamma_max_llr(self, bibo):
        assert gamma_max_llr(bibo.sensing) == pytest.approx(math.log(3.0), abs=1e-15)

    def test_rho_max(self, bibo):
        assert rho_max(bibo.sensing) == pytest.approx(RHO, abs=1e-14)

    def test_bhattacharyya_range(self, bibo):
        for x in (0, 1):
            c = bhattacharyya(bibo.sensing, 1, 2, x)
            assert 0.0 < c <= 1.0

    def test_second_moment_bound(self, bibo):
        assert second_moment_bound(bibo.sensing) == pytest.approx(V_BOUND, abs=1e-13)

    def test_mutual_information_capacity_witness(self, bibo):
        mi = mutual_information(bibo.comm, 1, [1.0 - CAP_PX1, CAP_PX1])
        assert mi == pytest.approx(CAP_BITS, abs=1e-12)
        # capacity witness: no nearby distribution does better
        for eps in (-1e-4, 1e-4):
            p1 = CAP_PX1 + eps
            assert mutual_information(bibo.comm, 1, [1.0 - p1, p1]) <= mi + 1e-12


class TestValidation:
    def test_rows_must_be_stochastic(self):
        with pytest.raises(ValueError):
            DiscreteChannelFamily([[[0.9, 0.2], [0.1, 0.9]],
                                   [[0.9, 0.1], [0.3, 0.7]]])

    def test_identical_post_states_rejected(self):
        rows = [[0.8, 0.2], [0.2, 0.8]]
        with pytest.raises(DegenerateFamily):
            DiscreteChannelFamily([[[0.9, 0.1], [0.1, 0.9]], rows, rows])

    def test_identical_post_states_allowed_when_disabled(self):
        rows = [[0.8, 0.2], [0.2, 0.8]]
        fam = DiscreteChannelFamily([[[0.9, 0.1], [0.1, 0.9]], rows, rows],
                                    require_distinguishable=False)
        assert fam.states == (1, 2)

    def test_support_mismatch_rejected(self):
        with pytest.raises(AbsoluteContinuityViolation):
            DiscreteChannelFamily([[[1.0, 0.0], [0.1, 0.9]],
                                   [[0.8, 0.2], [0.3, 0.7]]])

    def test_negative_probability_rejected(self):
        with pytest.raises(ValueError):
            DiscreteChannelFamily([[[1.1, -0.1], [0.1, 0.9]],
                                   [[0.8, 0.2], [0.3, 0.7]]])


class TestStatePath:
    def test_pre_and_post_change(self):
        path = StatePath(change_point=5, post_state=2)
        assert path.state_at(4) == 0
        assert path.state_at(5) == 2
        assert path.state_at(10**9) == 2

    def test_no_change_sentinel(self):
        path = StatePath(change_point=NO_CHANGE, post_state=1)
        assert path.state_at(1) == 0
        assert path.state_at(10**12) == 0


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_exp_llr_is_unbiased_under_base(self, seed):
        # sum_y p0(y|x) exp(llr) telescopes to sum_y ps(y|x) = 1
        rng = np.random.default_rng(seed)
        fam = random_full_support_family(rng, states=3, nx=2, ny=4)
        for s in fam.states:
            for x in range(fam.input_alphabet_size):
                total = sum(
                    fam.row(0, x)[y] * math.exp(llr(fam, s, y=y, x=x))
                    for y in range(fam.output_alphabet_size)
                )
                assert total == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_llr_bounded_by_gamma(self, seed):
        rng = np.random.default_rng(seed)
        fam = random_full_support_family(rng, states=2, nx=3, ny=3)
        gamma = gamma_max_llr(fam)
        for s in fam.states:
            for x in range(3):
                for y in range(3):
                    assert abs(llr(fam, s, y=y, x=x)) <= gamma + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(_prob_vectors(2), _prob_vectors(2), st.floats(0.0, 1.0))
    def test_conditional_kl_linear_in_input(self, p, q, lam):
        fam = bibo_example_pair().sensing
        mix = lam * p + (1.0 - lam) * q
        expect = lam * conditional_kl(fam, 1, 0, p) + (1.0 - lam) * conditional_kl(fam, 1, 0, q)
        assert conditional_kl(fam, 1, 0, mix) == pytest.approx(expect, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(_prob_vectors(2), _prob_vectors(2), st.floats(0.0, 1.0))
    def test_mutual_information_concave_in_input(self, p, q, lam):
        fam = bibo_example_pair().comm
        mix = lam * p + (1.0 - lam) * q
        lower = lam * mutual_information(fam, 1, p) + (1.0 - lam) * mutual_information(fam, 1, q)
        assert mutual_information(fam, 1, mix) >= lower - 1e-10

    def test_kl_nonnegative_random_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            p = rng.random(4) + 0.01
            q = rng.random(4) + 0.01
            p /= p.sum()
            q /= q.sum()
            assert kl_divergence(p, q) >= 0.0


def test_sample_outputs_matches_rows(bibo):
    rng = np.random.default_rng(11)
    n = 20000
    counts_y = np.zeros(2)
    counts_yt = np.zeros(2)
    for _ in range(n):
        y, yt = sample_outputs(bibo, x=1, s=1, rng=rng)
        counts_y[y] += 1
        counts_yt[yt] += 1
    # 5-sigma bands around the true rows
    for emp, row in ((counts_y / n, bibo.sensing.row(1, 1)), (counts_yt / n, bibo.comm.row(1, 1))):
        for e, t in zip(emp, row):
            assert abs(e - t) <= 5.0 * math.sqrt(t * (1 - t) / n) + 1e-9


class TestMimoModel:
    def test_example_rates_and_deltas_at_balanced_power(self):
        model = mimo_example_model()
        sigma = 5.0 * np.eye(2)
        assert model.rate_bits(1, sigma) == pytest.approx(0.5 * math.log2(41.0), abs=1e-12)
        assert model.rate_bits(2, sigma) == pytest.approx(0.5 * math.log2(23.5), abs=1e-12)
        assert model.delta_nats(1, sigma) == pytest.approx(12.5, abs=1e-12)
        assert model.delta_nats(2, sigma) == pytest.approx(12.5, abs=1e-12)

    def test_gram_matches_definition(self):
        model = mimo_example_model()
        for s in model.states:
            H = model.sensing_gains[s]
            assert np.allclose(model.gram(s), H.conj().T @ H, atol=1e-15)

    def test_full_power_delta(self):
        # putting all power on the strongest sensing eigenvector gives 1/2*4*10
        model = mimo_example_model()
        sigma = np.diag([10.0, 0.0])
        assert model.delta_nats(1, sigma) == pytest.approx(20.0, abs=1e-12)

    def test_steering_vector_unit_modulus(self):
        a = steering_vector(4, 0.3)
        assert np.allclose(np.abs(a), 1.0, atol=1e-15)
        assert np.allclose(steering_vector(3, 0.0), np.ones(3), atol=1e-15)

    def test_gain_shape_validation(self):
        with pytest.raises(ValueError):
            MimoChannelModel(tx_antennas=2, sensing_gains={1: np.ones((2, 3))},
                             comm_gains={1: np.ones((1, 2))}, power_budget=1.0)
        with pytest.raises(ValueError):
            MimoChannelModel(tx_antennas=2, sensing_gains={1: np.ones((2, 2))},
                             comm_gains={2: np.ones((1, 2))}, power_budget=1.0)
