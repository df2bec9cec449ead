import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isacqcd.channel_core import bibo_example_pair
from isacqcd.scs_detector import (
    SR_INIT_LOG,
    DetectorConfig,
    ScsState,
    ThresholdWarning,
    nu_aware_update,
    scs_update,
    sr_update,
    stop_check,
    subblock_llr,
)


@pytest.fixture(scope="module")
def fam():
    return bibo_example_pair().sensing


class TestThreshold:
    def test_from_alpha_formula(self):
        cfg = DetectorConfig.from_alpha(0.01, L=24, eta=20)
        assert cfg.threshold_b == pytest.approx(-math.log(0.01 * 25), abs=1e-15)
        assert cfg.threshold_b == pytest.approx(math.log(4.0), abs=1e-15)
        assert cfg.alpha == 0.01

    def test_warns_on_nonpositive_threshold(self):
        with pytest.warns(ThresholdWarning):
            DetectorConfig.from_alpha(0.1, L=24, eta=20)  # b = -ln 2.5 < 0
        with pytest.warns(ThresholdWarning):
            DetectorConfig(threshold_b=-0.5, L=8, eta=3)

    def test_positive_threshold_silent(self, recwarn):
        DetectorConfig(threshold_b=2.0, L=8, eta=3)
        assert not [w for w in recwarn if issubclass(w.category, ThresholdWarning)]


class TestSubblockLlr:
    def test_two_symbol_example(self, fam):
        # x=1 twice, echoes 0 then 1: ln 3 + ln(7/9)
        inc = subblock_llr(fam, 1, [1, 1], [0, 1])
        assert inc == pytest.approx(0.8472978603872033, abs=1e-14)

    def test_untouched_rows_contribute_zero(self, fam):
        assert subblock_llr(fam, 1, [0, 0, 0], [0, 1, 0]) == 0.0

    def test_sum_decomposition(self, fam):
        whole = subblock_llr(fam, 2, [0, 1, 0, 1], [1, 1, 0, 0])
        parts = subblock_llr(fam, 2, [0, 1], [1, 1]) + subblock_llr(fam, 2, [0, 1], [0, 0])
        assert whole == pytest.approx(parts, abs=1e-12)


class TestRecursion:
    def test_idle_until_after_eta(self, fam):
        st_ = ScsState(eta=2)
        for j in (1, 2):
            st_ = scs_update(st_, 1, [1] * 4, [0] * 4, fam)
            assert st_.j == j and st_.w == 0.0
        st_ = scs_update(st_, 1, [1] * 4, [0] * 4, fam)
        assert st_.w == pytest.approx(4 * math.log(3.0), abs=1e-12)

    def test_reset_at_zero(self, fam):
        st_ = ScsState(eta=0, j=5, w=-3.0)
        nxt = scs_update(st_, 1, [1], [0], fam)
        # max(W, 0) + inc: the negative excursion is forgotten
        assert nxt.w == pytest.approx(math.log(3.0), abs=1e-14)

    def test_carries_positive_value(self, fam):
        st_ = ScsState(eta=0, j=5, w=2.0)
        nxt = scs_update(st_, 1, [1], [1], fam)
        assert nxt.w == pytest.approx(2.0 + math.log(0.7 / 0.9), abs=1e-14)


class TestStopCheck:
    def test_running_returns_none(self, fam):
        cfg = DetectorConfig(threshold_b=5.0, L=4, eta=2)
        assert stop_check(ScsState(eta=2, j=3, w=4.9), cfg, k=10) is None

    def test_crossing_reports_symbol_time(self):
        cfg = DetectorConfig(threshold_b=5.0, L=4, eta=2)
        assert stop_check(ScsState(eta=2, j=7, w=5.0), cfg, k=10) == 35

    def test_no_stop_inside_pilot_head_start(self):
        cfg = DetectorConfig(threshold_b=0.0, L=4, eta=3)
        assert stop_check(ScsState(eta=3, j=2, w=0.0), cfg, k=10) is None

    def test_censoring_sentinel(self):
        cfg = DetectorConfig(threshold_b=50.0, L=4, eta=2)
        assert stop_check(ScsState(eta=2, j=10, w=1.0), cfg, k=10) == 51

    def test_earliest_possible_stop(self):
        cfg = DetectorConfig(threshold_b=1e-12, L=4, eta=2)
        got = stop_check(ScsState(eta=2, j=3, w=0.5), cfg, k=10)
        assert got == 3 * 5 == (cfg.eta + 1) * (cfg.L + 1)


def _increment_stream(fam, seed, count, L=4):
    rng = np.random.default_rng(seed)
    xs = rng.integers(0, 2, size=(count, L))
    ys = rng.integers(0, 2, size=(count, L))
    shats = rng.integers(1, 3, size=count)
    return xs, ys, shats


class TestCompanionStatistics:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_log_sr_dominates_w_pathwise(self, seed):
        fam = bibo_example_pair().sensing
        xs, ys, shats = _increment_stream(fam, seed, 40)
        w_state = ScsState(eta=0)
        log_r = SR_INIT_LOG
        for x, y, s in zip(xs, ys, shats):
            w_state = scs_update(w_state, int(s), x, y, fam)
            log_r = sr_update(log_r, int(s), x, y, fam)
            # logaddexp(r, 0) >= max(r, 0) holds exactly in floats
            assert log_r >= w_state.w

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_plain_w_dominates_aware_w_once_live(self, seed):
        # before the aware window opens its statistic is pinned at 0 while the
        # plain one may be negative, so the ordering binds from j_nu+eta on;
        # for positive thresholds that still forces stop(plain) <= stop(aware)
        fam = bibo_example_pair().sensing
        xs, ys, shats = _increment_stream(fam, seed, 40)
        plain = ScsState(eta=2)
        aware = ScsState(eta=2)
        j_nu = 5
        b = 1.5
        stop_plain = stop_aware = None
        for x, y, s in zip(xs, ys, shats):
            plain = scs_update(plain, int(s), x, y, fam)
            aware = nu_aware_update(aware, int(s), x, y, fam, j_nu=j_nu)
            if plain.j >= j_nu + plain.eta:
                assert plain.w >= aware.w
            if stop_plain is None and plain.j > plain.eta and plain.w >= b:
                stop_plain = plain.j
            if stop_aware is None and aware.j >= j_nu + aware.eta and aware.w >= b:
                stop_aware = aware.j
        if stop_aware is not None:
            assert stop_plain is not None and stop_plain <= stop_aware

    def test_aware_is_flat_before_its_window(self):
        fam = bibo_example_pair().sensing
        aware = ScsState(eta=2)
        j_nu = 3
        for j in range(1, 11):
            aware = nu_aware_update(aware, 1, [1] * 4, [0] * 4, fam, j_nu=j_nu)
            if j <= j_nu + aware.eta - 1:
                assert aware.w == 0.0
            else:
                assert aware.w > 0.0

    def test_sr_update_exact_recursion(self):
        fam = bibo_example_pair().sensing
        inc = subblock_llr(fam, 1, [1], [0])
        got = sr_update(1.5, 1, [1], [0], fam)
        assert got == np.logaddexp(1.5, 0.0) + inc


class TestThresholdMonotonicity:
    def test_stop_time_nondecreasing_in_b(self):
        fam = bibo_example_pair().sensing
        xs, ys, shats = _increment_stream(fam, 7, 60)
        w_path = []
        state = ScsState(eta=2)
        for x, y, s in zip(xs, ys, shats):
            state = scs_update(state, int(s), x, y, fam)
            w_path.append(state.w)

        def first_crossing(b):
            for j, w in enumerate(w_path, start=1):
                if j > 2 and w >= b:
                    return j
            return len(w_path) + 1

        crossings = [first_crossing(b) for b in (0.5, 1.0, 2.0, 4.0, 8.0)]
        assert crossings == sorted(crossings)
