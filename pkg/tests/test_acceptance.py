"""End-to-end acceptance runs.

One test per shipped claim, each printing its measured numbers; run with
``pytest -v`` for the per-claim pass/fail lines.  Tolerances follow the
stated targets; frozen full-precision constants carry the tight checks and
rounded published values get printed-precision comparisons.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from isacqcd.channel_core import (
    LN2,
    NO_CHANGE,
    StatePath,
    bibo_example_pair,
    bibo_single_state_pair,
    llr,
    rho_max,
)
from isacqcd.jccs_codec import Composition, JccsConfig, entropy_rate_estimate, make_composition
from isacqcd.monte_carlo import (
    ExperimentSpec,
    estimate_delay_slope,
    estimate_far,
    estimate_mle_error,
    estimate_pe,
    simulate_detection_diagnostics,
    simulate_estimate_traces,
)
from isacqcd.region import (
    blahut_arimoto,
    capacity_delta0,
    delta_eigenroute,
    fig3_dataset,
    fig4_dataset,
    fig5_dataset,
)
from isacqcd.scs_detector import DetectorConfig

# frozen full-precision constants, derived independently of the implementation
D_NATS = 0.15366358680379852
D_BITS = 0.22168969464705088
RHO = 0.966930474076265
CAP_BITS = 0.6182313659549212

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def _bibo_spec(L, k, eta, b, comp, trials, seed, rate=0.25):
    pair = bibo_example_pair()
    comps = {s: Composition(comp) for s in (1, 2)}
    jccs = JccsConfig(L=L, k=k, eta=eta, rate_bits=rate, compositions=comps,
                      master_seed=seed)
    det = DetectorConfig(threshold_b=b, L=L, eta=eta)
    return ExperimentSpec(pair=pair, jccs=jccs, detector=det, trials=trials)


def test_criterion_1_false_alarm_rate_bounded():
    start = time.monotonic()
    for alpha in (1e-1, 1e-2):
        det = DetectorConfig.from_alpha(alpha, L=24, eta=20)
        spec = _bibo_spec(L=24, k=2000, eta=20, b=det.threshold_b,
                          comp=(12, 12), trials=5000, seed=31)
        est = estimate_far(spec)
        ucb = est.extras["far_ucb"]
        print(f"criterion 1: alpha={alpha} b={det.threshold_b:+.4f} "
              f"far={est.value:.3e} ucb={ucb:.3e} censored={est.censored_frac:.3f}")
        assert ucb <= alpha, (alpha, ucb)
    elapsed = time.monotonic() - start
    print(f"criterion 1: elapsed {elapsed:.1f}s (budget 600s)")
    assert elapsed <= 600.0


def test_criterion_2_mle_error_bound():
    start = time.monotonic()
    pair = bibo_example_pair()
    rho = rho_max(pair.sensing)
    assert rho == pytest.approx(RHO, abs=1e-12)
    assert rho == pytest.approx(0.96694, abs=2e-5)  # published rounding
    spec = _bibo_spec(L=8, k=60, eta=40, b=10.0, comp=(4, 4), trials=100000, seed=5)
    out = estimate_mle_error(spec, 1, eta_grid=(10, 20, 40))
    for eta in (10, 20, 40):
        est = out[eta]
        bound = est.extras["bound"]
        upper = est.extras["wilson_upper"]
        print(f"criterion 2: eta={eta} err={est.value:.4f} "
              f"upper99={upper:.4f} bound={bound:.4f}")
        assert bound == pytest.approx((2 - 1) * rho**eta, abs=1e-12)
        assert upper <= bound, (eta, upper, bound)
    elapsed = time.monotonic() - start
    print(f"criterion 2: elapsed {elapsed:.1f}s (budget 60s)")
    assert elapsed <= 60.0


def test_criterion_3_delay_slope_sandwich():
    start = time.monotonic()
    pair = bibo_single_state_pair()
    jccs = JccsConfig(L=12, k=250, eta=1, rate_bits=0.05,
                      compositions={1: Composition((0, 12))}, master_seed=123)
    det = DetectorConfig(threshold_b=25.0, L=12, eta=1)
    spec = ExperimentSpec(pair=pair, jccs=jccs, detector=det, trials=2500,
                          nu_grid=(1,))
    b_values = (25.0, 50.0, 100.0)
    out = estimate_delay_slope(spec, 1, b_values=b_values)
    for b in b_values:
        est = out["per_b"][b]
        uncensored = round((1.0 - est.censored_frac) * est.trials)
        assert uncensored >= 2000, (b, uncensored)
        denom = b / D_NATS
        ratio = est.value / denom
        ci_ratio = est.ci_halfwidth / denom
        print(f"criterion 3: b={b} mean_delay={est.value:.2f} ratio={ratio:.4f} "
              f"ci={ci_ratio:.4f} uncensored={uncensored}")
        assert ratio >= 1.0 - 3.0 * ci_ratio, (b, ratio, ci_ratio)
        assert ratio <= 1.35, (b, ratio)
    slope = out["slope"]
    print(f"criterion 3: slope={slope:.4f} slope*D={slope * D_NATS:.4f} "
          f"(15% band around 1)")
    assert abs(slope * D_NATS - 1.0) <= 0.15
    elapsed = time.monotonic() - start
    print(f"criterion 3: elapsed {elapsed:.1f}s (budget 900s)")
    assert elapsed <= 900.0


def test_criterion_4_region_figure_endpoints():
    pair = bibo_example_pair()
    data = fig3_dataset(pair)

    dmax_open = data["delta_max_open_bits"]
    print(f"criterion 4: open-loop delta_max = {dmax_open:.10f} bits")
    assert dmax_open == pytest.approx(D_BITS / 2.0, abs=1e-6)
    assert dmax_open == pytest.approx(0.11085, abs=1e-4)  # published rounding

    free1 = data["free_state1"]
    dmax_free1 = free1.points[-1].witness["target_delta"]
    print(f"criterion 4: state-1-free delta_max = {dmax_free1:.10f} bits")
    assert dmax_free1 == pytest.approx(D_BITS, abs=1e-12)
    assert dmax_free1 == pytest.approx(0.2217, abs=1e-4)

    # rate at zero target equals the comm capacity via two independent methods
    rate0 = data["equal"].points[0].rate_bits
    ba_bits, _ = blahut_arimoto(pair.comm.transition[1])
    ba_bits /= LN2
    analytic, _ = capacity_delta0(pair)
    print(f"criterion 4: rate(0)={rate0:.9f} BA={ba_bits:.9f} closed-form={analytic:.9f}")
    assert abs(rate0 - ba_bits) <= 1e-6
    assert abs(rate0 - analytic) <= 1e-6
    assert abs(ba_bits - analytic) <= 1e-6

    violations = 0
    shared = 0
    open_map = {p.witness["target_delta"]: p.rate_bits for p in data["open"].points}
    for key in ("equal", "free_state1"):
        for p in data[key].points:
            t = p.witness["target_delta"]
            if t in open_map:
                shared += 1
                if p.rate_bits < open_map[t]:
                    violations += 1
    print(f"criterion 4: dominance checked at {shared} shared targets, "
          f"{violations} violations")
    assert shared > 50
    assert violations == 0


def test_criterion_5_mimo_figures_and_trace_identity():
    data5 = fig5_dataset()
    sweep = data5["sweep"]
    theta0, rate0, delta0 = sweep[0]
    theta1, rate1, delta1 = sweep[-1]
    assert theta0 == 0.0 and theta1 == pytest.approx(math.pi / 2, abs=1e-15)
    print(f"criterion 5: theta=0 rate={rate0:.3e} delta={delta0:.12f}")
    print(f"criterion 5: theta=pi/2 rate={rate1:.12f} delta={delta1:.3e}")
    assert rate0 == pytest.approx(0.0, abs=1e-12)
    assert delta0 == pytest.approx(20.0, abs=1e-9)
    assert rate1 == pytest.approx(0.5 * math.log2(21.0), abs=1e-9)
    assert delta1 == pytest.approx(0.0, abs=1e-12)

    data4 = fig4_dataset()
    open_map = {p.witness["target_delta"]: p.rate_bits for p in data4["open"].points}
    violations = sum(
        1
        for p in data4["equal"].points
        if p.witness["target_delta"] in open_map
        and p.rate_bits < open_map[p.witness["target_delta"]]
    )
    shared = sum(1 for p in data4["equal"].points
                 if p.witness["target_delta"] in open_map)
    print(f"criterion 5: fig4 dominance checked at {shared} targets, "
          f"{violations} violations")
    assert shared > 20
    assert violations == 0

    from isacqcd.channel_core import mimo_example_model

    model = mimo_example_model()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        A = rng.normal(size=(2, 2))
        sigma = A @ A.T
        sigma *= rng.uniform(0.05, model.power_budget) / max(np.trace(sigma), 1e-12)
        for s in model.states:
            gap = abs(model.delta_nats(s, sigma) - delta_eigenroute(model, s, sigma))
            worst = max(worst, gap)
    print(f"criterion 5: trace identity worst gap over 1000 PSD = {worst:.3e}")
    assert worst <= 1e-12


def test_criterion_6_error_probability_trend():
    pair = bibo_example_pair()
    half_rate = 0.5 * capacity_delta0(pair)[0]
    assert half_rate == pytest.approx(0.3091156829774606, abs=1e-12)
    results = {}
    for k in (6, 12, 24):
        comps = {s: make_composition((0.25, 0.75), 24) for s in (1, 2)}
        jccs = JccsConfig(L=24, k=k, eta=2, rate_bits=half_rate,
                          compositions=comps, master_seed=77)
        det = DetectorConfig(threshold_b=1e9, L=24, eta=2)
        spec = ExperimentSpec(pair=pair, jccs=jccs, detector=det, trials=200000)
        results[k] = estimate_pe(spec, method="conditional")
        est = results[k]
        print(f"criterion 6: n={25 * k} Pe={est.value:.4e} ci={est.ci_halfwidth:.2e}")
    assert results[6].value > results[12].value > results[24].value
    low_first = results[6].value - results[6].ci_halfwidth
    high_last = results[24].value + results[24].ci_halfwidth
    print(f"criterion 6: separation lo(n=150)={low_first:.3e} > hi(n=600)={high_last:.3e}")
    assert low_first > high_last


def test_criterion_7_property_suites():
    pair = bibo_example_pair()

    # martingale: E[R_j - j] = 1 - eta under the no-change law
    spec = _bibo_spec(L=8, k=13, eta=5, b=5.0, comp=(7, 1), trials=100000, seed=0)
    diag = simulate_detection_diagnostics(
        spec, StatePath(change_point=NO_CHANGE, post_state=1), horizon=13,
        b_values=(), trials=100000)
    r = np.exp(diag["log_r_final"])
    mean = float(r.mean()) - 13
    se = float(r.std(ddof=1)) / math.sqrt(r.size)
    print(f"criterion 7: E[R_j - j] = {mean:.4f} target {1 - 5} (3SE = {3 * se:.4f})")
    assert abs(mean - (1 - 5)) <= 3.0 * se

    # pathwise orderings over 1e4 seeded trials with a finite change point
    spec = _bibo_spec(L=8, k=60, eta=5, b=5.0, comp=(4, 4), trials=10000, seed=7)
    diag = simulate_detection_diagnostics(
        spec, StatePath(change_point=19, post_state=1), horizon=60,
        b_values=(2.0, 5.0), trials=10000)
    assert diag["sr_lt_w"] == 0
    assert diag["w_lt_nu_aware"] == 0
    order_violations = 0
    for b in (2.0, 5.0):
        plain = diag["stops"]["scs"][b]
        aware = diag["stops"]["nu_aware"][b]
        order_violations += int((((aware > 0) & ((plain == 0) | (plain > aware)))).sum())
    final_gap = int((diag["log_r_final"] < diag["w_final"]).sum())
    print(f"criterion 7: pathwise violations stop-order={order_violations} "
          f"sr<w={diag['sr_lt_w']} final-log-gap={final_gap} over 10000 trials")
    assert order_violations == 0
    assert final_gap == 0

    # exact-sum unit mean of exp(LLR) under the base law
    worst = 0.0
    fam = pair.sensing
    for s in (1, 2):
        for x in (0, 1):
            total = sum(fam.row(0, x)[y] * math.exp(llr(fam, s, y=y, x=x))
                        for y in range(2))
            worst = max(worst, abs(total - 1.0))
    print(f"criterion 7: max |E_p0[exp(LLR)] - 1| = {worst:.3e}")
    assert worst <= 1e-12

    # entropy-rate schedule: eta = round(12.1 * k^(1/5)) decreasing in k
    rates = []
    for k in (100, 200, 400):
        eta_k = round(12.1 * k**0.2)
        comps = {s: Composition((4, 4)) for s in (1, 2)}
        jccs = JccsConfig(L=8, k=k, eta=eta_k, rate_bits=0.25,
                          compositions=comps, master_seed=0)
        det = DetectorConfig(threshold_b=1e9, L=8, eta=eta_k)
        spec2 = ExperimentSpec(pair=pair, jccs=jccs, detector=det, trials=512)
        traces = simulate_estimate_traces(
            spec2, StatePath(change_point=1, post_state=1), trials=512)
        rates.append(entropy_rate_estimate(traces))
        print(f"criterion 7: k={k} eta={eta_k} entropy rate {rates[-1]:.4f} bits/subblock")
    assert rates[0] > rates[1] > rates[2]


def test_criterion_8_byte_identical_reruns(tmp_path):
    def run(args, threads):
        env = dict(os.environ, ISACQCD_THREADS=threads)
        r = subprocess.run([sys.executable, "-m", "isacqcd", *args],
                           capture_output=True, text=True, env=env, timeout=600)
        assert r.returncode == 0, (args, r.stderr)

    jobs = [
        ("far", "far_bibo.toml", "800"),
        ("wadd", "wadd_slope.toml", "600"),
        ("slope", "wadd_slope.toml", "600"),
        ("mle-error", "mle_error.toml", "2000"),
        ("pe", "pe_bibo.toml", "5000"),
    ]
    digests = {}
    for threads in ("1", "3"):
        outdir = tmp_path / f"t{threads}"
        outdir.mkdir()
        run(["figures", "--out", str(outdir / "figs")], threads)
        for est, cfg, trials in jobs:
            out = outdir / f"{est}.csv"
            run(["simulate", est, "--config", os.path.join(CONFIG_DIR, cfg),
                 "--out", str(out), "--trials", trials], threads)
        blobs = {}
        for name in ("figs/fig3.csv", "figs/fig4.csv", "figs/fig5.csv",
                     *(f"{est}.csv" for est, _, _ in jobs)):
            blobs[name] = (outdir / name).read_bytes()
        digests[threads] = blobs
    mismatched = [n for n in digests["1"] if digests["1"][n] != digests["3"][n]]
    print(f"criterion 8: {len(digests['1'])} artifacts compared across "
          f"thread counts, {len(mismatched)} mismatches {mismatched}")
    assert not mismatched
