"""Command-line front end: config parsing, orchestration, CSV emission.

Every artifact write is atomic (temp file + rename) and schema-checked, and
each output CSV gets a sibling ``<name>.manifest.json`` recording the config
hash, tool version, seed, and trial counts.  Identical config hash and seed
reproduce identical CSV bytes regardless of worker count; the manifest's
wall-clock field is the only thing allowed to differ.

Exit codes: 0 success, 1 runtime error, 2 validation failure (bad config,
violated model assumption, infeasible or unsupported request).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .channel_core import (
    LN2,
    NO_CHANGE,
    AbsoluteContinuityViolation,
    ChannelPair,
    DegenerateFamily,
    DiscreteChannelFamily,
    MimoChannelModel,
    StatePath,
    beam_example_model,
    bibo_example_pair,
    bibo_single_state_pair,
    gamma_max_llr,
    mimo_example_model,
    rho_max,
    second_moment_bound,
)
from .jccs_codec import JccsConfig, UnsupportedConfig, make_composition
from .monte_carlo import (
    ExperimentSpec,
    InsufficientTrials,
    estimate_delay_slope,
    estimate_far,
    estimate_mle_error,
    estimate_pe,
    estimate_wadd,
    run_single_trial,
)
from .region import (
    Infeasible,
    StateDependentComm,
    beam_sweep,
    blahut_arimoto,
    capacity_delta0,
    closed_loop_curve,
    fig3_dataset,
    fig4_dataset,
    fig5_dataset,
    mimo_curve,
    open_loop_curve,
)
from .scs_detector import DetectorConfig

_VALIDATION_ERRORS = (
    AbsoluteContinuityViolation,
    DegenerateFamily,
    UnsupportedConfig,
    InsufficientTrials,
    Infeasible,
    StateDependentComm,
    ValueError,
    KeyError,
    FileNotFoundError,
    tomllib.TOMLDecodeError,
)

_SCHEMAS = {
    "far": ["alpha", "b", "far_estimate", "far_ucb", "censored_frac", "trials", "seed"],
    "wadd": ["nu", "s", "b", "alpha", "mean_delay", "ci_halfwidth",
             "censored_frac", "trials", "seed"],
    "pe": ["k", "n", "rate_bits", "message_count", "pe_estimate", "ci_halfwidth",
           "method", "trials", "seed"],
    "mle-error": ["eta", "error_rate", "wilson_upper", "bound", "rho", "trials", "seed"],
    "slope": ["b", "mean_delay", "ci_halfwidth", "censored_frac", "slope",
              "delta_hat_nats", "trials", "seed"],
    "trace": ["j", "s_hat", "increment", "W", "log_R"],
    "capacity": ["state", "capacity_bits", "p_x"],
    "beam-sweep": ["theta_rad", "rate_bits", "delta_nats", "delta_bits"],
}


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    """Provenance record written next to every CSV artifact."""

    config_sha256: str
    tool_version: str
    master_seed: int
    outputs: dict
    wall_clock_seconds: float
    trials: int | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "config_sha256": self.config_sha256,
            "tool_version": self.tool_version,
            "master_seed": self.master_seed,
            "outputs": self.outputs,
            "wall_clock_seconds": self.wall_clock_seconds,
            "trials": self.trials,
            "extras": self.extras,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        return cls(
            config_sha256=d["config_sha256"],
            tool_version=d["tool_version"],
            master_seed=d["master_seed"],
            outputs=d["outputs"],
            wall_clock_seconds=d["wall_clock_seconds"],
            trials=d.get("trials"),
            extras=d.get("extras", {}),
        )


def _hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _atomic_write(path: str, text: str) -> None:
    """Write-all-or-nothing: an interrupted run leaves no partial file."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".part-")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value) -> str:
    if isinstance(value, np.floating):
        value = float(value)
    elif isinstance(value, np.integer):
        value = int(value)
    if isinstance(value, float):
        return repr(value)  # repr round-trips, so equal values give equal bytes
    if value is None:
        return ""
    return str(value)


def _write_csv(path: str, schema: list, rows: list) -> None:
    for row in rows:
        if set(row) != set(schema):
            missing = set(schema) - set(row)
            extra = set(row) - set(schema)
            raise ValueError(f"CSV row does not match schema: missing={missing}, extra={extra}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(schema)
    for row in rows:
        writer.writerow([_fmt(row[col]) for col in schema])
    _atomic_write(path, buf.getvalue())


def _write_manifest(csv_path: str, manifest: RunManifest) -> str:
    path = csv_path + ".manifest.json"
    _atomic_write(path, manifest.to_json() + "\n")
    return path


# ---------------------------------------------------------------------------
# config loading


def load_config(path: str) -> dict:
    with open(path, "rb") as handle:
        return tomllib.load(handle)


def _config_hash(path: str | None) -> str:
    if path is None:
        return _hash_bytes(b"builtin")
    with open(path, "rb") as handle:
        return _hash_bytes(handle.read())


_CHANNEL_PRESETS = {
    "bibo": bibo_example_pair,
    "bibo-single": bibo_single_state_pair,
}


def build_pair(cfg: dict) -> ChannelPair:
    section = cfg.get("channel", {})
    preset = section.get("preset")
    if preset is not None:
        try:
            return _CHANNEL_PRESETS[preset]()
        except KeyError:
            raise ValueError(f"unknown channel preset {preset!r}; "
                             f"have {sorted(_CHANNEL_PRESETS)}") from None
    if "sensing" not in section or "comm" not in section:
        raise ValueError("[channel] needs either a preset or sensing/comm matrices")
    sensing = DiscreteChannelFamily(
        section["sensing"],
        require_distinguishable=section.get("require_distinguishable", True),
    )
    comm = DiscreteChannelFamily(
        section["comm"],
        require_distinguishable=section.get("comm_require_distinguishable", False),
    )
    return ChannelPair(sensing=sensing, comm=comm)


def build_jccs(cfg: dict, pair: ChannelPair, seed_override=None) -> JccsConfig:
    section = cfg.get("jccs")
    if section is None:
        raise ValueError("missing [jccs] section")
    L = int(section["L"])
    nx = pair.sensing.input_alphabet_size
    compositions = {}
    if "composition_counts" in section:
        from .jccs_codec import Composition

        for key, counts in section["composition_counts"].items():
            compositions[int(key)] = Composition(counts=tuple(int(c) for c in counts))
    elif "composition_targets" in section:
        for key, target in section["composition_targets"].items():
            compositions[int(key)] = make_composition(target, L)
    else:
        # uniform default
        for s in pair.sensing.states:
            compositions[s] = make_composition([1.0 / nx] * nx, L)
    for s in pair.sensing.states:
        if s not in compositions:
            raise ValueError(f"no composition for post state {s}")
    seed = section.get("master_seed", 0) if seed_override is None else seed_override
    return JccsConfig(
        L=L,
        k=int(section["k"]),
        eta=int(section["eta"]),
        rate_bits=float(section.get("rate_bits", 0.0)),
        compositions=compositions,
        master_seed=int(seed),
    )


def build_detector(cfg: dict, jccs: JccsConfig) -> DetectorConfig:
    section = cfg.get("detector", {})
    if "alpha" in section:
        return DetectorConfig.from_alpha(float(section["alpha"]), jccs.L, jccs.eta)
    if "b" in section:
        return DetectorConfig(threshold_b=float(section["b"]), L=jccs.L, eta=jccs.eta)
    raise ValueError("[detector] needs alpha or b")


def build_experiment(cfg: dict, pair, jccs, detector, trials_override=None) -> ExperimentSpec:
    section = cfg.get("experiment", {})
    trials = trials_override if trials_override is not None else section.get("trials")
    if trials is None:
        raise ValueError("[experiment] needs trials (or pass --trials)")
    return ExperimentSpec(
        pair=pair,
        jccs=jccs,
        detector=detector,
        trials=int(trials),
        confidence=float(section.get("confidence", 0.99)),
        nu_grid=tuple(int(v) for v in section.get("nu_grid", [1])),
        post_states=tuple(section["post_states"]) if "post_states" in section else None,
        messages_sampled=int(section.get("messages_sampled", 32)),
    )


_MIMO_PRESETS = {"example": mimo_example_model}


def build_mimo(cfg: dict) -> MimoChannelModel:
    section = cfg.get("mimo", {})
    preset = section.get("preset", "example")
    if preset == "beam":
        return beam_example_model(
            theta_target=float(section.get("theta_target", 0.0)),
            theta_comm=float(section.get("theta_comm", math.pi / 2)),
            M=int(section.get("antennas", 2)),
            power=float(section.get("power", 10.0)),
        )
    if preset in _MIMO_PRESETS:
        return _MIMO_PRESETS[preset]()
    if "sensing_gains" in section and "comm_gains" in section:
        return MimoChannelModel(
            tx_antennas=int(section["antennas"]),
            sensing_gains={int(k): v for k, v in section["sensing_gains"].items()},
            comm_gains={int(k): v for k, v in section["comm_gains"].items()},
            power_budget=float(section.get("power", 10.0)),
        )
    raise ValueError(f"unknown mimo preset {preset!r}")


def parse_coupling(text: str, states) -> object:
    """equal | free | zero:<s,...> (listed states unconstrained) | s=c,..."""
    if text in ("equal", "free"):
        return text
    if text.startswith("zero:"):
        zeros = {int(v) for v in text[5:].split(",") if v}
        unknown = zeros - set(states)
        if unknown:
            raise ValueError(f"coupling names unknown states {sorted(unknown)}")
        return {s: (0.0 if s in zeros else 1.0) for s in states}
    if "=" in text:
        out = {}
        for part in text.split(","):
            key, _, val = part.partition("=")
            out[int(key)] = float(val)
        return out
    raise ValueError(f"cannot parse coupling {text!r}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    section = cfg.get("channel", {})
    try:
        pair = build_pair(cfg)
    except DegenerateFamily as exc:
        print(f"assumption failure (post-state distinguishability): {exc}", file=sys.stderr)
        return 2
    except AbsoluteContinuityViolation as exc:
        print(f"assumption failure (absolute continuity): {exc}", file=sys.stderr)
        return 2
    sensing = pair.sensing
    gamma = gamma_max_llr(sensing)
    v_bound = second_moment_bound(sensing)
    rho = rho_max(sensing)
    if not math.isfinite(gamma):
        print("assumption failure (absolute continuity): infinite max |LLR|", file=sys.stderr)
        return 2
    if not math.isfinite(v_bound):
        print("assumption failure: infinite second-moment bound", file=sys.stderr)
        return 2
    report = [
        "ok: transition matrices row-stochastic",
        "ok: post states pairwise distinguishable"
        if len(sensing.states) > 1 else "ok: single post state (estimator degenerate)",
        f"ok: absolute continuity, max |LLR| = {gamma:.6f} nats",
        f"ok: second-moment bound V = {v_bound:.6f}",
        f"ok: max Bhattacharyya rho = {rho:.6f}",
    ]
    if "jccs" in cfg:
        jccs = build_jccs(cfg, pair)
        m = jccs.M_count
        m_txt = str(m) if m < 10**12 else f"~2^{jccs.n * jccs.rate_bits:.1f}"
        report.append(f"ok: jccs n = {jccs.n} symbols, message count = {m_txt}")
        if "detector" in cfg:
            det = build_detector(cfg, jccs)
            report.append(f"ok: detector threshold b = {det.threshold_b:.6f} nats")
    if not section:
        report.append("note: no [channel] section, used preset/defaults")
    print("\n".join(report))
    return 0


def _curve_rows(curve, bits: bool, states):
    unit = "bits" if bits else "nats"
    rows = []
    for point in curve.points:
        row = {
            "curve": curve.label,
            f"target_delta_{unit}": point.witness.get("target_delta"),
            "rate_bits": point.rate_bits,
        }
        for s, d in zip(states, point.delta):
            row[f"delta_{unit}_state{s}"] = d
        row["witness"] = json.dumps(point.witness, sort_keys=True)
        rows.append(row)
    return rows


def _region_schema(bits: bool, states):
    unit = "bits" if bits else "nats"
    return (["curve", f"target_delta_{unit}", "rate_bits"]
            + [f"delta_{unit}_state{s}" for s in states] + ["witness"])


def cmd_figures(args) -> int:
    start = time.monotonic()
    outdir = args.out or "figures"
    os.makedirs(outdir, exist_ok=True)

    pair = bibo_example_pair()
    states = pair.sensing.states
    d3 = fig3_dataset(pair)
    rows3 = []
    for key in ("open", "equal", "free_state1"):
        rows3.extend(_curve_rows(d3[key], bits=True, states=states))
    path3 = os.path.join(outdir, "fig3.csv")
    _write_csv(path3, _region_schema(True, states), rows3)

    model = mimo_example_model()
    d4 = fig4_dataset(model)
    rows4 = []
    for key in ("open", "equal"):
        rows4.extend(_curve_rows(d4[key], bits=False, states=model.states))
    path4 = os.path.join(outdir, "fig4.csv")
    _write_csv(path4, _region_schema(False, model.states), rows4)

    d5 = fig5_dataset()
    rows5 = [
        {"theta_rad": theta, "rate_bits": rate, "delta_nats": delta,
         "delta_bits": delta / LN2}
        for theta, rate, delta in d5["sweep"]
    ]
    path5 = os.path.join(outdir, "fig5.csv")
    _write_csv(path5, _SCHEMAS["beam-sweep"], rows5)

    manifest = RunManifest(
        config_sha256=_config_hash(None),
        tool_version=__version__,
        master_seed=args.seed if args.seed is not None else 0,
        outputs={"fig3": path3, "fig4": path4, "fig5": path5},
        wall_clock_seconds=time.monotonic() - start,
        extras={
            "delta_max_open_bits": d3["delta_max_open_bits"],
            "delta_max_equal_bits": d3["delta_max_equal_bits"],
            "delta_max_open_nats_mimo": d4["delta_max_open_nats"],
        },
    )
    _write_manifest(os.path.join(outdir, "figures.csv"), manifest)
    print(f"wrote {path3}, {path4}, {path5}")
    return 0


def _simulate_common(args, min_trials=None):
    cfg = load_config(args.config)
    pair = build_pair(cfg)
    jccs = build_jccs(cfg, pair, seed_override=args.seed)
    detector = build_detector(cfg, jccs)
    trials = args.trials
    if min_trials is not None:
        # single-trial commands are exempt from the batch-size floor
        requested = trials if trials is not None else cfg.get("experiment", {}).get("trials", min_trials)
        trials = max(int(requested), min_trials)
    spec = build_experiment(cfg, pair, jccs, detector, trials_override=trials)
    return cfg, spec


def cmd_simulate(args) -> int:
    start = time.monotonic()
    cfg, spec = _simulate_common(args)
    exp = cfg.get("experiment", {})
    det_cfg = cfg.get("detector", {})
    alpha = det_cfg.get("alpha")
    seed = spec.jccs.master_seed
    s = int(exp.get("state", spec.pair.sensing.states[0]))
    rows = []
    extras = {}

    if args.estimator == "far":
        est = estimate_far(spec)
        rows.append({
            "alpha": alpha, "b": spec.detector.threshold_b,
            "far_estimate": est.value, "far_ucb": est.extras["far_ucb"],
            "censored_frac": est.censored_frac, "trials": est.trials, "seed": seed,
        })
        extras = {"per_message": est.extras["per_message"],
                  "all_censored": est.extras["all_censored"]}
        schema = _SCHEMAS["far"]
    elif args.estimator == "wadd":
        result = estimate_wadd(spec, s, worst_prefix=bool(exp.get("worst_prefix", False)))
        for nu in spec.nu_grid:
            est = result["per_nu"][nu]
            rows.append({
                "nu": nu, "s": s, "b": spec.detector.threshold_b, "alpha": alpha,
                "mean_delay": est.value, "ci_halfwidth": est.ci_halfwidth,
                "censored_frac": est.censored_frac, "trials": est.trials, "seed": seed,
            })
        extras = {"argmax_nu": result["argmax_nu"], "wadd": result["wadd"].value}
        schema = _SCHEMAS["wadd"]
    elif args.estimator == "pe":
        est = estimate_pe(spec, method=exp.get("method", "auto"),
                          post_state=exp.get("state"))
        rows.append({
            "k": spec.jccs.k, "n": spec.jccs.n, "rate_bits": spec.jccs.rate_bits,
            "message_count": spec.jccs.M_count, "pe_estimate": est.value,
            "ci_halfwidth": est.ci_halfwidth, "method": est.extras["method"],
            "trials": est.trials, "seed": seed,
        })
        schema = _SCHEMAS["pe"]
    elif args.estimator == "mle-error":
        eta_grid = exp.get("eta_grid", [spec.jccs.eta])
        result = estimate_mle_error(spec, s, eta_grid)
        for eta in eta_grid:
            est = result[int(eta)]
            rows.append({
                "eta": int(eta), "error_rate": est.value,
                "wilson_upper": est.extras["wilson_upper"], "bound": est.extras["bound"],
                "rho": est.extras["rho"], "trials": est.trials, "seed": seed,
            })
        schema = _SCHEMAS["mle-error"]
    elif args.estimator == "slope":
        b_values = exp.get("b_values")
        if not b_values:
            raise ValueError("[experiment] needs b_values for the slope estimator")
        result = estimate_delay_slope(spec, s, b_values)
        for b in result["per_b"]:
            est = result["per_b"][b]
            rows.append({
                "b": b, "mean_delay": est.value, "ci_halfwidth": est.ci_halfwidth,
                "censored_frac": est.censored_frac, "slope": result["slope"],
                "delta_hat_nats": result["delta_hat_nats"],
                "trials": est.trials, "seed": seed,
            })
        extras = {"slope": result["slope"], "delta_hat_nats": result["delta_hat_nats"]}
        schema = _SCHEMAS["slope"]
    else:
        raise ValueError(f"unknown estimator {args.estimator!r}")

    _write_csv(args.out, schema, rows)
    manifest = RunManifest(
        config_sha256=_config_hash(args.config),
        tool_version=__version__,
        master_seed=seed,
        outputs={args.estimator: args.out},
        wall_clock_seconds=time.monotonic() - start,
        trials=spec.trials,
        extras=extras,
    )
    _write_manifest(args.out, manifest)
    print(f"wrote {args.out}")
    return 0


def cmd_region(args) -> int:
    start = time.monotonic()
    cfg = load_config(args.config) if args.config else {}
    region_cfg = cfg.get("region", {})
    seed = args.seed if args.seed is not None else 0
    grid_resolution = int(region_cfg.get("grid_resolution", 101))

    if args.analysis in ("closed-loop", "open-loop", "capacity"):
        pair = build_pair(cfg) if cfg.get("channel") else bibo_example_pair()
        states = pair.sensing.states
        if args.analysis == "capacity":
            overall, witnesses = capacity_delta0(pair)
            rows = []
            for s in states:
                c_nats, p = blahut_arimoto(pair.comm.transition[s])
                rows.append({"state": s, "capacity_bits": c_nats / LN2,
                             "p_x": json.dumps(list(p), sort_keys=True)})
            rows.append({"state": "min", "capacity_bits": overall,
                         "p_x": json.dumps({str(s): list(witnesses[s]) for s in states},
                                           sort_keys=True)})
            schema = _SCHEMAS["capacity"]
        else:
            grid = region_cfg.get("delta_grid_bits")
            if args.analysis == "closed-loop":
                coupling = parse_coupling(args.coupling, states)
                curve = closed_loop_curve(pair, coupling, grid_resolution=grid_resolution,
                                          delta_grid_bits=grid)
            else:
                curve = open_loop_curve(pair, grid_resolution=grid_resolution,
                                        delta_grid_bits=grid)
            rows = _curve_rows(curve, bits=True, states=states)
            schema = _region_schema(True, states)
    elif args.analysis == "mimo":
        model = build_mimo(cfg)
        coupling = parse_coupling(args.coupling, model.states)
        curve = mimo_curve(model, coupling, grid=int(region_cfg.get("grid", 33)),
                           delta_grid_nats=region_cfg.get("delta_grid_nats"))
        rows = _curve_rows(curve, bits=False, states=model.states)
        schema = _region_schema(False, model.states)
    elif args.analysis == "beam-sweep":
        model = build_mimo({"mimo": {"preset": "beam", **cfg.get("mimo", {})}})
        count = int(region_cfg.get("theta_points", 61))
        thetas = np.linspace(0.0, math.pi / 2.0, count)
        rows = [
            {"theta_rad": theta, "rate_bits": rate, "delta_nats": delta,
             "delta_bits": delta / LN2}
            for theta, rate, delta in beam_sweep(model, thetas)
        ]
        schema = _SCHEMAS["beam-sweep"]
    else:
        raise ValueError(f"unknown region analysis {args.analysis!r}")

    _write_csv(args.out, schema, rows)
    manifest = RunManifest(
        config_sha256=_config_hash(args.config),
        tool_version=__version__,
        master_seed=seed,
        outputs={args.analysis: args.out},
        wall_clock_seconds=time.monotonic() - start,
    )
    _write_manifest(args.out, manifest)
    print(f"wrote {args.out}")
    return 0


def cmd_trace(args) -> int:
    start = time.monotonic()
    cfg, spec = _simulate_common(args, min_trials=100)
    exp = cfg.get("experiment", {})
    nu_raw = exp.get("nu", 1)
    nu = NO_CHANGE if nu_raw in ("inf", "none", 0) else int(nu_raw)
    s = int(exp.get("state", spec.pair.sensing.states[0]))
    path = StatePath(change_point=nu, post_state=s)
    result = run_single_trial(spec, path, message=int(exp.get("message", 1)),
                              trial_seed=int(exp.get("trial_seed", 0)))
    rows = [
        {"j": r["j"], "s_hat": r["s_hat"], "increment": r["increment"],
         "W": r["W"], "log_R": r["log_R"]}
        for r in result["rows"]
    ]
    _write_csv(args.out, _SCHEMAS["trace"], rows)
    manifest = RunManifest(
        config_sha256=_config_hash(args.config),
        tool_version=__version__,
        master_seed=spec.jccs.master_seed,
        outputs={"trace": args.out},
        wall_clock_seconds=time.monotonic() - start,
        trials=1,
        extras={"stop_symbols": result["stop_symbols"], "censored": result["censored"]},
    )
    _write_manifest(args.out, manifest)
    print(f"wrote {args.out}")
    return 0


def cmd_dump(args) -> int:
    cfg = load_config(args.config)
    pair = build_pair(cfg)
    resolved = {
        "channel": {
            "sensing": pair.sensing.transition.tolist(),
            "comm": pair.comm.transition.tolist(),
            "post_states": list(pair.sensing.states),
            "gamma_max_llr_nats": gamma_max_llr(pair.sensing),
            "second_moment_bound": second_moment_bound(pair.sensing),
            "rho_max": rho_max(pair.sensing),
        },
    }
    if "jccs" in cfg:
        jccs = build_jccs(cfg, pair, seed_override=args.seed)
        resolved["jccs"] = {
            "L": jccs.L, "k": jccs.k, "eta": jccs.eta, "n": jccs.n,
            "rate_bits": jccs.rate_bits, "message_count": jccs.M_count,
            "master_seed": jccs.master_seed,
            "compositions": {s: list(c.counts) for s, c in jccs.compositions.items()},
        }
        if "detector" in cfg:
            det = build_detector(cfg, jccs)
            resolved["detector"] = {"b": det.threshold_b, "alpha": det.alpha}
    text = json.dumps(resolved, indent=2, sort_keys=True)
    if args.out:
        _atomic_write(args.out, text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isacqcd",
        description="Joint communication and quickest-change-detection toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config against the model assumptions")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("figures", help="emit the three example figure datasets")
    p.add_argument("--out", default="figures")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_figures)

    p = sub.add_parser("simulate", help="Monte Carlo estimators")
    p.add_argument("estimator", choices=["far", "wadd", "pe", "mle-error", "slope"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("region", help="rate / detection-speed regions")
    p.add_argument("analysis",
                   choices=["closed-loop", "open-loop", "capacity", "mimo", "beam-sweep"])
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--coupling", default="equal")
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("trace", help="single-trial detector trace")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("dump", help="print the resolved configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_dump)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
