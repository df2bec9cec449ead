"""Simulation and numerical-analysis toolkit for joint communication and
quickest change detection over state-dependent channels.

Subpackages:
    channel_core  -- channel models, state paths, information functionals
    jccs_codec    -- constant-composition subblock codes, pilots, state MLE
    scs_detector  -- subblock CuSum detector and companion statistics
    monte_carlo   -- seeded parallel estimators with confidence intervals
    region        -- rate/detection-speed achievability regions
    cli           -- command-line front end
"""

__version__ = "0.1.0"

from .channel_core import (
    AbsoluteContinuityViolation,
    ChannelPair,
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
    mutual_information,
    rho_max,
    sample_outputs,
    second_moment_bound,
    steering_vector,
)
from .jccs_codec import (
    Composition,
    EstimateTrace,
    JccsConfig,
    ProtocolViolation,
    SubblockCodebook,
    decode,
    encode_step,
    entropy_rate_estimate,
    estimate_state,
    generate_codebook,
    make_composition,
)
from .scs_detector import (
    DetectorConfig,
    ScsState,
    nu_aware_update,
    scs_update,
    sr_update,
    stop_check,
)
from .monte_carlo import (
    EstimateWithCI,
    ExperimentSpec,
    InsufficientTrials,
    UnsupportedConfig,
    estimate_delay_slope,
    estimate_far,
    estimate_mle_error,
    estimate_pe,
    estimate_wadd,
)
from .region import (
    Infeasible,
    RegionCurve,
    RegionPoint,
    StateDependentComm,
    beam_sweep,
    capacity_delta0,
    closed_loop_curve,
    closed_loop_point,
    converse_slope,
    mimo_curve,
    mimo_point,
    open_loop_curve,
)
