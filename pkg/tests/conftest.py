import numpy as np
import pytest

from isacqcd.channel_core import (
    ChannelPair,
    DiscreteChannelFamily,
    bibo_example_pair,
    bibo_single_state_pair,
)
from isacqcd.jccs_codec import Composition, JccsConfig
from isacqcd.scs_detector import DetectorConfig


@pytest.fixture(scope="session")
def bibo() -> ChannelPair:
    return bibo_example_pair()


@pytest.fixture(scope="session")
def bibo_single() -> ChannelPair:
    return bibo_single_state_pair()


def random_full_support_family(rng: np.random.Generator, states: int, nx: int, ny: int,
                               floor: float = 0.05) -> DiscreteChannelFamily:
    """Random family with every entry >= floor/ny, so LLRs stay bounded."""
    raw = rng.random((states + 1, nx, ny)) + floor
    raw /= raw.sum(axis=2, keepdims=True)
    return DiscreteChannelFamily(raw, require_distinguishable=False)


def small_jccs(L=8, k=10, eta=2, rate_bits=0.25, seed=0, nx=2) -> JccsConfig:
    half = Composition(tuple([L // nx] * nx))
    return JccsConfig(L=L, k=k, eta=eta, rate_bits=rate_bits,
                      compositions={1: half, 2: half}, master_seed=seed)


def small_detector(b=5.0, L=8, eta=2) -> DetectorConfig:
    return DetectorConfig(threshold_b=b, L=L, eta=eta)
