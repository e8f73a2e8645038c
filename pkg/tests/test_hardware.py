import math

import pytest

from parascope.hardware import (
    GIB,
    HardwareProfile,
    LinkClass,
    PROFILE_NAMES,
    default_a100_profile,
    intensity_threshold,
    named_profile,
    profile_from_config,
)


def test_nvlink_threshold(profile):
    assert intensity_threshold(profile, LinkClass.NvLink) == pytest.approx(312e12 / (600 * GIB))
    assert intensity_threshold(profile, LinkClass.NvLink) == pytest.approx(484, rel=0.01)


def test_tensor_link_switches_at_node_size(profile):
    assert profile.link_for_tensor(16) is LinkClass.NvLink
    assert profile.link_for_tensor(17) is LinkClass.InfiniBand


def test_named_profiles():
    for name in PROFILE_NAMES:
        assert named_profile(name).name == name
    assert named_profile("a100-80g-ethernet").inter_node is LinkClass.Ethernet
    assert math.isinf(named_profile("a100-80g-unlimited-node").max_node_size)
    with pytest.raises(KeyError):
        named_profile("h100")


def test_missing_link_raises():
    p = HardwareProfile(c_gpu=1e12, m_gpu=GIB, bandwidth={LinkClass.InfiniBand: 1e9})
    with pytest.raises(KeyError):
        intensity_threshold(p, LinkClass.NvLink)


@pytest.mark.parametrize("kwargs", [{"c_gpu": 0}, {"m_gpu": -1}])
def test_invalid_profile(kwargs):
    base = {"c_gpu": 1e12, "m_gpu": GIB, "bandwidth": {LinkClass.InfiniBand: 1e9}}
    with pytest.raises(ValueError):
        HardwareProfile(**{**base, **kwargs})


def test_zero_bandwidth_rejected():
    with pytest.raises(ValueError):
        HardwareProfile(c_gpu=1e12, m_gpu=GIB, bandwidth={LinkClass.InfiniBand: 0.0})


def test_profile_from_config_overrides():
    p = profile_from_config({"c_gpu_tflops": 624, "bandwidth_gib": {"infiniband": 100}, "max_node_size": "inf"})
    assert p.c_gpu == 624e12
    assert intensity_threshold(p, LinkClass.InfiniBand) == pytest.approx(
        intensity_threshold(default_a100_profile(), LinkClass.InfiniBand)
    )
    assert math.isinf(p.max_node_size)


def test_link_parse():
    assert LinkClass.parse("InfiniBand") is LinkClass.InfiniBand
    assert LinkClass.parse("cpu-gpu") is LinkClass.CpuGpu
    with pytest.raises(ValueError):
        LinkClass.parse("carrier-pigeon")
