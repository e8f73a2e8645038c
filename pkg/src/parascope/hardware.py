"""Device and interconnect characteristics.

Bandwidths are combined input + output rates in bytes/s. The published
A100 figures (e.g. "600 GB/s" NVLink with a 484 flop/B threshold) only line up
when a GB is read as 2**30 bytes, so the default profile stores
``listed_value * 2**30``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Any, Mapping

GIB = 2**30


class LinkClass(enum.Enum):
    GpuMemory = "gpu_memory"
    NvLink = "nvlink"
    PciExpress = "pcie"
    InfiniBand = "infiniband"
    CpuGpu = "cpu_gpu"
    Ethernet = "ethernet"
    DiskNvme = "disk_nvme"
    DiskHdd = "disk_hdd"

    @classmethod
    def parse(cls, name: str) -> "LinkClass":
        key = name.strip().lower().replace("-", "_")
        for link in cls:
            if key in (link.value, link.name.lower()):
                return link
        raise ValueError(f"unknown link class {name!r}")


A100_BANDWIDTH_GIB = {
    LinkClass.GpuMemory: 2039.0,
    LinkClass.NvLink: 600.0,
    LinkClass.PciExpress: 63.0,
    LinkClass.InfiniBand: 50.0,
    LinkClass.CpuGpu: 31.5,
    LinkClass.Ethernet: 6.25,
    LinkClass.DiskNvme: 3.2,
    LinkClass.DiskHdd: 0.1,
}


@dataclass(frozen=True)
class HardwareProfile:
    c_gpu: float  # peak flop/s
    m_gpu: float  # bytes
    bandwidth: Mapping[LinkClass, float]
    max_node_size: float = 16  # math.inf when tensor groups may span any size over NVLink
    gpus_per_node: int = 16
    # link carrying data-parallel and pipeline traffic between nodes
    inter_node: LinkClass = LinkClass.InfiniBand
    name: str = ""

    def __post_init__(self):
        if self.c_gpu <= 0 or self.m_gpu <= 0:
            raise ValueError("c_gpu and m_gpu must be positive")
        for link, bw in self.bandwidth.items():
            if not bw > 0:
                raise ValueError(f"bandwidth for {link.name} must be positive, got {bw}")
        if self.inter_node not in self.bandwidth:
            raise ValueError(f"inter-node link {self.inter_node.name} has no bandwidth")

    def link_for_tensor(self, n_a: int) -> LinkClass:
        return LinkClass.NvLink if n_a <= self.max_node_size else self.inter_node


def intensity_threshold(profile: HardwareProfile, link: LinkClass) -> float:
    """Arithmetic intensity (flop/B) above which traffic on ``link`` is hidden."""
    try:
        bw = profile.bandwidth[link]
    except KeyError:
        raise KeyError(f"profile has no bandwidth for {link.name}") from None
    return profile.c_gpu / bw


def default_a100_profile() -> HardwareProfile:
    return HardwareProfile(
        c_gpu=312e12,
        m_gpu=80 * GIB,
        bandwidth={link: gib * GIB for link, gib in A100_BANDWIDTH_GIB.items()},
        name="a100-80g-ib",
    )


def ethernet_variant(profile: HardwareProfile) -> HardwareProfile:
    """Inter-node traffic over 25 Gb/s-per-GPU Ethernet instead of InfiniBand."""
    return replace(profile, inter_node=LinkClass.Ethernet, name=f"{profile.name}-ethernet")


def unlimited_node_variant(profile: HardwareProfile) -> HardwareProfile:
    return replace(profile, max_node_size=math.inf, name=f"{profile.name}-unlimited-node")


def named_profile(name: str) -> HardwareProfile:
    base = default_a100_profile()
    if name == "a100-80g-ib":
        return base
    if name == "a100-80g-ethernet":
        return replace(ethernet_variant(base), name=name)
    if name == "a100-80g-unlimited-node":
        return replace(unlimited_node_variant(base), name=name)
    raise KeyError(f"unknown profile {name!r}; known: {', '.join(PROFILE_NAMES)}")


PROFILE_NAMES = ("a100-80g-ib", "a100-80g-ethernet", "a100-80g-unlimited-node")


def profile_from_config(cfg: Mapping[str, Any]) -> HardwareProfile:
    """Build a profile from a mapping.

    Recognised keys: ``base`` (a named profile to start from), ``c_gpu_tflops``,
    ``m_gpu_gib``, ``bandwidth_gib`` (mapping link -> GiB/s, or flattened
    ``bandwidth_gib.<link>`` keys), ``max_node_size`` (number or "inf") and
    ``inter_node``.
    """
    base = named_profile(str(cfg.get("base", "a100-80g-ib")))
    bandwidth = dict(base.bandwidth)
    bw_cfg = dict(cfg.get("bandwidth_gib", {}) or {})
    for key, value in cfg.items():
        if key.startswith("bandwidth_gib."):
            bw_cfg[key.split(".", 1)[1]] = value
    for link_name, gib in bw_cfg.items():
        bandwidth[LinkClass.parse(link_name)] = float(gib) * GIB
    max_node = cfg.get("max_node_size", base.max_node_size)
    if isinstance(max_node, str):
        max_node = math.inf if max_node.lower() in ("inf", "unbounded", "unlimited") else int(max_node)
    return HardwareProfile(
        c_gpu=float(cfg["c_gpu_tflops"]) * 1e12 if "c_gpu_tflops" in cfg else base.c_gpu,
        m_gpu=float(cfg["m_gpu_gib"]) * GIB if "m_gpu_gib" in cfg else base.m_gpu,
        bandwidth=bandwidth,
        max_node_size=max_node,
        gpus_per_node=int(cfg.get("gpus_per_node", base.gpus_per_node)),
        inter_node=LinkClass.parse(cfg["inter_node"]) if "inter_node" in cfg else base.inter_node,
        name=str(cfg.get("name", "custom")),
    )
