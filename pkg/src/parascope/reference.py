"""Published values the reproduction commands compare against.

Memory values are GiB, times are days. A "K" suffix in the published tables
means thousands of GiB.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .hardware import LinkClass

YEAR_DAYS = 365.0


@dataclass(frozen=True)
class ModelRow:
    name: str  # key understood by model_config.named_model
    p: float
    b_c: float
    trained_b: int | None
    d_s: int
    d_a: int
    d_h: int
    d_m: int
    d_l: int


MODEL_ROWS = (
    ModelRow("x_2", 488, 130, None, 32, 1, 4, 4, 2),
    ModelRow("bert", 301e6, 751, 256, 512, 16, 64, 1024, 24),
    ModelRow("x_32", 403e6, 826, None, 512, 16, 64, 1024, 32),
    ModelRow("megatron-lm", 8.15e9, 1130, 512, 1024, 32, 96, 3072, 72),
    ModelRow("x_64", 12.9e9, 1310, None, 1024, 32, 128, 4096, 64),
    ModelRow("t-nlg", 17.0e9, 1440, 512, 1024, 28, 152, 4256, 78),
    ModelRow("gpt-3", 174e9, 1560, None, 2048, 96, 128, 12288, 96),
    ModelRow("x_108", 176e9, 1860, None, 1728, 54, 216, 11664, 108),
    ModelRow("x_160", 1.26e12, 2420, None, 2560, 80, 320, 25600, 160),
)

# link -> (bandwidth GB/s, threshold flop/B)
HARDWARE_ROWS = {
    LinkClass.GpuMemory: (2039, 143),
    LinkClass.NvLink: (600, 484),
    LinkClass.PciExpress: (63, 4.61e3),
    LinkClass.InfiniBand: (50, 5.81e3),
    LinkClass.CpuGpu: (31.5, 9.22e3),
    LinkClass.Ethernet: (6.25, 46.5e3),
    LinkClass.DiskNvme: (3.2, 90.8e3),
    LinkClass.DiskHdd: (0.1, 2.91e6),
}


@dataclass(frozen=True)
class SpeedRow:
    parallelism: str
    method: str
    offload: bool
    b: int
    b_mu: int
    n_mu: int
    n_gpu: int
    n_b: int
    n_l: int
    n_a: int
    efficiency: float
    time_days: float


SPEED_ROWS = (
    SpeedRow("none", "baseline", True, 2416, 4, 604, 1, 1, 1, 1, 1.00, 630 * YEAR_DAYS),
    SpeedRow("data", "baseline", True, 2415, 5, 1, 483, 483, 1, 1, 1.00, 1.3 * YEAR_DAYS),
    SpeedRow("data", "partitioned", True, 2415, 5, 1, 483, 483, 1, 1, 1.00, 1.3 * YEAR_DAYS),
    SpeedRow("data+pipe", "baseline", True, 2412, 4, 201, 480, 3, 160, 1, 0.56, 2.4 * YEAR_DAYS),
    SpeedRow("data+pipe", "improved", False, 2415, 1, 5, 2415, 483, 5, 1, 0.94, 100),
    SpeedRow("data+tensor", "baseline", True, 2415, 5, 1, 7728, 483, 1, 16, 0.93, 32),
    SpeedRow("data+tensor", "partitioned", False, 2415, 5, 1, 7728, 483, 1, 16, 0.93, 32),
    SpeedRow("3d", "baseline", False, 2408, 1, 172, 35840, 14, 160, 16, 0.48, 13),
    SpeedRow("3d", "improved", False, 2415, 1, 5, 38640, 483, 5, 16, 0.88, 6.8),
)

# parallelism, method -> (state, checkpoint, buffers, activations, offloadable, non-offloadable)
MEMORY_ROWS = {
    ("none", "baseline"): (14.1e3, 47.2e3, 43.9, 24.9, 61.2e3, 68.8),
    ("data", "baseline"): (14.1e3, 97.7, 43.9, 31.1, 14.2e3, 75.1),
    ("data", "partitioned"): (29.1, 97.7, 43.9, 31.1, 127, 75.1),
    ("data+pipe", "baseline"): (87.9, 98.1, 43.9, 24.9, 186, 68.8),
    ("data+pipe", "improved"): (5.82, 19.5, 43.9, 6.23, 25.4, 50.2),
    ("data+tensor", "baseline"): (879, 6.10, 2.75, 1.95, 885, 4.69),
    ("data+tensor", "partitioned"): (1.82, 6.10, 2.75, 1.95, 7.92, 4.69),
    ("3d", "baseline"): (5.49, 1.31, 2.75, 0.389, 6.81, 3.14),
    ("3d", "improved"): (0.364, 1.22, 2.75, 0.389, 1.58, 3.14),
}

MEMORY_COLUMNS = ("state", "checkpoint", "buffers", "activations", "offloadable", "non_offloadable")


@dataclass(frozen=True)
class ClusterRow:
    parallelism: str
    method: str
    b: int
    n_a: int
    n_gpu: int
    offloadable: float
    non_offloadable: float
    efficiency: float
    time_days: float
    # search settings that define the row beyond parallelism and method
    settings: dict = field(default_factory=dict)


CLUSTER_ROWS = (
    ClusterRow("data+tensor", "partitioned", 2415, 16, 7728, 7.92, 4.69, 0.93, 32),
    ClusterRow("3d", "baseline", 2416, 16, 10240, 10.1, 3.14, 0.73, 31),
    ClusterRow("3d", "improved", 2220, 4, 7400, 7.76, 12.5, 0.97, 32),
    ClusterRow("data+tensor", "partitioned", 1660, 8, 1328, 35.0, 9.38, 0.97, 180),
    ClusterRow("pipe+tensor", "baseline", 2416, 8, 1280, 47.9, 6.27, 0.91, 199),
    ClusterRow("3d", "improved", 792, 2, 1320, 22.4, 25.1, 0.97, 180, {"fixed_na": 2}),
    ClusterRow("data+pipe", "improved", 1572, 1, 1310, 34.2, 50.2, 0.98, 180),
    ClusterRow("3d", "improved", 102, 16, 1360, 11.8, 3.14, 0.91, 186, {"fixed_na": 16}),
)

# Tables print whole days, so a row at "32 d" may run up to 32.5 d.
DEADLINE_ROUNDING_DAYS = 0.5

# Improved-strategy size limits (parameters) for the training-time budgets.
SCALING_LIMITS = {
    ("node-limited", "month"): 4.5e12,
    ("node-limited", "year"): 50e12,
    ("unlimited", "month"): 40e12,
    ("unlimited", "year"): 900e12,
}

X160_TOTAL_FLOPS = 6.24e24
X160_GPU_DAYS = 231e3
ETHERNET_SLOWDOWN = (0.03, 0.06)
