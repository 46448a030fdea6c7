"""Closed-form all-to-all vs. compute time model for expert-parallel training.

Bandwidths are in elements per second and ``flops`` is the effective rate
(peak times utilization). Per layer there are four all-to-all exchanges,
two forward and two backward.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

AXES = ("w", "h", "l", "k", "n")


@dataclass(frozen=True)
class CostParams:
    n: float  # tokens per GPU
    k: float  # experts per token
    h: float  # hidden size
    l: float  # layers
    w: int  # servers
    bandwidth_intra: float
    bandwidth_inter: float
    flops: float

    def __post_init__(self):
        for name in ("n", "h", "l", "bandwidth_intra", "bandwidth_inter", "flops"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if self.w < 1:
            raise ValueError("w must be >= 1")

    @property
    def m(self) -> float:
        """Tokens exchanged between any two servers under uniform routing."""
        return self.n * self.k / self.w

    @classmethod
    def from_bytes(cls, *, n, k, h, l, w, bandwidth_intra_bytes, bandwidth_inter_bytes,
                   wire_bytes_per_element=2, peak_flops=125e12, utilization=0.5):
        return cls(n, k, h, l, w, bandwidth_intra_bytes / wire_bytes_per_element,
                   bandwidth_inter_bytes / wire_bytes_per_element, peak_flops * utilization)


def t_all_to_all(p: CostParams, exact: bool = True) -> float:
    if exact:
        return 4 * p.l * (p.m * p.h / p.bandwidth_intra + p.m * p.h * (p.w - 1) / p.bandwidth_inter)
    return 4 * p.l * (p.n * p.k / p.w) * p.h * (p.w - 1) / p.bandwidth_inter


def activated_params(p: CostParams) -> float:
    return 4 * (1 + 2 * p.k) * p.l * p.h ** 2


def t_compute(p: CostParams) -> float:
    return 6 * p.n * activated_params(p) / p.flops


def ratio(p: CostParams) -> float:
    """Approximate all-to-all time over compute time, in closed form."""
    return (p.flops / (6 * p.bandwidth_inter)) * (p.k / (1 + 2 * p.k)) * ((p.w - 1) / (p.w * p.h))


def a2a_share(p: CostParams) -> float:
    r = ratio(p)
    return r / (1 + r)


@dataclass(frozen=True)
class SpeedupParams:
    a2a_share: float
    compression_ratio: float
    overhead_share: float = 0.0

    def __post_init__(self):
        for name in ("a2a_share", "compression_ratio", "overhead_share"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.a2a_share >= 1:
            raise ValueError("a2a_share must be < 1")


def predict_speedup(sp: SpeedupParams) -> float:
    """Step-time speedup when only the all-to-all part shrinks, with no overlap.

    ``overhead_share`` is clustering cost expressed as a fraction of the
    uncompressed all-to-all time.
    """
    s = sp.a2a_share
    denom = (1 - s) + s * (sp.compression_ratio + sp.overhead_share)
    if denom <= 0:
        raise ValueError("non-positive step time")
    return 1 / denom


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float | None
    ratio: float
    share: float
    t_all_to_all_exact: float
    t_all_to_all_approx: float
    t_compute: float


def evaluate(p: CostParams, axis: str = "base", value: float | None = None) -> SweepRow:
    r = ratio(p)
    return SweepRow(axis, value, r, r / (1 + r), t_all_to_all(p, True), t_all_to_all(p, False), t_compute(p))


def sweep(p: CostParams, axis: str, values) -> list[SweepRow]:
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    return [evaluate(replace(p, **{axis: v}), axis, v) for v in values]
