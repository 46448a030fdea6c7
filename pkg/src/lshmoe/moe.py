"""Linear top-k gate, two-layer FFN experts and the single-machine MoE forward.

Expert indices are 0-based. The layer output for a token is the plain sum of
its selected experts' outputs (no gate weighting).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .core import STREAM_EXPERTS, STREAM_GATE, RngState


class Activation(str, enum.Enum):
    RELU = "relu"
    GELU = "gelu"
    IDENTITY = "identity"  # makes the expert affine

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        if self is Activation.GELU:
            return 0.5 * z * (1.0 + erf(z / np.sqrt(2.0)))
        return z


@dataclass(frozen=True)
class GateConfig:
    weights: np.ndarray  # (N, d)
    k: int

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ValueError("gate weights must be an (N, d) matrix")
        if not 1 <= self.k <= self.weights.shape[0]:
            raise ValueError(f"k must be in [1, {self.weights.shape[0]}], got {self.k}")

    @property
    def n_experts(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Expert:
    w1: np.ndarray  # (d_ffn, d)
    b1: np.ndarray
    w2: np.ndarray  # (d_out, d_ffn); d_out == d for LSH compensation
    b2: np.ndarray
    activation: Activation = Activation.RELU

    def __post_init__(self):
        d_ffn = self.w1.shape[0]
        d_out = self.w2.shape[0]
        if self.b1.shape != (d_ffn,) or self.w2.shape[1] != d_ffn or self.b2.shape != (d_out,):
            raise ValueError(
                f"inconsistent expert shapes: W1 {self.w1.shape}, b1 {self.b1.shape}, "
                f"W2 {self.w2.shape}, b2 {self.b2.shape}")

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def d_out(self) -> int:
        return self.w2.shape[0]

    @property
    def d_ffn(self) -> int:
        return self.w1.shape[0]

    def flops(self, n_rows: int) -> int:
        return 2 * n_rows * self.d_ffn * (self.d_in + self.d_out)

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        """Batched forward over the rows of ``xs``."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.d_in:
            raise ValueError(f"expected (n, {self.d_in}) input, got {xs.shape}")
        return self.activation(xs @ self.w1.T + self.b1) @ self.w2.T + self.b2


@dataclass(frozen=True)
class MoeLayer:
    gate: GateConfig
    experts: tuple[Expert, ...]

    def __post_init__(self):
        object.__setattr__(self, "experts", tuple(self.experts))
        if len(self.experts) != self.gate.n_experts:
            raise ValueError(f"gate scores {self.gate.n_experts} experts but layer has {len(self.experts)}")
        d = self.gate.weights.shape[1]
        shapes = {(e.d_in, e.d_ffn, e.d_out) for e in self.experts}
        if len(shapes) != 1 or next(iter(shapes))[0] != d:
            raise ValueError("all experts must share input, hidden and output sizes, and d with the gate")

    @property
    def dim(self) -> int:
        return self.gate.weights.shape[1]

    @property
    def k(self) -> int:
        return self.gate.k

    @property
    def n_experts(self) -> int:
        return len(self.experts)

    @property
    def square(self) -> bool:
        return all(e.d_out == e.d_in for e in self.experts)


def gate_topk(gate: GateConfig, x: np.ndarray) -> list[int]:
    """Indices of the ``k`` highest scores ``W x``, ascending; ties favour the lower index."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a vector")
    return [int(i) for i in route(gate, x[None, :])[0]]


def route(gate: GateConfig, xs: np.ndarray) -> np.ndarray:
    """Batched ``gate_topk``: an ``(n, k)`` array of sorted expert indices."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != gate.weights.shape[1]:
        raise ValueError(f"expected (n, {gate.weights.shape[1]}) tokens, got {xs.shape}")
    scores = xs @ gate.weights.T
    order = np.argsort(-scores, axis=1, kind="stable")[:, :gate.k]
    return np.sort(order, axis=1)


def expert_forward(e: Expert, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a vector")
    return e(x[None, :])[0]


def moe_forward_dense(layer: MoeLayer, xs: np.ndarray) -> np.ndarray:
    """Reference forward on one machine, no communication."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) token matrix")
    routes = route(layer.gate, xs)
    out = np.zeros((xs.shape[0], layer.experts[0].d_out))
    for i, expert in enumerate(layer.experts):
        rows = np.flatnonzero((routes == i).any(axis=1))
        if rows.size:
            out[rows] += expert(xs[rows])
    return out


def random_layer(n_experts: int, k: int, dim: int, d_ffn: int, seed: int,
                 activation: Activation = Activation.RELU) -> MoeLayer:
    """Layer with Gaussian weights scaled by fan-in, drawn from the gate/expert streams of ``seed``."""
    gate_gen = RngState(seed, STREAM_GATE).generator()
    gate = GateConfig(gate_gen.standard_normal((n_experts, dim)), k)
    gen = RngState(seed, STREAM_EXPERTS).generator()
    experts = []
    for _ in range(n_experts):
        experts.append(Expert(
            gen.standard_normal((d_ffn, dim)) / np.sqrt(dim),
            0.1 * gen.standard_normal(d_ffn),
            gen.standard_normal((dim, d_ffn)) / np.sqrt(d_ffn),
            0.1 * gen.standard_normal(dim),
            Activation(activation),
        ))
    return MoeLayer(gate, tuple(experts))


def identity_expert(dim: int) -> Expert:
    eye = np.eye(dim)
    return Expert(eye, np.zeros(dim), eye.copy(), np.zeros(dim), Activation.IDENTITY)


def with_experts(layer: MoeLayer, experts) -> MoeLayer:
    return MoeLayer(layer.gate, tuple(experts))
