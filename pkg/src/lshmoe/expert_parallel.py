"""Simulated expert-parallel MoE layer step over ``w`` workers.

Tokens are sharded contiguously across workers and experts are placed in
contiguous blocks (worker ``j`` hosts experts ``j*e .. (j+1)*e - 1``). A step is
dispatch -> all-to-all -> expert compute -> all-to-all -> combine. The two
exchanges are in-memory moves with byte-exact accounting.

In the LSH path each source worker clusters the tokens it routes to each
expert, only centroids travel, and the residuals stay home to be added back to
the returned centroid outputs.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lsh import Clustering, HashFamilyConfig, cluster, reconstruct
from .moe import MoeLayer, route

THREADS_ENV = "LSHMOE_THREADS"


@dataclass(frozen=True)
class ClusterTopology:
    workers: int
    experts_per_worker: int
    bandwidth_intra: float = 150e9  # bytes/s
    bandwidth_inter: float = 12.5e9  # bytes/s
    wire_bytes_per_element: int = 2

    def __post_init__(self):
        if self.workers < 1 or self.experts_per_worker < 1:
            raise ValueError("workers and experts_per_worker must be >= 1")
        if not (self.bandwidth_intra > 0 and self.bandwidth_inter > 0):
            raise ValueError("bandwidths must be positive")
        if self.wire_bytes_per_element < 1:
            raise ValueError("wire_bytes_per_element must be >= 1")

    @property
    def n_experts(self) -> int:
        return self.workers * self.experts_per_worker

    def host(self, expert: int) -> int:
        return expert // self.experts_per_worker

    def hosted(self, worker: int) -> range:
        return range(worker * self.experts_per_worker, (worker + 1) * self.experts_per_worker)

    def token_workers(self, n_tokens: int) -> np.ndarray:
        """Owner worker of each token under balanced contiguous sharding."""
        return np.arange(n_tokens) * self.workers // n_tokens


@dataclass(frozen=True)
class CommRecord:
    send_counts: np.ndarray  # (w, w) rows sent, [src, dst]
    bytes_intra: int
    bytes_inter: int
    modeled_time_s: float

    @property
    def total_bytes(self) -> int:
        return self.bytes_intra + self.bytes_inter


@dataclass(frozen=True)
class Dispatch:
    """Gating result and the per-expert token groups ``X_i``.

    ``groups[i]`` holds ascending indices of the tokens routed to expert ``i``;
    it doubles as the reverse map used to scatter expert outputs back.
    """

    routes: np.ndarray
    token_workers: np.ndarray
    groups: tuple[np.ndarray, ...]

    def local(self, worker: int, expert: int) -> np.ndarray:
        g = self.groups[expert]
        return g[self.token_workers[g] == worker]

    def group_sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups])


@dataclass(frozen=True)
class StepMetrics:
    dispatch: CommRecord
    combine: CommRecord
    compression_ratio: float
    lsh_overhead_flops: int
    expert_flops: int
    output: np.ndarray
    # (worker, expert) -> (token indices, clustering); empty for the baseline
    clusterings: dict = field(default_factory=dict, repr=False)

    def compute_time_s(self, flops_rate: float) -> float:
        return (self.expert_flops + self.lsh_overhead_flops) / flops_rate

    def comm_time_s(self) -> float:
        return self.dispatch.modeled_time_s + self.combine.modeled_time_s

    def modeled_time_s(self, flops_rate: float) -> float:
        return self.comm_time_s() + self.compute_time_s(flops_rate)


def thread_count(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, threads)


def dispatch(xs: np.ndarray, layer: MoeLayer, topo: ClusterTopology) -> Dispatch:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) token matrix")
    if layer.n_experts != topo.n_experts:
        raise ValueError(
            f"topology places {topo.n_experts} experts but the layer has {layer.n_experts}")
    routes = route(layer.gate, xs)
    groups = tuple(np.flatnonzero((routes == i).any(axis=1)) for i in range(layer.n_experts))
    return Dispatch(routes, topo.token_workers(xs.shape[0]), groups)


def all_to_all(buffers: dict, topo: ClusterTopology):
    """Deliver ``{(src, dst): rows}`` buffers and account for the bytes moved.

    Returns ``(received, record)`` where ``received[dst][src]`` is the buffer
    sent from ``src`` (an empty array if nothing was sent). Row order within a
    buffer is preserved. Diagonal pairs count as intra-machine traffic.
    """
    w = topo.workers
    cols = {np.shape(b)[1] for b in buffers.values()}
    if len(cols) > 1:
        raise ValueError(f"buffers disagree on row width: {sorted(cols)}")
    width = cols.pop() if cols else 0
    counts = np.zeros((w, w), dtype=np.int64)
    received = [[np.empty((0, width)) for _ in range(w)] for _ in range(w)]
    for (src, dst), buf in buffers.items():
        if not (0 <= src < w and 0 <= dst < w):
            raise ValueError(f"buffer ({src}, {dst}) addresses a worker outside 0..{w - 1}")
        counts[src, dst] = len(buf)
        received[dst][src] = buf
    elems = counts * width * topo.wire_bytes_per_element
    intra = int(np.trace(elems))
    inter = int(elems.sum()) - intra
    time = intra / topo.bandwidth_intra + inter / topo.bandwidth_inter
    return received, CommRecord(counts, intra, inter, time)


def _exchange(payloads: dict, layer: MoeLayer, topo: ClusterTopology, threads: int):
    """Ship per-(worker, expert) payloads to the experts and their outputs back.

    ``payloads[(src, expert)]`` is the row block ``src`` sends to ``expert``.
    Returns the per-(src, expert) outputs and both comm records.
    """
    w = topo.workers
    d = layer.dim
    empty = np.empty((0, d))
    seg = {key: len(rows) for key, rows in payloads.items()}

    send = {}
    for src in range(w):
        for dst in range(w):
            blocks = [payloads.get((src, i), empty) for i in topo.hosted(dst)]
            send[(src, dst)] = np.vstack(blocks)
    received, fwd = all_to_all(send, topo)

    def run_expert(i):
        dst = topo.host(i)
        parts = []
        for src in range(w):
            offset = sum(seg.get((src, j), 0) for j in topo.hosted(dst) if j < i)
            parts.append(received[dst][src][offset:offset + seg.get((src, i), 0)])
        rows = np.vstack(parts)
        out = layer.experts[i](rows) if len(rows) else np.empty((0, layer.experts[i].d_out))
        return np.split(out, np.cumsum([len(p) for p in parts])[:-1]), len(rows)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(run_expert, range(layer.n_experts)))
    expert_flops = sum(layer.experts[i].flops(n) for i, (_, n) in enumerate(results))

    back = {}
    for dst in range(w):
        for src in range(w):
            back[(dst, src)] = np.vstack([results[i][0][src] for i in topo.hosted(dst)])
    returned, bwd = all_to_all(back, topo)

    outputs = {}
    for src in range(w):
        for dst in range(w):
            buf = returned[src][dst]
            offset = 0
            for i in topo.hosted(dst):
                n = seg.get((src, i), 0)
                outputs[(src, i)] = buf[offset:offset + n]
                offset += n
    return outputs, fwd, bwd, expert_flops


def step_baseline(xs: np.ndarray, layer: MoeLayer, topo: ClusterTopology,
                  threads: int | None = None) -> StepMetrics:
    xs = np.asarray(xs, dtype=np.float64)
    threads = thread_count(threads)
    disp = dispatch(xs, layer, topo)
    local = {(src, i): disp.local(src, i) for src in range(topo.workers) for i in range(layer.n_experts)}
    payloads = {key: xs[idx] for key, idx in local.items()}
    outputs, fwd, bwd, flops = _exchange(payloads, layer, topo, threads)

    out = np.zeros((xs.shape[0], layer.experts[0].d_out))
    for i in range(layer.n_experts):
        for src in range(topo.workers):
            out[local[(src, i)]] += outputs[(src, i)]
    return StepMetrics(fwd, bwd, 1.0, 0, flops, out)


def step_lsh(xs: np.ndarray, layer: MoeLayer, topo: ClusterTopology, cfg: HashFamilyConfig,
             threads: int | None = None) -> StepMetrics:
    xs = np.asarray(xs, dtype=np.float64)
    if not layer.square:
        raise ValueError("residual compensation needs experts with equal input and output size")
    if cfg.dim != layer.dim:
        raise ValueError(f"hash config dim {cfg.dim} != token dim {layer.dim}")
    threads = thread_count(threads)
    disp = dispatch(xs, layer, topo)
    local = {(src, i): disp.local(src, i) for src in range(topo.workers) for i in range(layer.n_experts)}
    nonempty = [key for key, idx in local.items() if len(idx)]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        clusterings = list(pool.map(lambda key: cluster(xs[local[key]], cfg), nonempty))
    by_key: dict[tuple[int, int], Clustering] = dict(zip(nonempty, clusterings))
    payloads = {key: c.centroids for key, c in by_key.items()}
    outputs, fwd, bwd, flops = _exchange(payloads, layer, topo, threads)

    out = np.zeros((xs.shape[0], layer.experts[0].d_out))
    for i in range(layer.n_experts):
        for src in range(topo.workers):
            if (src, i) in by_key:
                out[local[(src, i)]] += reconstruct(outputs[(src, i)], by_key[(src, i)])

    routed = sum(len(idx) for idx in local.values())
    centroids = sum(c.n_buckets for c in by_key.values())
    overhead = routed * cfg.rotation_flops_per_token()
    groups = {key: (local[key], c) for key, c in by_key.items()}
    return StepMetrics(fwd, bwd, centroids / routed, overhead, flops, out, groups)
