"""Simulator and cost model for LSH-compressed expert-parallel MoE layers."""

from .core import RngState, TokenGenSpec, gen_tokens, random_orthogonal
from .cost_model import CostParams, SpeedupParams, predict_speedup, ratio, t_all_to_all, t_compute
from .expert_parallel import ClusterTopology, all_to_all, dispatch, step_baseline, step_lsh
from .lsh import (Clustering, HashFamily, HashFamilyConfig, bucket_key, cluster, compression_ratio,
                  cp_hash, reconstruct, sp_hash)
from .moe import Activation, Expert, GateConfig, MoeLayer, expert_forward, gate_topk, moe_forward_dense

__version__ = "0.1.0"
