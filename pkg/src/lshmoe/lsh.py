"""LSH bucketing of token groups, centroid/residual extraction and compensation.

Two hash families are provided:

* cross-polytope (``CP``): rotate by a random orthogonal matrix and take the
  signed 1-based index of the largest-magnitude coordinate, so one function
  has ``2 * dim`` possible values;
* spherical-plane (``SP``): the sign bit of a projection onto a random unit
  normal, one bit per function.

Hash function ``j`` of a config depends only on ``(seed, j)``, so the keys for
``q + 1`` functions extend the keys for ``q``. Clustering with more functions
therefore refines clustering with fewer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import RngState, random_orthogonal


class HashFamily(str, enum.Enum):
    CROSS_POLYTOPE = "cp"
    SPHERICAL_PLANE = "sp"


@dataclass(frozen=True)
class HashFamilyConfig:
    family: HashFamily
    q: int
    dim: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", HashFamily(self.family))
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")

    def with_q(self, q: int) -> "HashFamilyConfig":
        return HashFamilyConfig(self.family, q, self.dim, self.seed)

    def rotation_flops_per_token(self) -> int:
        # CP: one dim x dim rotation per function; SP: one dot product.
        if self.family is HashFamily.CROSS_POLYTOPE:
            return self.q * self.dim * 2 * self.dim
        return self.q * 2 * self.dim


def cp_hash(rotation: np.ndarray, x: np.ndarray) -> int:
    """Signed 1-based index of the largest ``|(R x)_i|``.

    Ties go to the smallest index and a zero winner counts as positive.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if rotation.ndim != 2 or x.ndim != 1 or rotation.shape[1] != x.shape[0]:
        raise ValueError(f"shape mismatch: R {rotation.shape}, x {x.shape}")
    return int(_cp_codes(rotation, x[None, :])[0])


def _cp_codes(rotation: np.ndarray, xs: np.ndarray) -> np.ndarray:
    rotated = xs @ rotation.T
    idx = np.argmax(np.abs(rotated), axis=1)  # first maximum wins
    winner = rotated[np.arange(len(xs)), idx]
    return np.where(winner >= 0, idx + 1, -(idx + 1)).astype(np.int64)


def sp_hash(normals: np.ndarray, x: np.ndarray) -> tuple[int, ...]:
    """Bit ``b`` is 1 iff ``normals[b] . x >= 0``."""
    normals = np.atleast_2d(np.asarray(normals, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or normals.shape[1] != x.shape[0]:
        raise ValueError(f"shape mismatch: normals {normals.shape}, x {x.shape}")
    return tuple(int(b) for b in _sp_bits(normals, x[None, :])[0])


def _sp_bits(normals: np.ndarray, xs: np.ndarray) -> np.ndarray:
    return (xs @ normals.T >= 0).astype(np.int64)


@lru_cache(maxsize=256)
def _cp_rotation(seed: int, j: int, dim: int) -> np.ndarray:
    r = random_orthogonal(dim, RngState(seed, j))
    r.flags.writeable = False
    return r


@lru_cache(maxsize=256)
def _sp_normal(seed: int, j: int, dim: int) -> np.ndarray:
    v = RngState(seed, j).generator().standard_normal(dim)
    v /= np.linalg.norm(v)
    v.flags.writeable = False
    return v


def hash_functions(cfg: HashFamilyConfig) -> list[np.ndarray]:
    """Parameters of the ``q`` hash functions: rotations (CP) or unit normals (SP)."""
    if cfg.family is HashFamily.CROSS_POLYTOPE:
        return [_cp_rotation(cfg.seed, j, cfg.dim) for j in range(cfg.q)]
    return [_sp_normal(cfg.seed, j, cfg.dim) for j in range(cfg.q)]


def bucket_keys(cfg: HashFamilyConfig, tokens: np.ndarray) -> np.ndarray:
    """Composite keys for a batch of tokens, shape ``(n, q)``."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[1] != cfg.dim:
        raise ValueError(f"tokens must have shape (n, {cfg.dim}), got {tokens.shape}")
    keys = np.empty((tokens.shape[0], cfg.q), dtype=np.int64)
    for j, params in enumerate(hash_functions(cfg)):
        if cfg.family is HashFamily.CROSS_POLYTOPE:
            keys[:, j] = _cp_codes(params, tokens)
        else:
            keys[:, j] = _sp_bits(params[None, :], tokens)[:, 0]
    return keys


def bucket_key(cfg: HashFamilyConfig, x: np.ndarray) -> tuple[int, ...]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a vector")
    return tuple(int(v) for v in bucket_keys(cfg, x[None, :])[0])


@dataclass(frozen=True)
class Clustering:
    """Partition of a token group into buckets.

    ``assignment[t]`` is the bucket of token ``t``; buckets are numbered in
    order of first appearance. ``residuals[t] = tokens[t] - centroids[assignment[t]]``.
    """

    assignment: np.ndarray
    centroids: np.ndarray
    residuals: np.ndarray
    bucket_sizes: np.ndarray
    keys: np.ndarray = field(repr=False, default=None)

    @property
    def n_tokens(self) -> int:
        return len(self.assignment)

    @property
    def n_buckets(self) -> int:
        return len(self.centroids)


def group_by_keys(keys: np.ndarray) -> np.ndarray:
    """Bucket index per row of ``keys``, in first-appearance order."""
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[np.asarray(inverse).reshape(-1)]


def cluster(tokens: np.ndarray, cfg: HashFamilyConfig) -> Clustering:
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[0] == 0:
        raise ValueError("cluster needs a non-empty (n, d) token matrix")
    keys = bucket_keys(cfg, tokens)
    return clustering_from_assignment(tokens, group_by_keys(keys), keys=keys)


def clustering_from_assignment(tokens: np.ndarray, assignment: np.ndarray, keys=None) -> Clustering:
    n_buckets = int(assignment.max()) + 1
    sizes = np.bincount(assignment, minlength=n_buckets)
    sums = np.zeros((n_buckets, tokens.shape[1]))
    np.add.at(sums, assignment, tokens)
    centroids = sums / sizes[:, None]
    residuals = tokens - centroids[assignment]
    return Clustering(assignment, centroids, residuals, sizes, keys)


def compression_ratio(c: Clustering) -> float:
    return c.n_buckets / c.n_tokens


def reconstruct(centroid_outputs: np.ndarray, c: Clustering) -> np.ndarray:
    """Per-token output ``E(centroid) + residual``, in original token order."""
    centroid_outputs = np.asarray(centroid_outputs, dtype=np.float64)
    if centroid_outputs.ndim != 2 or centroid_outputs.shape[0] != c.n_buckets:
        raise ValueError(
            f"expected {c.n_buckets} centroid outputs, got shape {centroid_outputs.shape}")
    if centroid_outputs.shape[1] != c.residuals.shape[1]:
        raise ValueError(
            "expert output dimension must equal token dimension for residual compensation "
            f"({centroid_outputs.shape[1]} != {c.residuals.shape[1]})")
    return centroid_outputs[c.assignment] + c.residuals
