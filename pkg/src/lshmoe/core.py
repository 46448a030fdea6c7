"""Seeded random streams, orthogonal matrices and synthetic clustered tokens."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Fixed sub-stream labels under one master seed.
STREAM_TOKENS = 1
STREAM_GATE = 2
STREAM_EXPERTS = 3
STREAM_LSH = 4
STREAM_WORKER_BASE = 100


@dataclass(frozen=True)
class RngState:
    """A (seed, stream_id) pair naming one reproducible random stream.

    Equal pairs yield identical draws; distinct stream ids under the same seed
    are independent (both words are fed to a numpy ``SeedSequence``).
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v < 2**64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v}")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, self.stream_id])))

    def child(self, stream_id: int) -> "RngState":
        return RngState(derive_seed(self.seed, self.stream_id), stream_id)


def derive_seed(master: int, label: int) -> int:
    """Deterministic 64-bit seed for sub-stream ``label`` of ``master``."""
    return int(np.random.SeedSequence([master, label]).generate_state(1, np.uint64)[0])


def random_orthogonal(dim: int, rng: RngState) -> np.ndarray:
    """Random ``dim x dim`` orthogonal matrix.

    Columns of a standard Gaussian matrix are orthonormalised with modified
    Gram-Schmidt, run twice so that orthogonality holds to ~1e-14 even for
    the occasional ill-conditioned draw.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    q = rng.generator().standard_normal((dim, dim))
    for _ in range(2):
        q = _mgs(q)
    return q


def _mgs(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    for j in range(a.shape[1]):
        a[:, j] /= np.linalg.norm(a[:, j])
        if j + 1 < a.shape[1]:
            a[:, j + 1:] -= np.outer(a[:, j], a[:, j] @ a[:, j + 1:])
    return a


@dataclass(frozen=True)
class TokenGenSpec:
    n_tokens: int
    dim: int
    n_components: int = 20
    spread: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_tokens < 1:
            raise ValueError("n_tokens must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if not self.spread >= 0:
            raise ValueError("spread must be >= 0")


def gen_tokens(spec: TokenGenSpec) -> np.ndarray:
    """Gaussian-mixture tokens around centres drawn uniformly on the unit sphere.

    Token ``i`` belongs to component ``i % n_components``; the result has shape
    ``(n_tokens, dim)``.
    """
    gen = RngState(spec.seed, STREAM_TOKENS).generator()
    centres = gen.standard_normal((spec.n_components, spec.dim))
    centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    labels = np.arange(spec.n_tokens) % spec.n_components
    noise = gen.standard_normal((spec.n_tokens, spec.dim))
    return centres[labels] + spec.spread * noise
