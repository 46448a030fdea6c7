import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lshmoe.core import RngState, TokenGenSpec, derive_seed, gen_tokens, random_orthogonal
from lshmoe.lsh import HashFamily, HashFamilyConfig, bucket_keys, cluster

from oracles import n_groups, same_bucket_partition, same_key_partition


def test_rng_same_pair_same_draws():
    a = RngState(7, 3).generator().standard_normal(16)
    b = RngState(7, 3).generator().standard_normal(16)
    assert np.array_equal(a, b)


def test_rng_streams_differ_and_are_uncorrelated():
    a = RngState(7, 1).generator().standard_normal(20000)
    b = RngState(7, 2).generator().standard_normal(20000)
    assert not np.array_equal(a, b)
    # |corr| of independent N(0,1) samples ~ 1/sqrt(n) = 0.007
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.03


def test_rng_rejects_out_of_range():
    with pytest.raises(ValueError):
        RngState(-1)
    with pytest.raises(ValueError):
        RngState(0, 2**64)


def test_derive_seed_is_stable_and_label_dependent():
    assert derive_seed(0, 4) == derive_seed(0, 4)
    assert derive_seed(0, 4) != derive_seed(0, 3)
    assert 0 <= derive_seed(2**64 - 1, 1) < 2**64


def test_orthogonal_dim_one():
    q = random_orthogonal(1, RngState(3))
    assert q.shape == (1, 1) and abs(q[0, 0]) == 1.0


def test_orthogonal_rejects_zero_dim():
    with pytest.raises(ValueError):
        random_orthogonal(0, RngState(0))


def test_orthogonal_dim8_deterministic():
    a = random_orthogonal(8, RngState(7))
    b = random_orthogonal(8, RngState(7))
    assert a.tobytes() == b.tobytes()
    assert np.max(np.abs(a.T @ a - np.eye(8))) <= 1e-10


@pytest.mark.parametrize("dim", [2, 3, 16, 64, 128, 512])
def test_orthogonal_up_to_512(dim):
    q = random_orthogonal(dim, RngState(dim))
    assert np.max(np.abs(q.T @ q - np.eye(dim))) <= 1e-10


@settings(max_examples=50)
@given(dim=st.integers(1, 40), seed=st.integers(0, 2**64 - 1))
def test_orthogonal_property(dim, seed):
    q = random_orthogonal(dim, RngState(seed))
    assert np.max(np.abs(q.T @ q - np.eye(dim))) <= 1e-10
    assert np.max(np.abs(q @ q.T - np.eye(dim))) <= 1e-10


def test_tokens_single_component_no_noise():
    xs = gen_tokens(TokenGenSpec(8, 5, n_components=1, spread=0.0, seed=1))
    assert xs.shape == (8, 5)
    assert len(np.unique(xs, axis=0)) == 1
    assert np.isclose(np.linalg.norm(xs[0]), 1.0)


def test_tokens_four_components_no_noise():
    xs = gen_tokens(TokenGenSpec(40, 6, n_components=4, spread=0.0, seed=2))
    assert len(np.unique(xs, axis=0)) == 4
    # round-robin assignment
    assert np.array_equal(xs[0], xs[4]) and not np.array_equal(xs[0], xs[1])


@settings(max_examples=40)
@given(n=st.integers(1, 60), dim=st.integers(1, 8), comps=st.integers(1, 10), seed=st.integers(0, 1000))
def test_tokens_zero_spread_at_most_components(n, dim, comps, seed):
    xs = gen_tokens(TokenGenSpec(n, dim, comps, 0.0, seed))
    assert len(np.unique(xs, axis=0)) <= comps
    assert np.all(np.isfinite(xs))


def test_tokens_deterministic():
    spec = TokenGenSpec(100, 16, 5, 0.1, seed=9)
    assert gen_tokens(spec).tobytes() == gen_tokens(spec).tobytes()


@pytest.mark.parametrize("bad", [
    dict(n_tokens=0, dim=2), dict(n_tokens=2, dim=0),
    dict(n_tokens=2, dim=2, n_components=0), dict(n_tokens=2, dim=2, spread=-0.1),
])
def test_token_spec_validation(bad):
    with pytest.raises(ValueError):
        TokenGenSpec(**bad)


# Frozen from the pairwise key-grouping oracle (seed 0, CP, q=6).
MIXTURE_Q6_BUCKETS = 3201


def test_mixture_bucket_count_matches_pairwise_oracle():
    spec = TokenGenSpec(4096, 64, n_components=20, spread=0.05, seed=0)
    xs = gen_tokens(spec)
    cfg = HashFamilyConfig(HashFamily.CROSS_POLYTOPE, 6, 64, seed=derive_seed(0, 4))
    keys = bucket_keys(cfg, xs)
    expected = n_groups(same_key_partition(keys))
    c = cluster(xs, cfg)
    assert same_bucket_partition(c.assignment) == same_key_partition(keys)
    assert c.n_buckets == expected
    assert 20 <= c.n_buckets <= 4096
    assert c.n_buckets == MIXTURE_Q6_BUCKETS
