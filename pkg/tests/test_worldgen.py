import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import rrf_oracle, topk_rrf_oracle, weak_orderings
from owdl import neuralnet as nn
from owdl.worldgen import (
    WorldConfig,
    class_of_cell,
    dump_sessions_csv,
    generate_session_samples,
    khot_truncate,
    scores_to_rrf,
    session_drift,
)


@pytest.mark.parametrize("u, v, expected", [(0.0, 0.0, 0), (0.95, 0.95, 99), (0.25, 0.70, 72)])
def test_class_of_cell(u, v, expected):
    assert class_of_cell(u, v, 10) == expected


@pytest.mark.parametrize("u, v", [(1.0, 0.0), (-0.1, 0.5), (0.5, 1.2)])
def test_class_of_cell_rejects_out_of_range(u, v):
    with pytest.raises(ValueError):
        class_of_cell(u, v, 10)


def test_scores_to_rrf_examples():
    np.testing.assert_allclose(scores_to_rrf([0.2, 0.9, 0.5]), [1 / 3, 1, 1 / 2])
    np.testing.assert_allclose(scores_to_rrf([4.0, 4.0, 4.0]), [1, 1 / 2, 1 / 3])
    np.testing.assert_allclose(scores_to_rrf([5.0, 3.0, 1.0, -2.0]), [1, 1 / 2, 1 / 3, 1 / 4])


def test_khot_truncate_examples():
    r = np.array([1 / 3, 1, 1 / 2])
    np.testing.assert_allclose(khot_truncate(r, 2), [0, 1, 1 / 2])
    np.testing.assert_array_equal(khot_truncate(r, 3), r)
    np.testing.assert_allclose(khot_truncate(r, 1), [0, 1, 0])


@pytest.mark.parametrize("k", [0, 4])
def test_khot_truncate_rejects_bad_k(k):
    with pytest.raises(ValueError):
        khot_truncate([1 / 3, 1, 1 / 2], k)


def test_weak_ordering_counts():
    # ordered Bell numbers
    assert [sum(1 for _ in weak_orderings(n)) for n in range(1, 6)] == [1, 3, 13, 75, 541]


@pytest.mark.parametrize("n", range(1, 9))
def test_rrf_and_khot_match_sort_oracle_exhaustively(n):
    scores = np.array(list(weak_orderings(n)), dtype=np.float64)
    got = scores_to_rrf(scores)
    want = np.array([rrf_oracle(list(row)) for row in scores])
    np.testing.assert_array_equal(got, want)
    for k in range(1, n + 1):
        want_k = np.where(want >= 1.0 / k - 1e-12, want, 0.0)
        np.testing.assert_array_equal(khot_truncate(got, k), want_k)


@settings(max_examples=300, deadline=None)
@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e6, 1e6)), st.data())
def test_khot_equals_topk_reciprocal_ranks(scores, data):
    k = data.draw(st.integers(1, len(scores)))
    r = khot_truncate(scores_to_rrf(scores), k)
    np.testing.assert_allclose(r, topk_rrf_oracle(list(scores), k), atol=1e-15)
    nz = np.sort(r[r > 0])[::-1]
    np.testing.assert_allclose(nz, 1.0 / np.arange(1, k + 1))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-1e6, 1e6)))
def test_rrf_is_scale_invariant(scores):
    np.testing.assert_array_equal(scores_to_rrf(scores), scores_to_rrf(2 * scores))


def test_rrf_has_single_one():
    r = scores_to_rrf(np.random.default_rng(0).normal(size=50))
    assert np.sum(r == 1) == 1 and np.all((r > 0) & (r <= 1))


def test_noiseless_samples_peak_at_own_class():
    world = WorldConfig(session_drift=0, sample_noise=0, seed=1)
    for s in generate_session_samples(world, 0, 3):
        assert s.x[s.y] == 1.0
        assert np.count_nonzero(s.x) == world.k


def test_session_samples_are_deterministic():
    world = WorldConfig(seed=5)
    a = generate_session_samples(world, 4, 5)
    b = generate_session_samples(world, 4, 5)
    assert [s.y for s in a] == [s.y for s in b]
    assert all(np.array_equal(p.x, q.x) for p, q in zip(a, b))
    np.testing.assert_array_equal(session_drift(world, 4), session_drift(world, 4))


def test_class_subset_keeps_per_class_streams():
    world = WorldConfig(seed=2)
    full = generate_session_samples(world, 1, 4)
    part = generate_session_samples(world, 1, 4, [7, 3])
    expected = [s for s in full if s.y in (3, 7)]
    assert all(np.array_equal(p.x, q.x) and p.y == q.y for p, q in zip(part, expected))


def test_samples_are_khot_rrf_vectors():
    world = WorldConfig(seed=0)
    for s in generate_session_samples(world, 2, 2):
        assert np.all((s.x >= 0) & (s.x <= 1))
        np.testing.assert_allclose(np.sort(s.x[s.x > 0])[::-1], 1.0 / np.arange(1, world.k + 1))


def test_class_centroids_peak_at_own_index():
    world = WorldConfig(seed=0)
    samples = generate_session_samples(world, 0, 50)
    x = np.stack([s.x for s in samples]).reshape(world.num_classes, 50, -1)
    assert np.array_equal(x.mean(axis=1).argmax(axis=1), np.arange(world.num_classes))


def test_domain_gap():
    world = WorldConfig(seed=0)
    pool = generate_session_samples(world, 0, 150)
    train = [s for i, s in enumerate(pool) if i % 150 < 100]
    held = [s for i, s in enumerate(pool) if i % 150 >= 100]
    net = nn.train_supervised(nn.init_network((100, 256, 100), 0), train, nn.TrainConfig(epochs=50))
    in_session = nn.accuracy(net, held)
    far = nn.accuracy(net, generate_session_samples(world, world.test_session, 50))
    assert in_session >= 0.90
    assert far < in_session


@pytest.mark.parametrize(
    "kwargs", [dict(num_sessions=2), dict(grid_side=0), dict(sample_noise=-1), dict(k=0), dict(k=101)]
)
def test_world_config_invariants(kwargs):
    with pytest.raises(ValueError):
        WorldConfig(**kwargs)


def test_session_csv_dump(tmp_path):
    world = WorldConfig(seed=0)
    path = tmp_path / "s.csv"
    dump_sessions_csv(world, [0, 1], 2, path)
    rows = path.read_text().splitlines()
    assert rows[0] == "session_id,class,entries"
    assert len(rows) == 1 + 2 * world.num_classes * 2
    first = rows[1].split(",")
    assert first[0] == "0" and first[1] == "0"
    pairs = first[2].split()
    assert len(pairs) == world.k and pairs[0].endswith(":1")
