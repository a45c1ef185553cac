import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from owdl import neuralnet as nn
from owdl.models import CapabilityError, SelfLocalizationModel, TeacherCapabilities, build_replay_buffer
from owdl.questioner import (
    QuestionerConfig,
    collect_rr,
    entropies,
    entropy,
    generate_rr_queries,
    generate_rr_query,
    run_entropy_scheme,
    run_mixup_scheme,
    run_replay_scheme,
    run_rr_scheme,
    run_scheme,
    select_per_class,
)
from owdl.worldgen import Origin, WorldConfig, generate_session_samples

CLASSES = (3, 14, 25, 36, 47, 58, 69, 70, 81, 92)


def make_teacher(world, caps=TeacherCapabilities(), classes=CLASSES, hidden=64):
    data = generate_session_samples(world, 6, 100, classes)
    net = nn.train_supervised(nn.init_network((100, hidden, 100), 1), data, nn.TrainConfig(epochs=20))
    return SelfLocalizationModel(net, classes, caps, build_replay_buffer(data, classes), name="t")


@pytest.fixture(scope="module")
def teacher():
    return make_teacher(WorldConfig(seed=0))


class FixedRng:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def random(self, n):
        return self.values[:n]


def test_rr_query_example():
    q = generate_rr_query(5, 2, FixedRng([0.1, 0.9, 0.3, 0.7, 0.2]))
    np.testing.assert_array_equal(q, [0, 1, 0, 0.5, 0])


def test_rr_query_full_k_is_permutation():
    q = generate_rr_query(7, 7, np.random.default_rng(3))
    np.testing.assert_allclose(np.sort(q), np.sort(1.0 / np.arange(1, 8)))


def test_rr_queries_are_deterministic_and_batch_consistent():
    a = generate_rr_query(20, 10, np.random.default_rng(9))
    b = generate_rr_query(20, 10, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)
    rng = np.random.default_rng(4)
    seq = np.stack([generate_rr_query(20, 10, rng) for _ in range(5)])
    np.testing.assert_array_equal(seq, generate_rr_queries(5, 20, 10, np.random.default_rng(4)))


def test_rr_query_rejects_large_k():
    with pytest.raises(ValueError):
        generate_rr_query(5, 6, np.random.default_rng(0))


@pytest.mark.parametrize(
    "p, expected",
    [(np.eye(5)[2], 0.0), (np.full(100, 0.01), np.log(100)), ([0.5, 0.5], np.log(2))],
)
def test_entropy_examples(p, expected):
    assert entropy(p) == pytest.approx(expected, abs=1e-12)


def test_entropy_reference_values():
    assert entropy(np.full(100, 0.01)) == pytest.approx(4.60517, abs=1e-5)
    assert entropy([0.5, 0.5]) == pytest.approx(0.69315, abs=1e-5)


def test_entropy_rejects_invalid_maps():
    with pytest.raises(ValueError):
        entropy([0.5, 0.6])
    with pytest.raises(ValueError):
        entropy([1.5, -0.5])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=10).filter(lambda v: sum(v) > 1e-3))
def test_entropy_bounds_and_batch_agreement(raw):
    p = np.array(raw) / np.sum(raw)
    e = entropy(p)
    assert 0 <= e <= np.log(len(p)) + 1e-12
    assert entropies(p[None, :])[0] == pytest.approx(e, abs=1e-12)


def test_select_keeps_lowest_entropy():
    picks = select_per_class([7, 7], [1.5, 0.2], [7], T=1)
    assert picks[7].tolist() == [1]


def test_select_caps_popular_classes():
    top1 = [1, 1, 1, 1, 2]
    ents = [0.4, 0.1, 0.3, 0.2, 0.9]
    picks = select_per_class(top1, ents, [1, 2, 3], T=2)
    assert picks[1].tolist() == [1, 3]
    assert picks[2].tolist() == [4]
    assert picks[3].tolist() == []


def test_rr_with_zero_cap_is_empty(teacher):
    kt, asked = run_rr_scheme(teacher, QuestionerConfig("rr", T=5, attempt_cap=0))
    assert asked == 0 and kt.samples == []
    assert kt.shortfalls == {c: 5 for c in CLASSES}


def test_rr_fills_every_class(teacher):
    for seed in range(10):
        kt, asked = run_rr_scheme(teacher, QuestionerConfig("rr", T=5, seed=seed))
        assert kt.per_class_counts == {c: 5 for c in CLASSES}
        assert not kt.shortfalls
        assert asked <= 200 * 5 * len(CLASSES)
        assert all(s.y in CLASSES and s.origin is Origin.RR and s.soft_label is not None for s in kt.samples)


def test_rr_labels_match_ground_truth_in_noiseless_world():
    world = WorldConfig(seed=0, sample_noise=0.0, session_drift=0.0)
    t = make_teacher(world)
    kt, _ = run_rr_scheme(t, QuestionerConfig("rr", T=30, seed=0))
    peaked = [s for s in kt.samples if int(np.argmax(s.x)) in CLASSES]
    assert peaked
    assert all(int(np.argmax(s.x)) == s.y for s in peaked)


def test_rr_label_only_teacher_works_without_soft_labels():
    world = WorldConfig(seed=0)
    t = make_teacher(world, TeacherCapabilities.label_only())
    kt, _ = run_rr_scheme(t, QuestionerConfig("rr", T=2))
    assert kt.billed == 2 * len(CLASSES)
    assert all(s.soft_label is None for s in kt.samples)


def test_entropy_requires_probability_map():
    t = make_teacher(WorldConfig(seed=0), TeacherCapabilities(False, True, True))
    with pytest.raises(CapabilityError, match="entropy scheme requires probability map"):
        run_entropy_scheme(t, QuestionerConfig("entropy", T=2))


def test_entropy_selection_lowers_mean_entropy(teacher):
    log = []
    kt, asked = run_entropy_scheme(teacher, QuestionerConfig("entropy", T=5, seed=2), transcript=log)
    assert asked == len(log) == 20 * 5 * len(CLASSES)
    probe_mean = np.mean([r["entropy"] for r in log])
    chosen = entropies(np.stack([s.soft_label for s in kt.samples]))
    assert chosen.mean() < probe_mean


def test_entropy_selection_is_subset_of_probes(teacher):
    log = []
    kt, _ = run_entropy_scheme(teacher, QuestionerConfig("entropy", T=3, T_prime=500, seed=5), transcript=log)
    probes = {tuple(r["query"]) for r in log}
    for s in kt.samples:
        nz = np.flatnonzero(s.x)
        assert tuple(nz[np.argsort(-s.x[nz])]) in probes


def test_entropy_without_selection_reduces_to_rr(teacher):
    cfg = QuestionerConfig("entropy", T=4, T_prime=300, seed=8)
    ent, _ = run_entropy_scheme(teacher, cfg, select="first")
    rr, asked = collect_rr(teacher, CLASSES, 4, 10, 300, np.random.default_rng(8))
    assert asked <= 300
    assert ent.per_class_counts == rr.per_class_counts
    assert all(np.array_equal(a.x, b.x) and a.y == b.y for a, b in zip(ent.samples, rr.samples))


def test_entropy_with_no_slack_matches_rr_set(teacher):
    # T >= T' leaves nothing to select: every probe is returned
    cfg = QuestionerConfig("entropy", T=200, T_prime=200, seed=1)
    ent, _ = run_entropy_scheme(teacher, cfg)
    rr, _ = collect_rr(teacher, CLASSES, 200, 10, 200, np.random.default_rng(1))
    key = lambda s: (s.y, s.x.tobytes())
    assert sorted(map(key, ent.samples)) == sorted(map(key, rr.samples))


def test_replay_scheme(teacher):
    kt = run_replay_scheme(teacher, QuestionerConfig("replay", T=5))
    assert kt.per_class_counts == {c: 5 for c in CLASSES}
    assert all(s.origin is Origin.REPLAY and s.soft_label is not None for s in kt.samples)


def test_mixup_degenerate_cases(teacher):
    key = lambda kt: [(s.y, s.origin, s.x.tobytes()) for s in kt.samples]
    rep = run_replay_scheme(teacher, QuestionerConfig("replay", T=3))
    mix_all_replay, _ = run_mixup_scheme(teacher, QuestionerConfig("mixup", T=3, R=3))
    assert key(mix_all_replay) == key(rep)
    ent, _ = run_entropy_scheme(teacher, QuestionerConfig("entropy", T=3, seed=4))
    mix_no_replay, _ = run_mixup_scheme(teacher, QuestionerConfig("mixup", T=3, R=0, seed=4))
    assert key(mix_no_replay) == key(ent)


@pytest.mark.parametrize("base", ["rr", "entropy"])
def test_mixup_count_audit(teacher, base):
    kt, _ = run_mixup_scheme(teacher, QuestionerConfig("mixup", T=5, R=1, mixup_base=base))
    for c in CLASSES:
        group = [s for s in kt.samples if s.y == c]
        assert sum(s.origin is Origin.REPLAY for s in group) == 1
        assert len(group) - 1 <= 4
        assert all(s.origin in (Origin.REPLAY, Origin(base)) for s in group)


def test_mixup_names_missing_capability():
    t = make_teacher(WorldConfig(seed=0), TeacherCapabilities(True, True, False))
    with pytest.raises(CapabilityError, match="replay"):
        run_mixup_scheme(t, QuestionerConfig("mixup", T=3))
    t = make_teacher(WorldConfig(seed=0), TeacherCapabilities(False, True, True))
    with pytest.raises(CapabilityError, match="probability map"):
        run_mixup_scheme(t, QuestionerConfig("mixup", T=3, mixup_base="entropy"))


@pytest.mark.parametrize("scheme", ["replay", "rr", "entropy", "mixup"])
@pytest.mark.parametrize("T", [1, 3])
def test_billed_per_class_never_exceeds_T_and_is_deterministic(teacher, scheme, T):
    cfg = QuestionerConfig(scheme, T=T, seed=T)
    a, _ = run_scheme(teacher, cfg)
    b, _ = run_scheme(teacher, cfg)
    assert all(n <= T for n in a.per_class_counts.values())
    assert all(s.y in CLASSES for s in a.samples)
    assert [(s.y, s.x.tobytes()) for s in a.samples] == [(s.y, s.x.tobytes()) for s in b.samples]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(scheme="nope"),
        dict(T=-1),
        dict(T=5, T_prime=4),
        dict(scheme="mixup", T=1, R=2),
        dict(mixup_base="replay"),
        dict(k=0),
    ],
)
def test_questioner_config_invariants(kwargs):
    with pytest.raises(ValueError):
        QuestionerConfig(**kwargs)
