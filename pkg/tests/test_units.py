import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from oracles import greedy_average_linkage
from sylseg import units
from sylseg.core import Segment, Segmentation, UtteranceEmbedding


def test_segment_features_examples():
    f = UtteranceEmbedding("u", np.array([[1.0, 1.0], [3.0, 3.0]]), 50)
    np.testing.assert_array_equal(units.segment_features(f, Segmentation("u", (Segment(0, 2),))), [[2.0, 2.0]])
    np.testing.assert_array_equal(units.segment_features(f, Segmentation("u", (Segment(1, 2),))), [[3.0, 3.0]])


def test_segment_features_loop_oracle():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 5))
    segs = Segmentation("u", (Segment(0, 3), Segment(5, 6), Segment(6, 14), Segment(17, 20)))
    got = units.segment_features(UtteranceEmbedding("u", x, 50), segs)
    for row, s in zip(got, segs.segments):
        acc = [0.0] * 5
        for t in range(s.start_frame, s.end_frame):
            acc = [a + v for a, v in zip(acc, x[t])]
        np.testing.assert_allclose(row, [a / len(s) for a in acc], rtol=1e-12)


def test_kmeans_k1_is_mean():
    p = np.random.default_rng(1).normal(size=(30, 3))
    np.testing.assert_allclose(units.kmeans_fit(p, 1, seed=0), p.mean(axis=0, keepdims=True), rtol=1e-12)


def test_kmeans_recovers_separated_clusters():
    rng = np.random.default_rng(2)
    means = np.array([[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]])
    labels = np.repeat(np.arange(3), 40)
    pts = means[labels] + rng.normal(scale=0.5, size=(120, 2))
    c = units.kmeans_fit(pts, 3, seed=4)
    for m in means:
        assert np.min(np.linalg.norm(c - m, axis=1)) < 0.5
    pred = np.argmin(((pts[:, None, :] - c[None]) ** 2).sum(-1), axis=1)
    # partition equal up to relabelling
    assert len({(a, b) for a, b in zip(labels, pred)}) == 3


def test_kmeans_saturated_and_errors():
    p = np.random.default_rng(3).normal(size=(6, 2))
    c = units.kmeans_fit(p, 6, seed=1)
    assert sorted(map(tuple, c)) == sorted(map(tuple, p))
    with pytest.raises(units.TooFewPoints):
        units.kmeans_fit(p, 7)


def test_kmeans_objective_non_increasing_and_deterministic():
    p = np.random.default_rng(4).normal(size=(300, 4))
    hist = []
    a = units.kmeans_fit(p, 12, seed=9, history=hist)
    assert len(hist) >= 2
    assert all(b <= a_ + 1e-9 for a_, b in zip(hist, hist[1:]))
    assert np.array_equal(a, units.kmeans_fit(p, 12, seed=9))


def test_kmeans_repairs_empty_clusters():
    # duplicated points force coincident seeds; every centroid must end up owning a point
    p = np.vstack([np.zeros((10, 2)), np.ones((10, 2)), [[5.0, 5.0]], [[9.0, 0.0]]])
    c = units.kmeans_fit(p, 4, seed=0)
    owner = np.argmin(((p[:, None, :] - c[None]) ** 2).sum(-1), axis=1)
    assert len(set(owner.tolist())) == 4


def test_agglomerate_examples():
    assert units.agglomerate(np.arange(5.0)[:, None], 5).tolist() == [0, 1, 2, 3, 4]
    mm = units.agglomerate(np.array([[0.0], [0.1], [10.0], [10.1]]), 2)
    assert mm.tolist() == [0, 0, 1, 1]


@pytest.mark.parametrize("seed", range(6))
def test_agglomerate_matches_naive_oracle(seed):
    pts = np.random.default_rng(seed).normal(size=(8, 3))
    for target in (1, 3, 5):
        assert units.agglomerate(pts, target).tolist() == greedy_average_linkage(pts.tolist(), target)


def test_agglomerate_tie_break_smallest_pair():
    # equally spaced: the first merge must be (0, 1)
    assert units.agglomerate(np.array([[0.0], [1.0], [2.0]]), 2).tolist() == [0, 0, 1]


def test_agglomerate_surjective():
    pts = np.random.default_rng(7).normal(size=(40, 2))
    for k in (1, 7, 40):
        mm = units.agglomerate(pts, k)
        assert sorted(set(mm.tolist())) == list(range(k))


def _model():
    c = np.arange(12.0).reshape(6, 2)
    return units.ClusterModel(c, np.array([0, 1, 1, 0, 1, 2]))


def test_assign_units_examples():
    m = _model()
    assert units.assign_units(m.fine_centroids[[5]], m).tolist() == [2]
    tie = (m.fine_centroids[0] + m.fine_centroids[1]) / 2
    assert units.assign_units(tie[None], units.ClusterModel(m.fine_centroids, np.array([7, 3, 0, 1, 2, 4, 5, 6])[:6] % 3)).tolist() == [1]


def test_assign_units_brute_force_and_far_centroid():
    rng = np.random.default_rng(8)
    c = rng.normal(size=(10, 3))
    mm = np.array([0, 1, 2, 3, 0, 1, 2, 3, 0, 1])
    feats = rng.normal(size=(50, 3))
    m = units.ClusterModel(c, mm)
    brute = [mm[min(range(10), key=lambda j: (sum((f - c[j]) ** 2), j))] for f in feats]
    got = units.assign_units(feats, m)
    assert got.tolist() == brute
    far = units.ClusterModel(np.vstack([c, [[1e6, 1e6, 1e6]]]), np.append(mm, 3))
    assert units.assign_units(feats, far).tolist() == got.tolist()


def test_cluster_model_validation():
    with pytest.raises(ValueError):
        units.ClusterModel(np.zeros((3, 2)), np.array([0, 0]))
    with pytest.raises(ValueError):
        units.ClusterModel(np.zeros((3, 2)), np.array([0, 2, 2]))


def test_cluster_model_save_load(tmp_path):
    pts = np.random.default_rng(9).normal(size=(60, 4)).astype(np.float32).astype(float)
    model = units.fit_cluster_model(pts, 8, 3, seed=5)
    model.save(tmp_path / "m")
    back = units.ClusterModel.load(tmp_path / "m")
    assert back.seed == 5 and back.n_fine == 8 and back.n_coarse == 3
    np.testing.assert_allclose(back.fine_centroids, model.fine_centroids, rtol=1e-6)
    assert np.array_equal(back.merge_map, model.merge_map)
    assert np.array_equal(units.assign_units(pts, back), units.assign_units(pts, model))


def test_fit_deterministic_and_assignment_records(tmp_path):
    pts = np.random.default_rng(10).normal(size=(80, 3))
    a = units.fit_cluster_model(pts, 10, 4, seed=2)
    b = units.fit_cluster_model(pts, 10, 4, seed=2)
    assert a.fine_centroids.tobytes() == b.fine_centroids.tobytes()
    assert np.array_equal(a.merge_map, b.merge_map)
    f = UtteranceEmbedding("u", pts[:10], 50)
    seg = Segmentation("u", (Segment(0, 4), Segment(4, 10)))
    asg = units.assign_utterance(f, seg, a)
    assert len(asg.units) == 2 and all(0 <= u < 4 for u in asg.units)
    units.write_assignments(tmp_path / "a.jsonl", [asg])
    back = units.read_assignments(tmp_path / "a.jsonl")[0]
    assert back.units == asg.units and back.segments == asg.segments and back.frame_rate == 50
    np.testing.assert_array_equal(back.features, asg.features)
