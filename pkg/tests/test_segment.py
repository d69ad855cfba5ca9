import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_partition_score, block_score
from sylseg import segment
from sylseg.core import Segment, Segmentation, UtteranceEmbedding
from sylseg.segment import SegmentationConfig


def dyadic_symmetric(rng, m):
    a = rng.integers(-1024, 1025, size=(m, m)) / 1024.0
    return np.triu(a) + np.triu(a, 1).T


def test_config_validation():
    for bad in (
        dict(norm_threshold=-1.0),
        dict(norm_threshold=1.0, max_cuts_per_segment=0),
        dict(norm_threshold=1.0, split_gain_threshold=-0.1),
        dict(norm_threshold=1.0, min_segment_frames=0),
    ):
        with pytest.raises(ValueError):
            SegmentationConfig(**bad)


def test_norm_threshold_examples():
    cfg = SegmentationConfig(1.0, min_segment_frames=1)
    got = segment.norm_threshold_segment([0.1, 5, 5, 0.1, 5, 5, 5, 0.1], cfg)
    assert got.pairs() == [(1, 3), (4, 7)]
    assert segment.norm_threshold_segment([5, 5, 5], cfg).pairs() == [(0, 3)]
    assert segment.norm_threshold_segment([0.1, 0.2], cfg).pairs() == []


def test_norm_threshold_drops_short_runs():
    cfg = SegmentationConfig(1.0, min_segment_frames=2)
    assert segment.norm_threshold_segment([5, 0, 5, 5, 0, 5], cfg).pairs() == [(2, 4)]


def test_norm_equal_to_threshold_is_below():
    cfg = SegmentationConfig(1.0, min_segment_frames=1)
    assert segment.norm_threshold_segment([1.0, 2.0, 1.0], cfg).pairs() == [(1, 2)]


def test_suggest_threshold():
    assert segment.suggest_norm_threshold([np.array([1.0, 3.0]), np.array([2.0])]) == 1.0


def test_mincut_block_diagonal():
    S = np.zeros((6, 6))
    S[:3, :3] = 1
    S[3:, 3:] = 1
    cfg = SegmentationConfig(0.0, split_gain_threshold=0.1)
    assert segment.mincut_refine(S, cfg) == [Segment(0, 3), Segment(3, 6)]
    scores, _ = segment.mincut_dp(S, 3)
    for k in (1, 2, 3):
        assert scores[k - 1] == best_partition_score(S.tolist(), k)


def test_mincut_uniform_and_degenerate():
    cfg = SegmentationConfig(0.0)
    assert segment.mincut_refine(np.ones((7, 7)), cfg) == [Segment(0, 7)]
    assert segment.mincut_refine(np.array([[2.0]]), cfg, offset=5) == [Segment(5, 6)]


def test_mincut_offset_applied():
    S = np.zeros((4, 4))
    S[:2, :2] = 1
    S[2:, 2:] = 1
    assert segment.mincut_refine(S, SegmentationConfig(0.0), offset=10) == [Segment(10, 12), Segment(12, 14)]


def test_dp_matches_enumeration_exactly():
    rng = np.random.default_rng(11)
    for _ in range(60):
        m = int(rng.integers(1, 11))
        S = dyadic_symmetric(rng, m)
        scores, cuts = segment.mincut_dp(S, 3)
        for k in range(1, min(3, m) + 1):
            assert scores[k - 1] == best_partition_score(S.tolist(), k)
            assert block_score(S.tolist(), cuts[k - 1]) == scores[k - 1]


def test_dp_matches_enumeration_on_general_floats():
    rng = np.random.default_rng(12)
    for _ in range(30):
        m = int(rng.integers(2, 10))
        S = rng.normal(size=(m, m))
        S = (S + S.T) / 2
        scores, _ = segment.mincut_dp(S, 3)
        for k in range(1, min(3, m) + 1):
            assert scores[k - 1] == pytest.approx(best_partition_score(S.tolist(), k), rel=1e-9, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_scores_monotone_on_gram_matrices(m, d, seed):
    x = np.random.default_rng(seed).normal(size=(m, d))
    scores, _ = segment.mincut_dp(x @ x.T, 3)
    assert np.all(np.diff(scores) >= -1e-9)


def test_select_num_blocks_rule():
    assert segment.select_num_blocks(np.array([10.0, 10.4, 12.0]), 0.05) == 1
    assert segment.select_num_blocks(np.array([10.0, 10.6, 11.0]), 0.05) == 2
    assert segment.select_num_blocks(np.array([10.0, 10.6, 11.2]), 0.05) == 3
    assert segment.select_num_blocks(np.array([10.0]), 0.05) == 1


def test_global_mincut_agrees_with_dp():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(30, 4))
    S = x @ x.T
    W = segment.block_mass_table(S)
    for k in (1, 2, 4, 7):
        cuts = segment.global_mincut(S, k)
        assert len(cuts) == k + 1 and cuts[0] == 0 and cuts[-1] == 30
        got = sum(W[a, b] for a, b in zip(cuts, cuts[1:]))
        if k <= 3:
            assert got == pytest.approx(segment.mincut_dp(S, 3)[0][k - 1], rel=1e-12)


def _utt(frames, rate=50.0):
    return UtteranceEmbedding("u", np.asarray(frames, dtype=float), rate)


def test_segment_utterance_uniform_runs_match_coarse():
    v = np.array([1.0, 0.0])
    frames = np.array([0 * v, v, v, v, 0 * v, v, v, 0 * v]) * 3
    e = _utt(frames)
    cfg = SegmentationConfig(1.0)
    coarse = segment.norm_threshold_segment(np.linalg.norm(frames, axis=1), cfg, "u")
    assert segment.segment_utterance(e, e, cfg) == coarse
    assert coarse.pairs() == [(1, 4), (5, 7)]


def test_segment_utterance_splits_at_seam():
    a, b = np.array([2.0, 0.0]), np.array([0.0, 2.0])
    f = _utt([[0, 0]] + [a] * 4 + [b] * 5 + [[0, 0]])
    got = segment.segment_utterance(f, f, SegmentationConfig(1.0))
    assert got.pairs() == [(1, 5), (5, 10)]
    assert segment.segment_utterance(f, f, SegmentationConfig(1.0), mincut=False).pairs() == [(1, 10)]


def test_segment_utterance_errors_and_edge():
    with pytest.raises(segment.ShapeMismatch):
        segment.segment_utterance(_utt(np.ones((3, 2))), _utt(np.ones((4, 2))), SegmentationConfig(0.5))
    with pytest.raises(segment.ShapeMismatch):
        segment.segment_utterance(_utt(np.ones((3, 2))), _utt(np.ones((3, 2)), 100.0), SegmentationConfig(0.5))
    tiny = _utt([[0.1]])
    assert len(segment.segment_utterance(tiny, tiny, SegmentationConfig(1.0))) == 0


def test_subsegments_stay_inside_parents():
    from sylseg.synthetic import syllable_corpus

    utts, _ = syllable_corpus(8, 6, seed=3)
    for u in utts:
        cfg = SegmentationConfig(1.0)
        coarse = segment.segment_utterance(u.norm_layer, u.feature_layer, cfg, mincut=False)
        fine = segment.segment_utterance(u.norm_layer, u.feature_layer, cfg)
        assert len(fine) >= len(coarse)
        for s in fine.segments:
            assert any(p.start_frame <= s.start_frame and s.end_frame <= p.end_frame for p in coarse.segments)


def test_boundaries_from_segments():
    seg = Segmentation("u", (Segment(1, 3), Segment(4, 7)))
    assert segment.boundaries_from_segments(seg, 50) == [0.02, 0.08]
    assert segment.boundaries_from_segments(Segmentation("u", ()), 50) == []
    assert segment.boundaries_from_segments(Segmentation("u", (Segment(0, 10),)), 100) == [0.0]


def test_segmentation_file_roundtrip(tmp_path):
    items = [(Segmentation("a", (Segment(1, 3), Segment(4, 7))), 50.0), (Segmentation("b", ()), 50.0)]
    segment.write_segmentations(tmp_path / "s.jsonl", items)
    first = json.loads((tmp_path / "s.jsonl").read_text().splitlines()[0])
    assert first["segments"] == [[1, 3], [4, 7]] and first["boundaries_s"] == [0.02, 0.08]
    assert segment.read_segmentations(tmp_path / "s.jsonl") == items
