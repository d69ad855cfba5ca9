import numpy as np
import pytest

from sylseg.bench import BenchConfig, run_bench, write_bench_csv
from sylseg.core import frame_norms
from sylseg.synthetic import bench_utterance, distill_corpus, sentence_store, syllable_corpus


def test_bench_rejects_non_positive_sizes():
    with pytest.raises(ValueError):
        BenchConfig(local_frames=(0, 100))
    with pytest.raises(ValueError):
        BenchConfig(global_frames=(-5,))


def test_bench_rows_and_csv(tmp_path):
    rows = run_bench(BenchConfig(local_frames=(200, 400), global_frames=(100, 200), repeats=1))
    assert [(r.path, r.num_frames) for r in rows] == [("per_segment", 200), ("per_segment", 400), ("global", 100), ("global", 200)]
    assert rows[0].ratio is None and rows[1].ratio is not None
    # fixed density: one coarse segment per two syllables, each refined back into two
    assert rows[1].num_blocks == 400 // 20
    write_bench_csv(tmp_path / "b.csv", rows)
    assert len((tmp_path / "b.csv").read_text().splitlines()) == 5


def test_bench_utterance_density():
    e, f = bench_utterance(200, syllable_frames=20, syllables_per_segment=2)
    low = frame_norms(e) < 0.5
    assert low.sum() == 5 and e.num_frames == f.num_frames == 200


def test_syllable_corpus_structure():
    utts, templates = syllable_corpus(10, 6, dim=8, seed=1)
    assert templates.shape == (6, 8)
    for u in utts:
        assert 5 <= len(u.spans) <= 8
        assert all(a.end_s == b.start_s for a, b in zip(u.spans, u.spans[1:]))
        assert all(x != y for x, y in zip(u.templates, u.templates[1:]))
    a, _ = syllable_corpus(3, 6, seed=4)
    b, _ = syllable_corpus(3, 6, seed=4)
    assert all(np.array_equal(x.feature_layer.frames, y.feature_layer.frames) for x, y in zip(a, b))


def test_sentence_store_and_distill_corpus():
    store = sentence_store(50, seed=2)
    assert len({r.sentence_id for r in store}) == 50
    seqs = distill_corpus(6, 5, n_classes=2, seed=0)
    assert all(s.shape[1] == 5 and 30 <= s.shape[0] <= 80 for s in seqs)
