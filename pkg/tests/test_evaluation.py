import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import max_bipartite_hits, naive_purity
from sylseg import evaluation as ev
from sylseg.core import Segment, SyllableSpan
from sylseg.units import UnitAssignment


def test_match_examples():
    assert ev.match_boundaries([0.1, 0.5, 0.9], [0.1, 0.5, 0.9]) == 3
    assert ev.match_boundaries([1.0, 2.0], [1.01, 1.5], 0.05) == 1
    with pytest.raises(ev.Unsorted):
        ev.match_boundaries([2.0, 1.0], [1.0])
    with pytest.raises(ev.Unsorted):
        ev.match_boundaries([1.0], [0.5, 0.2])


def test_tolerance_edge_is_inclusive():
    # 1.05 - 1.0 is slightly above 0.05 in binary floating point
    assert ev.match_boundaries([1.0], [1.05], 0.05) == 1
    assert ev.match_boundaries([1.0], [1.0501], 0.05) == 0


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.integers(0, 40), max_size=8),
    st.lists(st.integers(0, 40), max_size=8),
    st.integers(0, 6),
)
def test_match_equals_bipartite_oracle(ref, pred, tol):
    ref = sorted(r / 20 for r in ref)
    pred = sorted(p / 20 for p in pred)
    tol_s = tol / 40
    assert ev.match_boundaries(ref, pred, tol_s) == max_bipartite_hits(ref, pred, tol_s)


def test_boundary_metric_examples():
    m = ev.boundary_metrics([1.0, 2.0], [1.0, 2.0])
    assert (m.precision, m.recall, m.f1, m.r_value, m.over_segmentation) == (1.0, 1.0, 1.0, 1.0, 0.0)
    m = ev.boundary_metrics([1.0, 2.0], [1.01, 1.5], 0.05)
    assert m.precision == m.recall == m.f1 == 0.5
    assert m.over_segmentation == 0.0
    r1, r2 = 0.5, -0.5 / math.sqrt(2)
    assert m.r_value == pytest.approx(1 - (abs(r1) + abs(r2)) / 2, abs=1e-12)
    assert m.r_value == pytest.approx(0.57322, abs=1e-4)
    m = ev.boundary_metrics([1.0], [])
    assert (m.precision, m.recall, m.f1, m.r_value) == (0.0, 0.0, 0.0, 0.0)
    m = ev.boundary_metrics([], [1.0])
    assert m.recall == 0.0 and m.f1 == 0.0


def test_swap_exchanges_precision_and_recall():
    rng = np.random.default_rng(0)
    for _ in range(50):
        ref = sorted(rng.uniform(0, 5, size=rng.integers(1, 10)))
        pred = sorted(rng.uniform(0, 5, size=rng.integers(1, 10)))
        a = ev.boundary_metrics(ref, pred)
        b = ev.boundary_metrics(pred, ref)
        assert a.precision == pytest.approx(b.recall) and a.recall == pytest.approx(b.precision)
        assert a.f1 == pytest.approx(b.f1)


def test_r_value_one_iff_perfect():
    for n_ref in range(1, 8):
        for n_pred in range(1, 8):
            for hit in range(0, min(n_ref, n_pred) + 1):
                m = ev.metrics_from_counts(n_ref, n_pred, hit)
                perfect = m.precision == 1.0 and m.recall == 1.0
                assert (m.r_value == 1.0) == perfect
                assert m.r_value <= 1.0


def test_corpus_pooling():
    m = ev.corpus_boundary_metrics([([0.1], [0.1]), ([0.2, 0.4], [0.9])])
    assert (m.n_ref, m.n_pred, m.n_hit) == (3, 2, 1)


def test_span_frames_rounding():
    assert ev.span_frames(SyllableSpan("a", 0.011, 0.059), 100) == (2, 5)
    assert ev.span_frames(SyllableSpan("a", 0.07, 0.29), 100) == (7, 29)
    assert ev.reference_boundaries([SyllableSpan("b", 0.5, 0.6), SyllableSpan("a", 0.1, 0.5)]) == [0.1, 0.5]


def _asg(uid, segs, units, rate=100.0):
    segs = tuple(Segment(a, b) for a, b in segs)
    return UnitAssignment(uid, segs, np.zeros((len(segs), 1)), tuple(units), rate)


def test_purity_perfect():
    spans = {"u": [SyllableSpan("ka", 0.0, 0.1), SyllableSpan("ta", 0.1, 0.3), SyllableSpan("ka", 0.3, 0.4)]}
    p = ev.purity_metrics([_asg("u", [(0, 10), (10, 30), (30, 40)], [5, 7, 5])], spans, 100)
    assert p.syllable_purity == 1.0 and p.cluster_purity == 1.0


def test_purity_half_and_half():
    spans = {"u": [SyllableSpan("a", 0.0, 0.1), SyllableSpan("b", 0.1, 0.2)]}
    p = ev.purity_metrics([_asg("u", [(0, 20)], [0])], spans, 100)
    assert p.syllable_purity == 0.5
    assert p.cluster_purity == 0.5
    assert p.contingency == {(0, "a"): 10, (0, "b"): 10}


def test_purity_empty_and_missing():
    p = ev.purity_metrics([], {}, 50)
    assert (p.syllable_purity, p.cluster_purity, p.contingency) == (0.0, 0.0, {})
    with pytest.raises(ev.MissingAlignment) as exc:
        ev.purity_metrics([_asg("zz", [(0, 2)], [0])], {}, 50)
    assert exc.value.ids == ["zz"]


def _random_case(rng):
    alignments, assignments = {}, []
    for u in range(int(rng.integers(1, 6))):
        uid = f"u{u}"
        cuts = np.sort(rng.choice(np.arange(1, 40), size=int(rng.integers(1, 5)), replace=False))
        edges = [0, *cuts.tolist(), 40]
        alignments[uid] = [
            SyllableSpan(f"s{int(rng.integers(3))}", a / 100, b / 100) for a, b in zip(edges, edges[1:])
        ]
        pc = np.sort(rng.choice(np.arange(1, 40), size=int(rng.integers(1, 5)), replace=False))
        pe = [int(rng.integers(0, 3)), *pc.tolist(), 40]
        segs = [(a, b) for a, b in zip(pe, pe[1:]) if b > a]
        assignments.append(_asg(uid, segs, rng.integers(0, 4, size=len(segs)).tolist()))
    return assignments, alignments


def test_purity_matches_naive_oracle():
    rng = np.random.default_rng(3)
    for _ in range(40):
        asg, al = _random_case(rng)
        p = ev.purity_metrics(asg, al, 100)
        sp, cp = naive_purity(asg, al, 100)
        assert p.syllable_purity == pytest.approx(sp, abs=1e-12)
        assert p.cluster_purity == pytest.approx(cp, abs=1e-12)


def test_purity_invariant_to_relabelling():
    rng = np.random.default_rng(4)
    for _ in range(20):
        asg, al = _random_case(rng)
        base = ev.purity_metrics(asg, al, 100)
        umap = {u: 10 * u + 3 for u in range(4)}
        smap = {f"s{i}": f"z{2 - i}" for i in range(3)}
        asg2 = [_asg(a.utterance_id, [s.as_list() for s in a.segments], [umap[u] for u in a.units]) for a in asg]
        al2 = {k: [SyllableSpan(smap[s.label], s.start_s, s.end_s) for s in v] for k, v in al.items()}
        p = ev.purity_metrics(asg2, al2, 100)
        assert p.syllable_purity == pytest.approx(base.syllable_purity, abs=1e-12)
        assert p.cluster_purity == pytest.approx(base.cluster_purity, abs=1e-12)


def test_report_table_and_json():
    b = ev.boundary_metrics([1.0, 2.0], [1.01, 1.5])
    r = ev.MetricsReport(b)
    table = r.table()
    header = [c.strip() for c in table.splitlines()[0].split("|")]
    assert header == ["Pr", "Re", "F1", "R"]
    r.purity = ev.PurityMetrics(0.5, 0.25, {(0, "a"): 3}, [(0, "a")])
    header = [c.strip() for c in r.table().splitlines()[0].split("|")]
    assert header == ["Pr", "Re", "F1", "R", "SP", "CP"]
    d = json.loads(r.to_json())
    assert d["boundary"]["precision"] == 0.5 and d["purity"]["syllable_purity"] == 0.5
