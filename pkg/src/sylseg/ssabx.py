"""Spoken-sentence ABX: triplet mining from text embeddings, and scoring.

A triplet asks whether a model's embedding of anchor X is closer to the
positive (semantically close) sentence than to the negative one.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from rapidfuzz.distance import Indel

from .core import SentenceRecord, UtteranceEmbedding, cosine_similarity, iter_jsonl, read_embedding, write_jsonl

log = logging.getLogger(__name__)

# half-open except the top band, so the three are disjoint and cover [-1, 0.6]
BANDS: dict[str, tuple[float, float]] = {
    "LOW": (-1.0, 0.2),
    "MID": (0.2, 0.4),
    "HIGH": (0.4, 0.6),
}
_LAST_BAND = "HIGH"


class EmptyStore(ValueError):
    pass


class MissingEmbedding(KeyError):
    pass


def band_of(sim: float, bands: Mapping[str, tuple[float, float]] = BANDS) -> str | None:
    names = list(bands)
    for name in names:
        lo, hi = bands[name]
        if lo <= sim < hi or (name == names[-1] and sim == hi):
            return name
    return None


@dataclass(frozen=True)
class MiningCriteria:
    pos_sim_min: float = 0.8
    neg_bands: tuple[tuple[str, float, float], ...] = tuple((k, lo, hi) for k, (lo, hi) in BANDS.items())
    per_band_count: int = 1000
    max_word_diff: int = 3
    levenshtein_max: float = 0.7
    min_words: int = 5
    max_duration_s: float = 5.0

    def bands(self) -> dict[str, tuple[float, float]]:
        return {name: (lo, hi) for name, lo, hi in self.neg_bands}


@dataclass(frozen=True)
class TripletRecord:
    x_id: str
    pos_id: str
    neg_id: str
    pos_sim: float
    neg_sim: float
    neg_band: str

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class MiningResult:
    triplets: list[TripletRecord]
    available: dict[str, int]
    shortfall: dict[str, int]
    n_positive_pairs: int
    n_anchors_reused: int = 0
    stats: dict = field(default_factory=dict)


def edit_distance(a: str, b: str) -> int:
    """Character edit distance with insert/delete 1 and substitution 2."""
    # a substitution costing 2 is a delete plus an insert, so this is the indel distance
    return int(Indel.distance(a, b))


def levenshtein_ratio(a: str, b: str) -> float:
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return (total - edit_distance(a, b)) / total


def _eligible(rec: SentenceRecord, crit: MiningCriteria) -> bool:
    return rec.n_words >= crit.min_words and rec.duration_s <= crit.max_duration_s


def _unit_rows(store: Sequence[SentenceRecord]) -> np.ndarray:
    emb = np.stack([r.text_embedding for r in store])
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero text embedding in store")
    return emb / norms


def mine_triplets(
    store: Sequence[SentenceRecord],
    crit: MiningCriteria = MiningCriteria(),
    seed: int = 0,
    chunk: int = 4096,
) -> MiningResult:
    """Sample up to ``per_band_count`` triplets per negative band.

    Within a band, triplets are drawn uniformly without replacement from the
    set of every valid ``(X, Pos, Neg)``. Short bands return what exists and
    the gap is reported in ``shortfall``.
    """
    if not store:
        raise EmptyStore("sentence store is empty")
    records = [r for r in store if _eligible(r, crit)]
    bands = crit.bands()
    if len(records) < 3:
        return MiningResult([], {b: 0 for b in bands}, {b: crit.per_band_count for b in bands}, 0)
    ids = [r.sentence_id for r in records]
    unit = _unit_rows(records)
    words = np.array([r.n_words for r in records])
    speakers = np.unique([r.speaker_id for r in records], return_inverse=True)[1]
    n = len(records)

    # positive pairs, ordered (X, Pos); similarity rows computed in chunks
    pairs: list[tuple[int, int, float]] = []
    for start in range(0, n, chunk):
        sims = np.clip(unit[start : start + chunk] @ unit.T, -1.0, 1.0)
        xs, ps = np.nonzero(sims >= crit.pos_sim_min)
        for xi, pi in zip(xs, ps):
            x = start + int(xi)
            p = int(pi)
            if x == p or speakers[x] == speakers[p]:
                continue
            if abs(words[x] - words[p]) > crit.max_word_diff:
                continue
            if levenshtein_ratio(records[x].text, records[p].text) > crit.levenshtein_max:
                continue
            pairs.append((x, p, float(sims[xi, pi])))

    # count valid negatives per pair and band; index lists are rebuilt only for sampled pairs
    band_names = list(bands)
    row_cache: tuple[int, np.ndarray] = (-1, np.empty(0))

    def anchor_row(x: int) -> np.ndarray:
        nonlocal row_cache
        if row_cache[0] != x:
            row_cache = (x, np.clip(unit @ unit[x], -1.0, 1.0))
        return row_cache[1]

    def negatives(w: int, b: str) -> np.ndarray:
        x, p, _ = pairs[w]
        row = anchor_row(x)
        ok = (np.abs(words - words[x]) <= crit.max_word_diff) & (speakers != speakers[x]) & (speakers != speakers[p])
        ok[x] = ok[p] = False
        lo, hi = bands[b]
        ok &= (row >= lo) & ((row < hi) | ((row == hi) & (b == band_names[-1])))
        return np.flatnonzero(ok)

    counts = {b: np.zeros(len(pairs), dtype=np.int64) for b in band_names}
    for w in range(len(pairs)):
        for b in band_names:
            counts[b][w] = negatives(w, b).size

    rng = np.random.default_rng(seed)
    triplets: list[TripletRecord] = []
    available: dict[str, int] = {}
    shortfall: dict[str, int] = {}
    for b in band_names:
        total = int(counts[b].sum())
        available[b] = total
        take = min(total, crit.per_band_count)
        shortfall[b] = crit.per_band_count - take
        if shortfall[b]:
            log.warning("band %s: only %d valid triplets for %d requested", b, total, crit.per_band_count)
        if take == 0:
            continue
        flat = np.sort(rng.choice(total, size=take, replace=False))
        offsets = np.cumsum(counts[b])
        which = np.searchsorted(offsets, flat, side="right")
        cached_w, negs = -1, np.empty(0, dtype=np.int64)
        for f, w in zip(flat, which):
            w = int(w)
            if w != cached_w:
                cached_w, negs = w, negatives(w, b)
            x, p, pos_sim = pairs[w]
            g = int(negs[int(f - (offsets[w] - counts[b][w]))])
            triplets.append(TripletRecord(ids[x], ids[p], ids[g], pos_sim, float(anchor_row(x)[g]), b))
    anchors = [t.x_id for t in triplets]
    reused = len(anchors) - len(set(anchors))
    stats = {"n_eligible": n, "n_store": len(store)}
    return MiningResult(triplets, available, shortfall, len(pairs), reused, stats)


def write_triplets(path, triplets: Sequence[TripletRecord]) -> None:
    write_jsonl(path, (t.to_record() for t in triplets))


def read_triplets(path) -> list[TripletRecord]:
    return [
        TripletRecord(
            str(r["x_id"]), str(r["pos_id"]), str(r["neg_id"]), float(r["pos_sim"]), float(r["neg_sim"]), str(r["neg_band"])
        )
        for r in iter_jsonl(path)
    ]


# ---------------------------------------------------------------------------
# Scoring


@dataclass
class SSABXScore:
    accuracy: float
    per_band: dict[str, float]
    n: int
    per_band_n: dict[str, int]


def score_ssabx(triplets: Sequence[TripletRecord], embed: Mapping[str, np.ndarray] | Callable) -> SSABXScore:
    """Fraction of triplets where cos(X, Pos) > cos(X, Neg); ties are wrong."""
    lookup = embed if callable(embed) else embed.__getitem__
    cache: dict[str, np.ndarray] = {}

    def get(i: str) -> np.ndarray:
        if i not in cache:
            try:
                cache[i] = np.asarray(lookup(i), dtype=np.float64)
            except KeyError:
                raise MissingEmbedding(i) from None
        return cache[i]

    correct: dict[str, int] = {}
    seen: dict[str, int] = {}
    for t in triplets:
        x = get(t.x_id)
        ok = cosine_similarity(x, get(t.pos_id)) > cosine_similarity(x, get(t.neg_id))
        seen[t.neg_band] = seen.get(t.neg_band, 0) + 1
        correct[t.neg_band] = correct.get(t.neg_band, 0) + int(ok)
    n = sum(seen.values())
    acc = sum(correct.values()) / n if n else 0.0
    per_band = {b: correct[b] / seen[b] for b in sorted(seen)}
    return SSABXScore(acc, per_band, n, dict(sorted(seen.items())))


def frame_average_embedding(f: UtteranceEmbedding) -> np.ndarray:
    return f.frames.mean(axis=0)


def load_sentence_embeddings(source, ids: Sequence[str] | None = None) -> dict[str, np.ndarray]:
    """Sentence vectors from a directory of UEMB files (frame-averaged) or a JSON-lines table.

    Table rows are ``{"sentence_id": ..., "embedding": [...]}``.
    """
    source = Path(source)
    out: dict[str, np.ndarray] = {}
    if source.is_dir():
        wanted = set(ids) if ids is not None else None
        for p in sorted(source.glob("*.uemb")):
            if wanted is None or p.stem in wanted:
                out[p.stem] = frame_average_embedding(read_embedding(p))
    else:
        for rec in iter_jsonl(source):
            out[str(rec["sentence_id"])] = np.asarray(rec["embedding"], dtype=np.float64)
    return out


def mining_summary(result: MiningResult) -> str:
    lines = [f"positive pairs: {result.n_positive_pairs}", f"triplets: {len(result.triplets)}"]
    for b, avail in result.available.items():
        lines.append(f"  {b:<5} available {avail:>8}  shortfall {result.shortfall[b]:>5}")
    lines.append(f"anchors appearing more than once: {result.n_anchors_reused}")
    return "\n".join(lines)


def score_json(score: SSABXScore) -> str:
    return json.dumps(asdict(score), indent=2)
