"""Synthetic corpora with known structure, for tests, benchmarks and demos."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SentenceRecord, SyllableSpan, UtteranceEmbedding


@dataclass
class SyntheticUtterance:
    norm_layer: UtteranceEmbedding
    feature_layer: UtteranceEmbedding
    spans: list[SyllableSpan]
    templates: list[int]


def syllable_templates(n: int, dim: int, rng: np.random.Generator, scale: float = 3.0) -> np.ndarray:
    t = rng.normal(size=(n, dim))
    return scale * t / np.linalg.norm(t, axis=1, keepdims=True)


def syllable_utterance(
    utterance_id: str,
    templates: np.ndarray,
    rng: np.random.Generator,
    n_syllables: tuple[int, int] = (5, 8),
    syllable_frames: tuple[int, int] = (8, 16),
    noise: float = 0.05,
    knockout_prob: float = 0.6,
    max_per_run: int = 3,
    edge_frames: int = 3,
    frame_rate: float = 50.0,
) -> SyntheticUtterance:
    """Concatenate template-plus-noise syllables with knocked-out boundary frames.

    ``noise`` is the per-coordinate standard deviation as a fraction of the
    template norm. Only some boundaries get a low-norm frame (the last frame
    of the preceding syllable); runs of unbroken syllables are capped at
    ``max_per_run`` so the refinement step has at most that many to split.
    """
    n_tpl, dim = templates.shape
    count = int(rng.integers(n_syllables[0], n_syllables[1] + 1))
    ids: list[int] = []
    for _ in range(count):
        choices = [i for i in range(n_tpl) if not ids or i != ids[-1]]
        ids.append(int(rng.choice(choices)))
    lengths = rng.integers(syllable_frames[0], syllable_frames[1] + 1, size=count)

    knock = rng.random(count - 1) < knockout_prob
    run = 1
    for b in range(count - 1):
        if not knock[b]:
            run += 1
            if run > max_per_run:
                knock[b] = True
                run = 1
        else:
            run = 1

    total = int(lengths.sum()) + 2 * edge_frames
    silence = lambda n: rng.normal(scale=0.01, size=(n, dim))  # noqa: E731
    feats = [silence(edge_frames)]
    low = np.zeros(total, dtype=bool)
    low[:edge_frames] = True
    low[total - edge_frames :] = True
    spans = []
    pos = edge_frames
    for s, (tpl, n) in enumerate(zip(ids, lengths)):
        t = templates[tpl]
        sigma = noise * np.linalg.norm(t)
        feats.append(t + rng.normal(scale=sigma, size=(n, dim)))
        spans.append(SyllableSpan(f"syl{tpl}", pos / frame_rate, (pos + n) / frame_rate))
        if s < count - 1 and knock[s]:
            low[pos + n - 1] = True
        pos += int(n)
    feats.append(silence(edge_frames))
    f = np.vstack(feats)
    e = f.copy()
    e[low] *= 0.02
    return SyntheticUtterance(
        UtteranceEmbedding(utterance_id, e, frame_rate),
        UtteranceEmbedding(utterance_id, f, frame_rate),
        spans,
        ids,
    )


def syllable_corpus(
    n_utterances: int = 50,
    n_templates: int = 10,
    dim: int = 16,
    seed: int = 0,
    **kwargs,
) -> tuple[list[SyntheticUtterance], np.ndarray]:
    rng = np.random.default_rng(seed)
    templates = syllable_templates(n_templates, dim, rng)
    utts = [syllable_utterance(f"utt{i:04d}", templates, rng, **kwargs) for i in range(n_utterances)]
    return utts, templates


def bench_utterance(
    num_frames: int,
    syllable_frames: int = 20,
    syllables_per_segment: int = 2,
    dim: int = 16,
    seed: int = 0,
    frame_rate: float = 50.0,
) -> tuple[UtteranceEmbedding, UtteranceEmbedding]:
    """Fixed-density utterance: every coarse segment holds the same number of syllables."""
    rng = np.random.default_rng(seed)
    templates = syllable_templates(8, dim, rng)
    f = np.empty((num_frames, dim))
    low = np.zeros(num_frames, dtype=bool)
    prev = -1
    for n, start in enumerate(range(0, num_frames, syllable_frames)):
        tpl = int(rng.integers(len(templates) - 1))
        tpl = tpl + 1 if tpl >= prev else tpl
        prev = tpl
        end = min(start + syllable_frames, num_frames)
        f[start:end] = templates[tpl] + rng.normal(scale=0.05 * 3.0, size=(end - start, dim))
        if (n + 1) % syllables_per_segment == 0:
            low[end - 1] = True
    e = f.copy()
    e[low] *= 0.02
    return UtteranceEmbedding("bench", e, frame_rate), UtteranceEmbedding("bench", f, frame_rate)


_VOCAB = (
    "the a and of to in was he it that his for with as had you not be her on at by which "
    "have or from this him but all she they were my are me one their so an said them we who "
    "would been will no when there if more out up into do any your what has man could other "
    "than our some very time upon about may its only now like little then can should made did "
    "us such great before must two these see know over much down after first mister good men "
    "own never most old shall day where those came come himself way work life without go make "
    "well through being long say might how am too even def under years think again went"
).split()


def sentence_store(
    n: int = 2000,
    n_topics: int = 40,
    n_speakers: int = 60,
    dim: int = 32,
    seed: int = 0,
) -> list[SentenceRecord]:
    """Sentences grouped into correlated topics so all negative bands are populated.

    Topic directions share a common component of varying strength, so
    cross-topic cosines spread over roughly [-0.3, 0.7] while same-topic
    pairs mostly exceed 0.8.
    """
    rng = np.random.default_rng(seed)
    common = rng.normal(size=dim)
    common /= np.linalg.norm(common)
    topics = []
    for _ in range(n_topics):
        r = rng.normal(size=dim)
        r /= np.linalg.norm(r)
        w = rng.uniform(-0.4, 0.8)
        v = w * common + np.sqrt(1 - w**2) * r
        topics.append(v / np.linalg.norm(v))
    topics = np.array(topics)
    out = []
    for i in range(n):
        topic = int(rng.integers(n_topics))
        emb = topics[topic] + rng.normal(scale=0.06, size=dim)
        n_words = int(rng.integers(3, 13))
        text = " ".join(rng.choice(_VOCAB, size=n_words))
        out.append(
            SentenceRecord(
                sentence_id=f"s{i:05d}",
                text=text,
                speaker_id=f"spk{int(rng.integers(n_speakers)):03d}",
                n_words=n_words,
                duration_s=float(np.round(0.35 * n_words + rng.uniform(-0.5, 1.0), 3)),
                text_embedding=emb,
            )
        )
    # a few near-duplicate texts exercise the Levenshtein rejection
    for i in range(0, min(n, 200), 20):
        j = i + 1
        if j < n:
            src = out[i]
            out[j] = SentenceRecord(
                out[j].sentence_id,
                src.text,
                out[j].speaker_id,
                src.n_words,
                out[j].duration_s,
                src.text_embedding + rng.normal(scale=0.01, size=dim),
            )
    return out


def distill_corpus(n: int, dim: int, n_classes: int = 2, seed: int = 0, length=(30, 80)) -> list[np.ndarray]:
    """Sequences from ``n_classes`` frame-pattern families.

    Each family cycles through its own small set of pattern vectors with a
    family-specific dwell time; frames get Gaussian noise.
    """
    rng = np.random.default_rng(seed + 7919)
    families = []
    for c in range(n_classes):
        pats = rng.normal(size=(3, dim))
        pats /= np.linalg.norm(pats, axis=1, keepdims=True)
        families.append((pats, 4 + 3 * c))
    out = []
    for i in range(n):
        pats, dwell = families[i % n_classes]
        t = int(rng.integers(length[0], length[1] + 1))
        phase = int(rng.integers(len(pats) * dwell))
        idx = ((np.arange(t) + phase) // dwell) % len(pats)
        out.append(pats[idx] + rng.normal(scale=0.1, size=(t, dim)))
    return out
