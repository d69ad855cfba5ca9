"""Data model, file formats and shared linear algebra.

Frame embeddings live in UEMB files: a small little-endian container holding
one utterance's T x D float32 matrix plus its frame rate. Everything else
(manifests, alignments, sentence metadata, pipeline outputs) is JSON-lines.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

UEMB_MAGIC = b"UEMB"
UEMB_VERSION = 1
_HEADER = struct.Struct("<4sIfII")


class UembError(ValueError):
    """Base class for malformed UEMB files."""


class BadMagic(UembError):
    pass


class BadVersion(UembError):
    pass


class Truncated(UembError):
    pass


class NonFinite(UembError):
    pass


class ZeroDims(UembError):
    pass


class ZeroVector(ValueError):
    pass


class StoreError(ValueError):
    """A JSON-lines store violates its record invariants."""


@dataclass(frozen=True, eq=False)
class UtteranceEmbedding:
    utterance_id: str
    frames: np.ndarray
    frame_rate: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ZeroDims(f"{self.utterance_id}: frames must be T x D with T, D >= 1, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise NonFinite(f"{self.utterance_id}: non-finite frame values")
        if not (self.frame_rate > 0 and math.isfinite(self.frame_rate)):
            raise ValueError(f"{self.utterance_id}: frame_rate must be > 0, got {self.frame_rate}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True, order=True)
class Segment:
    """Half-open frame interval ``[start_frame, end_frame)``."""

    start_frame: int
    end_frame: int

    def __post_init__(self):
        if not (0 <= self.start_frame < self.end_frame):
            raise ValueError(f"invalid segment [{self.start_frame}, {self.end_frame})")

    def __len__(self) -> int:
        return self.end_frame - self.start_frame

    def as_list(self) -> list[int]:
        return [self.start_frame, self.end_frame]


@dataclass(frozen=True)
class Segmentation:
    utterance_id: str
    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        segs = tuple(self.segments)
        for prev, nxt in zip(segs, segs[1:]):
            if prev.end_frame > nxt.start_frame:
                raise ValueError(f"{self.utterance_id}: overlapping or unordered segments {prev} {nxt}")
        object.__setattr__(self, "segments", segs)

    def __len__(self) -> int:
        return len(self.segments)

    def pairs(self) -> list[tuple[int, int]]:
        return [(s.start_frame, s.end_frame) for s in self.segments]


@dataclass(frozen=True)
class SyllableSpan:
    label: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.label:
            raise ValueError("syllable label must be non-empty")
        if not (0 <= self.start_s < self.end_s):
            raise ValueError(f"invalid span {self.label!r} [{self.start_s}, {self.end_s})")


@dataclass(frozen=True)
class ManifestRow:
    utterance_id: str
    embedding_path: str = ""
    speaker_id: str = ""
    text: str = ""
    duration_s: float = 0.0


@dataclass(frozen=True, eq=False)
class SentenceRecord:
    sentence_id: str
    text: str
    speaker_id: str
    n_words: int
    duration_s: float
    text_embedding: np.ndarray = field(repr=False)

    def __post_init__(self):
        emb = np.asarray(self.text_embedding, dtype=np.float64)
        if emb.ndim != 1 or emb.size == 0:
            raise StoreError(f"{self.sentence_id}: text_embedding must be a non-empty vector")
        object.__setattr__(self, "text_embedding", emb)
        if self.n_words != count_words(self.text):
            raise StoreError(
                f"{self.sentence_id}: n_words={self.n_words} but text has {count_words(self.text)} words"
            )


def count_words(text: str) -> int:
    return len(text.split())


# ---------------------------------------------------------------------------
# UEMB binary format


def write_embedding(path, emb: UtteranceEmbedding) -> None:
    frames = np.ascontiguousarray(emb.frames, dtype="<f4")
    t, d = frames.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(UEMB_MAGIC, UEMB_VERSION, emb.frame_rate, t, d))
        fh.write(frames.tobytes(order="C"))


def decode_embedding(data: bytes, utterance_id: str = "") -> UtteranceEmbedding:
    if len(data) < _HEADER.size:
        if data[:4] != UEMB_MAGIC[: len(data[:4])]:
            raise BadMagic(f"{utterance_id}: bad magic {data[:4]!r}")
        raise Truncated(f"{utterance_id}: header needs {_HEADER.size} bytes, got {len(data)}")
    magic, version, rate, t, d = _HEADER.unpack_from(data)
    if magic != UEMB_MAGIC:
        raise BadMagic(f"{utterance_id}: bad magic {magic!r}")
    if version != UEMB_VERSION:
        raise BadVersion(f"{utterance_id}: unsupported version {version}")
    if t == 0 or d == 0:
        raise ZeroDims(f"{utterance_id}: zero dimension in header (T={t}, D={d})")
    need = _HEADER.size + 4 * t * d
    if len(data) < need:
        raise Truncated(f"{utterance_id}: payload declares {t}x{d} floats, file has {len(data) - _HEADER.size} bytes")
    frames = np.frombuffer(data, dtype="<f4", count=t * d, offset=_HEADER.size).reshape(t, d)
    if not np.all(np.isfinite(frames)):
        raise NonFinite(f"{utterance_id}: payload contains non-finite values")
    if not (rate > 0 and math.isfinite(rate)):
        raise UembError(f"{utterance_id}: frame rate must be positive, got {rate}")
    return UtteranceEmbedding(utterance_id, frames.astype(np.float64), float(rate))


def read_embedding(path, utterance_id: str | None = None) -> UtteranceEmbedding:
    """Load a UEMB file. The utterance id defaults to the file stem."""
    path = Path(path)
    return decode_embedding(path.read_bytes(), utterance_id if utterance_id is not None else path.stem)


# ---------------------------------------------------------------------------
# Linear algebra


def frame_norms(e: UtteranceEmbedding) -> np.ndarray:
    return np.linalg.norm(e.frames, axis=1)


def similarity_matrix(e: UtteranceEmbedding | np.ndarray) -> np.ndarray:
    """Dot-product self-similarity of frames."""
    x = e.frames if isinstance(e, UtteranceEmbedding) else np.asarray(e, dtype=np.float64)
    s = x @ x.T
    # BLAS may not return an exactly symmetric product
    return np.triu(s) + np.triu(s, 1).T


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError(f"vectors must be 1-D with equal non-zero length, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def frame_to_time(frame: int, frame_rate: float) -> float:
    return frame / frame_rate


# ---------------------------------------------------------------------------
# JSON-lines stores


def iter_jsonl(path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise StoreError(f"{path}:{lineno}: {exc}") from None


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=False))
            fh.write("\n")


def _check_unique(ids: list[str], what: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise StoreError(f"duplicate {what} {i!r}")
        seen.add(i)


def read_manifest(path) -> list[ManifestRow]:
    rows = []
    for rec in iter_jsonl(path):
        try:
            rows.append(
                ManifestRow(
                    utterance_id=str(rec["utterance_id"]),
                    embedding_path=str(rec.get("embedding_path", "")),
                    speaker_id=str(rec.get("speaker_id", "")),
                    text=str(rec.get("text", "")),
                    duration_s=float(rec.get("duration_s", 0.0)),
                )
            )
        except KeyError as exc:
            raise StoreError(f"{path}: manifest record missing {exc}") from None
    _check_unique([r.utterance_id for r in rows], "utterance_id")
    return rows


def write_manifest(path, rows: Iterable[ManifestRow]) -> None:
    write_jsonl(
        path,
        (
            {
                "utterance_id": r.utterance_id,
                "embedding_path": r.embedding_path,
                "speaker_id": r.speaker_id,
                "text": r.text,
                "duration_s": r.duration_s,
            }
            for r in rows
        ),
    )


def read_alignments(path, manifest: list[ManifestRow] | None = None) -> dict[str, list[SyllableSpan]]:
    """Read an AlignmentStore: one ``{utterance_id, spans: [{label, start_s, end_s}]}`` per line."""
    store: dict[str, list[SyllableSpan]] = {}
    for rec in iter_jsonl(path):
        uid = str(rec["utterance_id"])
        if uid in store:
            raise StoreError(f"duplicate utterance_id {uid!r} in alignments")
        store[uid] = [SyllableSpan(str(s["label"]), float(s["start_s"]), float(s["end_s"])) for s in rec["spans"]]
    if manifest is not None:
        known = {r.utterance_id for r in manifest}
        unknown = sorted(set(store) - known)
        if unknown:
            raise StoreError(f"alignment ids not in manifest: {unknown[:5]}")
    return store


def write_alignments(path, store: dict[str, list[SyllableSpan]]) -> None:
    write_jsonl(
        path,
        (
            {
                "utterance_id": uid,
                "spans": [{"label": s.label, "start_s": s.start_s, "end_s": s.end_s} for s in spans],
            }
            for uid, spans in store.items()
        ),
    )


def read_sentences(path) -> list[SentenceRecord]:
    out = []
    for rec in iter_jsonl(path):
        text = str(rec["text"])
        out.append(
            SentenceRecord(
                sentence_id=str(rec["sentence_id"]),
                text=text,
                speaker_id=str(rec["speaker_id"]),
                n_words=int(rec.get("n_words", count_words(text))),
                duration_s=float(rec["duration_s"]),
                text_embedding=np.asarray(rec["text_embedding"], dtype=np.float64),
            )
        )
    _check_unique([r.sentence_id for r in out], "sentence_id")
    return out


def write_sentences(path, records: Iterable[SentenceRecord]) -> None:
    write_jsonl(
        path,
        (
            {
                "sentence_id": r.sentence_id,
                "text": r.text,
                "speaker_id": r.speaker_id,
                "n_words": r.n_words,
                "duration_s": r.duration_s,
                "text_embedding": [float(v) for v in r.text_embedding],
            }
            for r in records
        ),
    )
