"""Preprocessing: frame sampling, word embeddings, QA instances and batching."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import FormatError, atomic_write_text, read_vfeat, vfeat_path
from .models import N_CANDIDATES, pad_sentences

log = logging.getLogger(__name__)

OOV_RANGE = 0.05


def sample_frames(n_raw: int, n: int) -> list[int]:
    """Indices of ``n`` frames out of ``n_raw``.

    Uniform ``floor(j * n_raw / n)`` when there are enough frames; otherwise
    every frame in order and then the last one repeated.
    """
    if n_raw < 1 or n < 1:
        raise ValueError(f"sample_frames: need n_raw >= 1 and n >= 1, got {n_raw}, {n}")
    if n_raw >= n:
        return [(j * n_raw) // n for j in range(n)]
    return list(range(n_raw)) + [n_raw - 1] * (n - n_raw)


class EmbeddingTable:
    """word -> vector lookup with deterministic out-of-vocabulary vectors."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int | None = None, oov_seed: int = 0):
        if dim is None:
            if not vectors:
                raise ValueError("empty embedding table needs an explicit dim")
            dim = len(next(iter(vectors.values())))
        self.dim = int(dim)
        self.oov_seed = oov_seed
        self.vectors: dict[str, np.ndarray] = {}
        for w, v in vectors.items():
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (self.dim,):
                raise ValueError(f"embedding for {w!r} has shape {v.shape}, expected ({self.dim},)")
            self.vectors[w] = v

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def oov_vector(self, word: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.oov_seed}\0{word}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return rng.uniform(-OOV_RANGE, OOV_RANGE, size=self.dim)

    def lookup(self, word: str) -> np.ndarray:
        v = self.vectors.get(word)
        return v if v is not None else self.oov_vector(word)

    @classmethod
    def load(cls, path, oov_seed: int = 0) -> "EmbeddingTable":
        """Text format: header ``COUNT DIM`` then ``word v1 ... v_dim`` per line."""
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise FormatError(f"{path}: first line must be 'COUNT DIM'")
            count, dim = int(header[0]), int(header[1])
            vectors = {}
            for lineno, line in enumerate(fh, 2):
                parts = line.rstrip("\n").split(" ")
                if not parts or parts == [""]:
                    continue
                if len(parts) != dim + 1:
                    raise FormatError(f"{path}:{lineno}: expected {dim} values for {parts[0]!r}")
                vectors[parts[0]] = np.array([float(x) for x in parts[1:]])
        if len(vectors) != count:
            raise FormatError(f"{path}: header says {count} words, found {len(vectors)}")
        return cls(vectors, dim, oov_seed)

    def save(self, path) -> None:
        lines = [f"{len(self.vectors)} {self.dim}"]
        for w, v in self.vectors.items():
            lines.append(w + " " + " ".join(repr(float(x)) for x in v))
        atomic_write_text(path, "\n".join(lines) + "\n")


def embed_tokens(tokens, table: EmbeddingTable) -> np.ndarray:
    """Stack the vectors of ``tokens`` into a ``(len(tokens), dim)`` matrix."""
    tokens = list(tokens)
    if not tokens:
        raise ValueError("embed_tokens: empty token list")
    return np.stack([table.lookup(t) for t in tokens])


def tokenize_question(question: str) -> list[str]:
    q = question.strip().lower()
    if q.endswith("?"):
        q = q[:-1]
    return q.split()


def make_qa_sentences(question, candidates) -> list[list[str]]:
    """Question tokens followed by each candidate's tokens (lowercased)."""
    q = tokenize_question(question) if isinstance(question, str) else [t.lower() for t in question]
    if len(candidates) != N_CANDIDATES:
        raise ValueError(f"need {N_CANDIDATES} candidates, got {len(candidates)}")
    out = []
    for cand in candidates:
        toks = cand.lower().split()
        if not toks:
            log.info("empty candidate answer; QA-sentence is the question alone")
        out.append(q + toks)
    return out


# -- instances ready for the model ---------------------------------------------

@dataclass
class QAInstance:
    video_id: str
    question: str
    candidates: list[str]
    gt_index: int
    type: str

    def __post_init__(self):
        if len(self.candidates) != N_CANDIDATES:
            raise ValueError(f"{self.video_id}: need {N_CANDIDATES} candidates, got {len(self.candidates)}")
        if len(set(self.candidates)) != N_CANDIDATES:
            raise ValueError(f"{self.video_id}: candidates are not pairwise distinct")
        if not 0 <= self.gt_index < N_CANDIDATES:
            raise ValueError(f"{self.video_id}: gt_index {self.gt_index} out of range")

    def to_json(self) -> dict:
        return {"video_id": self.video_id, "question": self.question,
                "candidates": list(self.candidates), "gt_index": self.gt_index, "type": self.type}

    @classmethod
    def from_json(cls, d: dict) -> "QAInstance":
        return cls(d["video_id"], d["question"], list(d["candidates"]), int(d["gt_index"]), d.get("type", "What"))


@dataclass
class Prepared:
    """Instances with sampled frames and embedded QA-sentences, in input order."""
    instances: list[QAInstance]
    videos: np.ndarray                      # (n, N, d_v)
    sentences: list[list[np.ndarray]]       # n x 8 x (|c|, d_w)
    gt: np.ndarray = field(init=False)

    def __post_init__(self):
        self.gt = np.array([inst.gt_index for inst in self.instances], dtype=np.intp)

    def __len__(self) -> int:
        return len(self.instances)

    def batch(self, idx, dtype=np.float64) -> "Batch":
        idx = np.asarray(idx, dtype=np.intp)
        sents = [s for i in idx for s in self.sentences[i]]
        tokens, mask = pad_sentences(sents, dtype)
        return Batch(self.videos[idx].astype(dtype, copy=False), tokens, mask, self.gt[idx])


@dataclass
class Batch:
    videos: np.ndarray   # (B, N, d_v)
    tokens: np.ndarray   # (B*8, L, d_w)
    mask: np.ndarray     # (B*8, L)
    gt: np.ndarray       # (B,)


def prepare(instances, video_features, table: EmbeddingTable, n_frames: int) -> Prepared:
    """Sample frames and embed QA-sentences.

    ``video_features`` is a mapping ``video_id -> (n_raw, d_v)`` array, or a
    directory of ``<video_id>.vfeat`` files.
    """
    instances = [i if isinstance(i, QAInstance) else QAInstance.from_json(i) for i in instances]
    if not instances:
        raise ValueError("no instances")
    cache: dict[str, np.ndarray] = {}
    videos = []
    sentences = []
    for inst in instances:
        feats = cache.get(inst.video_id)
        if feats is None:
            if isinstance(video_features, (str, Path)):
                raw = read_vfeat(vfeat_path(video_features, inst.video_id))
            else:
                raw = np.asarray(video_features[inst.video_id])
            feats = np.asarray(raw, dtype=np.float64)[sample_frames(len(raw), n_frames)]
            cache[inst.video_id] = feats
        videos.append(feats)
        sentences.append([embed_tokens(toks, table) for toks in make_qa_sentences(inst.question, inst.candidates)])
    return Prepared(instances, np.stack(videos), sentences)
