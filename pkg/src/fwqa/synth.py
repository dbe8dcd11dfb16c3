"""Synthetic video-QA corpora with planted answers.

Each entity owns a signature: a constant presence channel followed by a
random unit direction.  A frame's feature vector is the sum of the
signatures of the entities visible in it plus Gaussian noise, so frame
features are exactly linear in what the frame shows.

Two tasks:

* Who: one actor, visible in a random non-empty subset of frames; the
  question names a verb and the answer names the actor.  Entity word
  vectors are a fixed linear image of the signatures, so candidates can be
  matched against the video.
* HowMany: ``k`` distinct entities, each visible in exactly one frame, at
  most ``per_frame_cap`` per frame.  With ``k > per_frame_cap`` no single
  frame holds the answer; the count has to be accumulated over time.
  With ``count_target`` the question names one entity type instead
  ("how many dogs are there ?"), that type appears in ``k`` distinct frames,
  and entities of other types fill the remaining per-frame slots at random.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import EmbeddingTable, QAInstance
from .dataset import (COUNT_WORDS, DEFAULT_RATIOS, EntityList, QARecord, check_ratios,
                      gen_candidates, record_rng, split_dataset)
from .io import atomic_write_text, dumps_jsonl, write_vfeat
from .metrics import Taxonomy

log = logging.getLogger(__name__)

VERBS = ("running", "dancing", "jumping", "smiling", "waving", "eating", "sitting", "walking")
HOWMANY_QUESTION = "how many things are there ?"
HOWMANY_NOUN = "things"
FILLER_WORDS = ("who", "is", "how", "many", "are", "there", "a", "an", HOWMANY_NOUN)
ENTITY_ROOTS = ("living_thing",)


class SynthConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    n_videos: int = 2000
    n_entities: int = 12
    n_frames: int = 3          # raw frames per video
    d_v: int = 6               # signature / frame-feature dim
    d_w: int = 5               # word-vector dim
    noise: float = 0.05
    task_mix: dict = field(default_factory=lambda: {"who": 1.0, "howmany": 0.0})
    per_frame_cap: int = 2
    min_count: int = 1
    max_count: int = 6
    count_target: bool = False  # HowMany names the counted type; other types act as clutter
    word_noise: float = 0.0
    word_scale: float = 1.0    # scale of the signature -> word-vector map
    ratios: tuple = DEFAULT_RATIOS
    split_seed: int = 0
    seed: int = 0

    def __post_init__(self):
        self.ratios = tuple(float(r) for r in self.ratios)
        self.task_mix = {str(k): float(v) for k, v in dict(self.task_mix).items()}
        self.validate()

    def validate(self) -> None:
        def bad(msg):
            raise SynthConfigError(msg)
        if self.n_videos < 1:
            bad("n_videos must be >= 1")
        if self.n_frames < 1:
            bad("n_frames must be >= 1")
        if self.d_v < 2 or self.d_w < 1:
            bad("need d_v >= 2 (presence channel plus direction) and d_w >= 1")
        if self.noise < 0 or self.word_noise < 0 or self.word_scale <= 0:
            bad("noise levels must be non-negative and word_scale positive")
        unknown = set(self.task_mix) - {"who", "howmany"}
        if unknown:
            bad(f"unknown tasks in task_mix: {sorted(unknown)}")
        if any(v < 0 for v in self.task_mix.values()) or sum(self.task_mix.values()) <= 0:
            bad("task_mix weights must be non-negative with a positive sum")
        if self.task_mix.get("who", 0) > 0 and self.n_entities < 8:
            bad(f"the Who task needs at least 8 entities, got {self.n_entities}")
        if self.task_mix.get("howmany", 0) > 0:
            if not 1 <= self.min_count <= self.max_count <= len(COUNT_WORDS):
                bad(f"HowMany counts must satisfy 1 <= min_count <= max_count <= 8, "
                    f"got {self.min_count}..{self.max_count}")
            if self.per_frame_cap < 1:
                bad("per_frame_cap must be >= 1")
            if self.max_count > self.per_frame_cap * self.n_frames:
                bad(f"max_count {self.max_count} does not fit in {self.n_frames} frames "
                    f"with per_frame_cap {self.per_frame_cap}")
            if self.count_target:
                if self.max_count > self.n_frames:
                    bad(f"count_target puts at most one target per frame: max_count {self.max_count} "
                        f"exceeds n_frames {self.n_frames}")
                if self.n_entities < 2:
                    bad("count_target needs at least 2 entities")
            elif self.max_count > self.n_entities:
                bad("max_count exceeds the number of entities")
        try:
            check_ratios(self.ratios)
        except ValueError as exc:
            bad(str(exc))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratios"] = list(self.ratios)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SynthConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def who(cls, **kw) -> "SynthConfig":
        return cls(**{"task_mix": {"who": 1.0}, **kw})

    @classmethod
    def howmany(cls, **kw) -> "SynthConfig":
        base = dict(task_mix={"howmany": 1.0}, n_frames=8, per_frame_cap=2, min_count=1, max_count=8)
        base.update(kw)
        return cls(**base)


@dataclass
class VideoMeta:
    video_id: str
    task: str
    frames: list[list[int]]   # entity indices visible in each raw frame

    def to_json(self) -> dict:
        return {"video_id": self.video_id, "task": self.task, "frames": self.frames}


@dataclass
class SynthData:
    config: SynthConfig
    entities: list[str]
    signatures: np.ndarray            # (n_entities, d_v)
    features: dict[str, np.ndarray]   # video_id -> (n_frames, d_v) float32
    records: list[QARecord]
    instances: list[QAInstance]
    meta: list[VideoMeta]
    table: EmbeddingTable
    taxonomy: Taxonomy
    train: list[QAInstance] = field(default_factory=list)
    val: list[QAInstance] = field(default_factory=list)
    test: list[QAInstance] = field(default_factory=list)


def entity_pool(taxonomy: Taxonomy) -> list[str]:
    """Leaf words of the taxonomy below the entity roots, sorted."""
    children: set[str] = set(taxonomy.parent.values())
    leaves = []
    for node in taxonomy.parent:
        if node in children:
            continue
        if any(r in taxonomy.ancestors(node) for r in ENTITY_ROOTS):
            leaves.append(node.split("#", 1)[0])
    return sorted(set(leaves))


def _article(word: str) -> str:
    return "an" if word[0] in "aeiou" else "a"


def _signatures(rng, n, d_v) -> np.ndarray:
    u = rng.standard_normal((n, d_v - 1))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return np.concatenate([np.ones((n, 1)), u], axis=1)


_IRREGULAR_PLURALS = {"child": "children", "man": "men", "woman": "women", "mouse": "mice"}


def plural(word: str) -> str:
    if word in _IRREGULAR_PLURALS:
        return _IRREGULAR_PLURALS[word]
    if word.endswith("y") and word[-2:-1] not in "aeiou":
        return word[:-1] + "ies"
    if word.endswith(("s", "x", "ch", "sh")):
        return word + "es"
    return word + "s"


def _who_video(cfg, rng, n_entities):
    actor = int(rng.integers(n_entities))
    visible = rng.random(cfg.n_frames) < 0.5
    visible[int(rng.integers(cfg.n_frames))] = True
    frames = [[actor] if v else [] for v in visible]
    verb = VERBS[int(rng.integers(len(VERBS)))]
    return frames, f"who is {verb} ?", actor


def _howmany_video(cfg, rng, n_entities):
    k = int(rng.integers(cfg.min_count, cfg.max_count + 1))
    chosen = rng.choice(n_entities, size=k, replace=False)
    slots = np.repeat(np.arange(cfg.n_frames), cfg.per_frame_cap)
    where = rng.choice(slots, size=k, replace=False)
    frames: list[list[int]] = [[] for _ in range(cfg.n_frames)]
    for e, f in zip(chosen, where):
        frames[int(f)].append(int(e))
    for fr in frames:
        fr.sort()
    return frames, HOWMANY_QUESTION, k


def _counting_video(cfg, rng, n_entities):
    k = int(rng.integers(cfg.min_count, cfg.max_count + 1))
    target = int(rng.integers(n_entities))
    others = np.array([e for e in range(n_entities) if e != target])
    hit = set(rng.choice(cfg.n_frames, size=k, replace=False).tolist())
    frames: list[list[int]] = []
    for f in range(cfg.n_frames):
        fr = [target] if f in hit else []
        n_clutter = int(rng.integers(0, cfg.per_frame_cap - len(fr) + 1))
        fr += rng.choice(others, size=n_clutter, replace=False).tolist()
        frames.append(sorted(int(e) for e in fr))
    return frames, target, k


def synth_generate(config: SynthConfig, taxonomy: Taxonomy | None = None) -> SynthData:
    """Generate a corpus in memory; see :func:`write_synth` for the files."""
    config.validate()
    taxonomy = taxonomy or Taxonomy.demo()
    pool = entity_pool(taxonomy)
    if config.n_entities > len(pool):
        raise SynthConfigError(f"n_entities {config.n_entities} exceeds the {len(pool)} entity words available")
    g = np.random.default_rng([config.seed, 0])
    entities = sorted(pool[i] for i in g.choice(len(pool), size=config.n_entities, replace=False))
    sig = _signatures(g, config.n_entities, config.d_v)
    A = g.standard_normal((config.d_v, config.d_w)) * (config.word_scale / np.sqrt(config.d_v))

    vectors: dict[str, np.ndarray] = {}
    for e, s in zip(entities, sig):
        vectors[e] = s @ A + config.word_noise * g.standard_normal(config.d_w)
    if config.count_target:
        for e in entities:
            vectors.setdefault(plural(e), vectors[e])
    for w in FILLER_WORDS + VERBS + COUNT_WORDS:
        vectors.setdefault(w, g.uniform(-1.0, 1.0, config.d_w))
    table = EmbeddingTable(vectors, config.d_w, oov_seed=config.seed)

    tasks = sorted(config.task_mix)
    weights = np.array([config.task_mix[t] for t in tasks])
    weights /= weights.sum()

    features, records, meta = {}, [], []
    for idx in range(config.n_videos):
        rng = np.random.default_rng([config.seed, 1, idx])
        task = tasks[int(rng.choice(len(tasks), p=weights))]
        vid = f"synth{idx:06d}"
        if task == "who":
            frames, question, actor = _who_video(config, rng, config.n_entities)
            word = entities[actor]
            answer = f"{_article(word)} {word}"
            qtype = "Who"
        elif config.count_target:
            frames, target, k = _counting_video(config, rng, config.n_entities)
            noun = plural(entities[target])
            question = f"how many {noun} are there ?"
            answer = f"{COUNT_WORDS[k - 1]} {noun}"
            qtype = "HowMany"
        else:
            frames, question, k = _howmany_video(config, rng, config.n_entities)
            answer = f"{COUNT_WORDS[k - 1]} {HOWMANY_NOUN}"
            qtype = "HowMany"
        x = config.noise * rng.standard_normal((config.n_frames, config.d_v))
        for f, present in enumerate(frames):
            for e in present:
                x[f] += sig[e]
        features[vid] = x.astype(np.float32)
        records.append(QARecord(vid, f"synthetic {task} clip", question, answer, qtype))
        meta.append(VideoMeta(vid, task, frames))

    counts = {e: 0 for e in entities}
    for r in records:
        if r.type == "Who":
            counts[r.answer.split()[-1]] += 1
    entity_list = EntityList(sorted(entities, key=lambda w: (-counts[w], w)), counts)
    instances = [gen_candidates(r, entity_list, None, record_rng(config.seed, k))
                 for k, r in enumerate(records)]
    train, val, test = split_dataset(instances, config.ratios, config.split_seed)
    return SynthData(config, entities, sig, features, records, instances, meta, table, taxonomy,
                     train, val, test)


def write_synth(data: SynthData, out_dir) -> Path:
    """Write features, records, instances, splits, embeddings and taxonomy under ``out_dir``."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    for vid, x in data.features.items():
        write_vfeat(out / "features" / f"{vid}.vfeat", x)
    atomic_write_text(out / "records.jsonl", dumps_jsonl(r.to_json() for r in data.records))
    atomic_write_text(out / "instances.jsonl", dumps_jsonl(i.to_json() for i in data.instances))
    for name, part in (("train", data.train), ("val", data.val), ("test", data.test)):
        atomic_write_text(out / f"{name}.jsonl", dumps_jsonl(i.to_json() for i in part))
    atomic_write_text(out / "videos.jsonl", dumps_jsonl(m.to_json() for m in data.meta))
    data.table.save(out / "embeddings.txt")
    edges = sorted(data.taxonomy.parent.items())
    atomic_write_text(out / "taxonomy.tsv", "".join(f"{c}\t{p}\n" for c, p in edges))
    atomic_write_text(out / "synth_config.json", json.dumps(data.config.to_dict(), indent=2, sort_keys=True) + "\n")
    log.info("wrote %d videos (%d/%d/%d train/val/test) to %s",
             len(data.features), len(data.train), len(data.val), len(data.test), out)
    return out
