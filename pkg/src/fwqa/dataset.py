"""Turn (video, description, question, answer) records into 8-way multiple choice.

Distractors are produced by substitution in the ground-truth answer:

* How many: the number word is swapped for each of one..eight.
* Who: the entity noun is swapped for nouns sampled from an entity list
  harvested from Who answers.
* Whose: a leading possessive pronoun is swapped for other pronouns, or the
  owner in ``X 's`` is swapped like a Who entity.
* everything else: the head noun is swapped for nouns from a general list.

No part-of-speech tagger is used.  Nouns are found by a determiner heuristic
(see :func:`noun_positions`) or, when given, a noun lexicon.
"""
from __future__ import annotations

import enum
import hashlib
import logging
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import QAInstance
from .models import N_CANDIDATES

log = logging.getLogger(__name__)

QUESTION_TYPES = ("HowMany", "Who", "Whose", "What", "Where", "When")
_PREFIXES = [("how many", "HowMany"), ("whose", "Whose"), ("who", "Who"),
             ("what", "What"), ("where", "Where"), ("when", "When")]

COUNT_WORDS = ("one", "two", "three", "four", "five", "six", "seven", "eight")
POSSESSIVE_PRONOUNS = ("my", "your", "his", "her", "its", "our", "their")
ARTICLES = ("a", "an", "the", "this", "that", "these", "those", "some", "another",
            "each", "every", "any")
POSSESSIVE_MARKERS = ("'s", "'")
PHRASE_BREAKS = frozenset("""
    of in on at with and or to from by for into onto over under near behind while
    who whom which that is are was were be been being has have had do does did
    as than then but so if not no up down out off through across around about
    after before during toward towards against between among without within
    's ' , . ; : ! ?
""".split())

_ONES = ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
         "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
         "seventeen", "eighteen", "nineteen")
_TENS = ("", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety")


def number_to_words(n: int) -> str:
    if not 0 <= n <= 100:
        raise ValueError(f"only 0..100 supported, got {n}")
    if n < 20:
        return _ONES[n]
    if n == 100:
        return "one hundred"
    tens, ones = divmod(n, 10)
    return _TENS[tens] + ("" if ones == 0 else "-" + _ONES[ones])


NUMBER_WORDS = frozenset(number_to_words(n) for n in range(101)) | {"hundred"}
_NUMERAL = re.compile(r"(?<![\w.])(\d+)(?!\.?\d|\w)")


def normalize_numerals(text: str) -> str:
    """Spell out standalone integers 0..100 ("3 dogs" -> "three dogs")."""
    def repl(m):
        n = int(m.group(1))
        return number_to_words(n) if n <= 100 else m.group(1)
    return _NUMERAL.sub(repl, text)


class Unclassified(ValueError):
    pass


def classify_question(question: str) -> str:
    q = question.strip().lower()
    for prefix, kind in _PREFIXES:
        if q.startswith(prefix) and (len(q) == len(prefix) or not q[len(prefix)].isalpha()):
            return kind
    raise Unclassified(f"cannot classify question {question!r}")


# -- records and discards -------------------------------------------------------

@dataclass
class QARecord:
    video_id: str
    description: str
    question: str
    answer: str
    type: str | None = None

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError(f"{self.video_id}: empty question")
        if not self.answer.strip():
            raise ValueError(f"{self.video_id}: empty answer")

    @classmethod
    def from_json(cls, d: dict) -> "QARecord":
        return cls(str(d["video_id"]), d.get("description", ""), d["question"], d["answer"], d.get("type"))

    def to_json(self) -> dict:
        d = {"video_id": self.video_id, "description": self.description,
             "question": self.question, "answer": self.answer}
        if self.type is not None:
            d["type"] = self.type
        return d

    @property
    def qtype(self) -> str:
        if self.type is not None:
            if self.type not in QUESTION_TYPES:
                raise Unclassified(f"unknown question type {self.type!r}")
            return self.type
        return classify_question(self.question)


class DiscardReason(str, enum.Enum):
    NUMBER_OUT_OF_RANGE = "number_out_of_range"
    NO_REPLACEABLE_TOKEN = "no_replaceable_token"
    RESAMPLING_EXHAUSTED = "resampling_exhausted"
    UNCLASSIFIED = "unclassified"


class Discard(Exception):
    def __init__(self, reason: DiscardReason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason
        self.detail = detail


class ConfigError(ValueError):
    pass


# -- noun heuristic ---------------------------------------------------------------

def tokenize_answer(text: str) -> list[str]:
    """Lowercase whitespace tokens with ``X's`` split into ``X 's``."""
    out = []
    for tok in text.lower().split():
        if len(tok) > 2 and tok.endswith("'s"):
            out.extend([tok[:-2], "'s"])
        elif len(tok) > 1 and tok.endswith("s'"):
            out.extend([tok[:-1], "'"])
        else:
            out.append(tok)
    return out


def _is_word(tok: str) -> bool:
    return tok.replace("-", "").isalpha()


def noun_positions(tokens: Sequence[str], lexicon: frozenset[str] | set[str] | None = None) -> list[int]:
    """Positions of tokens taken to be nouns.

    With a lexicon, membership decides.  Otherwise each run of words that
    follows an article, possessive pronoun, number word or ``'s`` (up to a
    function word) contributes its last token; if no such run exists, the
    final content word is used.
    """
    if lexicon is not None:
        return [k for k, t in enumerate(tokens) if t in lexicon]
    heads = []
    k = 0
    n = len(tokens)
    while k < n:
        t = tokens[k]
        if t in ARTICLES or t in POSSESSIVE_PRONOUNS or t in NUMBER_WORDS or t in POSSESSIVE_MARKERS:
            j = k + 1
            last = None
            while j < n and tokens[j] not in PHRASE_BREAKS and _is_word(tokens[j]) \
                    and tokens[j] not in ARTICLES and tokens[j] not in POSSESSIVE_PRONOUNS:
                last = j
                j += 1
            if last is not None:
                heads.append(last)
            k = max(j, k + 1)
        else:
            k += 1
    if not heads:
        for j in range(n - 1, -1, -1):
            if _is_word(tokens[j]) and tokens[j] not in PHRASE_BREAKS and tokens[j] not in NUMBER_WORDS \
                    and tokens[j] not in ARTICLES and tokens[j] not in POSSESSIVE_PRONOUNS:
                heads.append(j)
                break
    return heads


def _count_nouns(answers: Iterable[str], lexicon) -> Counter:
    counts: Counter = Counter()
    for ans in answers:
        toks = tokenize_answer(normalize_numerals(ans))
        for k in noun_positions(toks, lexicon):
            counts[toks[k]] += 1
    return counts


@dataclass
class EntityList:
    words: list[str]
    counts: dict[str, int]

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, w: str) -> bool:
        return w in self.counts

    def __iter__(self):
        return iter(self.words)


def _filtered(counts: Counter, min_count: int, blocklist) -> EntityList:
    block = set(blocklist or ())
    kept = {w: c for w, c in counts.items() if c >= min_count and w not in block}
    words = sorted(kept, key=lambda w: (-kept[w], w))
    return EntityList(words, {w: kept[w] for w in words})


def build_entity_list(records, min_count: int = 5, blocklist=None, lexicon=None) -> EntityList:
    """Frequency-filtered nouns from the answers of Who questions."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    answers = []
    for r in records:
        r = r if isinstance(r, QARecord) else QARecord.from_json(r)
        try:
            if r.qtype == "Who":
                answers.append(r.answer)
        except Unclassified:
            continue
    result = _filtered(_count_nouns(answers, lexicon), min_count, blocklist)
    if not result.words:
        raise ConfigError(f"entity list is empty after filtering (min_count={min_count}); "
                          "lower min_count or shrink the blocklist")
    return result


def build_noun_list(records, min_count: int = 5, blocklist=None, lexicon=None) -> EntityList:
    """Frequency-filtered nouns from all non-counting answers."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    answers = []
    for r in records:
        r = r if isinstance(r, QARecord) else QARecord.from_json(r)
        try:
            if r.qtype != "HowMany":
                answers.append(r.answer)
        except Unclassified:
            continue
    result = _filtered(_count_nouns(answers, lexicon), min_count, blocklist)
    if not result.words:
        raise ConfigError(f"noun list is empty after filtering (min_count={min_count}); "
                          "lower min_count or shrink the blocklist")
    return result


# -- candidate generation ------------------------------------------------------------

MAX_ATTEMPTS = 100


def _sample_distinct(pool: Sequence[str], exclude: set[str], k: int, rng: np.random.Generator) -> list[str]:
    chosen: list[str] = []
    if pool:
        for _ in range(MAX_ATTEMPTS):
            w = pool[int(rng.integers(len(pool)))]
            if w not in exclude and w not in chosen:
                chosen.append(w)
                if len(chosen) == k:
                    return chosen
    raise Discard(DiscardReason.RESAMPLING_EXHAUSTED,
                  f"could not draw {k} distinct replacements from {len(pool)} words")


def _join(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


def _substitute(tokens, pos, words) -> list[str]:
    return [_join(list(tokens[:pos]) + [w] + list(tokens[pos + 1:])) for w in words]


def _how_many(tokens):
    for k, t in enumerate(tokens):
        if t in NUMBER_WORDS:
            if t not in COUNT_WORDS:
                raise Discard(DiscardReason.NUMBER_OUT_OF_RANGE, f"answer count {t!r} is not one..eight")
            return _substitute(tokens, k, COUNT_WORDS)
    raise Discard(DiscardReason.NO_REPLACEABLE_TOKEN, "no number word in the answer")


def _entity_position(tokens, entities, lexicon) -> int | None:
    heads = noun_positions(tokens, lexicon)
    for k in heads:
        if tokens[k] in entities:
            return k
    return heads[0] if heads else None


def _possessive_owner(tokens) -> int | None:
    for k in range(1, len(tokens)):
        if tokens[k] in POSSESSIVE_MARKERS and _is_word(tokens[k - 1]):
            return k - 1
    return None


def _whose(tokens, entities, nouns, rng, lexicon):
    if tokens[0] in POSSESSIVE_PRONOUNS:
        gt = _join(tokens)
        pron = [p for p in POSSESSIVE_PRONOUNS if p != tokens[0]]
        order = rng.permutation(len(pron))
        cands = [_join([pron[i]] + tokens[1:]) for i in order[: N_CANDIDATES - 1]]
        if len(cands) < N_CANDIDATES - 1:
            # pronoun pool exhausted: vary the possessed noun too
            heads = [k for k in noun_positions(tokens, lexicon) if k > 0]
            if not heads:
                raise Discard(DiscardReason.RESAMPLING_EXHAUSTED, "possessive pronoun pool exhausted and no noun to vary")
            pos = heads[-1]
            pool = list(nouns)
            seen = set(cands) | {gt}
            for _ in range(MAX_ATTEMPTS):
                if not pool:
                    break
                noun = pool[int(rng.integers(len(pool)))]
                p = POSSESSIVE_PRONOUNS[int(rng.integers(len(POSSESSIVE_PRONOUNS)))]
                toks = [p] + tokens[1:]
                toks[pos] = noun
                s = _join(toks)
                if s not in seen:
                    seen.add(s)
                    cands.append(s)
                    if len(cands) == N_CANDIDATES - 1:
                        break
            if len(cands) < N_CANDIDATES - 1:
                raise Discard(DiscardReason.RESAMPLING_EXHAUSTED, "could not complete possessive candidates")
            log.debug("possessive pronoun pool exhausted for %r; varied the head noun", gt)
        return [gt] + cands
    owner = _possessive_owner(tokens)
    if owner is None:
        raise Discard(DiscardReason.NO_REPLACEABLE_TOKEN, "no possessive pronoun or possessive noun")
    words = _sample_distinct(list(entities), {tokens[owner]}, N_CANDIDATES - 1, rng)
    return [_join(tokens)] + _substitute(tokens, owner, words)


def gen_candidates(record: QARecord, entity_list=None, noun_list=None,
                   rng: np.random.Generator | int = 0, lexicon=None) -> QAInstance:
    """Build the 8-candidate instance for ``record`` or raise :class:`Discard`.

    Candidates are shuffled with ``rng``; ``gt_index`` records where the
    (numeral-normalised) ground truth landed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    try:
        qtype = record.qtype
    except Unclassified as exc:
        raise Discard(DiscardReason.UNCLASSIFIED, str(exc)) from None
    tokens = tokenize_answer(normalize_numerals(record.answer))
    if not tokens:
        raise Discard(DiscardReason.NO_REPLACEABLE_TOKEN, "empty answer")
    gt = _join(tokens)
    entities = list(entity_list or ())
    nouns = list(noun_list or ())

    if qtype == "HowMany":
        cands = _how_many(tokens)
    elif qtype == "Who":
        pos = _entity_position(tokens, set(entities), lexicon)
        if pos is None:
            raise Discard(DiscardReason.NO_REPLACEABLE_TOKEN, "no entity noun in the answer")
        words = _sample_distinct(entities, {tokens[pos]}, N_CANDIDATES - 1, rng)
        cands = [gt] + _substitute(tokens, pos, words)
    elif qtype == "Whose":
        cands = _whose(tokens, entities, nouns, rng, lexicon)
    else:
        heads = noun_positions(tokens, lexicon)
        if not heads:
            raise Discard(DiscardReason.NO_REPLACEABLE_TOKEN, "no noun in the answer")
        pos = heads[-1]
        words = _sample_distinct(nouns, {tokens[pos]}, N_CANDIDATES - 1, rng)
        cands = [gt] + _substitute(tokens, pos, words)

    if len(set(cands)) != N_CANDIDATES or cands.count(gt) != 1:
        raise Discard(DiscardReason.RESAMPLING_EXHAUSTED, "candidates are not 8 distinct strings")
    perm = rng.permutation(N_CANDIDATES)
    shuffled = [cands[i] for i in perm]
    return QAInstance(record.video_id, record.question, shuffled, shuffled.index(gt), qtype)


def record_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


@dataclass
class BuildResult:
    instances: list[QAInstance]
    discards: list[dict]
    entity_list: EntityList | None
    noun_list: EntityList | None


def build_dataset(records, seed: int = 0, min_count: int = 5, blocklist=None, lexicon=None,
                  entity_list=None, noun_list=None) -> BuildResult:
    """Run :func:`gen_candidates` over ``records`` in input order.

    Each record gets its own generator derived from ``(seed, index)``, so the
    result does not depend on processing order.
    """
    records = [r if isinstance(r, QARecord) else QARecord.from_json(r) for r in records]
    types = []
    for r in records:
        try:
            types.append(r.qtype)
        except Unclassified:
            types.append(None)
    if entity_list is None and any(t in ("Who", "Whose") for t in types):
        entity_list = build_entity_list(records, min_count, blocklist, lexicon)
    if noun_list is None and any(t in ("Whose", "What", "Where", "When") for t in types):
        noun_list = build_noun_list(records, min_count, blocklist, lexicon)
    instances, discards = [], []
    for k, r in enumerate(records):
        try:
            instances.append(gen_candidates(r, entity_list, noun_list, record_rng(seed, k), lexicon))
        except Discard as d:
            log.info("discarded record %d (%s): %s", k, r.video_id, d)
            discards.append({"index": k, "video_id": r.video_id, "question": r.question,
                             "answer": r.answer, "reason": d.reason.value, "detail": d.detail})
    return BuildResult(instances, discards, entity_list, noun_list)


# -- splitting ------------------------------------------------------------------------

DEFAULT_RATIOS = (0.801, 0.086, 0.113)


def video_hash_unit(video_id: str, seed: int = 0) -> float:
    """Stable map of a video id into [0, 1)."""
    digest = hashlib.blake2b(f"{seed}\0{video_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2.0 ** 64


def check_ratios(ratios) -> tuple[float, ...]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    return ratios


def split_dataset(instances, ratios=DEFAULT_RATIOS, seed: int = 0):
    """Assign every video (and all its instances) to train, val or test."""
    ratios = check_ratios(ratios)
    bounds = np.cumsum(ratios)
    parts: tuple[list, list, list] = ([], [], [])
    for inst in instances:
        vid = inst.video_id if hasattr(inst, "video_id") else inst["video_id"]
        u = video_hash_unit(vid, seed)
        k = int(np.searchsorted(bounds, u, side="right"))
        parts[min(k, 2)].append(inst)
    return parts
