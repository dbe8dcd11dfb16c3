"""Accuracy, per-type breakdowns and WUPS scoring over an is-a taxonomy."""
from __future__ import annotations

import json
import math
import string
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .dataset import QUESTION_TYPES


class TaxonomyError(ValueError):
    pass


class Taxonomy:
    """Rooted tree of word nodes; depth(root) = 1.

    Node ids may carry a sense suffix (``bank#1``, ``bank#2``); the word of a
    node is the part before ``#``, so one word can map to several nodes.
    """

    def __init__(self, edges):
        parent: dict[str, str] = {}
        nodes: set[str] = set()
        for child, par in edges:
            if child == par:
                raise TaxonomyError(f"self loop at {child!r}")
            if child in parent and parent[child] != par:
                raise TaxonomyError(f"{child!r} has two parents: {parent[child]!r} and {par!r}")
            parent[child] = par
            nodes.update((child, par))
        roots = [n for n in nodes if n not in parent]
        if len(roots) != 1:
            raise TaxonomyError(f"taxonomy needs exactly one root, found {sorted(roots)}")
        self.root = roots[0]
        self.parent = parent
        self.depth: dict[str, int] = {}
        for n in sorted(nodes):
            self._depth_of(n)
        self.senses: dict[str, list[str]] = defaultdict(list)
        for n in sorted(nodes):
            self.senses[n.split("#", 1)[0]].append(n)
        self.senses = dict(self.senses)

    def _depth_of(self, node: str) -> int:
        path = []
        cur = node
        while cur not in self.depth:
            if cur in path:
                raise TaxonomyError(f"cycle through {cur!r}")
            path.append(cur)
            if cur == self.root:
                self.depth[cur] = 1
                path.pop()
                break
            cur = self.parent[cur]
        d = self.depth[cur]
        for n in reversed(path):
            d += 1
            self.depth[n] = d
        return self.depth[node]

    def __contains__(self, word: str) -> bool:
        return word in self.senses

    def ancestors(self, node: str) -> list[str]:
        """``node`` and its ancestors up to the root."""
        out = [node]
        while out[-1] != self.root:
            out.append(self.parent[out[-1]])
        return out

    def lcs_depth(self, a: str, b: str) -> int:
        anc = set(self.ancestors(a))
        for n in self.ancestors(b):
            if n in anc:
                return self.depth[n]
        raise TaxonomyError("nodes share no ancestor")  # unreachable in a rooted tree

    @classmethod
    def load(cls, path) -> "Taxonomy":
        """``child<TAB>parent`` per line; blank lines and ``#``-comments skipped."""
        edges = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip() or line.startswith("# "):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise TaxonomyError(f"{path}:{lineno}: expected 'child<TAB>parent'")
            edges.append((parts[0].strip(), parts[1].strip()))
        return cls(edges)

    @classmethod
    def demo(cls) -> "Taxonomy":
        """Small bundled noun hierarchy."""
        ref = resources.files("fwqa").joinpath("resources/demo_taxonomy.tsv")
        with resources.as_file(ref) as p:
            return cls.load(p)


def wu_palmer(tax: Taxonomy | None, a: str, b: str) -> float:
    """``2 depth(lcs) / (depth(a) + depth(b))``, maximised over senses.

    Identical words score 1 even when unknown; any other unknown word scores 0.
    """
    if a == b:
        return 1.0
    if tax is None:
        return 0.0
    sa, sb = tax.senses.get(a), tax.senses.get(b)
    if not sa or not sb:
        return 0.0
    best = 0.0
    for x in sa:
        for y in sb:
            best = max(best, 2.0 * tax.lcs_depth(x, y) / (tax.depth[x] + tax.depth[y]))
    return best


_PUNCT = string.punctuation


def answer_tokens(text: str) -> set[str]:
    toks = (t.strip(_PUNCT) for t in text.lower().split())
    return {t for t in toks if t}


def _thresholded(tax, a, t, theta):
    w = wu_palmer(tax, a, t)
    return w if w >= theta else 0.1 * w


def wups_item(tax: Taxonomy, prediction: str, truth: str, theta: float) -> float:
    A, T = answer_tokens(prediction), answer_tokens(truth)
    if not A and not T:
        return 1.0
    if not A or not T:
        return 0.0
    fwd = math.prod(max(_thresholded(tax, a, t, theta) for t in T) for a in A)
    bwd = math.prod(max(_thresholded(tax, a, t, theta) for a in A) for t in T)
    return min(fwd, bwd)


def wups(predictions, truths, theta: float, tax: Taxonomy | None) -> float:
    """Corpus WUPS@theta as a percentage."""
    predictions, truths = list(predictions), list(truths)
    if len(predictions) != len(truths):
        raise ValueError(f"{len(predictions)} predictions for {len(truths)} truths")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if not predictions:
        raise ValueError("wups of an empty list")
    total = math.fsum(wups_item(tax, p, t, theta) for p, t in zip(predictions, truths))
    return 100.0 * total / len(predictions)


@dataclass
class EvalReport:
    n: int
    accuracy: float
    wups_0: float
    wups_09: float
    per_type: dict[str, float | None] = field(default_factory=dict)
    per_type_count: dict[str, int] = field(default_factory=dict)
    excluding_where_when: float | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "wups@0.0": self.wups_0,
            "wups@0.9": self.wups_09,
            "per_type": self.per_type,
            "per_type_count": self.per_type_count,
            "excluding_where_when": self.excluding_where_when,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        def fmt(v):
            return "  -   " if v is None else f"{v:.4f}"
        lines = [
            f"instances      {self.n}",
            f"accuracy       {self.accuracy:.4f}",
            f"WUPS@0.0       {self.wups_0:.2f}",
            f"WUPS@0.9       {self.wups_09:.2f}",
            "",
            "  ".join(f"{t:>8}" for t in QUESTION_TYPES) + "  not-Where/When",
            "  ".join(f"{fmt(self.per_type.get(t)):>8}" for t in QUESTION_TYPES)
            + f"  {fmt(self.excluding_where_when):>8}",
        ]
        return "\n".join(lines)


def evaluate(predicted, instances, taxonomy: Taxonomy | None = None) -> EvalReport:
    """Score predicted candidate indices against their instances.

    WUPS compares the full predicted candidate string with the ground truth
    string.  Without a taxonomy only exact token matches count.
    """
    predicted = [int(p) for p in predicted]
    instances = list(instances)
    if not instances:
        raise ValueError("evaluate: no instances")
    if len(predicted) != len(instances):
        raise ValueError(f"{len(predicted)} predictions for {len(instances)} instances")
    hits = [p == inst.gt_index for p, inst in zip(predicted, instances)]
    by_type: dict[str, list[bool]] = defaultdict(list)
    for h, inst in zip(hits, instances):
        by_type[inst.type].append(h)
    per_type = {t: (sum(by_type[t]) / len(by_type[t]) if by_type.get(t) else None) for t in QUESTION_TYPES}
    counts = {t: len(by_type.get(t, [])) for t in QUESTION_TYPES}
    rest = [h for h, inst in zip(hits, instances) if inst.type not in ("Where", "When")]
    preds = [inst.candidates[p] for p, inst in zip(predicted, instances)]
    truths = [inst.candidates[inst.gt_index] for inst in instances]
    return EvalReport(
        n=len(instances),
        accuracy=sum(hits) / len(hits),
        wups_0=wups(preds, truths, 0.0, taxonomy),
        wups_09=wups(preds, truths, 0.9, taxonomy),
        per_type=per_type,
        per_type_count=counts,
        excluding_where_when=(sum(rest) / len(rest)) if rest else None,
    )
