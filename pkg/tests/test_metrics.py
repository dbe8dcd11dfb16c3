import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fwqa.data import QAInstance
from fwqa.dataset import QUESTION_TYPES
from fwqa.metrics import Taxonomy, TaxonomyError, evaluate, wu_palmer, wups, wups_item

SIBLINGS = Taxonomy([("x", "r"), ("y", "r")])
CHAIN = Taxonomy([("p", "r"), ("x", "p")])
DEMO = Taxonomy.demo()


def brute_wup(edges, a, b):
    """Independent Wu-Palmer from the raw edge list: paths to the root, then deepest shared node."""
    parent = dict(edges)

    def path(n):
        out = [n]
        while out[-1] in parent:
            out.append(parent[out[-1]])
        return out[::-1]   # root first, depth = index + 1

    pa, pb = path(a), path(b)
    shared = sum(1 for u, v in zip(pa, pb) if u == v)
    return 2 * shared / (len(pa) + len(pb))


def demo_edges():
    from importlib import resources
    text = resources.files("fwqa").joinpath("resources/demo_taxonomy.tsv").read_text()
    return [tuple(l.split("\t")) for l in text.splitlines() if l.strip() and not l.startswith("#")]


# -- Wu-Palmer -------------------------------------------------------------------------

def test_wu_palmer_examples():
    assert wu_palmer(SIBLINGS, "x", "y") == 0.5
    assert wu_palmer(CHAIN, "p", "x") == pytest.approx(0.8, abs=1e-15)
    assert wu_palmer(DEMO, "cat", "cat") == 1.0
    assert wu_palmer(DEMO, "zorblax", "zorblax") == 1.0
    assert wu_palmer(DEMO, "zorblax", "cat") == 0.0


def test_wu_palmer_matches_brute_force_on_demo_taxonomy():
    edges = demo_edges()
    words = sorted({w for e in edges for w in e})
    for a, b in itertools.combinations_with_replacement(words, 2):
        w = wu_palmer(DEMO, a, b)
        assert w == pytest.approx(brute_wup(edges, a, b), abs=1e-15), (a, b)
        assert w == wu_palmer(DEMO, b, a)
        assert 0.0 < w <= 1.0
        assert (w == 1.0) == (a == b)


def test_sense_suffixes_take_best_sense():
    tax = Taxonomy([("bank#1", "place"), ("bank#2", "org"), ("place", "r"), ("org", "r"),
                    ("shop", "org")])
    assert wu_palmer(tax, "bank", "shop") == pytest.approx(2 * 2 / 6)
    assert "bank" in tax and "bank#1" not in tax


def test_taxonomy_errors(tmp_path):
    with pytest.raises(TaxonomyError, match="root"):
        Taxonomy([("a", "r"), ("b", "s")])
    with pytest.raises(TaxonomyError, match="two parents"):
        Taxonomy([("a", "r"), ("a", "s"), ("s", "r")])
    with pytest.raises(TaxonomyError):
        Taxonomy([("a", "a")])
    with pytest.raises(TaxonomyError):
        Taxonomy([("a", "b"), ("b", "a"), ("c", "r")])
    bad = tmp_path / "t.tsv"
    bad.write_text("a r\n")
    with pytest.raises(TaxonomyError, match=":1:"):
        Taxonomy.load(bad)


# -- WUPS -------------------------------------------------------------------------------

def test_wups_sibling_case_and_exact_match():
    assert abs(wups(["x"], ["y"], 0.9, SIBLINGS) - 5.0) <= 1e-9
    assert wups(["x"], ["y"], 0.0, SIBLINGS) == 50.0
    answers = ["a man", "two cars", "his tie", "the little boy 's leg"]
    for theta in (0.0, 0.9):
        assert wups(answers, answers, theta, DEMO) == 100.0
        assert wups(answers, answers, theta, None) == 100.0


def test_wups_item_hand_values():
    # tokens {a, man} vs {a, woman}: man/woman share adult (depth 6) at depth 7 each
    w = 12 / 14
    assert wups_item(DEMO, "a man", "a woman", 0.0) == pytest.approx(w)
    assert wups_item(DEMO, "a man", "a woman", 0.9) == pytest.approx(0.1 * w)
    assert wups_item(DEMO, "A man!", "a man", 0.9) == 1.0
    with pytest.raises(ValueError):
        wups(["a"], ["a", "b"], 0.0, DEMO)
    with pytest.raises(ValueError):
        wups(["a"], ["a"], 1.5, DEMO)


_WORDS = ["man", "woman", "boy", "girl", "dog", "cat", "pilot", "a", "the", "unknownword"]
_answer = st.lists(st.sampled_from(_WORDS), min_size=1, max_size=3).map(" ".join)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(_answer, _answer), min_size=1, max_size=12), st.randoms())
def test_wups_threshold_monotone_and_permutation_invariant(pairs, rnd):
    preds, truths = zip(*pairs)
    hi, lo = wups(preds, truths, 0.0, DEMO), wups(preds, truths, 0.9, DEMO)
    assert 0.0 <= lo <= hi <= 100.0
    order = list(range(len(pairs)))
    rnd.shuffle(order)
    shuffled = wups([preds[k] for k in order], [truths[k] for k in order], 0.9, DEMO)
    assert math.isclose(shuffled, lo, rel_tol=0, abs_tol=1e-9)


# -- evaluate ---------------------------------------------------------------------------

def make_instance(k, type_):
    cands = [f"a thing{j}" for j in range(8)]
    return QAInstance(f"v{k}", "who is there ?", cands, k % 8, type_)


def test_evaluate_three_of_four():
    insts = [make_instance(k, "Who") for k in range(4)]
    preds = [i.gt_index for i in insts]
    preds[2] = (preds[2] + 1) % 8
    rep = evaluate(preds, insts)
    assert rep.accuracy == 0.75
    assert rep.per_type["Who"] == 0.75 and rep.per_type["What"] is None
    full = evaluate([i.gt_index for i in insts], insts, DEMO)
    assert (full.accuracy, full.wups_0, full.wups_09) == (1.0, 100.0, 100.0)


def test_evaluate_per_type_matches_independent_tally():
    rng = np.random.default_rng(0)
    types = [QUESTION_TYPES[int(t)] for t in rng.integers(len(QUESTION_TYPES), size=500)]
    insts = [make_instance(k, t) for k, t in enumerate(types)]
    preds = [i.gt_index if rng.random() < 0.6 else (i.gt_index + 3) % 8 for i in insts]
    rep = evaluate(preds, insts, DEMO)

    tally = {}
    for p, inst in zip(preds, insts):
        ok, n = tally.get(inst.type, (0, 0))
        tally[inst.type] = (ok + (p == inst.gt_index), n + 1)
    for t, (ok, n) in tally.items():
        assert rep.per_type[t] == ok / n
        assert rep.per_type_count[t] == n
    kept = [(ok, n) for t, (ok, n) in tally.items() if t not in ("Where", "When")]
    assert rep.excluding_where_when == pytest.approx(sum(o for o, _ in kept) / sum(n for _, n in kept))
    # overall accuracy is the count-weighted mean of the per-type accuracies
    weighted = sum(rep.per_type[t] * rep.per_type_count[t] for t in tally) / len(insts)
    assert rep.accuracy == pytest.approx(weighted, abs=1e-12)
    assert rep.wups_0 >= rep.wups_09
    d = rep.to_dict()
    assert set(d) >= {"accuracy", "wups@0.0", "wups@0.9", "per_type", "excluding_where_when"}
    assert "WUPS@0.9" in rep.table()


def test_evaluate_errors():
    with pytest.raises(ValueError):
        evaluate([], [])
    with pytest.raises(ValueError):
        evaluate([0, 1], [make_instance(0, "Who")])
