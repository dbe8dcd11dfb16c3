"""
From question/answer pairs to 8-way multiple choice, and scoring answers
=========================================================================

Raw records hold one question and one free-form answer.  The builder turns
each into eight candidates by swapping a number word, an entity noun, a
possessive owner, or a head noun.  WUPS then scores predicted answers
against the truth with Wu-Palmer similarity over a small taxonomy.
"""

# %%
from fwqa import QARecord, Taxonomy, build_dataset, evaluate, wu_palmer, wups
from fwqa.dataset import build_entity_list, build_noun_list

records = [
    QARecord("gif1", "", "How many cars is chasing each other along a highway?", "two cars"),
    QARecord("gif2", "", "Who is glaring?", "a man"),
    QARecord("gif3", "", "Whose leg gets caught?", "a little boy 's leg"),
    QARecord("gif4", "", "What does a man in a hat adjust?", "his tie"),
    QARecord("gif5", "", "How many dogs run?", "9 dogs"),
]
# entity and noun vocabularies normally come from the whole corpus; pad them for the demo
people = [QARecord(f"p{k}", "", "Who is there?", f"a {w}")
          for k, w in enumerate(["spectator", "pilot", "dog", "artist", "bowler", "singer",
                                 "soldier", "biker", "model", "girl"])]
things = [QARecord(f"t{k}", "", "What is it?", f"a {w}")
          for k, w in enumerate(["hat", "scar", "watch", "pocket", "shirt", "trunk", "caps", "pattern"])]
entities = build_entity_list(records + people, min_count=1)
nouns = build_noun_list(records + things, min_count=1)

result = build_dataset(records, seed=0, entity_list=entities, noun_list=nouns)
for inst in result.instances:
    print(f"{inst.type:8s} {inst.question}")
    for k, c in enumerate(inst.candidates):
        print("   ", "*" if k == inst.gt_index else " ", c)

# %%
# Out-of-range counts are discarded with a typed reason, never silently dropped.
for d in result.discards:
    print(d["video_id"], d["reason"], "-", d["detail"])

# %%
# Wu-Palmer similarity on the bundled taxonomy, then WUPS at both thresholds.
tax = Taxonomy.demo()
print("wup(man, woman) =", round(wu_palmer(tax, "man", "woman"), 4))
print("wup(dog, man)   =", round(wu_palmer(tax, "dog", "man"), 4))

pred = ["a woman", "two cars", "a dog"]
truth = ["a man", "two cars", "a cat"]
for theta in (0.0, 0.9):
    print(f"WUPS@{theta}: {wups(pred, truth, theta, tax):.2f}")

# %%
# evaluate() combines accuracy, per-type accuracy and WUPS for predicted indices.
report = evaluate([i.gt_index for i in result.instances], result.instances, tax)
print(report.table())
