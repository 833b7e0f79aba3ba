import math
import random

import pytest

from conftest import make_instance
from pairlink.errors import RefusalError, ValidationError
from pairlink.evaluation import (BenchRecord, bench, cross_validate_beta, fold_of, format_table,
                                 gold_of, link_corpus, micro_prf, nil_mentions, nil_robustness)
from pairlink.kb import CoherenceMeasure, TableCoherence
from pairlink.model import Assignment, Candidate, LinkingInstance, Mention, SolverConfig
from pairlink.synth import synth_corpus


def test_micro_prf_hand_example():
    gold = {"d": ["a", "b", "c", "d"]}
    preds = {"d": Assignment(["a", "b", "x", None])}
    r = micro_prf(preds, gold)
    assert (r.precision, r.recall) == (2 / 3, 2 / 4)
    assert r.f1 == 4 / 7
    assert math.isclose(r.f1, 2 * r.precision * r.recall / (r.precision + r.recall))
    assert (r.attempted, r.gold_count, r.correct) == (3, 4, 2)


def test_micro_prf_perfect_and_empty():
    gold = {"d": ["a", "b"]}
    assert micro_prf({"d": ["a", "b"]}, gold).f1 == 1.0
    r = micro_prf({"d": [None, None]}, gold)
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)
    r = micro_prf({}, gold)
    assert r.f1 == 0.0 and r.gold_count == 2


def test_micro_prf_unknown_doc():
    with pytest.raises(ValidationError):
        micro_prf({"ghost": ["a"]}, {"d": ["a"]})


def test_micro_prf_pools_mentions():
    gold = {"d1": ["a"], "d2": ["b", "c", "d"]}
    preds = {"d1": ["a"], "d2": ["b", "x", "y"]}
    # per-document averaging would give (1 + 1/3)/2; pooling gives 2/4
    assert micro_prf(preds, gold).f1 == 0.5


def test_micro_prf_full_attempt_identity_and_permutation():
    rng = random.Random(51)
    for _ in range(100):
        gold, preds = {}, {}
        for d in range(rng.randint(1, 6)):
            n = rng.randint(1, 8)
            gold[f"d{d}"] = [f"e{rng.randint(0, 3)}" for _ in range(n)]
            preds[f"d{d}"] = [f"e{rng.randint(0, 3)}" for _ in range(n)]
        r = micro_prf(preds, gold)
        assert r.precision == r.recall
        assert r.f1 == r.precision
        keys = list(gold)
        rng.shuffle(keys)
        r2 = micro_prf({k: preds[k] for k in keys}, {k: gold[k] for k in keys})
        assert r2 == r


# -- cross-validation


def noise_corpus(n_docs=10):
    """phi is perfect (gold has the top phi), psi is uniformly random."""
    rng = random.Random(52)
    docs, table = [], {}
    for d in range(n_docs):
        ms = []
        for i in range(4):
            cands = (Candidate(f"d{d}g{i}", 0.9), Candidate(f"d{d}w{i}", 0.2))
            ms.append(Mention(i, f"s{i}", cands, f"d{d}g{i}"))
        docs.append(LinkingInstance(f"doc{d}", tuple(ms)))
        ents = [c.entity for m in ms for c in m.candidates]
        for a in range(len(ents)):
            for b in range(a + 1, len(ents)):
                table[(ents[a], ents[b])] = rng.random()
    return docs, TableCoherence(table)


def coherence_corpus(n_docs=10):
    """phi prefers the wrong candidate; psi links the gold entities.

    Gold pairs win once (1-beta)*0.2 + beta > (1-beta)*0.95, i.e. beta > 3/7.
    """
    docs, table = [], {}
    for d in range(n_docs):
        ms = []
        for i in range(4):
            cands = (Candidate(f"d{d}w{i}", 0.95), Candidate(f"d{d}g{i}", 0.2))
            ms.append(Mention(i, f"s{i}", cands, f"d{d}g{i}"))
        docs.append(LinkingInstance(f"doc{d}", tuple(ms)))
        for i in range(4):
            for j in range(i + 1, 4):
                table[(f"d{d}g{i}", f"d{d}g{j}")] = 1.0
    return docs, TableCoherence(table)


def test_cv_noise_picks_smallest_beta():
    docs, psi = noise_corpus()
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    cv = cross_validate_beta(docs, "pair-linking", psi, grid)
    assert cv.betas == [0.0] * 5
    assert cv.result.f1 == 1.0


def test_cv_coherence_picks_large_beta():
    docs, psi = coherence_corpus()
    grid = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    cv = cross_validate_beta(docs, "pair-linking", psi, grid)
    assert all(b > 0.5 for b in cv.betas)
    # cross-check one fold by direct evaluation
    folds = fold_of(docs)
    gold = gold_of(docs)
    train = [d for d in docs if folds[d.doc_id] != 0]
    scores = {b: micro_prf(link_corpus(train, "pair-linking", psi, SolverConfig(beta=b)),
                           gold_of(train)).f1 for b in grid}
    best = max(scores.values())
    assert cv.betas[0] == min(b for b in grid if scores[b] == best)
    assert set(gold) == set(cv.predictions)


def test_cv_single_value_grid():
    docs, psi = noise_corpus()
    assert cross_validate_beta(docs, "support", psi, [0.7]).betas == [0.7] * 5


def test_cv_needs_five_docs():
    docs, psi = noise_corpus(4)
    with pytest.raises(RefusalError):
        cross_validate_beta(docs, "pair-linking", psi, [0.5])


def test_folds_stable_under_shuffle():
    docs, _ = noise_corpus(12)
    shuffled = list(reversed(docs))
    assert fold_of(docs) == fold_of(shuffled)
    sizes = [list(fold_of(docs).values()).count(k) for k in range(5)]
    assert max(sizes) - min(sizes) <= 1


# -- NIL robustness


@pytest.fixture(scope="module")
def small_synth():
    sc = synth_corpus(8, (5, 9), 4, "dense", noise=0.1, seed=3)
    return sc.docs, CoherenceMeasure("njs", sc.kb, sc.embeddings, strict=False)


def test_nil_zero_matches_standard_run(small_synth):
    docs, psi = small_synth
    cfg = SolverConfig()
    plain = micro_prf(link_corpus(docs, "pair-linking", psi, cfg), gold_of(docs))
    r = nil_robustness(docs, "pair-linking", psi, cfg, 0.0)
    assert (r.precision, r.recall, r.f1) == (plain.precision, plain.recall, plain.f1)


def test_nil_counts_and_determinism():
    inst = make_instance([[0.5, 0.4]] * 5, doc_id="five")
    assert len(nil_mentions(inst, 0.6, 2018)) == 3
    assert nil_mentions(inst, 0.6, 2018) == nil_mentions(inst, 0.6, 2018)
    assert len(nil_mentions(inst, 0.2, 7)) == 1


def test_nil_same_seed_same_result(small_synth):
    docs, psi = small_synth
    a = nil_robustness(docs, "pair-linking", psi, SolverConfig(seed=9), 0.4)
    b = nil_robustness(docs, "pair-linking", psi, SolverConfig(seed=9), 0.4, threads=4)
    assert a == b


def test_nil_skips_emptied_mentions():
    ms = [Mention(0, "a", (Candidate("g0", 0.9),), "g0")]
    ms += [Mention(i, f"s{i}", (Candidate(f"g{i}", 0.9), Candidate(f"w{i}", 0.1)), f"g{i}")
           for i in range(1, 4)]
    doc = LinkingInstance("d", tuple(ms))
    r = nil_robustness([doc], "local-phi", TableCoherence({}), SolverConfig(), 1.0)
    assert r.skipped == 1 and r.gold_count == 0


def test_nil_refusals():
    short = make_instance([[0.5]] * 3, gold=["m0c0", "m1c0", "m2c0"])
    with pytest.raises(RefusalError):
        nil_robustness([short], "pair-linking", TableCoherence({}), SolverConfig(), 0.2)
    nogold = make_instance([[0.5]] * 4)
    with pytest.raises(RefusalError):
        nil_robustness([nogold], "pair-linking", TableCoherence({}), SolverConfig(), 0.2)
    with pytest.raises(ValidationError):
        nil_robustness([], "pair-linking", TableCoherence({}), SolverConfig(), 1.5)


# -- bench and tables


def test_bench_records(small_synth):
    docs, psi = small_synth
    one = bench(docs[:1], ["pair-linking"], psi, repeats=1)
    assert len(one) == 1 and one[0].ms_per_doc > 0 and one[0].docs == 1
    two = bench(docs, ["pair-linking", "lbp-al"], psi, repeats=1, warm_cache=False)
    assert [r.solver for r in two] == ["pair-linking", "lbp-al"]
    assert all(r.docs == len(docs) and r.cache == "cold" for r in two)


def test_bench_pair_linking_faster_than_lbp():
    sc = synth_corpus(2, 30, 20, "tree", noise=0.15, seed=4)
    psi = CoherenceMeasure("njs", sc.kb, sc.embeddings, strict=False)
    pl, lbp = bench(sc.docs, ["pair-linking", "lbp-al"], psi, repeats=2)
    assert pl.ms_per_doc < lbp.ms_per_doc


def test_bench_refuses_empty():
    with pytest.raises(RefusalError):
        bench([], ["pair-linking"], TableCoherence({}))


def test_format_table():
    text = format_table({("pair-linking", "A"): 0.91234, ("lbp-al", "A"): 0.5,
                         ("lbp-al", "B"): 0.25})
    lines = text.splitlines()
    assert lines[0].split() == ["solver", "A", "B"]
    assert lines[2].split() == ["pair-linking", "0.912", "-"]
    assert lines[3].split() == ["lbp-al", "0.500", "0.250"]
    assert BenchRecord("s", "d", 1.5, 2).as_dict()["cache"] == "warm"
