import random

import numpy as np
import pytest

from conftest import make_instance, random_case
from oracles import pagerank_closed_form
from pairlink.errors import ContractViolation
from pairlink.kb import TableCoherence
from pairlink.model import (Objective, SolverConfig, all_link_score, brute_force_optimum,
                            chain_score, edge_distance, mintree_score)
from pairlink.solvers import (SOLVERS, forward_backward, iterative_substitution, local_linker,
                              loopy_belief_propagation, pagerank_scores, pair_linking,
                              personalized_pagerank, run_solver, support_linker, top_pair)

THIRD = 1 / 3


# -- top_pair


def test_top_pair_singletons():
    inst = make_instance([[0.4], [0.8]])
    psi = TableCoherence({("m0c0", "m1c0"): 0.5})
    m0, m1 = inst.mentions
    e = top_pair(m0, m0.candidates, m1, m1.candidates, psi, THIRD)
    assert e.best_pair == ("m0c0", "m1c0")
    assert e.distance == pytest.approx(edge_distance(0.4, 0.5, 0.8, THIRD), abs=1e-15)


def test_top_pair_two_by_two_exhaustive():
    inst = make_instance([[0.9, 0.3], [0.2, 0.6]])
    psi = TableCoherence({("m0c0", "m1c0"): 0.1, ("m0c0", "m1c1"): 0.2,
                          ("m0c1", "m1c0"): 0.9, ("m0c1", "m1c1"): 1.0})
    m0, m1 = inst.mentions
    best = min(((a, b) for a in m0.candidates for b in m1.candidates),
               key=lambda p: edge_distance(p[0].phi, psi(p[0].entity, p[1].entity), p[1].phi, 0.5))
    for early in (True, False):
        e = top_pair(m0, m0.candidates, m1, m1.candidates, psi, 0.5, early_stop=early)
        assert e.best_pair == (best[0].entity, best[1].entity) == ("m0c1", "m1c1")


def test_top_pair_empty_rejected():
    inst = make_instance([[0.4], [0.8]])
    m0, m1 = inst.mentions
    with pytest.raises(ContractViolation):
        top_pair(m0, (), m1, m1.candidates, TableCoherence({}), THIRD)


def test_top_pair_early_stop_identical_on_random_lists():
    rng = random.Random(21)
    for trial in range(1000):
        round_to = 1 if trial % 3 == 0 else None  # coarse values force ties
        inst, psi = random_case(rng, n_min=2, n_max=2, k_min=1, k_max=20, round_to=round_to)
        beta = rng.choice([0.0, THIRD, 0.5, 1.0, rng.random()])
        m0, m1 = inst.mentions
        a = top_pair(m0, m0.candidates, m1, m1.candidates, psi, beta, True)
        b = top_pair(m0, m0.candidates, m1, m1.candidates, psi, beta, False)
        assert a == b


# -- pair_linking


def five_mention_instance():
    """Five mentions, two candidates each, whose pair distances fix a known linking order."""
    names = [[f"e{i}_1", f"e{i}_2"] for i in range(1, 6)]
    inst = make_instance([[0.5, 0.5]] * 5, names=names)
    psi = TableCoherence({("e1_2", "e2_2"): 0.95, ("e2_1", "e3_1"): 0.9,
                          ("e4_1", "e5_1"): 0.85, ("e3_1", "e4_1"): 0.8}, default=0.1)
    return inst, psi


def test_five_mention_pairing_order():
    inst, psi = five_mention_instance()
    report = pair_linking(inst, psi, SolverConfig(beta=THIRD))
    assert report.assignment.choices == ["e1_2", "e2_2", "e3_1", "e4_1", "e5_1"]
    steps = [e.mentions for e in report.trace]
    assert steps[0] == (0, 1)
    assert steps[1] == (3, 4)
    assert 2 in steps[2] and len(steps) == 3


def test_pair_linking_single_mention():
    inst = make_instance([[0.2, 0.9, 0.9]])
    r = pair_linking(inst, TableCoherence({}), SolverConfig())
    assert r.assignment.choices == ["m0c1"]


def test_pair_linking_never_beats_mintree_optimum():
    rng = random.Random(22)
    equal = 0
    for _ in range(200):
        inst, psi = random_case(rng, n_max=5, k_max=3)
        got = mintree_score(pair_linking(inst, psi, SolverConfig()).assignment, inst, psi, THIRD)
        _, best = brute_force_optimum(inst, Objective.MINTREE, psi, THIRD)
        assert got >= best - 1e-12
        equal += abs(got - best) <= 1e-12
    assert equal / 200 >= 0.7


def test_pair_linking_trace_distances_consistent():
    rng = random.Random(23)
    inst, psi = random_case(rng, n_min=6, n_max=6, k_min=3, k_max=5)
    for entry in pair_linking(inst, psi, SolverConfig()).trace:
        i, j = entry.mentions
        a, b = entry.best_pair
        assert a in inst.mentions[i].entities and b in inst.mentions[j].entities
        d = edge_distance(inst.mentions[i].phi(a), psi(a, b), inst.mentions[j].phi(b), THIRD)
        assert entry.distance == pytest.approx(d, abs=1e-12)


# -- iterative substitution


def test_itersub_start_already_optimal():
    inst = make_instance([[0.9, 0.1], [0.8, 0.2]])
    psi = TableCoherence({("m0c0", "m1c0"): 1.0})
    r = iterative_substitution(inst, Objective.ALL_LINK, psi, SolverConfig(beta=0.5))
    assert r.assignment.choices == ["m0c0", "m1c0"]
    assert r.iterations == 0 and r.converged


def test_itersub_escapes_greedy_start():
    inst = make_instance([[0.6, 0.5], [0.6, 0.5]])
    psi = TableCoherence({("m0c1", "m1c0"): 0.8, ("m0c1", "m1c1"): 1.0})
    r = iterative_substitution(inst, Objective.ALL_LINK, psi, SolverConfig(beta=0.5))
    best, value = brute_force_optimum(inst, Objective.ALL_LINK, psi, 0.5)
    assert r.assignment.choices == best.choices == ["m0c1", "m1c1"]
    assert all_link_score(r.assignment, inst, psi, 0.5) == pytest.approx(value)


@pytest.mark.parametrize("objective", [Objective.ALL_LINK, Objective.SINGLE_LINK])
def test_itersub_strictly_increasing(objective):
    rng = random.Random(24)
    for _ in range(50):
        inst, psi = random_case(rng, n_max=7, k_max=4)
        r = iterative_substitution(inst, objective, psi, SolverConfig(beta=rng.random()))
        assert all(b > a for a, b in zip(r.trace, r.trace[1:]))
        assert r.iterations <= 50


def test_itersub_rejects_other_objectives():
    inst = make_instance([[0.5]])
    with pytest.raises(ContractViolation):
        iterative_substitution(inst, Objective.CHAIN, TableCoherence({}))


# -- LBP


def test_lbp_two_mentions_exact():
    rng = random.Random(25)
    for _ in range(100):
        inst, psi = random_case(rng, n_min=2, n_max=2, k_max=4)
        beta = rng.random()
        r = loopy_belief_propagation(inst, Objective.ALL_LINK, psi, SolverConfig(beta=beta))
        best, value = brute_force_optimum(inst, Objective.ALL_LINK, psi, beta)
        assert all_link_score(r.assignment, inst, psi, beta) == pytest.approx(value, abs=1e-9)


@pytest.mark.parametrize("objective", [Objective.ALL_LINK, Objective.SINGLE_LINK])
def test_lbp_uniform_ties_pick_first(objective):
    inst = make_instance([[0.5, 0.5, 0.5]] * 4)
    r = loopy_belief_propagation(inst, objective, TableCoherence({}, default=0.4), SolverConfig())
    assert r.assignment.choices == [f"m{i}c0" for i in range(4)]


def test_lbp_beats_greedy_mostly():
    rng = random.Random(26)
    wins = 0
    for _ in range(200):
        inst, psi = random_case(rng, n_min=4, n_max=4, k_min=3, k_max=3)
        r = loopy_belief_propagation(inst, Objective.ALL_LINK, psi, SolverConfig())
        greedy = local_linker(inst, "phi").assignment
        wins += all_link_score(r.assignment, inst, psi, THIRD) >= \
            all_link_score(greedy, inst, psi, THIRD) - 1e-12
    assert wins / 200 >= 0.95


def test_lbp_reports_iterations():
    rng = random.Random(27)
    inst, psi = random_case(rng, n_min=5, n_max=5, k_min=3, k_max=3)
    cfg = SolverConfig(max_iterations=3, tolerance=1e-15)
    r = loopy_belief_propagation(inst, Objective.SINGLE_LINK, psi, cfg)
    assert r.iterations <= 3 and len(r.trace) == r.iterations


# -- forward-backward


def test_fwbw_matches_brute_force():
    rng = random.Random(28)
    for _ in range(200):
        inst, psi = random_case(rng, n_max=6, k_max=4)
        beta = rng.random()
        r = forward_backward(inst, psi, SolverConfig(beta=beta))
        best, value = brute_force_optimum(inst, Objective.CHAIN, psi, beta)
        assert chain_score(r.assignment, inst, psi, beta) == pytest.approx(value, abs=1e-12)


def test_fwbw_zero_coherence_and_single():
    inst = make_instance([[0.1, 0.7], [0.9, 0.2], [0.3, 0.3]])
    r = forward_backward(inst, TableCoherence({}), SolverConfig())
    assert r.assignment.choices == ["m0c1", "m1c0", "m2c0"]
    one = make_instance([[0.1, 0.7]])
    assert forward_backward(one, TableCoherence({})).assignment.choices == ["m0c1"]


# -- PageRank


def _pagerank_oracle(phis, psi_pairs, beta, damping):
    """Closed-form stationary vector for two mentions of two candidates each."""
    nodes = [(0, 0), (0, 1), (1, 0), (1, 1)]
    w = np.zeros((4, 4))
    for u, (mu, cu) in enumerate(nodes):
        for v, (mv, cv) in enumerate(nodes):
            if mu != mv:
                key = (cu, cv) if mu == 0 else (cv, cu)
                w[u, v] = beta * psi_pairs[key]
    P = w / w.sum(axis=1, keepdims=True)
    s = np.array([(1 - beta) * phis[m][c] for m, c in nodes])
    return pagerank_closed_form(P, s / s.sum(), damping)


def test_pagerank_larger_phi_wins_closed_form():
    phis = [[0.8, 0.3], [0.2, 0.7]]
    pairs = {(0, 0): 0.5, (0, 1): 0.5, (1, 0): 0.5, (1, 1): 0.5}
    inst = make_instance(phis)
    psi = TableCoherence({(f"m0c{a}", f"m1c{b}"): v for (a, b), v in pairs.items()})
    cfg = SolverConfig.for_solver("pagerank")
    r, _, _, _ = pagerank_scores(inst, psi, cfg)
    ref = _pagerank_oracle(phis, pairs, cfg.beta, cfg.damping)
    # bipartite graph: error shrinks by 0.85 per step, about 1e-7 after 100 steps
    assert np.allclose(r, ref, atol=1e-6)
    tight = SolverConfig.for_solver("pagerank", max_iterations=400)
    r, _, _, converged = pagerank_scores(inst, psi, tight)
    assert converged and np.allclose(r, ref, atol=1e-8)
    assert personalized_pagerank(inst, psi, cfg).assignment.choices == ["m0c0", "m1c1"]
    assert [int(np.argmax(ref[:2])), int(np.argmax(ref[2:]))] == [0, 1]


def test_pagerank_dominant_coherence_wins_closed_form():
    phis = [[0.5, 0.5], [0.5, 0.5]]
    pairs = {(0, 0): 0.1, (0, 1): 0.1, (1, 0): 0.1, (1, 1): 0.9}
    inst = make_instance(phis)
    psi = TableCoherence({(f"m0c{a}", f"m1c{b}"): v for (a, b), v in pairs.items()})
    cfg = SolverConfig.for_solver("pagerank")
    r, _, _, _ = pagerank_scores(inst, psi, cfg)
    ref = _pagerank_oracle(phis, pairs, cfg.beta, cfg.damping)
    assert np.allclose(r, ref, atol=1e-6)
    assert personalized_pagerank(inst, psi, cfg).assignment.choices == ["m0c1", "m1c1"]


def test_pagerank_conserves_mass():
    rng = random.Random(29)
    for _ in range(30):
        inst, psi = random_case(rng, n_min=2, n_max=6, k_max=4)
        r = personalized_pagerank(inst, psi, SolverConfig.for_solver("pagerank"))
        assert all(abs(m - 1.0) <= 1e-9 for m in r.trace)
    single = make_instance([[0.3], [0.9], [0.4]])
    r = personalized_pagerank(single, TableCoherence({}), SolverConfig.for_solver("pagerank"))
    assert r.assignment.choices == ["m0c0", "m1c0", "m2c0"]
    assert all(abs(m - 1.0) <= 1e-9 for m in r.trace)


# -- support and local


def test_support_linker_hand_instance():
    inst = make_instance([[0.6, 0.5], [0.7, 0.4]])
    psi = TableCoherence({("m0c0", "m1c0"): 0.0, ("m0c0", "m1c1"): 0.1,
                          ("m0c1", "m1c0"): 0.9, ("m0c1", "m1c1"): 0.2})
    beta = 0.5
    # mention 0: c0 -> 0.3 + max(0.35+0, 0.2+0.05) = 0.65; c1 -> 0.25 + max(0.35+0.45, 0.2+0.1) = 1.05
    # mention 1: c0 -> 0.35 + max(0.3+0, 0.25+0.45) = 1.05; c1 -> 0.2 + max(0.3+0.05, 0.25+0.1) = 0.55
    r = support_linker(inst, psi, SolverConfig(beta=beta))
    assert r.assignment.choices == ["m0c1", "m1c0"]


def test_support_linker_degenerate():
    inst = make_instance([[0.1, 0.7], [0.9, 0.2]])
    assert support_linker(inst, TableCoherence({})).assignment.choices == ["m0c1", "m1c0"]
    one = make_instance([[0.1, 0.7]])
    assert support_linker(one, TableCoherence({})).assignment.choices == ["m0c1"]


def test_local_linker_modes():
    inst = make_instance([[0.2, 0.9, 0.4]])
    assert local_linker(inst, "phi").assignment.choices == ["m0c1"]
    flat = make_instance([[0.5, 0.5]])
    assert local_linker(flat, "phi").assignment.choices == ["m0c0"]
    from pairlink.model import Candidate, LinkingInstance, Mention
    m = Mention(0, "s", (Candidate("a", 0.1, 0.7), Candidate("b", 0.9, 0.3)))
    assert local_linker(LinkingInstance("d", (m,)), "prior").assignment.choices == ["a"]
    with pytest.raises(ContractViolation):
        local_linker(flat, "prior")


# -- registry-wide properties


@pytest.mark.parametrize("name", [n for n in SOLVERS if n != "local-prior"])
def test_every_solver_complete_and_deterministic(name):
    rng = random.Random(30)
    for _ in range(10):
        inst, psi = random_case(rng, n_max=6, k_max=4)
        a = run_solver(name, inst, psi)
        b = run_solver(name, inst, psi)
        assert a.assignment.choices == b.assignment.choices
        for m, e in zip(inst.mentions, a.assignment.choices):
            assert e in m.entities
        assert a.wall_time >= 0.0
        assert a.iterations <= SolverConfig.for_solver(name).max_iterations


def test_run_solver_unknown():
    with pytest.raises(ContractViolation, match="unknown solver"):
        run_solver("nope", make_instance([[0.5]]), TableCoherence({}))
