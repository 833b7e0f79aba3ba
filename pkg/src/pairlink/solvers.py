"""Collective linking algorithms.

Every solver takes a :class:`LinkingInstance`, a coherence callable
``psi(e1, e2) -> [0, 1]`` and a :class:`SolverConfig`, and returns a
:class:`SolverReport` holding one candidate per mention.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation
from .model import (Assignment, Candidate, LinkingInstance, Mention, Objective, Psi,
                    ScoreTables, SolverConfig, _CORES)


@dataclass(frozen=True)
class PairQueueEntry:
    mentions: tuple[int, int]
    best_pair: tuple[str, str]
    distance: float
    confidence: float
    positions: tuple[int, int]


@dataclass
class SolverReport:
    """Solver output; ``iterations`` counts rounds of iterative solvers and is 0 otherwise."""

    assignment: Assignment
    iterations: int
    converged: bool
    wall_time: float  # milliseconds
    trace: list = field(default_factory=list)


def _argmax_first(values: Sequence[float]) -> int:
    best = 0
    for x in range(1, len(values)):
        if values[x] > values[best]:
            best = x
    return best


def _decode(inst: LinkingInstance, idx: Sequence[int]) -> Assignment:
    return Assignment([m.candidates[int(x)].entity for m, x in zip(inst.mentions, idx)])


def _greedy_phi(inst: LinkingInstance) -> list[int]:
    return [_argmax_first([c.phi for c in m.candidates]) for m in inst.mentions]


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        report = fn(*args, **kwargs)
        report.wall_time = (time.perf_counter() - t0) * 1000.0
        return report

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    wrapper.__wrapped__ = fn
    return wrapper


# --
# Pair-Linking

# A scan list holds (position, entity, phi) triples.


def _scan_pair(ci, cj, psi, beta, early_stop):
    """Most confident pair in ``ci x cj``.

    With ``early_stop`` both lists must be sorted by descending phi. The scan
    stops once even a perfect coherence of 1 cannot reach the incumbent; ties
    are settled by candidate position so the result matches the full scan.
    """
    w = 1.0 - beta
    best_conf = -1.0
    best = None
    top_j = cj[0][2]
    for px, ex, fx in ci:
        if early_stop and best is not None and w * (fx + top_j) / 2.0 + beta < best_conf:
            break
        for py, ey, fy in cj:
            base = w * (fx + fy) / 2.0
            if early_stop and best is not None and base + beta < best_conf:
                break
            conf = base + beta * psi(ex, ey)
            if conf > best_conf or (conf == best_conf and (px, py) < best[:2]):
                best_conf = conf
                best = (px, py, ex, ey)
    return best_conf, best


def _scan_list(mention: Mention, cands: Sequence[Candidate], early_stop: bool):
    items = [(mention.position(c.entity), c.entity, c.phi) for c in cands]
    if early_stop:
        items.sort(key=lambda t: (-t[2], t[0]))
    return items


def top_pair(m_i: Mention, C_i: Sequence[Candidate], m_j: Mention, C_j: Sequence[Candidate],
             psi: Psi, beta: float, early_stop: bool = True) -> PairQueueEntry:
    if not C_i or not C_j:
        raise ContractViolation("top_pair needs two nonempty candidate lists")
    ci = _scan_list(m_i, C_i, early_stop)
    cj = _scan_list(m_j, C_j, early_stop)
    conf, (px, py, ex, ey) = _scan_pair(ci, cj, psi, beta, early_stop)
    return PairQueueEntry((m_i.index, m_j.index), (ex, ey), 1.0 - conf, conf, (px, py))


@_timed
def pair_linking(inst: LinkingInstance, psi: Psi, config: SolverConfig | None = None,
                 early_stop: bool = True) -> SolverReport:
    """Greedy MINTREE solver: repeatedly commit the most confident mention pair.

    ``trace`` lists the queue entries that fixed at least one mention, in
    the order they were taken.
    """
    config = config or SolverConfig()
    beta = config.beta
    n = len(inst)
    if n == 1:
        return SolverReport(_decode(inst, _greedy_phi(inst)), 0, True, 0.0)

    lists = [_scan_list(m, m.candidates, early_stop) for m in inst.mentions]
    heap: list = []
    current: dict[tuple[int, int], int] = {}
    gen = itertools.count()

    def push(i, j):
        a, b = (i, j) if i < j else (j, i)
        conf, (px, py, ex, ey) = _scan_pair(lists[a], lists[b], psi, beta, early_stop)
        entry = PairQueueEntry((a, b), (ex, ey), 1.0 - conf, conf, (px, py))
        g = next(gen)
        current[(a, b)] = g
        heapq.heappush(heap, (-conf, a, b, g, entry))

    for i in range(n):
        for j in range(i + 1, n):
            push(i, j)

    choice: list = [None] * n
    order = []
    remaining = n
    while remaining:
        _, a, b, g, entry = heapq.heappop(heap)
        if current.get((a, b)) != g or (choice[a] is not None and choice[b] is not None):
            continue
        fixed = []
        for m, e, pos in ((a, entry.best_pair[0], entry.positions[0]),
                          (b, entry.best_pair[1], entry.positions[1])):
            if choice[m] is None:
                choice[m] = e
                lists[m] = [(pos, e, inst.mentions[m].candidates[pos].phi)]
                fixed.append(m)
                remaining -= 1
        order.append(entry)
        for f in fixed:
            for k in range(n):
                if choice[k] is None:
                    push(k, f)
    return SolverReport(Assignment(choice), 0, True, 0.0, order)


# --
# Iterative substitution (hill climbing)


@_timed
def iterative_substitution(inst: LinkingInstance, objective, psi: Psi,
                           config: SolverConfig | None = None) -> SolverReport:
    """Start from argmax phi and apply the best improving single-mention swap per round.

    ``trace`` holds the objective value after every applied round.
    """
    config = config or SolverConfig()
    objective = Objective(objective)
    if objective not in (Objective.ALL_LINK, Objective.SINGLE_LINK):
        raise ContractViolation("iterative substitution supports ALL_LINK and SINGLE_LINK")
    beta = config.beta
    core = _CORES[objective]
    n = len(inst)
    tables = ScoreTables.build(inst, psi)
    idx = _greedy_phi(inst)
    current = core(*tables.values(idx), beta)
    trace = [current]
    rounds = 0
    converged = False
    while rounds < config.max_iterations:
        best_gain, best_move = 1e-12, None
        for i in range(n):
            a = idx[i]
            for x in range(len(inst.mentions[i].candidates)):
                if x == a:
                    continue
                if objective is Objective.ALL_LINK:
                    coh = 0.0
                    for j in range(n):
                        if j != i:
                            row = tables.psi[(i, j)]
                            coh += row[x][idx[j]] - row[a][idx[j]]
                    gain = (1.0 - beta) * (tables.phi[i][x] - tables.phi[i][a]) + 2.0 * beta * coh
                else:
                    trial = list(idx)
                    trial[i] = x
                    gain = core(*tables.values(trial), beta) - current
                if gain > best_gain:
                    best_gain, best_move = gain, (i, x)
        if best_move is None:
            converged = True
            break
        i, x = best_move
        idx[i] = x
        current = core(*tables.values(idx), beta)
        trace.append(current)
        rounds += 1
    assignment = _decode(inst, idx)
    assignment.objective_value = current
    return SolverReport(assignment, rounds, converged, 0.0, trace)


# --
# Loopy belief propagation (max-product, log domain)


def _padded(inst: LinkingInstance, psi: Psi, beta: float, pair_weight: float):
    n = len(inst)
    K = max(len(m.candidates) for m in inst.mentions)
    valid = np.zeros((n, K), dtype=bool)
    unary = np.full((n, K), -np.inf)
    for i, m in enumerate(inst.mentions):
        k = len(m.candidates)
        valid[i, :k] = True
        unary[i, :k] = [(1.0 - beta) * c.phi for c in m.candidates]
    theta = np.zeros((n, n, K, K))
    ents = [m.entities for m in inst.mentions]
    for i in range(n):
        for j in range(i + 1, n):
            t = np.array([[psi(a, b) for b in ents[j]] for a in ents[i]]) * (pair_weight * beta)
            theta[i, j, :t.shape[0], :t.shape[1]] = t
            theta[j, i, :t.shape[1], :t.shape[0]] = t.T
    return valid, unary, theta


@_timed
def loopy_belief_propagation(inst: LinkingInstance, objective, psi: Psi,
                             config: SolverConfig | None = None) -> SolverReport:
    """Synchronous damped max-product message passing on the complete mention graph.

    For ALL_LINK each mention pair carries ``2*beta*psi`` so the MAP state
    maximises the ordered-pair objective. For SINGLE_LINK the pair factor is
    ``beta*psi`` and incoming messages are combined by max instead of sum.
    ``trace`` holds the largest message change per iteration.
    """
    config = config or SolverConfig()
    objective = Objective(objective)
    if objective not in (Objective.ALL_LINK, Objective.SINGLE_LINK):
        raise ContractViolation("LBP supports ALL_LINK and SINGLE_LINK")
    n = len(inst)
    if n == 1:
        return SolverReport(_decode(inst, _greedy_phi(inst)), 0, True, 0.0)
    use_max = objective is Objective.SINGLE_LINK
    valid, unary, theta = _padded(inst, psi, config.beta, 1.0 if use_max else 2.0)
    K = unary.shape[1]
    eye = np.eye(n, dtype=bool)
    msgs = np.zeros((n, n, K))  # msgs[a, b] is the message a -> b over b's states
    trace = []
    converged = False
    it = 0

    def incoming_max(msgs):
        into = msgs.transpose(1, 0, 2).copy()  # into[i, a] = message a -> i
        into[eye] = -np.inf
        order = np.argsort(-into, axis=1, kind="stable")
        top1 = np.take_along_axis(into, order[:, :1, :], axis=1)[:, 0, :]
        top2 = np.take_along_axis(into, order[:, 1:2, :], axis=1)[:, 0, :]
        return order[:, 0, :], top1, np.where(np.isinf(top2), 0.0, top2)

    for it in range(1, config.max_iterations + 1):
        if use_max:
            arg1, top1, top2 = incoming_max(msgs)
            excl = np.where(arg1[:, None, :] == np.arange(n)[None, :, None],
                            top2[:, None, :], top1[:, None, :])
            h = unary[:, None, :] + excl
        else:
            h = (unary + msgs.sum(axis=0))[:, None, :] - msgs.transpose(1, 0, 2)
        new = (h[:, :, :, None] + theta).max(axis=2)
        new = np.where(valid[None, :, :], new, -np.inf)
        new -= new.max(axis=2, keepdims=True)
        new[~np.broadcast_to(valid[None, :, :], new.shape)] = 0.0
        new[eye] = 0.0
        new = (1.0 - config.damping) * new + config.damping * msgs
        change = float(np.abs(new - msgs).max())
        msgs = new
        trace.append(change)
        if change < config.tolerance:
            converged = True
            break

    if use_max:
        _, top1, _ = incoming_max(msgs)
        belief = unary + np.where(np.isinf(top1), 0.0, top1)
    else:
        belief = unary + msgs.sum(axis=0)
    idx = belief.argmax(axis=1)
    return SolverReport(_decode(inst, idx), it, converged, 0.0, trace)


# --
# Forward-backward dynamic programming over the mention sequence


@_timed
def forward_backward(inst: LinkingInstance, psi: Psi,
                     config: SolverConfig | None = None) -> SolverReport:
    """Exact maximiser of the chain objective in O(N k^2)."""
    config = config or SolverConfig()
    beta = config.beta
    ms = inst.mentions
    score = (1.0 - beta) * np.array([c.phi for c in ms[0].candidates])
    back = []
    for i in range(1, len(ms)):
        t = np.array([[psi(a, b) for b in ms[i].entities] for a in ms[i - 1].entities])
        cand = score[:, None] + beta * t
        back.append(cand.argmax(axis=0))
        score = (1.0 - beta) * np.array([c.phi for c in ms[i].candidates]) + cand.max(axis=0)
    idx = [int(score.argmax())]
    for bp in reversed(back):
        idx.append(int(bp[idx[-1]]))
    idx.reverse()
    assignment = _decode(inst, idx)
    assignment.objective_value = float(score.max())
    return SolverReport(assignment, 0, True, 0.0)


# --
# Personalized PageRank


def pagerank_scores(inst: LinkingInstance, psi: Psi, config: SolverConfig, trace=None):
    """Stationary scores over all candidates; returns ``(scores, offsets, iterations, converged)``.

    When ``trace`` is a list, the mass of the score vector after each
    iteration is appended to it.
    """
    beta = config.beta
    sizes = [len(m.candidates) for m in inst.mentions]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    owner = np.repeat(np.arange(len(sizes)), sizes)
    ents = [e for m in inst.mentions for e in m.entities]
    w = np.zeros((total, total))
    for u in range(total):
        for v in range(u + 1, total):
            if owner[u] != owner[v]:
                w[u, v] = w[v, u] = beta * psi(ents[u], ents[v])
    cross = owner[:, None] != owner[None, :]
    rows = w.sum(axis=1)
    uniform = cross / np.maximum(cross.sum(axis=1, keepdims=True), 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(rows[:, None] > 0, w / rows[:, None], uniform)
    s = np.array([(1.0 - beta) * c.phi for m in inst.mentions for c in m.candidates])
    s = s / s.sum() if s.sum() > 0 else np.full(total, 1.0 / total)
    r = s.copy()
    d = config.damping
    pt = p.T
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        nxt = (1.0 - d) * (pt @ r) + d * s
        change = float(np.abs(nxt - r).sum())
        r = nxt
        if trace is not None:
            trace.append(float(r.sum()))
        if change < config.tolerance:
            converged = True
            break
    return r, offsets, it, converged


@_timed
def personalized_pagerank(inst: LinkingInstance, psi: Psi,
                          config: SolverConfig | None = None) -> SolverReport:
    """Single-shot personalized PageRank on the mention-candidate graph.

    Teleport mass follows ``(1-beta)*phi``; cross-mention edges carry
    ``beta*psi``. Each mention takes its highest-scoring candidate.
    """
    config = config or SolverConfig.for_solver("pagerank")
    if len(inst) == 1:
        return SolverReport(_decode(inst, _greedy_phi(inst)), 0, True, 0.0)
    trace: list = []
    r, offsets, it, converged = pagerank_scores(inst, psi, config, trace)
    idx = [_argmax_first(list(r[offsets[i]:offsets[i + 1]])) for i in range(len(inst))]
    return SolverReport(_decode(inst, idx), it, converged, 0.0, trace)


# --
# Non-iterative linkers


@_timed
def support_linker(inst: LinkingInstance, psi: Psi,
                   config: SolverConfig | None = None) -> SolverReport:
    """Each mention independently maximises its local score plus support from every other mention."""
    config = config or SolverConfig()
    beta = config.beta
    n = len(inst)
    phi = [np.array([c.phi for c in m.candidates]) for m in inst.mentions]
    ents = [m.entities for m in inst.mentions]
    idx = []
    for i in range(n):
        total = (1.0 - beta) * phi[i]
        for j in range(n):
            if j == i:
                continue
            t = np.array([[psi(a, b) for b in ents[j]] for a in ents[i]])
            total = total + ((1.0 - beta) * phi[j][None, :] + beta * t).max(axis=1)
        idx.append(_argmax_first(list(total)))
    return SolverReport(_decode(inst, idx), 0, True, 0.0)


@_timed
def local_linker(inst: LinkingInstance, mode: str = "phi") -> SolverReport:
    """Per-mention argmax of phi (``mode="phi"``) or of the prior P(e|m) (``mode="prior"``)."""
    mode = mode.lower()
    if mode == "phi":
        idx = _greedy_phi(inst)
    elif mode == "prior":
        idx = []
        for m in inst.mentions:
            priors = [c.prior for c in m.candidates]
            if any(p is None for p in priors):
                raise ContractViolation(f"mention {m.index} ({m.surface!r}) lacks priors")
            idx.append(_argmax_first(priors))
    else:
        raise ContractViolation(f"unknown local mode {mode!r}")
    return SolverReport(_decode(inst, idx), 0, True, 0.0)


SolverFn = Callable[[LinkingInstance, Psi, SolverConfig], SolverReport]

SOLVERS: dict[str, SolverFn] = {
    "pair-linking": lambda inst, psi, cfg: pair_linking(inst, psi, cfg),
    "pair-linking-full": lambda inst, psi, cfg: pair_linking(inst, psi, cfg, early_stop=False),
    "itersub-al": lambda inst, psi, cfg: iterative_substitution(inst, Objective.ALL_LINK, psi, cfg),
    "itersub-sl": lambda inst, psi, cfg: iterative_substitution(inst, Objective.SINGLE_LINK, psi, cfg),
    "lbp-al": lambda inst, psi, cfg: loopy_belief_propagation(inst, Objective.ALL_LINK, psi, cfg),
    "lbp-sl": lambda inst, psi, cfg: loopy_belief_propagation(inst, Objective.SINGLE_LINK, psi, cfg),
    "fwbw": forward_backward,
    "pagerank": personalized_pagerank,
    "support": support_linker,
    "local-phi": lambda inst, psi, cfg: local_linker(inst, "phi"),
    "local-prior": lambda inst, psi, cfg: local_linker(inst, "prior"),
}


def run_solver(name: str, inst: LinkingInstance, psi: Psi,
               config: SolverConfig | None = None) -> SolverReport:
    try:
        fn = SOLVERS[name]
    except KeyError:
        raise ContractViolation(
            f"unknown solver {name!r}; choose from {', '.join(SOLVERS)}") from None
    return fn(inst, psi, config or SolverConfig.for_solver(name))
