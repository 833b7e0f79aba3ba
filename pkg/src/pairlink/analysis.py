"""Coherence-denseness measurement and the objective/quality correlation study."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ContractViolation, RefusalError
from .model import (LinkingInstance, Objective, Psi, all_link_score, mintree_score,
                    single_link_score)

MIN_DENSENESS_ENTITIES = 4


@dataclass
class CoherenceGraph:
    vertices: list[str]
    weights: np.ndarray
    theta: Optional[float] = None
    filtered_edges: Optional[list[tuple[int, int]]] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        n = len(self.vertices)
        if self.weights.shape != (n, n):
            raise ContractViolation(f"weight matrix shape {self.weights.shape} for {n} vertices")
        if not np.array_equal(self.weights, self.weights.T):
            raise ContractViolation("coherence weights must be symmetric")

    @classmethod
    def complete(cls, entities: Sequence[str], psi: Psi) -> "CoherenceGraph":
        n = len(entities)
        w = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                w[i, j] = w[j, i] = psi(entities[i], entities[j])
        return cls(list(entities), w)

    def edges_at_least(self, theta: float) -> list[tuple[int, int]]:
        n = len(self.vertices)
        return [(i, j) for i in range(n) for j in range(i + 1, n) if self.weights[i, j] >= theta]


def edge_cover_threshold(g: CoherenceGraph) -> float:
    """Largest theta for which the edges weighing at least theta still touch every vertex.

    Each vertex stays covered exactly while theta does not exceed its
    heaviest incident edge, so the answer is the smallest of those maxima.
    """
    n = len(g.vertices)
    if n < 2:
        raise ContractViolation("edge cover threshold needs at least 2 vertices")
    w = g.weights.copy()
    np.fill_diagonal(w, -np.inf)
    return float(w.max(axis=1).min())


def denseness(entities: Sequence[str], psi: Psi) -> float:
    """Average degree ``2|E_theta|/|V|`` of the edge-cover-filtered coherence graph."""
    if len(entities) < MIN_DENSENESS_ENTITIES:
        raise RefusalError(
            f"denseness needs at least {MIN_DENSENESS_ENTITIES} entities, got {len(entities)}")
    g = CoherenceGraph.complete(entities, psi)
    g.theta = edge_cover_threshold(g)
    g.filtered_edges = g.edges_at_least(g.theta)
    return 2 * len(g.filtered_edges) / len(g.vertices)


def theoretical_denseness(n: int) -> dict[str, float]:
    """Reference values for the canonical coherence forms on ``n`` entities."""
    return {"forest": 1.0, "tree": 2 * (n - 1) / n, "dense": float(n - 1)}


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation, ties receiving their average rank."""
    if len(xs) != len(ys):
        raise ContractViolation(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ContractViolation("spearman needs at least two points")
    rx, ry = rankdata(xs), rankdata(ys)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise ContractViolation("spearman is undefined for constant input")
    rx, ry = rx - rx.mean(), ry - ry.mean()
    rho = float((rx * ry).sum() / np.sqrt((rx * rx).sum() * (ry * ry).sum()))
    return max(-1.0, min(1.0, rho))


@dataclass
class CorrelationReport:
    objective_scores: dict[str, list[float]] = field(default_factory=dict)
    rho: dict[str, Optional[float]] = field(default_factory=dict)


STUDY_OBJECTIVES = (Objective.ALL_LINK, Objective.SINGLE_LINK, Objective.MINTREE)


def degraded_assignments(inst: LinkingInstance) -> list[list[str]]:
    """The N+1 assignments with 0..N correct links, fixed in document order.

    The starting point links every mention to its highest-phi wrong candidate.
    """
    wrong = []
    for m in inst.mentions:
        if m.gold is None or m.gold not in m.entities:
            raise RefusalError(f"mention {m.index} ({m.surface!r}) has no gold candidate")
        if len(m.candidates) < 2:
            raise RefusalError(f"mention {m.index} ({m.surface!r}) has a single candidate")
        others = [c for c in m.candidates if c.entity != m.gold]
        best = others[0]
        for c in others[1:]:
            if c.phi > best.phi:
                best = c
        wrong.append(best.entity)
    results = [list(wrong)]
    for t in range(len(inst)):
        step = list(results[-1])
        step[t] = inst.mentions[t].gold
        results.append(step)
    return results


def correlation_study(inst: LinkingInstance, psi: Psi, beta: float) -> CorrelationReport:
    if len(inst) < 2:
        raise RefusalError(f"document {inst.doc_id!r}: correlation needs at least 2 mentions")
    results = degraded_assignments(inst)
    correct = list(range(len(results)))
    scorers = {
        Objective.ALL_LINK: all_link_score,
        Objective.SINGLE_LINK: single_link_score,
        Objective.MINTREE: mintree_score,
    }
    report = CorrelationReport()
    for obj in STUDY_OBJECTIVES:
        scores = [scorers[obj](r, inst, psi, beta) for r in results]
        report.objective_scores[obj.value] = scores
        try:
            report.rho[obj.value] = spearman(scores, correct)
        except ContractViolation:
            report.rho[obj.value] = None
    return report
