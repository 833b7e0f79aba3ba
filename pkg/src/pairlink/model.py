"""Linking instances, assignments and the collective-linking objectives.

Objectives scored here (``beta`` weighs coherence against local confidence):

* ALL-Link: every ordered pair of selected entities contributes coherence.
* SINGLE-Link: each selected entity contributes its best coherence.
* chain: only neighbouring mentions contribute coherence.
* MINTREE: weight of the minimum spanning tree over edge distances
  (lower is better).
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

from .errors import ContractViolation, RefusalError, ValidationError

Psi = Callable[[str, str], float]

BRUTE_FORCE_LIMIT = 10 ** 6


@dataclass(frozen=True)
class Candidate:
    entity: str
    phi: float
    prior: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.phi <= 1.0:
            raise ValidationError(f"phi {self.phi} for {self.entity!r} outside [0, 1]")
        if self.prior is not None and not 0.0 <= self.prior <= 1.0:
            raise ValidationError(f"prior {self.prior} for {self.entity!r} outside [0, 1]")


@dataclass(frozen=True)
class Mention:
    index: int
    surface: str
    candidates: tuple[Candidate, ...]
    gold: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValidationError(f"mention {self.index} ({self.surface!r}) has no candidates")
        seen = set()
        for c in self.candidates:
            if c.entity in seen:
                raise ValidationError(
                    f"mention {self.index} lists candidate {c.entity!r} twice")
            seen.add(c.entity)

    @property
    def entities(self) -> list[str]:
        return [c.entity for c in self.candidates]

    def position(self, entity: str) -> int:
        for pos, c in enumerate(self.candidates):
            if c.entity == entity:
                return pos
        raise ContractViolation(f"{entity!r} is not a candidate of mention {self.index}")

    def phi(self, entity: str) -> float:
        return self.candidates[self.position(entity)].phi


@dataclass(frozen=True)
class LinkingInstance:
    doc_id: str
    mentions: tuple[Mention, ...]

    def __post_init__(self):
        object.__setattr__(self, "mentions", tuple(self.mentions))
        if not self.mentions:
            raise ValidationError(f"document {self.doc_id!r} has no mentions")
        for i, m in enumerate(self.mentions):
            if m.index != i:
                raise ValidationError(
                    f"document {self.doc_id!r}: mention at position {i} has index {m.index}")

    def __len__(self):
        return len(self.mentions)

    @property
    def gold(self) -> list[Optional[str]]:
        return [m.gold for m in self.mentions]

    def search_space(self) -> int:
        return math.prod(len(m.candidates) for m in self.mentions)


@dataclass
class Assignment:
    choices: list[Optional[str]]
    objective_value: Optional[float] = None

    def __len__(self):
        return len(self.choices)

    @property
    def complete(self) -> bool:
        return all(c is not None for c in self.choices)


@dataclass(frozen=True)
class SolverConfig:
    beta: float = 1.0 / 3.0
    max_iterations: int = 50
    damping: float = 0.5
    tolerance: float = 1e-6
    seed: int = 2018

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValidationError(f"beta {self.beta} outside [0, 1]")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValidationError(f"damping {self.damping} outside [0, 1)")
        if self.tolerance <= 0.0:
            raise ValidationError("tolerance must be positive")

    @classmethod
    def for_solver(cls, solver: str, **overrides) -> "SolverConfig":
        """Defaults for ``solver``; ``None`` overrides are ignored."""
        base = dict(SOLVER_DEFAULTS.get(solver, {}))
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def with_beta(self, beta: float) -> "SolverConfig":
        return replace(self, beta=beta)


SOLVER_DEFAULTS = {
    "pagerank": dict(damping=0.15, tolerance=1e-8, max_iterations=100),
    "lbp-al": dict(damping=0.5, tolerance=1e-6, max_iterations=50),
    "lbp-sl": dict(damping=0.5, tolerance=1e-6, max_iterations=50),
}


class Objective(str, enum.Enum):
    ALL_LINK = "all_link"
    SINGLE_LINK = "single_link"
    CHAIN = "chain"
    MINTREE = "mintree"


def minmax_scores(raw: Sequence[float]) -> list[float]:
    """Min-max rescale one mention's raw ranker scores into [0, 1]; a constant list maps to 1."""
    lo, hi = min(raw), max(raw)
    span = hi - lo
    return [(r - lo) / span if span > 0 else 1.0 for r in raw]


def rescale_phi(inst: LinkingInstance) -> LinkingInstance:
    mentions = []
    for m in inst.mentions:
        scaled = minmax_scores([c.phi for c in m.candidates])
        cands = tuple(replace(c, phi=p) for c, p in zip(m.candidates, scaled))
        mentions.append(replace(m, candidates=cands))
    return replace(inst, mentions=tuple(mentions))


# --
# Edge distance and objective cores (shared by the public scores and the
# brute-force oracle so both produce bit-identical values).


def edge_distance(phi_i: float, psi: float, phi_j: float, beta: float) -> float:
    for name, v in (("phi_i", phi_i), ("psi", psi), ("phi_j", phi_j), ("beta", beta)):
        if not 0.0 <= v <= 1.0:
            raise ContractViolation(f"{name} = {v} outside [0, 1]")
    return 1.0 - pair_confidence(phi_i, psi, phi_j, beta)


def pair_confidence(phi_i: float, psi: float, phi_j: float, beta: float) -> float:
    return (1.0 - beta) * (phi_i + phi_j) / 2.0 + beta * psi


def _all_link(phis, psis, beta):
    n = len(phis)
    coh = 0.0
    for i in range(n):
        for j in range(n):
            if j != i:
                coh += psis[i][j]
    return (1.0 - beta) * sum(phis) + beta * coh


def _single_link(phis, psis, beta):
    n = len(phis)
    coh = 0.0
    if n > 1:
        for i in range(n):
            coh += max(psis[i][j] for j in range(n) if j != i)
    return (1.0 - beta) * sum(phis) + beta * coh


def _chain(phis, psis, beta):
    coh = 0.0
    for i in range(len(phis) - 1):
        coh += psis[i][i + 1]
    return (1.0 - beta) * sum(phis) + beta * coh


def _distances(phis, psis, beta):
    n = len(phis)
    d = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            d[i][j] = d[j][i] = 1.0 - pair_confidence(phis[i], psis[i][j], phis[j], beta)
    return d


def _mintree(phis, psis, beta):
    return mst_weight(_distances(phis, psis, beta))


_CORES = {
    Objective.ALL_LINK: _all_link,
    Objective.SINGLE_LINK: _single_link,
    Objective.CHAIN: _chain,
    Objective.MINTREE: _mintree,
}


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def mst_weight(dist: Sequence[Sequence[float]], method: str = "kruskal") -> float:
    """Total weight of a minimum spanning tree of the complete graph ``dist``."""
    n = len(dist)
    if n <= 1:
        return 0.0
    if method == "kruskal":
        edges = sorted((dist[i][j], i, j) for i in range(n) for j in range(i + 1, n))
        uf = _UnionFind(n)
        total, used = 0.0, 0
        for w, i, j in edges:
            if uf.union(i, j):
                total += w
                used += 1
                if used == n - 1:
                    break
        return total
    if method == "prim":
        in_tree = [False] * n
        best = [math.inf] * n
        best[0] = 0.0
        total = 0.0
        for _ in range(n):
            u = min((v for v in range(n) if not in_tree[v]), key=lambda v: (best[v], v))
            in_tree[u] = True
            total += best[u]
            for v in range(n):
                if not in_tree[v] and dist[u][v] < best[v]:
                    best[v] = dist[u][v]
        return total
    raise ValueError(f"unknown MST method {method!r}")


# --
# Public objective scores


def _choices(gamma) -> list:
    choices = gamma.choices if isinstance(gamma, Assignment) else list(gamma)
    if any(c is None for c in choices):
        raise ContractViolation("objective needs a complete assignment")
    return choices


def _values(inst: LinkingInstance, entities: Sequence[str], mention_ids: Sequence[int],
            psi: Psi):
    phis = [inst.mentions[i].phi(e) for i, e in zip(mention_ids, entities)]
    n = len(entities)
    psis = [[0.0] * n for _ in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            psis[a][b] = psis[b][a] = psi(entities[a], entities[b])
    return phis, psis


def _score(objective: Objective, gamma, inst: LinkingInstance, psi: Psi, beta: float) -> float:
    choices = _choices(gamma)
    if len(choices) != len(inst):
        raise ContractViolation(f"assignment has {len(choices)} choices for {len(inst)} mentions")
    phis, psis = _values(inst, choices, range(len(choices)), psi)
    return _CORES[objective](phis, psis, beta)


def all_link_score(gamma, inst: LinkingInstance, psi: Psi, beta: float) -> float:
    return _score(Objective.ALL_LINK, gamma, inst, psi, beta)


def single_link_score(gamma, inst: LinkingInstance, psi: Psi, beta: float) -> float:
    return _score(Objective.SINGLE_LINK, gamma, inst, psi, beta)


def chain_score(gamma, inst: LinkingInstance, psi: Psi, beta: float) -> float:
    return _score(Objective.CHAIN, gamma, inst, psi, beta)


def mintree_score(entities, inst: LinkingInstance, psi: Psi, beta: float) -> float:
    """MST weight over the selected entities.

    ``entities`` is a list of ``(mention_index, entity)`` pairs, or a complete
    assignment (one entity per mention, in order).
    """
    if isinstance(entities, Assignment) or (entities and not isinstance(entities[0], tuple)):
        entities = list(enumerate(_choices(entities)))
    ids = [i for i, _ in entities]
    if len(set(ids)) != len(ids):
        raise ContractViolation("mintree_score got two entities for the same mention")
    phis, psis = _values(inst, [e for _, e in entities], ids, psi)
    return _mintree(phis, psis, beta)


def objective_score(objective, gamma, inst: LinkingInstance, psi: Psi, beta: float) -> float:
    objective = Objective(objective)
    if objective is Objective.MINTREE:
        return mintree_score(gamma, inst, psi, beta)
    return _score(objective, gamma, inst, psi, beta)


def support_score(i: int, j: int, e_i: str, inst: LinkingInstance, psi: Psi,
                  beta: float) -> float:
    """Best support that mention ``j`` lends to linking mention ``i`` to ``e_i``."""
    if i == j:
        raise ContractViolation("support_score needs two distinct mentions")
    inst.mentions[i].position(e_i)
    return max((1.0 - beta) * c.phi + beta * psi(e_i, c.entity)
               for c in inst.mentions[j].candidates)


# --
# Dense lookup tables and the brute-force oracle


@dataclass
class ScoreTables:
    """phi per mention and psi per ordered mention pair, indexed by candidate position."""

    phi: list[list[float]]
    psi: dict = field(default_factory=dict)

    @classmethod
    def build(cls, inst: LinkingInstance, psi: Psi) -> "ScoreTables":
        phi = [[c.phi for c in m.candidates] for m in inst.mentions]
        ents = [m.entities for m in inst.mentions]
        tables = {}
        n = len(inst)
        for i in range(n):
            for j in range(i + 1, n):
                t = [[psi(a, b) for b in ents[j]] for a in ents[i]]
                tables[(i, j)] = t
                tables[(j, i)] = [list(col) for col in zip(*t)]
        return cls(phi, tables)

    def values(self, idx: Sequence[int]):
        n = len(idx)
        phis = [self.phi[i][x] for i, x in enumerate(idx)]
        psis = [[0.0] * n for _ in range(n)]
        for a in range(n):
            for b in range(a + 1, n):
                psis[a][b] = psis[b][a] = self.psi[(a, b)][idx[a]][idx[b]]
        return phis, psis


def brute_force_optimum(inst: LinkingInstance, objective, psi: Psi,
                        beta: float) -> tuple[Assignment, float]:
    """Exhaustive optimum; maximises ALL-Link/SINGLE-Link/chain, minimises MINTREE.

    Ties go to the lexicographically smallest vector of candidate positions.
    """
    objective = Objective(objective)
    space = inst.search_space()
    if space > BRUTE_FORCE_LIMIT:
        raise RefusalError(
            f"document {inst.doc_id!r}: search space {space} exceeds {BRUTE_FORCE_LIMIT}")
    tables = ScoreTables.build(inst, psi)
    core = _CORES[objective]
    sign = -1.0 if objective is Objective.MINTREE else 1.0
    best_idx, best_val = None, -math.inf
    for idx in itertools.product(*(range(len(m.candidates)) for m in inst.mentions)):
        val = sign * core(*tables.values(idx), beta)
        if val > best_val:
            best_idx, best_val = idx, val
    choices = [inst.mentions[i].candidates[x].entity for i, x in enumerate(best_idx)]
    value = sign * best_val
    return Assignment(choices, value), value
