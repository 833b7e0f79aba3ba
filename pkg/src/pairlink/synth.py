"""Synthetic corpora with a known coherence shape among the gold entities.

Every strong gold-gold edge of the requested shape gets its own block of
shared inlink pages (and its own embedding axis). Gold entities are padded
with private pages/axes up to the maximum degree, so all strong edges score
the same under WLM, NJS and EES while every other gold pair scores lower.
Wrong candidates draw inlinks from a separate noise pool and live in their
own embedding axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import write_corpus
from .errors import ContractViolation
from .kb import EmbeddingStore, KbStats, write_embeddings, write_kb_stats
from .model import Candidate, LinkingInstance, Mention

SHAPES = ("forest", "tree", "chain", "dense")

GOLD_PHI = 0.75
WRONG_PHI_MAX = 0.55


def shape_edges(shape: str, n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Strong-edge list over gold indices ``0..n-1`` for one coherence shape."""
    if shape not in SHAPES:
        raise ContractViolation(f"unknown shape {shape!r}; choose from {', '.join(SHAPES)}")
    if n < 2:
        return []
    if shape == "dense":
        return [(i, j) for i in range(n) for j in range(i + 1, n)]
    if shape == "chain":
        return [(i, i + 1) for i in range(n - 1)]
    if shape == "forest":
        perm = [int(x) for x in rng.permutation(n)]
        edges = [(perm[i], perm[i + 1]) for i in range(0, n - 1, 2)]
        if n % 2:
            # odd count: the last vertex hangs off the final pair
            edges.append((perm[-2], perm[-1]))
        return [tuple(sorted(e)) for e in edges]
    # random labelled tree from a Pruefer sequence
    if n == 2:
        return [(0, 1)]
    seq = [int(x) for x in rng.integers(0, n, size=n - 2)]
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    edges = []
    for v in seq:
        leaf = min(u for u in range(n) if degree[u] == 1)
        edges.append(tuple(sorted((leaf, v))))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = [x for x in range(n) if degree[x] == 1]
    edges.append((u, w))
    return sorted(edges)


@dataclass
class SynthCorpus:
    docs: list[LinkingInstance]
    kb: KbStats
    embeddings: EmbeddingStore
    gold_edges: dict[str, list[tuple[int, int]]] = field(default_factory=dict)

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"corpus": out / "corpus.jsonl", "kb": out / "kb.tsv",
                 "embeddings": out / "embeddings.txt"}
        write_corpus(self.docs, paths["corpus"])
        write_kb_stats(self.kb, paths["kb"])
        write_embeddings(self.embeddings, paths["embeddings"])
        return paths


def synth_corpus(n_docs: int, n_mentions, n_candidates: int, shape: str, noise: float = 0.1,
                 seed: int = 2018, block: int = 4, noise_dims: int = 32,
                 prefix: str = "doc") -> SynthCorpus:
    """Generate a deterministic corpus plus matching KB statistics and embeddings.

    ``n_mentions`` is a count or an inclusive ``(lo, hi)`` range. ``noise`` is
    the standard deviation of Gaussian jitter added to every phi.
    """
    if shape not in SHAPES:
        raise ContractViolation(f"unknown shape {shape!r}; choose from {', '.join(SHAPES)}")
    if n_candidates < 1 or n_docs < 1:
        raise ContractViolation("need at least one document and one candidate per mention")
    lo, hi = (n_mentions, n_mentions) if isinstance(n_mentions, int) else n_mentions
    if lo < 1 or hi < lo:
        raise ContractViolation(f"bad mention count {n_mentions!r}")

    inlinks: dict[str, tuple[int, ...]] = {}
    struct_vecs: dict[str, list[int]] = {}  # gold entity -> structural axes set to 1
    noise_vecs: dict[str, np.ndarray] = {}
    docs, gold_edges = [], {}
    next_page = 0
    struct_dim = 0

    for d in range(n_docs):
        rng = np.random.default_rng([seed, d])
        doc_id = f"{prefix}{d:04d}"
        n = int(rng.integers(lo, hi + 1))
        edges = shape_edges(shape, n, rng)
        gold_edges[doc_id] = edges
        deg = [0] * n
        for a, b in edges:
            deg[a] += 1
            deg[b] += 1
        top = max(max(deg), 1)

        pages = [[] for _ in range(n)]
        axes = [[] for _ in range(n)]
        axis = 0
        for a, b in edges:
            blk = list(range(next_page, next_page + block))
            next_page += block
            pages[a] += blk
            pages[b] += blk
            axes[a].append(axis)
            axes[b].append(axis)
            axis += 1
        for v in range(n):
            pad = (top - deg[v]) * block
            pages[v] += range(next_page, next_page + pad)
            next_page += pad
            for _ in range(top - deg[v]):
                axes[v].append(axis)
                axis += 1
        struct_dim = max(struct_dim, axis)

        pool_size = 50 * top * block
        pool_start = next_page
        next_page += pool_size

        mentions = []
        for i in range(n):
            gold = f"{doc_id}/g{i}"
            inlinks[gold] = tuple(sorted(pages[i]))
            struct_vecs[gold] = axes[i]
            cands = [(gold, GOLD_PHI + noise * rng.standard_normal())]
            for c in range(n_candidates - 1):
                wrong = f"{doc_id}/m{i}w{c}"
                size = int(rng.integers(block, top * block + 1))
                picks = rng.choice(pool_size, size=size, replace=False) + pool_start
                inlinks[wrong] = tuple(sorted(int(p) for p in picks))
                noise_vecs[wrong] = rng.standard_normal(noise_dims)
                cands.append((wrong, rng.uniform(0.0, WRONG_PHI_MAX)
                              + noise * rng.standard_normal()))
            order = rng.permutation(len(cands))
            phis = [min(1.0, max(0.0, float(cands[x][1]))) for x in order]
            weights = [p + 0.3 * float(rng.random()) for p in phis]
            total = sum(weights) / 0.95
            candidates = tuple(Candidate(cands[x][0], p, w / total)
                               for x, p, w in zip(order, phis, weights))
            mentions.append(Mention(i, f"{doc_id}:m{i}", candidates, gold))
        docs.append(LinkingInstance(doc_id, tuple(mentions)))

    dim = struct_dim + noise_dims
    vectors = {}
    for entity in inlinks:
        v = np.zeros(dim)
        if entity in struct_vecs:
            v[struct_vecs[entity]] = 1.0
        else:
            v[struct_dim:] = noise_vecs[entity]
        vectors[entity] = v
    kb = KbStats(max(next_page, 1), inlinks)
    return SynthCorpus(docs, kb, EmbeddingStore(dim, vectors), gold_edges)
