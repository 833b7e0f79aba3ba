"""Micro-averaged scoring, beta cross-validation, NIL robustness and timing."""

from __future__ import annotations

import gc
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import doc_hash
from .errors import RefusalError, ValidationError
from .model import Assignment, LinkingInstance, Mention, Psi, SolverConfig
from .solvers import run_solver

DEFAULT_BETA_GRID = tuple(round(0.05 * i, 2) for i in range(21))
N_FOLDS = 5
MIN_ROBUSTNESS_MENTIONS = 4


@dataclass
class EvalResult:
    precision: float
    recall: float
    f1: float
    attempted: int
    gold_count: int
    correct: int
    skipped: int = 0

    def as_dict(self) -> dict:
        return dict(precision=self.precision, recall=self.recall, f1=self.f1,
                    attempted=self.attempted, gold_count=self.gold_count,
                    correct=self.correct, skipped=self.skipped)


def prf(attempted: int, gold_count: int, correct: int, skipped: int = 0) -> EvalResult:
    p = correct / attempted if attempted else 0.0
    r = correct / gold_count if gold_count else 0.0
    # 2PR/(P+R) written over the counts, which rounds once instead of four times
    f1 = 2 * correct / (attempted + gold_count) if p + r > 0 else 0.0
    return EvalResult(p, r, f1, attempted, gold_count, correct, skipped)


def _choices(pred) -> list:
    return pred.choices if isinstance(pred, Assignment) else list(pred)


def _gold_map(gold) -> dict:
    if isinstance(gold, Mapping):
        return {int(k): v for k, v in gold.items() if v is not None}
    return {i: g for i, g in enumerate(gold) if g is not None}


def micro_prf(predictions: Mapping[str, object], gold: Mapping[str, object]) -> EvalResult:
    """Precision, recall and F1 counted over mentions pooled across documents.

    ``predictions`` maps doc ids to assignments (``None`` marks an abstention);
    ``gold`` maps doc ids to a list or ``{mention index: entity}`` dict.
    """
    unknown = [d for d in predictions if d not in gold]
    if unknown:
        raise ValidationError(f"predictions for unknown documents: {sorted(unknown)[:5]}")
    attempted = gold_count = correct = 0
    for doc_id, g in gold.items():
        gmap = _gold_map(g)
        gold_count += len(gmap)
        pred = predictions.get(doc_id)
        if pred is None:
            continue
        for i, e in enumerate(_choices(pred)):
            if e is None:
                continue
            attempted += 1
            if gmap.get(i) == e:
                correct += 1
    return prf(attempted, gold_count, correct)


def gold_of(corpus: Iterable[LinkingInstance]) -> dict[str, list]:
    return {inst.doc_id: inst.gold for inst in corpus}


def _fork(psi: Psi) -> Psi:
    fork = getattr(psi, "fork", None)
    return fork() if fork else psi


def map_documents(fn: Callable, docs: Sequence, threads: int = 1) -> list:
    """Apply ``fn`` to every document, returning results in input order."""
    if threads <= 1:
        return [fn(d) for d in docs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, docs))


def link_corpus(corpus: Sequence[LinkingInstance], solver: str, psi: Psi,
                config: SolverConfig, threads: int = 1) -> dict[str, Assignment]:
    def one(inst):
        return run_solver(solver, inst, _fork(psi), config).assignment

    results = map_documents(one, corpus, threads)
    return {inst.doc_id: a for inst, a in zip(corpus, results)}


# --
# Cross-validation of beta


def fold_of(corpus: Sequence[LinkingInstance], n_folds: int = N_FOLDS) -> dict[str, int]:
    """Deal documents round-robin into folds in order of their stable id hash."""
    ranked = sorted(corpus, key=lambda inst: (doc_hash(inst.doc_id), inst.doc_id))
    return {inst.doc_id: k % n_folds for k, inst in enumerate(ranked)}


@dataclass
class CrossValidation:
    betas: list[float]
    result: EvalResult
    folds: dict[str, int]
    predictions: dict[str, Assignment]


def cross_validate_beta(corpus: Sequence[LinkingInstance], solver: str, psi: Psi,
                        grid: Sequence[float] = DEFAULT_BETA_GRID,
                        config: Optional[SolverConfig] = None,
                        threads: int = 1) -> CrossValidation:
    """Pick beta on four folds by micro-F1, apply it to the fifth, pool the held-out predictions.

    Among equally good betas the smallest wins.
    """
    if len(corpus) < N_FOLDS:
        raise RefusalError(f"cross-validation needs at least {N_FOLDS} documents, got {len(corpus)}")
    if not grid:
        raise RefusalError("empty beta grid")
    grid = sorted(set(float(b) for b in grid))
    config = config or SolverConfig.for_solver(solver)
    folds = fold_of(corpus)
    gold = gold_of(corpus)
    preds = {b: link_corpus(corpus, solver, psi, config.with_beta(b), threads) for b in grid}

    betas, held_out = [], {}
    for k in range(N_FOLDS):
        train = {d: g for d, g in gold.items() if folds[d] != k}
        best_beta, best_f1 = None, -1.0
        for b in grid:
            f1 = micro_prf({d: preds[b][d] for d in train}, train).f1
            if f1 > best_f1:
                best_beta, best_f1 = b, f1
        betas.append(best_beta)
        for d in gold:
            if folds[d] == k:
                held_out[d] = preds[best_beta][d]
    return CrossValidation(betas, micro_prf(held_out, gold), folds, held_out)


# --
# NIL robustness


def nil_mentions(inst: LinkingInstance, fraction: float, seed: int) -> list[int]:
    """Mentions whose gold entity gets removed, drawn uniformly without replacement."""
    n = len(inst)
    count = math.ceil(fraction * n - 1e-9)
    rng = np.random.default_rng(seed ^ doc_hash(inst.doc_id))
    return sorted(int(x) for x in rng.choice(n, size=count, replace=False))


def nil_robustness(corpus: Sequence[LinkingInstance], solver: str, psi: Psi,
                   config: Optional[SolverConfig], fraction: float,
                   threads: int = 1) -> EvalResult:
    """Remove gold from a sampled share of mentions and score the others.

    Mentions left without candidates are dropped from the solver input;
    ``skipped`` on the result counts them.
    """
    config = config or SolverConfig.for_solver(solver)
    if not 0.0 <= fraction <= 1.0:
        raise ValidationError(f"fraction {fraction} outside [0, 1]")
    for inst in corpus:
        if len(inst) < MIN_ROBUSTNESS_MENTIONS:
            raise RefusalError(
                f"document {inst.doc_id!r} has {len(inst)} mentions; "
                f"robustness runs need at least {MIN_ROBUSTNESS_MENTIONS}")
        if any(g is None for g in inst.gold):
            raise RefusalError(f"document {inst.doc_id!r} lacks gold on some mention")

    def one(inst):
        nil = set(nil_mentions(inst, fraction, config.seed))
        kept: list[Mention] = []
        origin = []
        skipped = 0
        for m in inst.mentions:
            cands = m.candidates
            if m.index in nil:
                cands = tuple(c for c in cands if c.entity != m.gold)
                if not cands:
                    skipped += 1
                    continue
            kept.append(Mention(len(kept), m.surface, cands, m.gold))
            origin.append(m.index)
        choices = [None] * len(inst)
        if kept:
            sub = LinkingInstance(inst.doc_id, tuple(kept))
            out = run_solver(solver, sub, _fork(psi), config).assignment
            for pos, e in zip(origin, out.choices):
                choices[pos] = e
        linkable = {m.index: m.gold for m in inst.mentions if m.index not in nil}
        pred = {i: choices[i] for i in linkable}
        return linkable, pred, skipped

    attempted = gold_count = correct = skipped = 0
    for linkable, pred, sk in map_documents(one, corpus, threads):
        gold_count += len(linkable)
        skipped += sk
        for i, g in linkable.items():
            if pred[i] is not None:
                attempted += 1
                correct += pred[i] == g
    return prf(attempted, gold_count, correct, skipped)


# --
# Timing


@dataclass
class BenchRecord:
    solver: str
    dataset: str
    ms_per_doc: float
    docs: int
    cache: str = "warm"

    def as_dict(self) -> dict:
        return dict(solver=self.solver, dataset=self.dataset, ms_per_doc=self.ms_per_doc,
                    docs=self.docs, cache=self.cache)


def prewarm(corpus: Iterable[LinkingInstance], psi: Psi) -> None:
    """Evaluate psi on every cross-mention candidate pair so later lookups hit the cache."""
    for inst in corpus:
        ents = [m.entities for m in inst.mentions]
        for i in range(len(ents)):
            for j in range(i + 1, len(ents)):
                for a in ents[i]:
                    for b in ents[j]:
                        psi(a, b)


def bench(corpus: Sequence[LinkingInstance], solvers: Sequence[str], psi: Psi,
          config: Optional[SolverConfig] = None, warmups: int = 1, repeats: int = 3,
          dataset: str = "corpus", warm_cache: bool = True) -> list[BenchRecord]:
    """Mean wall-clock milliseconds per document for each solver, run serially.

    Each document gets a private cache. With ``warm_cache`` every coherence
    value of the document is computed before timing starts; otherwise the
    cache starts empty, so coherence computation is included in the first
    timed run. The garbage collector is paused around timed calls, as
    ``timeit`` does.
    """
    if not corpus:
        raise RefusalError("bench needs a nonempty corpus")
    records = []
    for name in solvers:
        cfg = config or SolverConfig.for_solver(name)
        total = 0.0
        for inst in corpus:
            local = _fork(psi)
            if warm_cache:
                prewarm([inst], local)
                for _ in range(warmups):
                    run_solver(name, inst, local, cfg)
            total += _timed_runs(name, inst, local, cfg, repeats)
        ms = max(total * 1000.0 / (repeats * len(corpus)), 1e-9)
        records.append(BenchRecord(name, dataset, ms, len(corpus),
                                   "warm" if warm_cache else "cold"))
    return records


def _timed_runs(name, inst, psi, cfg, repeats) -> float:
    gc.collect()
    enabled = gc.isenabled()
    gc.disable()
    try:
        total = 0.0
        for _ in range(repeats):
            t0 = time.perf_counter()
            run_solver(name, inst, psi, cfg)
            total += time.perf_counter() - t0
        return total
    finally:
        if enabled:
            gc.enable()


def format_table(values: Mapping[tuple[str, str], float], row_label: str = "solver",
                 fmt: str = "{:.3f}") -> str:
    """Aligned plain-text grid with one row per solver and one column per dataset."""
    rows = list(dict.fromkeys(r for r, _ in values))
    cols = list(dict.fromkeys(c for _, c in values))
    cells = [[row_label] + cols]
    for r in rows:
        cells.append([r] + [fmt.format(values[(r, c)]) if (r, c) in values else "-"
                            for c in cols])
    widths = [max(len(row[k]) for row in cells) for k in range(len(cols) + 1)]
    lines = []
    for n, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(widths[0]) if k == 0 else cell.rjust(widths[k])
                               for k, cell in enumerate(row)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
