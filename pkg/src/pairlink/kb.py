"""Knowledge-base statistics, entity embeddings and pairwise coherence measures.

Three relatedness measures are supported, plus their combination:

* ``wlm``: Milne-Witten link-based relatedness over inlink sets.
* ``njs``: log-scaled Jaccard similarity over inlink sets.
* ``ees``: cosine similarity of entity embeddings.
* ``combined``: mean of ``njs`` and ``ees``.

All measures return values in [0, 1]. WLM and EES are clamped at 0.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import FormatError, MissingEntityError, ValidationError

EntityId = str


@dataclass(frozen=True)
class KbStats:
    total_entities: int
    inlinks: Mapping[EntityId, tuple[int, ...]]
    priors: Mapping[tuple[str, EntityId], float] = field(default_factory=dict)
    _sets: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.total_entities <= 0:
            raise ValidationError(f"total_entities must be positive, got {self.total_entities}")
        for entity, ids in self.inlinks.items():
            for a, b in zip(ids, ids[1:]):
                if b <= a:
                    raise ValidationError(f"inlinks of {entity!r} are not strictly ascending")
        totals: dict[str, float] = {}
        for (surface, entity), p in self.priors.items():
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"prior P({entity}|{surface}) = {p} outside [0, 1]")
            totals[surface] = totals.get(surface, 0.0) + p
        for surface, total in totals.items():
            if total > 1.0 + 1e-9:
                raise ValidationError(f"priors for surface {surface!r} sum to {total} > 1")
        object.__setattr__(self, "_sets", {e: frozenset(ids) for e, ids in self.inlinks.items()})

    def inlink_set(self, entity: EntityId) -> frozenset:
        try:
            return self._sets[entity]
        except KeyError:
            raise MissingEntityError(f"entity {entity!r} not in KB statistics") from None

    def prior(self, surface: str, entity: EntityId) -> float | None:
        return self.priors.get((surface, entity))


@dataclass(frozen=True)
class EmbeddingStore:
    dim: int
    vectors: Mapping[EntityId, np.ndarray]
    _norms: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim <= 0:
            raise ValidationError(f"embedding dim must be positive, got {self.dim}")
        norms = {}
        for entity, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise ValidationError(
                    f"vector for {entity!r} has length {vec.shape[0]}, expected {self.dim}")
            norms[entity] = float(np.linalg.norm(vec))
        if norms and not any(n > 0 for n in norms.values()):
            raise ValidationError("every embedding vector has zero norm")
        object.__setattr__(self, "_norms", norms)

    def __len__(self):
        return len(self.vectors)

    def vector(self, entity: EntityId) -> tuple[np.ndarray, float]:
        try:
            vec = self.vectors[entity]
        except KeyError:
            raise MissingEntityError(f"entity {entity!r} has no embedding") from None
        norm = self._norms[entity]
        if norm == 0.0:
            raise MissingEntityError(f"entity {entity!r} has a zero-norm embedding")
        return vec, norm


# --
# File formats


def load_kb_stats(path) -> KbStats:
    """Read the tab-separated KB statistics file.

    Line 1 is ``NUM_ENTITIES <int>``. Each further line is either
    ``entity<TAB>id,id,...`` (ascending page ids, possibly empty) or
    ``PRIOR<TAB>surface<TAB>entity<TAB>probability``.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file, expected NUM_ENTITIES header")
    header = lines[0].split()
    if len(header) != 2 or header[0] != "NUM_ENTITIES":
        raise FormatError(f"{path}:1: malformed header {lines[0]!r}")
    try:
        total = int(header[1])
    except ValueError:
        raise FormatError(f"{path}:1: NUM_ENTITIES is not an integer") from None

    inlinks: dict[str, tuple[int, ...]] = {}
    priors: dict[tuple[str, str], float] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if parts[0] == "PRIOR":
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: PRIOR line needs 4 tab-separated fields")
            try:
                p = float(parts[3])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: prior {parts[3]!r} is not a number") from None
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"{path}:{lineno}: prior {p} outside [0, 1]")
            priors[(parts[1], parts[2])] = p
            continue
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected entity<TAB>inlinks")
        entity, field_ = parts
        try:
            ids = tuple(int(x) for x in field_.split(",")) if field_.strip() else ()
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-integer inlink id") from None
        for a, b in zip(ids, ids[1:]):
            if b == a:
                raise ValidationError(f"{path}:{lineno}: duplicate inlink id {a} for {entity!r}")
            if b < a:
                raise ValidationError(f"{path}:{lineno}: inlink ids for {entity!r} not ascending")
        if entity in inlinks:
            raise ValidationError(f"{path}:{lineno}: entity {entity!r} listed twice")
        inlinks[entity] = ids
    try:
        return KbStats(total, inlinks, priors)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_kb_stats(kb: KbStats, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"NUM_ENTITIES {kb.total_entities}\n")
        for entity, ids in kb.inlinks.items():
            fh.write(f"{entity}\t{','.join(map(str, ids))}\n")
        for (surface, entity), p in kb.priors.items():
            fh.write(f"PRIOR\t{surface}\t{entity}\t{p!r}\n")


def load_embeddings(path) -> EmbeddingStore:
    """Read the word2vec-style text format: ``<count> <dim>`` then one vector per line."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file, expected '<count> <dim>' header")
    try:
        count, dim = (int(x) for x in lines[0].split())
    except ValueError:
        raise FormatError(f"{path}:1: malformed header {lines[0]!r}") from None
    vectors: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(" ")
        entity, comps = parts[0], parts[1:]
        if len(comps) != dim:
            raise ValidationError(f"{path}:{lineno}: {len(comps)} components, expected {dim}")
        try:
            vectors[entity] = np.array([float(c) for c in comps], dtype=np.float64)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric component") from None
    if len(vectors) != count:
        raise ValidationError(f"{path}: header announces {count} vectors, found {len(vectors)}")
    try:
        return EmbeddingStore(dim, vectors)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_embeddings(emb: EmbeddingStore, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(emb.vectors)} {emb.dim}\n")
        for entity, vec in emb.vectors.items():
            fh.write(entity + " " + " ".join(repr(float(x)) for x in vec) + "\n")


# --
# Measures


def _clamp(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def wlm_from_counts(n1: int, n2: int, n12: int, total: int, log: Callable = math.log) -> float:
    """Unclamped Milne-Witten relatedness from set sizes."""
    big, small = max(n1, n2), min(n1, n2)
    denom = log(total + 1) - log(small + 1)
    if denom <= 0.0:
        # the smaller set already covers the whole KB
        return 1.0 if n12 == big else 0.0
    return 1.0 - (log(big + 1) - log(n12 + 1)) / denom


def wlm(e1: EntityId, e2: EntityId, kb: KbStats, clamp: bool = True) -> float:
    if e2 < e1:
        e1, e2 = e2, e1
    u1, u2 = kb.inlink_set(e1), kb.inlink_set(e2)
    if not u1 or not u2:
        return 0.0
    raw = wlm_from_counts(len(u1), len(u2), len(u1 & u2), kb.total_entities)
    return _clamp(raw) if clamp else raw


def njs(e1: EntityId, e2: EntityId, kb: KbStats) -> float:
    if e2 < e1:
        e1, e2 = e2, e1
    u1, u2 = kb.inlink_set(e1), kb.inlink_set(e2)
    inter = len(u1 & u2)
    if inter == 0:
        return 0.0
    return math.log(inter + 1) / math.log(len(u1) + len(u2) - inter + 1)


def ees(e1: EntityId, e2: EntityId, emb: EmbeddingStore, clamp: bool = True) -> float:
    if e2 < e1:
        e1, e2 = e2, e1
    v1, n1 = emb.vector(e1)
    v2, n2 = emb.vector(e2)
    raw = float(np.dot(v1, v2)) / (n1 * n2)
    return _clamp(raw) if clamp else raw


def combined(e1: EntityId, e2: EntityId, kb: KbStats, emb: EmbeddingStore) -> float:
    return (njs(e1, e2, kb) + ees(e1, e2, emb)) / 2.0


class MeasureKind(str, enum.Enum):
    WLM = "wlm"
    NJS = "njs"
    EES = "ees"
    COMBINED = "combined"


class CoherenceMeasure:
    """Callable pairwise coherence ``psi(e1, e2)`` with a memo table.

    With ``strict=False`` an entity missing from the KB or embedding store
    yields 0 instead of raising. The cache is keyed by the unordered pair and
    guarded by a lock; use :meth:`fork` for a private cache per document run.
    The table is stored as rows keyed by the smaller id, which keeps the
    lookups of one candidate scan close together in memory.
    """

    def __init__(self, kind, kb: KbStats | None = None, emb: EmbeddingStore | None = None,
                 strict: bool = True):
        self.kind = MeasureKind(kind)
        if self.kind in (MeasureKind.WLM, MeasureKind.NJS, MeasureKind.COMBINED) and kb is None:
            raise ValueError(f"{self.kind.value} needs KB statistics")
        if self.kind in (MeasureKind.EES, MeasureKind.COMBINED) and emb is None:
            raise ValueError(f"{self.kind.value} needs embeddings")
        self.kb = kb
        self.emb = emb
        self.strict = strict
        self._rows: dict[str, dict[str, float]] = {}
        self._lock = threading.Lock()

    def fork(self) -> "CoherenceMeasure":
        return CoherenceMeasure(self.kind, self.kb, self.emb, self.strict)

    def clear(self) -> None:
        with self._lock:
            self._rows.clear()

    def __len__(self) -> int:
        return sum(len(r) for r in self._rows.values())

    def cached(self, e1: EntityId, e2: EntityId) -> float | None:
        if e2 < e1:
            e1, e2 = e2, e1
        row = self._rows.get(e1)
        return None if row is None else row.get(e2)

    def compute(self, e1: EntityId, e2: EntityId) -> float:
        if self.kind is MeasureKind.WLM:
            return wlm(e1, e2, self.kb)
        if self.kind is MeasureKind.NJS:
            return njs(e1, e2, self.kb)
        if self.kind is MeasureKind.EES:
            return ees(e1, e2, self.emb)
        return combined(e1, e2, self.kb, self.emb)

    def __call__(self, e1: EntityId, e2: EntityId) -> float:
        if e2 < e1:
            e1, e2 = e2, e1
        row = self._rows.get(e1)
        if row is not None:
            value = row.get(e2)
            if value is not None:
                return value
        try:
            value = self.compute(e1, e2)
        except MissingEntityError:
            if self.strict:
                raise
            value = 0.0
        with self._lock:
            self._rows.setdefault(e1, {})[e2] = value
        return value

    def __repr__(self):
        return f"CoherenceMeasure({self.kind.value!r}, strict={self.strict})"


class TableCoherence:
    """Coherence read from an explicit table of unordered pairs; absent pairs score ``default``."""

    def __init__(self, table: Mapping[tuple[str, str], float], default: float = 0.0):
        self.table = {}
        for (a, b), v in table.items():
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"coherence {v} for ({a}, {b}) outside [0, 1]")
            self.table[(a, b) if a <= b else (b, a)] = float(v)
        self.default = default

    def __call__(self, e1: EntityId, e2: EntityId) -> float:
        return self.table.get((e1, e2) if e1 <= e2 else (e2, e1), self.default)

    def fork(self) -> "TableCoherence":
        return self
