"""JSON Lines corpus format.

One document per line::

    {"doc_id": "d1", "mentions": [
        {"surface": "Tiger", "gold": "Tiger_Woods",
         "candidates": [{"entity": "Tiger_Woods", "phi": 0.8, "prior": 0.6}, ...]}]}
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Optional

from .errors import FormatError, ValidationError
from .kb import KbStats
from .model import Candidate, LinkingInstance, Mention, minmax_scores


def doc_hash(doc_id: str) -> int:
    """Stable 64-bit hash of a document id."""
    return int.from_bytes(hashlib.blake2b(doc_id.encode("utf-8"), digest_size=8).digest(), "big")


def instance_from_dict(obj: dict, rescale: bool = False,
                       kb: Optional[KbStats] = None) -> LinkingInstance:
    try:
        doc_id = str(obj["doc_id"])
        mentions = []
        for i, m in enumerate(obj["mentions"]):
            raw = [float(c["phi"]) for c in m["candidates"]]
            if rescale and raw:
                raw = minmax_scores(raw)
            cands = []
            for c, phi in zip(m["candidates"], raw):
                prior = c.get("prior")
                if prior is None and kb is not None:
                    prior = kb.prior(m.get("surface", ""), str(c["entity"]))
                cands.append(Candidate(str(c["entity"]), phi,
                                       None if prior is None else float(prior)))
            mentions.append(Mention(i, str(m.get("surface", "")), tuple(cands), m.get("gold")))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise FormatError(f"malformed document: {exc!r}") from None
    return LinkingInstance(doc_id, tuple(mentions))


def instance_to_dict(inst: LinkingInstance) -> dict:
    return {
        "doc_id": inst.doc_id,
        "mentions": [
            {
                "surface": m.surface,
                "gold": m.gold,
                "candidates": [{"entity": c.entity, "phi": c.phi, "prior": c.prior}
                               for c in m.candidates],
            }
            for m in inst.mentions
        ],
    }


def read_corpus(path, rescale: bool = False, kb: Optional[KbStats] = None) -> list[LinkingInstance]:
    docs = []
    seen = set()
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            try:
                inst = instance_from_dict(obj, rescale, kb)
            except (FormatError, ValidationError) as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from None
            if inst.doc_id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate doc_id {inst.doc_id!r}")
            seen.add(inst.doc_id)
            docs.append(inst)
    return docs


def write_corpus(docs: Iterable[LinkingInstance], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for inst in docs:
            fh.write(json.dumps(instance_to_dict(inst), ensure_ascii=False) + "\n")
