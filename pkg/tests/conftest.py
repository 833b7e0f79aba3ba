import random

import pytest

from pairlink.kb import TableCoherence
from pairlink.model import Candidate, LinkingInstance, Mention


def make_instance(phis, doc_id="doc", gold=None, names=None):
    """Instance from a list of per-mention phi lists; entity ``m{i}c{c}`` unless named."""
    mentions = []
    for i, row in enumerate(phis):
        ents = names[i] if names else [f"m{i}c{c}" for c in range(len(row))]
        cands = tuple(Candidate(e, p) for e, p in zip(ents, row))
        g = gold[i] if gold else None
        mentions.append(Mention(i, f"s{i}", cands, g))
    return LinkingInstance(doc_id, tuple(mentions))


def random_case(rng: random.Random, n_max=5, k_max=3, n_min=1, k_min=1, round_to=None):
    """Random instance plus a random symmetric table coherence over its entities."""
    n = rng.randint(n_min, n_max)
    phis = []
    for _ in range(n):
        k = rng.randint(k_min, k_max)
        row = [rng.random() for _ in range(k)]
        if round_to:
            row = [round(p, round_to) for p in row]
        phis.append(row)
    inst = make_instance(phis, doc_id=f"r{rng.random():.6f}")
    ents = [c.entity for m in inst.mentions for c in m.candidates]
    table = {}
    for a in range(len(ents)):
        for b in range(a + 1, len(ents)):
            v = rng.random()
            table[(ents[a], ents[b])] = round(v, round_to) if round_to else v
    return inst, TableCoherence(table)


@pytest.fixture
def rng():
    return random.Random(1234)


# -- acceptance report

ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def check(criterion: int, ok: bool, detail: str) -> None:
    """Record one acceptance observation, then assert it."""
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))
    assert ok, f"criterion {criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        rows = ACCEPTANCE[crit]
        failed = [d for ok, d in rows if not ok]
        shown = "; ".join(failed) if failed else "; ".join(d for _, d in rows)
        terminalreporter.write_line(f"{'PASS' if not failed else 'FAIL'} criterion {crit}: {shown}")
