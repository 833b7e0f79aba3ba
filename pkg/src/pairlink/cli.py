"""Command-line entry point.

Every command writes JSON Lines to stdout (or ``--output``); aligned tables
go to ``--table`` and figures to ``--figure``. Options may also come from a
flat ``key = value`` file given by ``--config`` or ``$PAIRLINK_CONFIG``;
command-line flags win over the file, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import json
import math
import os
import sys
from pathlib import Path
from statistics import mean
from typing import Mapping, Optional, Sequence

from . import __version__
from .analysis import (CoherenceGraph, MIN_DENSENESS_ENTITIES, correlation_study, denseness,
                       edge_cover_threshold, theoretical_denseness)
from .corpus import read_corpus
from .errors import PairlinkError
from .evaluation import (DEFAULT_BETA_GRID, _fork, bench, cross_validate_beta, format_table,
                         gold_of, link_corpus, map_documents, micro_prf, nil_robustness)
from .kb import CoherenceMeasure, MeasureKind, load_embeddings, load_kb_stats
from .model import Objective, SolverConfig, brute_force_optimum, objective_score
from .solvers import SOLVERS
from .synth import SHAPES, synth_corpus

DEFAULT_SEED = 2018
COMMANDS = ("link", "eval", "bench", "denseness", "correlate", "oracle", "robustness", "synth")

# name -> (type, default)
OPTIONS = {
    "corpus": (str, None),
    "kb": (str, None),
    "embeddings": (str, None),
    "measure": (str, "njs"),
    "strict": (bool, False),
    "rescale": (bool, False),
    "solver": (str, "pair-linking"),
    "solvers": (str, "pair-linking,lbp-al"),
    "beta": (float, 1.0 / 3.0),
    "seed": (int, DEFAULT_SEED),
    "threads": (int, 1),
    "output": (str, None),
    "table": (str, None),
    "figure": (str, None),
    "dataset": (str, None),
    "cv": (bool, False),
    "grid": (str, None),
    "warmups": (int, 1),
    "repeats": (int, 3),
    "objective": (str, "mintree"),
    "fractions": (str, "0,0.2,0.4,0.6"),
    "out_dir": (str, None),
    "docs": (int, 20),
    "mentions": (str, "6-15"),
    "candidates": (int, 8),
    "shape": (str, "tree"),
    "noise": (float, 0.1),
}

READ_COMMANDS = {"link", "eval", "bench", "denseness", "correlate", "oracle", "robustness"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value file")
    common.add_argument("--corpus", help="corpus JSONL")
    common.add_argument("--kb", help="KB statistics TSV")
    common.add_argument("--embeddings", help="entity embeddings text file")
    common.add_argument("--measure", choices=[k.value for k in MeasureKind])
    common.add_argument("--strict", action="store_const", const=True,
                        help="fail on entities missing from the KB instead of scoring 0")
    common.add_argument("--rescale", action="store_const", const=True,
                        help="min-max rescale phi within each candidate set")
    common.add_argument("--beta", type=float)
    common.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    common.add_argument("--threads", type=int, help="documents processed in parallel")
    common.add_argument("--output", help="write JSONL here instead of stdout")
    common.add_argument("--table", help="write an aligned text table here")
    common.add_argument("--figure", help="render a figure to this path (.png, .pdf, .svg)")
    common.add_argument("--dataset", help="dataset label in tables (default: corpus file stem)")

    parser = _Parser(prog="pairlink", description="Collective entity disambiguation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    solver_names = list(SOLVERS)
    p = sub.add_parser("link", parents=[common], help="link every document with one solver")
    p.add_argument("--solver", choices=solver_names)

    p = sub.add_parser("eval", parents=[common], help="micro P/R/F1 per solver")
    p.add_argument("--solvers", help="comma-separated solver names")
    p.add_argument("--cv", action="store_const", const=True, help="5-fold cross-validate beta")
    p.add_argument("--grid", help="comma-separated beta grid for --cv")

    p = sub.add_parser("bench", parents=[common], help="wall-clock ms per document")
    p.add_argument("--solvers")
    p.add_argument("--warmups", type=int)
    p.add_argument("--repeats", type=int)

    sub.add_parser("denseness", parents=[common], help="coherence denseness of gold entities")
    sub.add_parser("correlate", parents=[common],
                   help="rank correlation of objectives with linking quality")

    p = sub.add_parser("oracle", parents=[common], help="exhaustive optimum of one objective")
    p.add_argument("--objective", choices=[o.value for o in Objective])

    p = sub.add_parser("robustness", parents=[common], help="F1 on linkable mentions under NIL")
    p.add_argument("--solvers")
    p.add_argument("--fractions", help="comma-separated NIL fractions")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic corpus, KB and embeddings")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--docs", type=int)
    p.add_argument("--mentions", help="count or lo-hi range")
    p.add_argument("--candidates", type=int)
    p.add_argument("--shape", choices=SHAPES)
    p.add_argument("--noise", type=float)
    return parser


def load_config_file(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"config file {path}: {exc}") from None
    values = {}
    for key, raw in cp["run"].items():
        name = key.strip().replace("-", "_")
        if name not in OPTIONS:
            raise UsageError(f"config file {path}: unknown key {key!r}")
        kind = OPTIONS[name][0]
        try:
            values[name] = _parse_bool(raw) if kind is bool else kind(raw.strip())
        except ValueError as exc:
            raise UsageError(f"config file {path}: {key}: {exc}") from None
    return values


def resolve(args: argparse.Namespace, env: Mapping[str, str]) -> dict:
    """Merge defaults, the config file and command-line flags, in that order."""
    cfg = {name: default for name, (_, default) in OPTIONS.items()}
    path = args.config or env.get("PAIRLINK_CONFIG")
    if path:
        cfg.update(load_config_file(path))
    for name in OPTIONS:
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = value
    cfg["command"] = args.command
    cfg["config"] = path
    if cfg["measure"] not in [k.value for k in MeasureKind]:
        raise UsageError(f"unknown measure {cfg['measure']!r}")
    if cfg["shape"] not in SHAPES:
        raise UsageError(f"unknown shape {cfg['shape']!r}; choose from {', '.join(SHAPES)}")
    if cfg["threads"] < 1:
        raise UsageError("--threads must be at least 1")
    return cfg


def _split(text: str, kind=str) -> list:
    try:
        return [kind(x.strip()) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad list {text!r}: {exc}") from None


def _solver_list(cfg) -> list[str]:
    names = _split(cfg["solvers"])
    unknown = [n for n in names if n not in SOLVERS]
    if unknown or not names:
        raise UsageError(f"unknown solver(s) {unknown}; choose from {', '.join(SOLVERS)}")
    return names


def _mention_range(text: str):
    try:
        if "-" in text:
            lo, hi = text.split("-", 1)
            return int(lo), int(hi)
        return int(text)
    except ValueError:
        raise UsageError(f"bad mention count {text!r}; use N or LO-HI") from None


class Context:
    """Loaded inputs shared by the read commands."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        if not cfg["corpus"]:
            raise UsageError(f"{cfg['command']} needs --corpus")
        kind = MeasureKind(cfg["measure"])
        needs_kb = kind in (MeasureKind.WLM, MeasureKind.NJS, MeasureKind.COMBINED)
        needs_emb = kind in (MeasureKind.EES, MeasureKind.COMBINED)
        if needs_kb and not cfg["kb"]:
            raise UsageError(f"measure {kind.value} needs --kb")
        if needs_emb and not cfg["embeddings"]:
            raise UsageError(f"measure {kind.value} needs --embeddings")
        self.kb = load_kb_stats(cfg["kb"]) if cfg["kb"] else None
        self.emb = load_embeddings(cfg["embeddings"]) if cfg["embeddings"] else None
        self.psi = CoherenceMeasure(kind, self.kb, self.emb, strict=cfg["strict"])
        self.corpus = read_corpus(cfg["corpus"], rescale=cfg["rescale"], kb=self.kb)
        self.dataset = cfg["dataset"] or Path(cfg["corpus"]).stem

    def config(self, solver: str) -> SolverConfig:
        return SolverConfig.for_solver(solver, beta=self.cfg["beta"], seed=self.cfg["seed"])


def _emit(out, obj) -> None:
    out.write(json.dumps(obj, ensure_ascii=False, sort_keys=False) + "\n")


def _write_table(cfg, text: str) -> None:
    if cfg["table"]:
        Path(cfg["table"]).write_text(text, encoding="utf-8")


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# --
# Commands


def cmd_link(ctx: Context, out) -> None:
    solver = ctx.cfg["solver"]
    config = ctx.config(solver)
    preds = link_corpus(ctx.corpus, solver, ctx.psi, config, ctx.cfg["threads"])
    for inst in ctx.corpus:
        a = preds[inst.doc_id]
        _emit(out, {"doc_id": inst.doc_id, "solver": solver, "beta": config.beta,
                    "links": [{"mention": m.index, "surface": m.surface, "entity": e}
                              for m, e in zip(inst.mentions, a.choices)]})


def cmd_eval(ctx: Context, out) -> None:
    cfg = ctx.cfg
    gold = gold_of(ctx.corpus)
    grid = _split(cfg["grid"], float) if cfg["grid"] else list(DEFAULT_BETA_GRID)
    table = {}
    for solver in _solver_list(cfg):
        config = ctx.config(solver)
        if cfg["cv"]:
            cv = cross_validate_beta(ctx.corpus, solver, ctx.psi, grid, config, cfg["threads"])
            result, beta = cv.result, cv.betas
        else:
            preds = link_corpus(ctx.corpus, solver, ctx.psi, config, cfg["threads"])
            result, beta = micro_prf(preds, gold), config.beta
        table[(solver, ctx.dataset)] = result.f1
        _emit(out, {"solver": solver, "dataset": ctx.dataset, "beta": beta, **result.as_dict()})
    _write_table(cfg, format_table(table))


def cmd_bench(ctx: Context, out) -> None:
    cfg = ctx.cfg
    solvers = _solver_list(cfg)
    configs = {s: ctx.config(s) for s in solvers}
    records = []
    for warm in (False, True):
        for s in solvers:
            records += bench(ctx.corpus, [s], ctx.psi, configs[s], cfg["warmups"],
                             cfg["repeats"], ctx.dataset, warm_cache=warm)
    for r in records:
        _emit(out, r.as_dict())
    _write_table(cfg, format_table({(r.solver, f"{r.dataset}/{r.cache}"): r.ms_per_doc
                                    for r in records}, fmt="{:.2f}"))
    if cfg["figure"]:
        from .plotting import bench_figure
        bench_figure(records, cfg["figure"])


def _gold_entities(inst) -> list[str]:
    return list(dict.fromkeys(g for g in inst.gold if g is not None))


def cmd_denseness(ctx: Context, out) -> None:
    docs = [d for d in ctx.corpus if len(d) >= MIN_DENSENESS_ENTITIES]
    if not docs:
        _warn(f"all {len(ctx.corpus)} documents have fewer than "
              f"{MIN_DENSENESS_ENTITIES} mentions; nothing to measure")

    def one(inst):
        ents = _gold_entities(inst)
        if len(ents) < MIN_DENSENESS_ENTITIES:
            return None
        psi = _fork(ctx.psi)
        g = CoherenceGraph.complete(ents, psi)
        return {"doc_id": inst.doc_id, "mentions": len(inst), "entities": len(ents),
                "theta": edge_cover_threshold(g), "denseness": denseness(ents, psi)}

    rows = []
    for inst, row in zip(docs, map_documents(one, docs, ctx.cfg["threads"])):
        if row is None:
            _warn(f"document {inst.doc_id!r} has fewer than {MIN_DENSENESS_ENTITIES} "
                  "distinct gold entities; skipped")
            continue
        rows.append(row)
        _emit(out, row)
    if rows:
        n = mean(r["entities"] for r in rows)
        ref = theoretical_denseness(n)
        _emit(out, {"aggregate": True, "dataset": ctx.dataset, "docs": len(rows),
                    "mean_entities": n, "mean_denseness": mean(r["denseness"] for r in rows),
                    "theoretical_forest": ref["forest"], "theoretical_tree": ref["tree"],
                    "theoretical_dense": ref["dense"]})
    if ctx.cfg["figure"]:
        from .plotting import denseness_figure
        denseness_figure(rows, ctx.cfg["figure"])


def cmd_correlate(ctx: Context, out) -> None:
    beta = ctx.cfg["beta"]
    reports = map_documents(lambda d: correlation_study(d, _fork(ctx.psi), beta),
                            ctx.corpus, ctx.cfg["threads"])
    rhos: dict[str, list[float]] = {}
    for inst, rep in zip(ctx.corpus, reports):
        _emit(out, {"doc_id": inst.doc_id, "rho": rep.rho, "scores": rep.objective_scores})
        for k, v in rep.rho.items():
            if v is not None:
                rhos.setdefault(k, []).append(v)
    _emit(out, {"aggregate": True, "dataset": ctx.dataset, "docs": len(reports),
                "mean_rho": {k: mean(v) for k, v in rhos.items()},
                "defined": {k: len(v) for k, v in rhos.items()}})
    _write_table(ctx.cfg, format_table({(k, ctx.dataset): mean(v) for k, v in rhos.items()},
                                       row_label="objective"))
    if ctx.cfg["figure"] and reports:
        from .plotting import correlation_figure
        correlation_figure(reports[0].objective_scores, ctx.cfg["figure"],
                           title=ctx.corpus[0].doc_id)


def cmd_oracle(ctx: Context, out) -> None:
    objective = Objective(ctx.cfg["objective"])
    beta = ctx.cfg["beta"]

    def one(inst):
        psi = _fork(ctx.psi)
        a, value = brute_force_optimum(inst, objective, psi, beta)
        return a, value

    for inst, (a, value) in zip(ctx.corpus,
                                map_documents(one, ctx.corpus, ctx.cfg["threads"])):
        row = {"doc_id": inst.doc_id, "objective": objective.value, "value": value,
               "entities": a.choices}
        gold = inst.gold
        if all(g is not None for g in gold):
            row["gold_value"] = objective_score(objective, gold, inst, ctx.psi, beta)
        _emit(out, row)


def cmd_robustness(ctx: Context, out) -> None:
    cfg = ctx.cfg
    fractions = _split(cfg["fractions"], float)
    curves: dict[str, dict[float, float]] = {}
    table = {}
    for solver in _solver_list(cfg):
        config = ctx.config(solver)
        for f in fractions:
            r = nil_robustness(ctx.corpus, solver, ctx.psi, config, f, cfg["threads"])
            curves.setdefault(solver, {})[f] = r.f1
            table[(solver, f"{f:g}")] = r.f1
            _emit(out, {"solver": solver, "dataset": ctx.dataset, "fraction": f,
                        "seed": config.seed, **r.as_dict()})
    _write_table(cfg, format_table(table))
    if cfg["figure"]:
        from .plotting import robustness_figure
        robustness_figure(curves, cfg["figure"])


def cmd_synth(cfg: dict, out) -> None:
    if not cfg["out_dir"]:
        raise UsageError("synth needs --out-dir")
    sc = synth_corpus(cfg["docs"], _mention_range(cfg["mentions"]), cfg["candidates"],
                      cfg["shape"], noise=cfg["noise"], seed=cfg["seed"])
    paths = sc.write(cfg["out_dir"])
    _emit(out, {"shape": cfg["shape"], "docs": len(sc.docs), "seed": cfg["seed"],
                **{k: str(v) for k, v in paths.items()}})


HANDLERS = {
    "link": cmd_link,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "denseness": cmd_denseness,
    "correlate": cmd_correlate,
    "oracle": cmd_oracle,
    "robustness": cmd_robustness,
}


def _echo(cfg: dict) -> None:
    shown = {k: v for k, v in sorted(cfg.items()) if v is not None}
    print("config: " + json.dumps(shown, sort_keys=True), file=sys.stderr)


def parse_and_run(argv: Optional[Sequence[str]] = None,
                  env: Optional[Mapping[str, str]] = None) -> int:
    """Run one command; returns 0 on success, 1 on bad input data, 2 on usage errors."""
    env = os.environ if env is None else env
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(list(argv) if argv is not None else None)
        except SystemExit as exc:  # --help and --version
            return int(exc.code or 0)
        cfg = resolve(args, env)
        _echo(cfg)
        with contextlib.ExitStack() as stack:
            out = sys.stdout
            if cfg["output"]:
                out = stack.enter_context(open(cfg["output"], "w", encoding="utf-8",
                                               newline="\n"))
            if cfg["command"] == "synth":
                cmd_synth(cfg, out)
            else:
                HANDLERS[cfg["command"]](Context(cfg), out)
            out.flush()
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 2
    except (PairlinkError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(parse_and_run(sys.argv[1:], os.environ))


if __name__ == "__main__":
    main()
