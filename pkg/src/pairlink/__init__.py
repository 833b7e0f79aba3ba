"""Collective entity disambiguation with the MINTREE objective and Pair-Linking."""

__version__ = "0.1.0"

from .analysis import (CoherenceGraph, CorrelationReport, correlation_study, denseness,
                       edge_cover_threshold, spearman, theoretical_denseness)
from .corpus import read_corpus, write_corpus
from .errors import (ContractViolation, FormatError, MissingEntityError, PairlinkError,
                     RefusalError, ValidationError)
from .evaluation import (BenchRecord, EvalResult, bench, cross_validate_beta, micro_prf,
                         nil_robustness)
from .kb import (CoherenceMeasure, EmbeddingStore, KbStats, MeasureKind, TableCoherence,
                 combined, ees, load_embeddings, load_kb_stats, njs, wlm)
from .model import (Assignment, Candidate, LinkingInstance, Mention, Objective, SolverConfig,
                    all_link_score, brute_force_optimum, chain_score, edge_distance,
                    mintree_score, objective_score, single_link_score, support_score)
from .solvers import (PairQueueEntry, SolverReport, SOLVERS, forward_backward,
                      iterative_substitution, local_linker, loopy_belief_propagation,
                      pair_linking, personalized_pagerank, run_solver, support_linker, top_pair)
from .synth import SHAPES, synth_corpus

__all__ = [name for name in dir() if not name.startswith("_")]
