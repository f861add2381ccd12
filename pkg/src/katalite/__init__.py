"""katalite: synthesize provably-convergent state-based CRDTs.

Sequential data-type specifications annotated with operation orderings go
in; verified CRDT designs built from semilattice compositions come out.
Candidates are checked by exhaustive bounded trace equivalence, and a
deterministic gossip simulator demonstrates convergence.
"""

from .lattice import (
    LatticeError,
    LatticeType,
    ScalarSort,
    bottom,
    join,
    leq,
    semantic_eq,
    validate,
)
from .expr import Env, Sort, Term, EvalError, TypecheckError, eval_term, typecheck
from .seqspec import SequentialSpec, SpecError, builtin_benchmarks, get_benchmark
from .verifier import CrdtDesign, Universe, Verdict, check_bounded
from .synthesizer import SearchConfig, search, search_all
from .simulator import Schedule, SimReport, check_convergence, random_schedule, run

__version__ = "0.1.0"

__all__ = [
    "LatticeError",
    "LatticeType",
    "ScalarSort",
    "bottom",
    "join",
    "leq",
    "semantic_eq",
    "validate",
    "Env",
    "Sort",
    "Term",
    "EvalError",
    "TypecheckError",
    "eval_term",
    "typecheck",
    "SequentialSpec",
    "SpecError",
    "builtin_benchmarks",
    "get_benchmark",
    "CrdtDesign",
    "Universe",
    "Verdict",
    "check_bounded",
    "SearchConfig",
    "search",
    "search_all",
    "Schedule",
    "SimReport",
    "check_convergence",
    "random_schedule",
    "run",
]
