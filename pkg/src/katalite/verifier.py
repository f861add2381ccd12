"""Bounded verification by exhaustive trace comparison.

A candidate design is checked against a sequential spec by enumerating
every precondition-valid, in-order operation log up to a length bound over
a finite value universe (and, for non-idempotent designs, every assignment
of node IDs to log slots). At every prefix of every log, both sides must
answer every query value identically.

The enumeration forms a tree of logs whose sequential side depends only on
the spec, so it is computed once and reused across the many candidates the
synthesizer throws at it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Iterable, Iterator, Sequence

from . import expr as E
from .expr import Term
from .lattice import (
    LatticeType,
    ScalarSort,
    join_fn,
    semantic_eq,
    type_from_json,
    type_to_json,
    validate,
    value_from_json,
    value_to_json,
)
from .seqspec import NODE_VAR, STATE_VAR, SequentialSpec, SpecError

DEFAULT_CHECK_BUDGET = 5_000_000

DESIGN_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Universe:
    """Finite value domains used for exhaustive log enumeration."""

    opaque_values: tuple[int, ...] = (1, 2, 3)
    clock_values: tuple[int, ...] = (1, 2, 3)
    node_ids: tuple[int, ...] = (0, 1)
    enum_values: tuple[int, ...] = (0, 1)
    int_values: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        for name in ("opaque_values", "clock_values", "node_ids", "enum_values"):
            if not getattr(self, name):
                raise ValueError(f"universe field {name} must be nonempty")
        if any(c <= 0 for c in self.clock_values):
            raise ValueError("clock values must be positive")

    def values_for(self, sort: ScalarSort) -> tuple:
        if sort is ScalarSort.BOOL:
            return (False, True)
        if sort is ScalarSort.OPAQUE_INT:
            return self.opaque_values
        if sort is ScalarSort.CLOCK_INT:
            return self.clock_values
        if sort is ScalarSort.ENUM_INT:
            return self.enum_values
        if sort is ScalarSort.NODE_ID:
            return self.node_ids
        return self.int_values

    def grown(self, delta: int) -> "Universe":
        """Extend opaque, clock, and node domains by ``delta`` fresh values.

        Enum domains enumerate a spec's flag encoding completely and do not
        scale with the universe.
        """
        def extend(vals: tuple[int, ...]) -> tuple[int, ...]:
            top = max(vals)
            return vals + tuple(range(top + 1, top + 1 + delta))

        return replace(
            self,
            opaque_values=extend(self.opaque_values),
            clock_values=extend(self.clock_values),
            node_ids=extend(self.node_ids),
        )

    @staticmethod
    def of_size(n: int) -> "Universe":
        if n < 1:
            raise ValueError("universe size must be >= 1")
        vals = tuple(range(1, n + 1))
        return Universe(opaque_values=vals, clock_values=vals)

    def to_json(self) -> dict:
        return {
            "opaque_values": list(self.opaque_values),
            "clock_values": list(self.clock_values),
            "node_ids": list(self.node_ids),
            "enum_values": list(self.enum_values),
            "int_values": list(self.int_values),
        }

    @staticmethod
    def from_json(data: dict) -> "Universe":
        return Universe(**{k: tuple(v) for k, v in data.items()})


@dataclass(frozen=True)
class Provenance:
    grammar_depth: int
    verified_log_bound: int
    verified_universe: Universe

    def to_json(self) -> dict:
        return {
            "grammar_depth": self.grammar_depth,
            "verified_log_bound": self.verified_log_bound,
            "verified_universe": self.verified_universe.to_json(),
        }

    @staticmethod
    def from_json(data: dict) -> "Provenance":
        return Provenance(
            grammar_depth=data["grammar_depth"],
            verified_log_bound=data["verified_log_bound"],
            verified_universe=Universe.from_json(data["verified_universe"]),
        )


@dataclass(frozen=True)
class CrdtDesign:
    """A replicated design: semilattice state plus update and query logic.

    The merge function is always the lattice join of ``state_type``; one
    applied operation contributes ``join(state, transition_delta(op))``.
    """

    name: str
    spec_name: str
    state_type: LatticeType
    initial_state: Any
    transition_delta: Term  # env: op fields (+ state/currentNodeID if non-idempotent)
    query: Term  # env: state + query fields
    timestamps: bool = False
    non_idempotent: bool = False
    provenance: Provenance | None = None

    def validate_against(self, spec: SequentialSpec) -> None:
        if self.timestamps != spec.timestamps or self.non_idempotent != spec.non_idempotent:
            raise SpecError("design flags do not match the spec flags")
        if not validate(self.state_type, self.initial_state):
            raise SpecError("initial state is not a valid value of the state type")
        from .grammar import query_env_sorts, transition_env_sorts

        want = E.struct_sort(self.state_type)
        got = E.typecheck(self.transition_delta, transition_env_sorts(spec, self.state_type))
        if got != want:
            raise SpecError(f"transition delta sort {got!r} != state sort {want!r}")
        qgot = E.typecheck(self.query, query_env_sorts(spec, self.state_type))
        if qgot != E.erase(spec.query_result_sort()):
            raise SpecError("design query sort does not match the spec query sort")

    def to_json(self) -> dict:
        out = {
            "format_version": DESIGN_FORMAT_VERSION,
            "name": self.name,
            "spec_name": self.spec_name,
            "state_type": type_to_json(self.state_type),
            "initial_state": value_to_json(self.state_type, self.initial_state),
            "transition_delta": E.term_to_json(self.transition_delta),
            "query": E.term_to_json(self.query),
            "flags": {
                "timestamps": self.timestamps,
                "non_idempotent": self.non_idempotent,
            },
        }
        if self.provenance is not None:
            out["provenance"] = self.provenance.to_json()
        return out

    @staticmethod
    def from_json(data: dict) -> "CrdtDesign":
        version = data.get("format_version")
        if version != DESIGN_FORMAT_VERSION:
            raise SpecError(f"unsupported design format_version {version!r}")
        state_type = type_from_json(data["state_type"])
        return CrdtDesign(
            name=data["name"],
            spec_name=data["spec_name"],
            state_type=state_type,
            initial_state=value_from_json(state_type, data["initial_state"]),
            transition_delta=E.term_from_json(data["transition_delta"]),
            query=E.term_from_json(data["query"]),
            timestamps=bool(data["flags"]["timestamps"]),
            non_idempotent=bool(data["flags"]["non_idempotent"]),
            provenance=Provenance.from_json(data["provenance"])
            if "provenance" in data
            else None,
        )

    @staticmethod
    def load(path: str) -> "CrdtDesign":
        import json

        with open(path) as f:
            return CrdtDesign.from_json(json.load(f))


@dataclass(frozen=True)
class Counterexample:
    log: tuple[tuple, ...]
    node_assignment: tuple[int, ...]
    prefix_index: int
    query: tuple
    expected: Any
    actual: Any

    def to_json(self) -> dict:
        return {
            "log": [list(op) for op in self.log],
            "node_assignment": list(self.node_assignment),
            "prefix_index": self.prefix_index,
            "query": list(self.query),
            "expected": self.expected,
            "actual": self.actual,
        }


@dataclass(frozen=True)
class Verdict:
    status: str  # "pass" | "fail" | "inconclusive"
    universe: Universe
    log_bound: int
    counterexample: Counterexample | None = None
    reason: str | None = None
    checks: int = 0

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    def to_json(self) -> dict:
        out = {
            "status": self.status,
            "log_bound": self.log_bound,
            "universe": self.universe.to_json(),
            "checks": self.checks,
        }
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample.to_json()
        if self.reason:
            out["reason"] = self.reason
        return out


# ---------------------------------------------------------------------------
# Operation and log enumeration


def op_universe(spec: SequentialSpec, universe: Universe) -> list[tuple]:
    """All precondition-valid operation values, in canonical order."""
    domains = [universe.values_for(s) for _, s in spec.log_fields()]
    pre = E.compile_term(spec.effective_precondition())
    names = [f"o.{n}" for n, _ in spec.log_fields()]
    out = []
    for combo in itertools.product(*domains):
        if pre(dict(zip(names, combo))):
            out.append(combo)
    out.sort()
    return out


def query_universe(spec: SequentialSpec, universe: Universe) -> list[tuple]:
    domains = [universe.values_for(s) for _, s in spec.query_fields]
    return sorted(itertools.product(*domains))


def log_in_order(spec: SequentialSpec, log: Sequence[Sequence[Any]]) -> bool:
    """Every op satisfies the precondition; adjacent pairs satisfy the order."""
    for op in log:
        if not spec.precondition_holds(op):
            return False
    for a, b in zip(log, log[1:]):
        if not spec.order_allows(a, b):
            return False
    return True


def check_order_transitive(spec: SequentialSpec, universe: Universe) -> tuple | None:
    """Return a violating (a, b, c) triple, or None if the order is transitive."""
    ops = op_universe(spec, universe)
    allowed = {}
    for a in ops:
        for b in ops:
            allowed[(a, b)] = spec.order_allows(a, b)
    for a in ops:
        for b in ops:
            if not allowed[(a, b)]:
                continue
            for c in ops:
                if allowed[(b, c)] and not allowed[(a, c)]:
                    return (a, b, c)
    return None


class LogTree:
    """All in-order logs up to a bound, with sequential answers per prefix.

    Node 0 is the empty log. Each node stores its parent, the op appended,
    the node ID executing it (always 0 in idempotent mode), and the
    sequential answers for every query value.
    """

    def __init__(self, spec: SequentialSpec, universe: Universe, log_bound: int,
                 max_nodes: int):
        self.spec = spec
        self.universe = universe
        self.log_bound = log_bound
        self.truncated = False

        violation = check_order_transitive(spec, universe)
        if violation is not None:
            raise SpecError(
                f"operation order of {spec.name!r} is not transitive: {violation}"
            )

        self.ops = op_universe(spec, universe)
        self.queries = query_universe(spec, universe)
        self.query_names = [n for n, _ in spec.query_fields]

        field_names = [n for n, _ in spec.log_fields()]
        step = E.compile_term(spec.transition)
        answer = E.compile_term(spec.query)

        allowed_next: dict[tuple, list[int]] = {}
        for i, a in enumerate(self.ops):
            allowed_next[a] = [
                j for j, b in enumerate(self.ops) if spec.order_allows(a, b)
            ]
        all_ops = list(range(len(self.ops)))

        node_ids = universe.node_ids if spec.non_idempotent else (0,)

        parent: list[int] = [-1]
        op_idx: list[int] = [-1]
        node_id: list[int] = [0]
        depth: list[int] = [0]
        seq_states: list[Any] = [E.eval_term(spec.initial_state, {})]

        frontier = [0]
        for _ in range(log_bound):
            if self.truncated:
                break
            new_frontier = []
            for n in frontier:
                succ = all_ops if op_idx[n] < 0 else allowed_next[self.ops[op_idx[n]]]
                for j in succ:
                    env = dict(zip(field_names, self.ops[j]))
                    env[STATE_VAR] = seq_states[n]
                    state = step(env)
                    for nid in node_ids:
                        if len(parent) >= max_nodes:
                            self.truncated = True
                            break
                        parent.append(n)
                        op_idx.append(j)
                        node_id.append(nid)
                        depth.append(depth[n] + 1)
                        seq_states.append(state)
                        new_frontier.append(len(parent) - 1)
                    if self.truncated:
                        break
                if self.truncated:
                    break
            frontier = new_frontier

        self.parent = parent
        self.op_idx = op_idx
        self.node_id = node_id
        self.depth = depth

        # Per-node update environments (shared dicts; checker copies).
        self.op_envs: list[dict | None] = [None]
        for i in range(1, len(parent)):
            self.op_envs.append(dict(zip(field_names, self.ops[op_idx[i]])))

        # Sequential answers per node per query value.
        self.expected: list[tuple] = []
        qenvs = [dict(zip(self.query_names, q)) for q in self.queries]
        for i in range(len(parent)):
            row = []
            for qenv in qenvs:
                qenv[STATE_VAR] = seq_states[i]
                row.append(answer(qenv))
            self.expected.append(tuple(row))

    def __len__(self) -> int:
        return len(self.parent)

    def log_at(self, i: int) -> tuple[tuple[tuple, ...], tuple[int, ...]]:
        ops: list[tuple] = []
        nids: list[int] = []
        while i > 0:
            ops.append(self.ops[self.op_idx[i]])
            nids.append(self.node_id[i])
            i = self.parent[i]
        ops.reverse()
        nids.reverse()
        return tuple(ops), tuple(nids)

    def iter_logs(self) -> Iterator[tuple[tuple[tuple, ...], tuple[int, ...]]]:
        for i in range(1, len(self.parent)):
            yield self.log_at(i)


_TREES: dict[tuple, LogTree] = {}


def build_log_tree(
    spec: SequentialSpec,
    universe: Universe,
    log_bound: int,
    max_nodes: int = 2_000_000,
) -> LogTree:
    key = (spec, universe, log_bound, max_nodes)
    tree = _TREES.get(key)
    if tree is None:
        tree = LogTree(spec, universe, log_bound, max_nodes)
        if len(_TREES) > 32:
            _TREES.clear()
        _TREES[key] = tree
    return tree


# ---------------------------------------------------------------------------
# Folding and checking


def fold_crdt(
    spec: SequentialSpec,
    design: CrdtDesign,
    log: Sequence[Sequence[Any]],
    node_assignment: Sequence[int] | None = None,
) -> Any:
    """Fold the update delta over a log: state <- join(state, delta(op))."""
    if node_assignment is None:
        node_assignment = [0] * len(log)
    if len(node_assignment) != len(log):
        raise ValueError("node assignment length must match the log")
    return _fold_for_spec(design, spec, log, node_assignment)


def answer_design_query(design: CrdtDesign, spec: SequentialSpec, state: Any, q: Sequence[Any]) -> Any:
    env = dict(zip([n for n, _ in spec.query_fields], q))
    env[STATE_VAR] = state
    return E.eval_term(design.query, env)


def check_design_on_tree(
    design: CrdtDesign, tree: LogTree, budget: int = DEFAULT_CHECK_BUDGET
) -> Verdict:
    """Replay the whole log tree against a candidate design."""
    spec = tree.spec
    n = len(tree)
    nqueries = len(tree.queries)
    if tree.truncated or n * max(1, nqueries) > budget:
        return Verdict(
            "inconclusive",
            tree.universe,
            tree.log_bound,
            reason="check budget exceeded" if not tree.truncated else "log tree truncated",
            checks=0,
        )

    joiner = join_fn(design.state_type)
    f = E.compile_term(design.transition_delta)
    answer = E.compile_term(design.query)
    non_idem = design.non_idempotent

    states: list[Any] = [None] * n
    states[0] = design.initial_state
    qenvs = [dict(zip(tree.query_names, q)) for q in tree.queries]

    checks = 0
    for i in range(n):
        if i > 0:
            env = dict(tree.op_envs[i])
            parent_state = states[tree.parent[i]]
            if non_idem:
                env[STATE_VAR] = parent_state
                env[NODE_VAR] = tree.node_id[i]
            states[i] = joiner(parent_state, f(env))
        state = states[i]
        expected_row = tree.expected[i]
        for qi in range(nqueries):
            qenv = qenvs[qi]
            qenv[STATE_VAR] = state
            actual = answer(qenv)
            checks += 1
            if actual != expected_row[qi]:
                log, nids = tree.log_at(i)
                cex = Counterexample(
                    log=log,
                    node_assignment=nids,
                    prefix_index=len(log),
                    query=tree.queries[qi],
                    expected=expected_row[qi],
                    actual=actual,
                )
                return Verdict(
                    "fail", tree.universe, tree.log_bound, counterexample=cex,
                    checks=checks,
                )
    return Verdict("pass", tree.universe, tree.log_bound, checks=checks)


def check_bounded(
    spec: SequentialSpec,
    design: CrdtDesign,
    universe: Universe | None = None,
    log_bound: int = 4,
    budget: int = DEFAULT_CHECK_BUDGET,
) -> Verdict:
    """Exhaustive bounded trace-equivalence check of a design against a spec."""
    universe = universe or Universe()
    design.validate_against(spec)
    max_nodes = max(2, budget // max(1, len(query_universe(spec, universe))) + 1)
    tree = build_log_tree(spec, universe, log_bound, max_nodes)
    return check_design_on_tree(design, tree, budget)


def replay_counterexample(
    spec: SequentialSpec, design: CrdtDesign, cex: Counterexample
) -> tuple[Any, Any]:
    """Recompute (expected, actual) for a counterexample; must reproduce."""
    prefix = cex.log[: cex.prefix_index]
    nids = cex.node_assignment[: cex.prefix_index]
    seq_state = spec.run_sequential(prefix)
    expected = spec.answer_query(seq_state, cex.query)
    state = _fold_for_spec(design, spec, prefix, nids)
    actual = answer_design_query(design, spec, state, cex.query)
    return expected, actual


def _fold_for_spec(
    design: CrdtDesign,
    spec: SequentialSpec,
    log: Sequence[Sequence[Any]],
    node_assignment: Sequence[int],
) -> Any:
    joiner = join_fn(design.state_type)
    f = E.compile_term(design.transition_delta)
    names = [n for n, _ in spec.log_fields()]
    state = design.initial_state
    for op, nid in zip(log, node_assignment):
        env = dict(zip(names, op))
        if design.non_idempotent:
            env[STATE_VAR] = state
            env[NODE_VAR] = nid
        state = joiner(state, f(env))
    return state


def check_permutation_invariance(
    design: CrdtDesign,
    spec: SequentialSpec,
    logs: Iterable[Sequence[Sequence[Any]]],
    max_permutations: int | None = None,
) -> bool:
    """Idempotent designs must fold to the same state under any op order."""
    if design.non_idempotent:
        raise ValueError("permutation invariance applies to idempotent designs")
    for log in logs:
        log = list(log)
        reference = _fold_for_spec(design, spec, log, [0] * len(log))
        count = 0
        for perm in itertools.permutations(log):
            folded = _fold_for_spec(design, spec, perm, [0] * len(perm))
            if not semantic_eq(design.state_type, folded, reference):
                return False
            count += 1
            if max_permutations is not None and count >= max_permutations:
                break
    return True


def minimize_counterexample(
    spec: SequentialSpec, design: CrdtDesign, cex: Counterexample
) -> Counterexample:
    """Greedy subsequence shrinking; the result stays in-order and failing."""

    probes = [cex.query]
    probes.extend(q for q in query_universe(spec, Universe()) if q != cex.query)

    def failing(log: tuple, nids: tuple) -> Counterexample | None:
        if not log_in_order(spec, log):
            return None
        seq_state = spec.run_sequential(log)
        state = _fold_for_spec(design, spec, log, nids)
        for q in probes:
            expected = spec.answer_query(seq_state, q)
            actual = answer_design_query(design, spec, state, q)
            if expected != actual:
                return Counterexample(log, nids, len(log), q, expected, actual)
        return None

    log = cex.log[: cex.prefix_index]
    nids = cex.node_assignment[: cex.prefix_index]
    current = failing(log, nids)
    if current is None:
        # The recorded query/prefix may rely on a larger universe; keep as is.
        return cex
    shrunk = True
    while shrunk:
        shrunk = False
        log = current.log
        nids = current.node_assignment
        for i in range(len(log)):
            cand = failing(log[:i] + log[i + 1 :], nids[:i] + nids[i + 1 :])
            if cand is not None:
                current = cand
                shrunk = True
                break
    return current
