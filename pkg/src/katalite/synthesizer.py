"""End-to-end design search: iterative deepening over state types and logic.

For each depth round, every state type within the depth is explored in
size order. Per state type, (update, query) candidate pairs stream in
combined-size order with initial states tried per pair; candidates are
first replayed against cached counterexamples (cheap rejection), then
checked exhaustively at the phase-1 log bound. A phase-1 survivor faces a
second check at enlarged bounds; if that fails, the new counterexample is
cached, the bounds escalate, and the state type is re-explored.

The first design to clear both phases wins. Deterministic mode explores
serially so "first" is reproducible; racing mode fans state types out to
worker processes and takes the first completion.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field, replace
from typing import Any, Iterable

from . import expr as E
from .expr import Term
from .grammar import (
    GrammarConfig,
    config_for_spec,
    enumerate_state_types,
    initial_state_candidates,
    paired_candidates,
    query_stream,
    transition_stream,
)
from .lattice import (
    LatticeType,
    free_tuple,
    join_fn,
    type_depth,
    type_to_str,
)
from .seqspec import NODE_VAR, STATE_VAR, SequentialSpec
from .verifier import (
    Counterexample,
    CrdtDesign,
    DEFAULT_CHECK_BUDGET,
    Provenance,
    Universe,
    Verdict,
    build_log_tree,
    check_design_on_tree,
    query_universe,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchConfig:
    max_depth: int = 4
    initial_log_bound: int = 2
    phase2_log_bound_delta: int = 2
    phase2_universe_delta: int = 1
    max_log_bound: int = 5  # ceiling for phase-1 escalation
    universe: Universe = field(default_factory=Universe)
    worker_count: int = 1
    deterministic: bool = True
    use_cache: bool = True
    candidate_budget: int = 300_000  # candidate designs per state type per attempt
    check_budget: int = DEFAULT_CHECK_BUDGET
    timeout: float | None = None
    hint_state: LatticeType | None = None

    def __post_init__(self):
        if self.initial_log_bound < 2:
            raise ValueError("initial log bound must be >= 2")
        if self.max_depth < 2:
            raise ValueError("max depth must be >= 2")


@dataclass(frozen=True)
class CexRecord:
    log: tuple[tuple, ...]
    node_assignment: tuple[int, ...]
    query: tuple
    expected: Any


class CexCache:
    """Append-only store of failing traces, replayable against candidates."""

    def __init__(self, records: Iterable[CexRecord] = ()):
        self.records: list[CexRecord] = []
        self._seen: set[tuple] = set()
        for r in records:
            self.add_record(r)

    def __len__(self) -> int:
        return len(self.records)

    def add_record(self, rec: CexRecord) -> None:
        key = (rec.log, rec.node_assignment, rec.query)
        if key not in self._seen:
            self._seen.add(key)
            self.records.append(rec)

    def add(self, cex: Counterexample) -> None:
        self.add_record(
            CexRecord(
                log=cex.log[: cex.prefix_index],
                node_assignment=cex.node_assignment[: cex.prefix_index],
                query=cex.query,
                expected=cex.expected,
            )
        )

    def snapshot(self) -> list[CexRecord]:
        return list(self.records)


@dataclass
class StateTypeStats:
    state_type: str
    depth: int
    candidates_scanned: int = 0
    cache_rejections: int = 0
    phase1_full_checks: int = 0
    phase1_failures: int = 0
    phase2_checks: int = 0
    escalations: int = 0
    result: str = "exhausted"  # found | exhausted | budget | duplicate | timeout
    elapsed: float = 0.0

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SearchReport:
    spec_name: str
    designs: list[CrdtDesign] = field(default_factory=list)
    per_state_type: list[StateTypeStats] = field(default_factory=list)
    rounds: list[dict] = field(default_factory=list)
    timed_out: bool = False
    elapsed: float = 0.0
    cache_size: int = 0

    @property
    def totals(self) -> dict:
        keys = (
            "candidates_scanned",
            "cache_rejections",
            "phase1_full_checks",
            "phase1_failures",
            "phase2_checks",
            "escalations",
        )
        out = {k: 0 for k in keys}
        for st in self.per_state_type:
            for k in keys:
                out[k] += getattr(st, k)
        return out

    def to_json(self) -> dict:
        return {
            "spec": self.spec_name,
            "designs": [d.to_json() for d in self.designs],
            "totals": self.totals,
            "rounds": self.rounds,
            "per_state_type": [s.to_json() for s in self.per_state_type],
            "timed_out": self.timed_out,
            "elapsed_seconds": round(self.elapsed, 3),
            "cache_size": self.cache_size,
        }


class _Replayer:
    """Fast candidate rejection against cached counterexamples."""

    def __init__(self, spec: SequentialSpec, state_type: LatticeType, cache: CexCache):
        self.spec = spec
        self.cache = cache
        self.joiner = join_fn(state_type)
        self.names = [n for n, _ in spec.log_fields()]
        self.non_idem = spec.non_idempotent
        self.qnames = [n for n, _ in spec.query_fields]
        # (id(f), init_index) -> folded states aligned with cache.records
        self._folds: dict[tuple[int, int], list[Any]] = {}

    def _envs(self, rec: CexRecord):
        for op, nid in zip(rec.log, rec.node_assignment):
            env = dict(zip(self.names, op))
            if self.non_idem:
                env[NODE_VAR] = nid
            yield env

    def rejects(self, f_id: int, f_fn, init_idx: int, init: Any, q_fn) -> bool:
        records = self.cache.records
        if not records:
            return False
        key = (f_id, init_idx)
        states = self._folds.get(key)
        if states is None:
            states = []
            self._folds[key] = states
        for i in range(len(records)):
            rec = records[i]
            if i < len(states):
                state = states[i]
            else:
                state = init
                for env in self._envs(rec):
                    if self.non_idem:
                        env[STATE_VAR] = state
                    state = self.joiner(state, f_fn(env))
                states.append(state)
            qenv = dict(zip(self.qnames, rec.query))
            qenv[STATE_VAR] = state
            if q_fn(qenv) != rec.expected:
                return True
        return False


def _phase2_bounds(cfg: SearchConfig, phase1_bound: int) -> tuple[Universe, int]:
    return (
        cfg.universe.grown(cfg.phase2_universe_delta),
        phase1_bound + cfg.phase2_log_bound_delta,
    )


def phase2_check(
    spec: SequentialSpec,
    design: CrdtDesign,
    cfg: SearchConfig,
    phase1_bound: int | None = None,
) -> Verdict:
    """Re-check a phase-1 survivor at enlarged universe and log bound."""
    bound = phase1_bound if phase1_bound is not None else cfg.initial_log_bound
    universe, log_bound = _phase2_bounds(cfg, bound)
    max_nodes = max(2, cfg.check_budget // max(1, len(query_universe(spec, universe))) + 1)
    tree = build_log_tree(spec, universe, log_bound, max_nodes)
    return check_design_on_tree(design, tree, cfg.check_budget)


def synth_for_state(
    spec: SequentialSpec,
    state_type: LatticeType,
    cfg: SearchConfig,
    cache: CexCache,
    depth: int | None = None,
    log_bound: int | None = None,
    stats: StateTypeStats | None = None,
    deadline: float | None = None,
) -> CrdtDesign | None:
    """First candidate for ``state_type`` that survives the phase-1 check."""
    depth = depth if depth is not None else cfg.max_depth
    log_bound = log_bound if log_bound is not None else cfg.initial_log_bound
    stats = stats or StateTypeStats(type_to_str(state_type), depth)

    max_nodes = max(
        2, cfg.check_budget // max(1, len(query_universe(spec, cfg.universe))) + 1
    )
    tree = build_log_tree(spec, cfg.universe, log_bound, max_nodes)
    f_stream = transition_stream(spec, state_type, depth)
    q_stream = query_stream(spec, state_type, depth)
    inits = initial_state_candidates(spec, state_type, depth)
    replayer = _Replayer(spec, state_type, cache)

    scanned_at_entry = stats.candidates_scanned
    budget = cfg.candidate_budget
    q_compiled: dict[int, Any] = {}
    f_compiled: dict[int, Any] = {}
    check_every = 2048
    since_deadline_check = 0

    for f, q in paired_candidates(f_stream, q_stream):
        f_id = id(f)
        f_fn = f_compiled.get(f_id)
        if f_fn is None:
            f_fn = E.compile_term(f)
            f_compiled[f_id] = f_fn
        q_id = id(q)
        q_fn = q_compiled.get(q_id)
        if q_fn is None:
            q_fn = E.compile_term(q)
            q_compiled[q_id] = q_fn
        for init_idx, init in enumerate(inits):
            stats.candidates_scanned += 1
            if stats.candidates_scanned - scanned_at_entry > budget:
                stats.result = "budget"
                return None
            since_deadline_check += 1
            if deadline is not None and since_deadline_check >= check_every:
                since_deadline_check = 0
                if time.monotonic() > deadline:
                    stats.result = "timeout"
                    return None
            if cfg.use_cache and replayer.rejects(f_id, f_fn, init_idx, init, q_fn):
                stats.cache_rejections += 1
                continue
            design = CrdtDesign(
                name=f"{spec.name}-candidate",
                spec_name=spec.name,
                state_type=state_type,
                initial_state=init,
                transition_delta=f,
                query=q,
                timestamps=spec.timestamps,
                non_idempotent=spec.non_idempotent,
            )
            stats.phase1_full_checks += 1
            verdict = check_design_on_tree(design, tree, cfg.check_budget)
            if verdict.passed:
                return design
            if verdict.failed:
                stats.phase1_failures += 1
                cache.add(verdict.counterexample)
            # inconclusive phase-1 checks reject the candidate silently
    stats.result = "exhausted"
    return None


def explore_state_type(
    spec: SequentialSpec,
    state_type: LatticeType,
    cfg: SearchConfig,
    cache: CexCache,
    depth: int,
    stats: StateTypeStats,
    deadline: float | None = None,
) -> CrdtDesign | None:
    """Phase-1 synthesis plus phase-2 validation with bound escalation."""
    log_bound = cfg.initial_log_bound
    while True:
        design = synth_for_state(
            spec, state_type, cfg, cache, depth, log_bound, stats, deadline
        )
        if design is None:
            return None
        stats.phase2_checks += 1
        verdict = phase2_check(spec, design, cfg, log_bound)
        if verdict.passed:
            stats.result = "found"
            return replace(
                design,
                provenance=Provenance(
                    grammar_depth=depth,
                    verified_log_bound=verdict.log_bound,
                    verified_universe=verdict.universe,
                ),
            )
        if verdict.failed:
            cache.add(verdict.counterexample)
        else:
            log.warning(
                "phase-2 check inconclusive for %s at bound %d: %s",
                type_to_str(state_type), log_bound, verdict.reason,
            )
        log_bound += 1
        stats.escalations += 1
        if log_bound > cfg.max_log_bound:
            stats.result = "exhausted"
            return None


# ---------------------------------------------------------------------------
# Dead-component canonicalization (FreeTuple dedup for search_all)


def _read_components(term: Term, acc: set[int]) -> None:
    if term.kind == "TupleGet" and term.args[0].kind == "VarRef" \
            and term.args[0].name == STATE_VAR:
        acc.add(term.index)
    for a in term.args:
        _read_components(a, acc)


def _project_delta(term: Term, live: list[int]) -> Term | None:
    if term.kind == "TupleMake":
        picked = [term.args[i] for i in live]
        return picked[0] if len(picked) == 1 else E.tuple_make(*picked)
    if term.kind == "Ite":
        t = _project_delta(term.args[1], live)
        e = _project_delta(term.args[2], live)
        if t is None or e is None:
            return None
        return E.ite(term.args[0], t, e)
    return None


def _remap_reads(term: Term, mapping: dict[int, int | None]) -> Term:
    if term.kind == "TupleGet" and term.args[0].kind == "VarRef" \
            and term.args[0].name == STATE_VAR:
        new = mapping[term.index]
        if new is None:
            return term.args[0]  # single live component: state is the value
        return E.tuple_get(term.args[0], new)
    if not term.args:
        return term
    return replace(term, args=tuple(_remap_reads(a, mapping) for a in term.args))


def _is_closed(term: Term) -> bool:
    if term.kind == "VarRef":
        return False
    return all(_is_closed(a) for a in term.args)


def _canonicalize_tuple(design: CrdtDesign) -> CrdtDesign:
    t = design.state_type
    reads: set[int] = set()
    _read_components(design.query, reads)
    if design.non_idempotent:
        _read_components(design.transition_delta, reads)
    live = sorted(reads & set(range(len(t.elements))))
    if not live or len(live) == len(t.elements):
        return design
    delta = _project_delta(design.transition_delta, live)
    if delta is None:
        return design
    if len(live) == 1:
        new_type = t.elements[live[0]]
        new_init = design.initial_state[live[0]]
        mapping: dict[int, int | None] = {live[0]: None}
    else:
        new_type = free_tuple(*(t.elements[i] for i in live))
        new_init = tuple(design.initial_state[i] for i in live)
        mapping = {old: new for new, old in enumerate(live)}
    return replace(
        design,
        state_type=new_type,
        initial_state=new_init,
        transition_delta=_remap_reads(delta, mapping),
        query=_remap_reads(design.query, mapping),
    )


def _canonicalize_lex(design: CrdtDesign) -> CrdtDesign:
    t = design.state_type
    reads: set[int] = set()
    _read_components(design.query, reads)
    if design.non_idempotent:
        _read_components(design.transition_delta, reads)
    live = None
    if 1 not in reads:
        # The first slot of a lexicographic join is the plain join of the
        # firsts, so an unread second component projects away soundly.
        live = 0
    elif 0 not in reads:
        # An unread first component projects away only when the update
        # provably keeps it constant, which degrades the lexicographic
        # join to the plain join of the seconds.
        first = _project_delta(design.transition_delta, [0])
        if first is not None and _is_closed(first):
            if E.eval_term(first, {}) == design.initial_state[0]:
                live = 1
    if live is None:
        return design
    delta = _project_delta(design.transition_delta, [live])
    if delta is None:
        return design
    mapping: dict[int, int | None] = {live: None}
    return replace(
        design,
        state_type=t.first if live == 0 else t.second,
        initial_state=design.initial_state[live],
        transition_delta=_remap_reads(delta, mapping),
        query=_remap_reads(design.query, mapping),
    )


def canonicalize_design(design: CrdtDesign) -> CrdtDesign:
    """Drop product components no term observes; dedups padded designs.

    Free tuples project componentwise; lexicographic pairs project on the
    first slot, or on the second when the first is update-constant. A
    design whose update is not a componentwise tuple build is returned
    unchanged.
    """
    while True:
        if design.state_type.kind == "tuple":
            out = _canonicalize_tuple(design)
        elif design.state_type.kind == "lex":
            out = _canonicalize_lex(design)
        else:
            return design
        if out is design:
            return design
        design = out


def design_key(design: CrdtDesign) -> str:
    canon = canonicalize_design(design)
    payload = {
        "state_type": canon.to_json()["state_type"],
        "initial_state": canon.to_json()["initial_state"],
        "transition_delta": E.term_to_json(canon.transition_delta),
        "query": E.term_to_json(canon.query),
    }
    return json.dumps(payload, sort_keys=True)


# ---------------------------------------------------------------------------
# Top-level search


def _round_state_types(spec: SequentialSpec, cfg: SearchConfig, depth: int):
    if cfg.hint_state is not None:
        return [cfg.hint_state]
    gcfg = config_for_spec(spec, depth)
    return enumerate_state_types(gcfg)


def search_all(
    spec: SequentialSpec, cfg: SearchConfig | None = None, k: int = 1
) -> tuple[list[CrdtDesign], SearchReport]:
    """Collect up to ``k`` verified, structurally distinct designs."""
    cfg = cfg or SearchConfig()
    if k < 1:
        raise ValueError("k must be >= 1")
    spec.validate()
    if not cfg.deterministic and cfg.worker_count > 1:
        return _search_racing(spec, cfg, k)

    start = time.monotonic()
    deadline = start + cfg.timeout if cfg.timeout else None
    report = SearchReport(spec_name=spec.name)
    cache = CexCache()
    seen: set[str] = set()
    done_types: set[LatticeType] = set()
    ordinal = 0

    for depth in range(2, cfg.max_depth + 1):
        types = _round_state_types(spec, cfg, depth)
        report.rounds.append({"depth": depth, "state_types": len(types)})
        for st in types:
            if st in done_types:
                continue  # this state structure already yielded its design
            if deadline is not None and time.monotonic() > deadline:
                report.timed_out = True
                break
            stats = StateTypeStats(type_to_str(st), depth)
            t0 = time.monotonic()
            design = explore_state_type(spec, st, cfg, cache, depth, stats, deadline)
            stats.elapsed = time.monotonic() - t0
            if design is not None:
                done_types.add(st)
                key = design_key(design)
                if key in seen:
                    stats.result = "duplicate"
                    design = None
                else:
                    seen.add(key)
                    ordinal += 1
                    design = replace(design, name=f"{spec.name}-design-{ordinal}")
                    report.designs.append(design)
            report.per_state_type.append(stats)
            if len(report.designs) >= k:
                break
        if report.timed_out or len(report.designs) >= k:
            break

    report.elapsed = time.monotonic() - start
    report.cache_size = len(cache)
    return report.designs, report


def search(
    spec: SequentialSpec, cfg: SearchConfig | None = None
) -> tuple[CrdtDesign | None, SearchReport]:
    """First design to clear both verification phases, with statistics."""
    designs, report = search_all(spec, cfg, k=1)
    return (designs[0] if designs else None), report


# ---------------------------------------------------------------------------
# Racing mode: state types explored by a pool of worker processes.


def _worker_explore(payload: tuple) -> tuple:
    spec_json, st_json, cfg_state, depth, records = payload
    from .lattice import type_from_json

    spec = SequentialSpec.from_json(spec_json)
    st = type_from_json(st_json)
    cfg = SearchConfig(**cfg_state)
    cache = CexCache(records)
    before = len(cache)
    stats = StateTypeStats(type_to_str(st), depth)
    t0 = time.monotonic()
    design = explore_state_type(spec, st, cfg, cache, depth, stats)
    stats.elapsed = time.monotonic() - t0
    new_records = cache.records[before:]
    return (
        design.to_json() if design is not None else None,
        stats.to_json(),
        [r.__dict__ for r in new_records],
    )


def _cfg_state(cfg: SearchConfig) -> dict:
    out = dict(cfg.__dict__)
    out["universe"] = cfg.universe  # picklable dataclass
    out["worker_count"] = 1
    out["deterministic"] = True
    out["hint_state"] = cfg.hint_state
    return out


def _search_racing(
    spec: SequentialSpec, cfg: SearchConfig, k: int
) -> tuple[list[CrdtDesign], SearchReport]:
    start = time.monotonic()
    deadline = start + cfg.timeout if cfg.timeout else None
    report = SearchReport(spec_name=spec.name)
    cache = CexCache()
    seen: set[str] = set()
    done_types: set[LatticeType] = set()
    spec_json = spec.to_json()
    ordinal = 0

    with ProcessPoolExecutor(max_workers=cfg.worker_count) as pool:
        for depth in range(2, cfg.max_depth + 1):
            types = [t for t in _round_state_types(spec, cfg, depth) if t not in done_types]
            report.rounds.append({"depth": depth, "state_types": len(types)})
            pending = {}
            queue = list(types)
            while queue or pending:
                while queue and len(pending) < cfg.worker_count * 2:
                    st = queue.pop(0)
                    from .lattice import type_to_json

                    fut = pool.submit(
                        _worker_explore,
                        (
                            spec_json,
                            type_to_json(st),
                            _cfg_state(cfg),
                            depth,
                            cache.snapshot(),
                        ),
                    )
                    pending[fut] = st
                timeout_left = None
                if deadline is not None:
                    timeout_left = max(0.0, deadline - time.monotonic())
                done, _ = wait(pending, timeout=timeout_left, return_when=FIRST_COMPLETED)
                if not done:
                    report.timed_out = True
                    queue.clear()
                    for fut in pending:
                        fut.cancel()
                    pending.clear()
                    break
                for fut in done:
                    pending.pop(fut)
                    design_json, stats_json, new_records = fut.result()
                    for r in new_records:
                        cache.add_record(
                            CexRecord(
                                log=tuple(tuple(op) for op in r["log"]),
                                node_assignment=tuple(r["node_assignment"]),
                                query=tuple(r["query"]),
                                expected=r["expected"],
                            )
                        )
                    stats = StateTypeStats(**stats_json)
                    if design_json is not None:
                        design = CrdtDesign.from_json(design_json)
                        done_types.add(design.state_type)
                        key = design_key(design)
                        if key in seen:
                            stats.result = "duplicate"
                        else:
                            seen.add(key)
                            ordinal += 1
                            report.designs.append(
                                replace(design, name=f"{spec.name}-design-{ordinal}")
                            )
                    report.per_state_type.append(stats)
                if len(report.designs) >= k or report.timed_out:
                    queue.clear()
                    for fut in pending:
                        fut.cancel()
                    pending.clear()
                    break
            if len(report.designs) >= k or report.timed_out:
                break

    report.elapsed = time.monotonic() - start
    report.cache_size = len(cache)
    return report.designs, report
