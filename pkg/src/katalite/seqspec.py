"""Sequential specifications: the user-facing input model.

A :class:`SequentialSpec` bundles a sequential data type (initial state,
state transition, query), a pairwise operation ordering that resolves
non-commutative operations, an operation precondition, and two mode flags
(logical timestamps, non-idempotent transitions). The nine stock
benchmarks at the bottom cover counters, flags, registers and sets.

Conventions: the state variable is named ``state``; operation and query
parameters are referenced by their field names; the ordering relation
refers to fields of its two operands as ``o1.<field>`` / ``o2.<field>``
and the precondition as ``o.<field>``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

from . import expr as E
from .expr import Sort, Term
from .lattice import ScalarSort


class SpecError(Exception):
    pass


STATE_VAR = "state"
NODE_VAR = "currentNodeID"
TIMESTAMP_FIELD = "t"
NODE_FIELD = "node"
RESERVED_NAMES = frozenset({STATE_VAR, NODE_VAR, TIMESTAMP_FIELD, NODE_FIELD})

FORMAT_VERSION = 1

Field = tuple[str, ScalarSort]


@dataclass(frozen=True)
class Signature:
    """Named, sorted parameter list of an operation or query."""

    fields: tuple[Field, ...] = ()

    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.fields)

    def sorts(self) -> dict[str, Sort]:
        return {n: E.scalar(s) for n, s in self.fields}


OpSignature = Signature
QuerySignature = Signature


@dataclass(frozen=True)
class SequentialSpec:
    name: str
    state_sort: Sort
    initial_state: Term
    transition: Term  # over {state} + op fields
    query: Term  # over {state} + query fields
    op_fields: tuple[Field, ...]
    query_fields: tuple[Field, ...]
    op_order: Term  # over o1.*/o2.*; true means "o2 allowed after o1"
    op_precondition: Term  # over o.*
    timestamps: bool = False
    non_idempotent: bool = False
    constants: tuple[int, ...] = ()
    description: str = ""

    # -- signatures ---------------------------------------------------------

    def op_signature(self) -> Signature:
        """User fields, plus the implicit timestamp and node-ID fields."""
        fields = list(self.op_fields)
        if self.timestamps:
            fields.append((TIMESTAMP_FIELD, ScalarSort.CLOCK_INT))
        if self.non_idempotent:
            fields.append((NODE_FIELD, ScalarSort.NODE_ID))
        return Signature(tuple(fields))

    def log_fields(self) -> tuple[Field, ...]:
        """Fields carried by operation values in logs (node is external)."""
        fields = list(self.op_fields)
        if self.timestamps:
            fields.append((TIMESTAMP_FIELD, ScalarSort.CLOCK_INT))
        return tuple(fields)

    def query_signature(self) -> Signature:
        return Signature(self.query_fields)

    def query_result_sort(self) -> Sort:
        env = {STATE_VAR: self.state_sort}
        env.update(Signature(self.query_fields).sorts())
        return E.typecheck(self.query, env)

    # -- derived terms ------------------------------------------------------

    def effective_op_order(self) -> Term:
        """Timestamp-first ordering; the user order breaks ties.

        With timestamps disabled the user order is returned unchanged.
        """
        if not self.timestamps:
            return self.op_order
        t1 = E.var(f"o1.{TIMESTAMP_FIELD}")
        t2 = E.var(f"o2.{TIMESTAMP_FIELD}")
        return E.or_(E.gt(t2, t1), E.and_(E.eq(t1, t2), self.op_order))

    def effective_precondition(self) -> Term:
        """User precondition, plus t > 0 when timestamps are enabled."""
        if not self.timestamps:
            return self.op_precondition
        positive = E.gt(E.var(f"o.{TIMESTAMP_FIELD}"), E.ilit(0, ScalarSort.CLOCK_INT))
        if self.op_precondition.kind == "BoolLit" and self.op_precondition.value:
            return positive
        return E.and_(self.op_precondition, positive)

    # -- environments -------------------------------------------------------

    def _order_env(self) -> dict[str, Sort]:
        env = {}
        for n, s in self.log_fields():
            env[f"o1.{n}"] = E.scalar(s)
            env[f"o2.{n}"] = E.scalar(s)
        return env

    def _precondition_env(self) -> dict[str, Sort]:
        return {f"o.{n}": E.scalar(s) for n, s in self.log_fields()}

    def op_env(self, op: Sequence[Any]) -> dict[str, Any]:
        names = [n for n, _ in self.log_fields()]
        if len(op) != len(names):
            raise SpecError(f"op arity mismatch: {op!r} vs fields {names}")
        return dict(zip(names, op))

    def validate(self) -> None:
        """Typecheck all terms; raise :class:`SpecError` on any defect."""
        seen = set()
        for n, _ in self.op_fields + self.query_fields:
            if n in RESERVED_NAMES:
                raise SpecError(f"field name {n!r} is reserved")
        for n, _ in self.op_fields:
            if n in seen:
                raise SpecError(f"duplicate op field {n!r}")
            seen.add(n)
        try:
            env = {STATE_VAR: self.state_sort}
            env.update(Signature(self.log_fields()).sorts())
            st_sort = E.typecheck(self.transition, env)
            if st_sort != E.erase(self.state_sort):
                raise SpecError(
                    f"transition sort {st_sort!r} != state sort {self.state_sort!r}"
                )
            if E.typecheck(self.initial_state, {}) != E.erase(self.state_sort):
                raise SpecError("initial state does not match the state sort")
            self.query_result_sort()
            if E.typecheck(self.effective_op_order(), self._order_env()) != E.BOOL:
                raise SpecError("op_order must be Boolean")
            if (
                E.typecheck(self.effective_precondition(), self._precondition_env())
                != E.BOOL
            ):
                raise SpecError("op_precondition must be Boolean")
        except E.TypecheckError as ex:
            raise SpecError(f"spec {self.name!r} is ill-sorted: {ex}") from ex

    # -- execution ----------------------------------------------------------

    def run_sequential(self, log: Iterable[Sequence[Any]]) -> Any:
        """Left fold of the transition over ``log`` from the initial state."""
        state = E.eval_term(self.initial_state, {})
        step = E.compile_term(self.transition)
        for op in log:
            env = self.op_env(op)
            env[STATE_VAR] = state
            state = step(env)
        return state

    def answer_query(self, state: Any, q: Sequence[Any]) -> Any:
        names = [n for n, _ in self.query_fields]
        if len(q) != len(names):
            raise SpecError(f"query arity mismatch: {q!r}")
        env = dict(zip(names, q))
        env[STATE_VAR] = state
        return E.eval_term(self.query, env)

    def order_allows(self, o1: Sequence[Any], o2: Sequence[Any]) -> bool:
        env = {}
        for (n, _), v in zip(self.log_fields(), o1):
            env[f"o1.{n}"] = v
        for (n, _), v in zip(self.log_fields(), o2):
            env[f"o2.{n}"] = v
        return bool(E.eval_term(self.effective_op_order(), env))

    def precondition_holds(self, op: Sequence[Any]) -> bool:
        env = {f"o.{n}": v for (n, _), v in zip(self.log_fields(), op)}
        return bool(E.eval_term(self.effective_precondition(), env))

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "name": self.name,
            "description": self.description,
            "state_sort": E.sort_to_json(self.state_sort),
            "initial_state": E.term_to_json(self.initial_state),
            "transition": E.term_to_json(self.transition),
            "query": E.term_to_json(self.query),
            "op_fields": [[n, s.value] for n, s in self.op_fields],
            "query_fields": [[n, s.value] for n, s in self.query_fields],
            "op_order": E.term_to_json(self.op_order),
            "op_precondition": E.term_to_json(self.op_precondition),
            "flags": {
                "timestamps": self.timestamps,
                "non_idempotent": self.non_idempotent,
            },
            "constants": list(self.constants),
        }

    @staticmethod
    def from_json(data: dict) -> "SequentialSpec":
        version = data.get("format_version")
        if version != FORMAT_VERSION:
            raise SpecError(f"unsupported spec format_version {version!r}")
        try:
            spec = SequentialSpec(
                name=data["name"],
                description=data.get("description", ""),
                state_sort=E.sort_from_json(data["state_sort"]),
                initial_state=E.term_from_json(data["initial_state"]),
                transition=E.term_from_json(data["transition"]),
                query=E.term_from_json(data["query"]),
                op_fields=tuple(
                    (n, ScalarSort(s)) for n, s in data.get("op_fields", [])
                ),
                query_fields=tuple(
                    (n, ScalarSort(s)) for n, s in data.get("query_fields", [])
                ),
                op_order=E.term_from_json(data["op_order"]),
                op_precondition=E.term_from_json(data["op_precondition"]),
                timestamps=bool(data["flags"]["timestamps"]),
                non_idempotent=bool(data["flags"]["non_idempotent"]),
                constants=tuple(data.get("constants", ())),
            )
        except KeyError as ex:
            raise SpecError(f"spec file is missing field {ex}") from ex
        spec.validate()
        return spec

    @staticmethod
    def load(path: str) -> "SequentialSpec":
        with open(path) as f:
            return SequentialSpec.from_json(json.load(f))


def harvest_constants(*terms: Term) -> tuple[int, ...]:
    """Integer literals appearing in the given terms, sorted and deduped."""
    out: set[int] = set()

    def walk(t: Term):
        if t.kind == "IntLit":
            out.add(t.value)
        for a in t.args:
            walk(a)

    for t in terms:
        walk(t)
    return tuple(sorted(out))


# ---------------------------------------------------------------------------
# Built-in benchmarks
#
# The flag benchmarks model a Boolean register with enable/disable requests
# (field e: 1 enables, anything else disables) that starts disabled; the
# winner at equal timestamps is fixed by the ordering. The set benchmarks
# share one sequential set-with-flag data type (add=1 inserts, else removes)
# and differ only in ordering and timestamp use. Counters expose inc/dec
# requests and report the running total.


def _set_with_flag(name, op_order, description, timestamps):
    state_sort = E.set_of(ScalarSort.OPAQUE_INT)
    v = E.var("v")
    st = E.ite(
        E.eq(E.var("add"), E.ilit(1, ScalarSort.ENUM_INT)),
        E.union(E.var(STATE_VAR), E.singleton(v)),
        E.diff(E.var(STATE_VAR), E.singleton(v)),
    )
    query = E.member(v, E.var(STATE_VAR))
    spec = SequentialSpec(
        name=name,
        description=description,
        state_sort=state_sort,
        initial_state=E.empty_set(ScalarSort.OPAQUE_INT),
        transition=st,
        query=query,
        op_fields=(("add", ScalarSort.ENUM_INT), ("v", ScalarSort.OPAQUE_INT)),
        query_fields=(("v", ScalarSort.OPAQUE_INT),),
        op_order=op_order,
        op_precondition=E.true(),
        timestamps=timestamps,
        constants=(0, 1),
    )
    return spec


def _flag(name, op_order, description):
    st = E.eq(E.var("e"), E.ilit(1, ScalarSort.ENUM_INT))
    return SequentialSpec(
        name=name,
        description=description,
        state_sort=E.BOOL,
        initial_state=E.false(),
        transition=st,
        query=E.var(STATE_VAR),
        op_fields=(("e", ScalarSort.ENUM_INT),),
        query_fields=(),
        op_order=op_order,
        op_precondition=E.true(),
        timestamps=True,
        constants=(0, 1),
    )


def _enum(v: int) -> Term:
    return E.ilit(v, ScalarSort.ENUM_INT)


def _is_add(o: str) -> Term:
    return E.eq(E.var(f"{o}.add"), _enum(1))


def _benchmark_grow_only_counter() -> SequentialSpec:
    return SequentialSpec(
        name="grow-only-counter",
        description="Counter that only increments; query returns the total.",
        state_sort=E.INT,
        initial_state=E.ilit(0),
        transition=E.add(E.var(STATE_VAR), E.ilit(1)),
        query=E.var(STATE_VAR),
        op_fields=(),
        query_fields=(),
        op_order=E.true(),
        op_precondition=E.true(),
        non_idempotent=True,
        constants=(0, 1),
    )


def _benchmark_general_counter() -> SequentialSpec:
    return SequentialSpec(
        name="general-counter",
        description="Counter with increments and decrements (inc=1 adds one).",
        state_sort=E.INT,
        initial_state=E.ilit(0),
        transition=E.ite(
            E.eq(E.var("inc"), _enum(1)),
            E.add(E.var(STATE_VAR), E.ilit(1)),
            E.sub(E.var(STATE_VAR), E.ilit(1)),
        ),
        query=E.var(STATE_VAR),
        op_fields=(("inc", ScalarSort.ENUM_INT),),
        query_fields=(),
        op_order=E.true(),
        op_precondition=E.true(),
        non_idempotent=True,
        constants=(0, 1),
    )


def _benchmark_enable_wins_flag() -> SequentialSpec:
    # At equal timestamps disables happen first, so enables win.
    order = E.or_(
        E.not_(E.eq(E.var("o1.e"), _enum(1))),
        E.eq(E.var("o2.e"), _enum(1)),
    )
    return _flag(
        "enable-wins-flag",
        order,
        "Boolean flag; concurrent enable beats disable.",
    )


def _benchmark_disable_wins_flag() -> SequentialSpec:
    # At equal timestamps enables happen first, so disables win.
    order = E.or_(
        E.eq(E.var("o1.e"), _enum(1)),
        E.not_(E.eq(E.var("o2.e"), _enum(1))),
    )
    return _flag(
        "disable-wins-flag",
        order,
        "Boolean flag; concurrent disable beats enable.",
    )


def _benchmark_lww_register() -> SequentialSpec:
    return SequentialSpec(
        name="lww-register",
        description="Register keeping the most recent write; value order breaks ties.",
        state_sort=E.OPAQUE,
        initial_state=E.ilit(0, ScalarSort.OPAQUE_INT),
        transition=E.var("v"),
        query=E.var(STATE_VAR),
        op_fields=(("v", ScalarSort.OPAQUE_INT),),
        query_fields=(),
        op_order=E.geq(E.var("o2.v"), E.var("o1.v")),
        op_precondition=E.true(),
        timestamps=True,
        constants=(0,),
    )


def _benchmark_grow_only_set() -> SequentialSpec:
    # Removes are ordered before all inserts, making them no-ops.
    order = E.or_(E.not_(_is_add("o1")), _is_add("o2"))
    return _set_with_flag(
        "grow-only-set",
        order,
        "Set where removals are reordered before insertions (no-ops).",
        timestamps=False,
    )


def _benchmark_two_phase_set() -> SequentialSpec:
    # Inserts before removes: once removed, never inserted again.
    order = E.or_(_is_add("o1"), E.not_(_is_add("o2")))
    return _set_with_flag(
        "two-phase-set",
        order,
        "Set where each element can be inserted, then removed, never re-inserted.",
        timestamps=False,
    )


def _benchmark_add_wins_set() -> SequentialSpec:
    # Ties: removes first, so adds win among concurrent operations.
    order = E.or_(E.not_(_is_add("o1")), _is_add("o2"))
    return _set_with_flag(
        "add-wins-set",
        order,
        "Timestamped set; an add beats a concurrent remove of the same element.",
        timestamps=True,
    )


def _benchmark_remove_wins_set() -> SequentialSpec:
    # Ties: adds first, so removes win among concurrent operations.
    order = E.or_(_is_add("o1"), E.not_(_is_add("o2")))
    return _set_with_flag(
        "remove-wins-set",
        order,
        "Timestamped set; a remove beats a concurrent add of the same element.",
        timestamps=True,
    )


_BENCHMARK_BUILDERS = (
    _benchmark_grow_only_counter,
    _benchmark_general_counter,
    _benchmark_enable_wins_flag,
    _benchmark_disable_wins_flag,
    _benchmark_lww_register,
    _benchmark_grow_only_set,
    _benchmark_two_phase_set,
    _benchmark_add_wins_set,
    _benchmark_remove_wins_set,
)


def builtin_benchmarks() -> list[SequentialSpec]:
    """The nine stock benchmark specifications."""
    specs = [b() for b in _BENCHMARK_BUILDERS]
    for s in specs:
        s.validate()
    return specs


def get_benchmark(name: str) -> SequentialSpec:
    for spec in builtin_benchmarks():
        if spec.name == name:
            return spec
    known = ", ".join(s.name for s in builtin_benchmarks())
    raise SpecError(f"unknown benchmark {name!r}; known: {known}")


def load_spec(ref: str) -> SequentialSpec:
    """Resolve ``bench:<name>`` or a path to a ``*.spec.json`` file."""
    if ref.startswith("bench:"):
        return get_benchmark(ref[len("bench:"):])
    return SequentialSpec.load(ref)
