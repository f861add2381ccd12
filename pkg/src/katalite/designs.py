"""Hand-encoded reference designs for the stock benchmarks.

These are the classic textbook CRDTs (two-phase and add/remove-wins sets,
last-writer-wins register, enable/disable-wins flags, grow-only and
general counters) expressed as semilattice state plus update-delta and
query terms, together with the deliberately wrong ``naive-set`` that
treats a plain set as replicated state.
"""

from __future__ import annotations

from . import expr as E
from .expr import Term
from .lattice import (
    EMPTY_MAP,
    EMPTY_SET,
    OR_BOOL,
    LatticeType,
    ScalarSort,
    free_tuple,
    lex_product,
    lmap,
    lset,
    max_int,
)
from .seqspec import NODE_VAR, STATE_VAR
from .verifier import CrdtDesign

OPAQUE = ScalarSort.OPAQUE_INT
CLOCK = ScalarSort.CLOCK_INT
NODE = ScalarSort.NODE_ID
INT = ScalarSort.INT

_state = E.var(STATE_VAR)
_nid = E.var(NODE_VAR)


def _is_flag(name: str, v: int) -> Term:
    return E.eq(E.var(name), E.ilit(v, ScalarSort.ENUM_INT))


def _two_set_state() -> LatticeType:
    return free_tuple(lset(OPAQUE), lset(OPAQUE))


def two_phase_set_classic() -> CrdtDesign:
    """Inserted and removed elements accumulate in separate grow-only sets."""
    return CrdtDesign(
        name="two-phase-set-classic",
        spec_name="two-phase-set",
        state_type=_two_set_state(),
        initial_state=(EMPTY_SET, EMPTY_SET),
        transition_delta=E.ite(
            _is_flag("add", 1),
            E.tuple_make(E.singleton(E.var("v")), E.empty_set(OPAQUE)),
            E.tuple_make(E.empty_set(OPAQUE), E.singleton(E.var("v"))),
        ),
        query=E.member(
            E.var("v"), E.diff(E.tuple_get(_state, 0), E.tuple_get(_state, 1))
        ),
    )


def two_phase_set_map() -> CrdtDesign:
    """Single map from element to a saturating removed-flag.

    Absent, present-false, and present-true encode the three phases; the
    lookup default turns absence into "not contained".
    """
    return CrdtDesign(
        name="two-phase-set-map",
        spec_name="two-phase-set",
        state_type=lmap(OPAQUE, OR_BOOL),
        initial_state=EMPTY_MAP,
        transition_delta=E.ite(
            _is_flag("add", 1),
            E.singleton_map(E.var("v"), E.false()),
            E.singleton_map(E.var("v"), E.true()),
        ),
        query=E.not_(E.map_get(_state, E.var("v"), E.true())),
    )


def grow_only_set() -> CrdtDesign:
    return CrdtDesign(
        name="grow-only-set",
        spec_name="grow-only-set",
        state_type=lset(OPAQUE),
        initial_state=EMPTY_SET,
        transition_delta=E.ite(
            _is_flag("add", 1), E.singleton(E.var("v")), E.empty_set(OPAQUE)
        ),
        query=E.member(E.var("v"), _state),
    )


def naive_set() -> CrdtDesign:
    """A plain set with union merge; loses removals under replication."""
    return CrdtDesign(
        name="naive-set",
        spec_name="two-phase-set",
        state_type=lset(OPAQUE),
        initial_state=EMPTY_SET,
        transition_delta=E.ite(
            _is_flag("add", 1), E.singleton(E.var("v")), E.empty_set(OPAQUE)
        ),
        query=E.member(E.var("v"), _state),
    )


def _stamped_pair_state() -> LatticeType:
    m = lmap(OPAQUE, max_int(CLOCK))
    return free_tuple(m, m)


def _slot_time(component: int) -> Term:
    return E.map_get(
        E.tuple_get(_state, component), E.var("v"), E.ilit(0, CLOCK)
    )


def add_wins_set() -> CrdtDesign:
    """Element-to-timestamp maps for adds and removes; ties favor the add."""
    return CrdtDesign(
        name="add-wins-set",
        spec_name="add-wins-set",
        state_type=_stamped_pair_state(),
        initial_state=(EMPTY_MAP, EMPTY_MAP),
        transition_delta=E.ite(
            _is_flag("add", 1),
            E.tuple_make(
                E.singleton_map(E.var("v"), E.var("t")),
                E.empty_map(OPAQUE, E.scalar(CLOCK)),
            ),
            E.tuple_make(
                E.empty_map(OPAQUE, E.scalar(CLOCK)),
                E.singleton_map(E.var("v"), E.var("t")),
            ),
        ),
        query=E.and_(
            E.geq(_slot_time(0), _slot_time(1)),
            E.gt(_slot_time(0), E.ilit(0, CLOCK)),
        ),
        timestamps=True,
    )


def remove_wins_set() -> CrdtDesign:
    """Same state as the add-wins set; ties favor the remove."""
    return CrdtDesign(
        name="remove-wins-set",
        spec_name="remove-wins-set",
        state_type=_stamped_pair_state(),
        initial_state=(EMPTY_MAP, EMPTY_MAP),
        transition_delta=E.ite(
            _is_flag("add", 1),
            E.tuple_make(
                E.singleton_map(E.var("v"), E.var("t")),
                E.empty_map(OPAQUE, E.scalar(CLOCK)),
            ),
            E.tuple_make(
                E.empty_map(OPAQUE, E.scalar(CLOCK)),
                E.singleton_map(E.var("v"), E.var("t")),
            ),
        ),
        query=E.gt(_slot_time(0), _slot_time(1)),
        timestamps=True,
    )


def lww_register() -> CrdtDesign:
    return CrdtDesign(
        name="lww-register",
        spec_name="lww-register",
        state_type=lex_product(max_int(CLOCK), max_int(OPAQUE)),
        initial_state=(0, 0),
        transition_delta=E.tuple_make(E.var("t"), E.var("v")),
        query=E.tuple_get(_state, 1),
        timestamps=True,
    )


def enable_wins_flag() -> CrdtDesign:
    return CrdtDesign(
        name="enable-wins-flag",
        spec_name="enable-wins-flag",
        state_type=lex_product(max_int(CLOCK), OR_BOOL),
        initial_state=(0, False),
        transition_delta=E.tuple_make(E.var("t"), _is_flag("e", 1)),
        query=E.tuple_get(_state, 1),
        timestamps=True,
    )


def disable_wins_flag() -> CrdtDesign:
    # The saturating Boolean tracks "disabled at this timestamp"; the query
    # inverts it, and the initial state compensates so an untouched flag
    # reads as disabled.
    return CrdtDesign(
        name="disable-wins-flag",
        spec_name="disable-wins-flag",
        state_type=lex_product(max_int(CLOCK), OR_BOOL),
        initial_state=(0, True),
        transition_delta=E.tuple_make(E.var("t"), _is_flag("e", 0)),
        query=E.not_(E.tuple_get(_state, 1)),
        timestamps=True,
    )


def grow_only_counter() -> CrdtDesign:
    return CrdtDesign(
        name="grow-only-counter",
        spec_name="grow-only-counter",
        state_type=lmap(NODE, max_int(INT)),
        initial_state=EMPTY_MAP,
        transition_delta=E.singleton_map(
            _nid, E.add(E.map_get(_state, _nid, E.ilit(0)), E.ilit(1))
        ),
        query=E.reduce_(_state, "Sum", E.ilit(0)),
        non_idempotent=True,
    )


def general_counter() -> CrdtDesign:
    """Increment and decrement tallies in per-node slots; query subtracts."""
    inc_map = lmap(NODE, max_int(INT))

    def bump(component: int) -> Term:
        return E.singleton_map(
            _nid,
            E.add(
                E.map_get(E.tuple_get(_state, component), _nid, E.ilit(0)),
                E.ilit(1),
            ),
        )

    return CrdtDesign(
        name="general-counter",
        spec_name="general-counter",
        state_type=free_tuple(inc_map, inc_map),
        initial_state=(EMPTY_MAP, EMPTY_MAP),
        transition_delta=E.ite(
            _is_flag("inc", 1),
            E.tuple_make(bump(0), E.empty_map(NODE, E.INT)),
            E.tuple_make(E.empty_map(NODE, E.INT), bump(1)),
        ),
        query=E.sub(
            E.reduce_(E.tuple_get(_state, 0), "Sum", E.ilit(0)),
            E.reduce_(E.tuple_get(_state, 1), "Sum", E.ilit(0)),
        ),
        non_idempotent=True,
    )


_BUILDERS = (
    two_phase_set_classic,
    two_phase_set_map,
    grow_only_set,
    add_wins_set,
    remove_wins_set,
    lww_register,
    enable_wins_flag,
    disable_wins_flag,
    grow_only_counter,
    general_counter,
    naive_set,
)


def shipped_designs() -> list[CrdtDesign]:
    return [b() for b in _BUILDERS]


def get_design(name: str) -> CrdtDesign:
    for d in shipped_designs():
        if d.name == name:
            return d
    known = ", ".join(d.name for d in shipped_designs())
    raise KeyError(f"unknown design {name!r}; known: {known}")


def load_design(ref: str) -> CrdtDesign:
    """Resolve ``design:<name>`` or a path to a ``*.design.json`` file."""
    if ref.startswith("design:"):
        return get_design(ref[len("design:"):])
    return CrdtDesign.load(ref)
