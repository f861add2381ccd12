"""Candidate enumeration: state types, typed terms, and initial states.

State types come from a small composition grammar over semilattice
primitives; terms come from a typed core grammar with specialized integer
kinds, node-ID productions for non-idempotent transitions, and semilattice
reductions for queries.

Streams are deterministic and yield candidates in nondecreasing size
order. Terms that are locally reducible (constant-foldable nodes, lookups
on freshly constructed maps, joins with an empty operand, conditionals
with equal branches, and the like) are canonicalized away: every pruned
term has a smaller equivalent that is still enumerated.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

from . import expr as E
from .expr import Sort, Term
from .lattice import (
    MAXINT_BASES,
    NEG_BOOL,
    OR_BOOL,
    LatticeType,
    ScalarSort,
    bottom,
    free_tuple,
    lex_product,
    lmap,
    lset,
    max_int,
    type_depth,
    type_key,
    type_size,
)
from .seqspec import NODE_VAR, STATE_VAR, SequentialSpec

ROLE_STATE_TRANSITION = "state_transition"
ROLE_QUERY = "query"
ROLE_INITIAL_STATE = "initial_state"

DEFAULT_SORT_POOL = tuple(ScalarSort)


@dataclass(frozen=True)
class GrammarConfig:
    """Bounds and mode flags for one enumeration task."""

    depth: int
    constants: tuple[int, ...] = ()
    timestamps: bool = False
    non_idempotent: bool = False
    role: str = ROLE_QUERY
    sort_pool: tuple[ScalarSort, ...] = DEFAULT_SORT_POOL
    # NegBool is omitted from the default search space: no benchmark design
    # uses it and its duals are reachable by inverting OrBool encodings.
    include_negbool: bool = False

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("grammar depth must be >= 1")


def pool_for_spec(spec: SequentialSpec) -> tuple[ScalarSort, ...]:
    """Scalar sorts relevant to a spec, in canonical order."""
    pool = {ScalarSort.BOOL, ScalarSort.INT}
    for _, s in spec.op_fields + spec.query_fields:
        pool.add(s)
    if spec.timestamps:
        pool.add(ScalarSort.CLOCK_INT)
    if spec.non_idempotent:
        pool.add(ScalarSort.NODE_ID)
    return tuple(s for s in ScalarSort if s in pool)


def config_for_spec(
    spec: SequentialSpec, depth: int, role: str = ROLE_QUERY
) -> GrammarConfig:
    return GrammarConfig(
        depth=depth,
        constants=spec.constants,
        timestamps=spec.timestamps,
        non_idempotent=spec.non_idempotent,
        role=role,
        sort_pool=pool_for_spec(spec),
    )


# ---------------------------------------------------------------------------
# State types


def enumerate_state_types(cfg: GrammarConfig) -> list[LatticeType]:
    """Every state type derivable within ``cfg.depth``, smallest first.

    FreeTuple appears only at the top level; ordering is (size, grammar
    production key), which is stable across runs.
    """
    prims: list[LatticeType] = [OR_BOOL]
    if cfg.include_negbool:
        prims.append(NEG_BOOL)
    bases = [s for s in MAXINT_BASES if s in cfg.sort_pool]
    keys = list(cfg.sort_pool)

    by_depth: dict[int, list[LatticeType]] = {}

    def upto(d: int) -> list[LatticeType]:
        """Non-tuple lattice types of depth exactly d."""
        if d in by_depth:
            return by_depth[d]
        out: list[LatticeType] = []
        if d == 1:
            out.extend(prims)
        elif d == 2:
            out.extend(max_int(b) for b in bases)
            out.extend(lset(s) for s in keys)
        if d >= 2:
            shallower = [t for dd in range(1, d) for t in upto(dd)]
            for value in shallower:
                # depth(lmap) = 1 + max(1, depth(value))
                if 1 + max(1, type_depth(value)) == d:
                    out.extend(lmap(k, value) for k in keys)
            for first in shallower:
                for second in shallower:
                    if 1 + max(type_depth(first), type_depth(second)) == d:
                        out.append(lex_product(first, second))
        by_depth[d] = out
        return out

    all_types: list[LatticeType] = []
    for d in range(1, cfg.depth + 1):
        all_types.extend(upto(d))

    # FreeTuple lists, right-nested depth accounting.
    non_tuple = [(t, type_depth(t)) for t in all_types]
    memo: dict[int, list[tuple[tuple[LatticeType, ...], int]]] = {}

    def tuple_lists(budget: int) -> list[tuple[tuple[LatticeType, ...], int]]:
        got = memo.get(budget)
        if got is not None:
            return got
        out: list[tuple[tuple[LatticeType, ...], int]] = []
        if budget >= 2:
            singles = [(t, d) for t, d in non_tuple if d <= budget - 1]
            for head, hd in singles:
                for last, ld in singles:
                    out.append(((head, last), 1 + max(hd, ld)))
                for tail, td in tuple_lists(budget - 1):
                    out.append(((head,) + tail, 1 + max(hd, td)))
        memo[budget] = out
        return out

    seen = set()
    for elems, _depth in tuple_lists(cfg.depth):
        t = free_tuple(*elems)
        if t not in seen:
            seen.add(t)
            all_types.append(t)

    all_types.sort(key=lambda t: (type_size(t), type_key(t)))
    return all_types


# ---------------------------------------------------------------------------
# Initial states


def enumerate_initial_states(cfg: GrammarConfig, t: LatticeType) -> list[Any]:
    """Bottom first, then shallow leaf substitutions from small constants."""
    int_consts = [0, 1] + [c for c in cfg.constants if c not in (0, 1)]

    def leaf_domain(u: LatticeType) -> list[Any]:
        if u.kind == "or_bool":
            return [False, True]
        if u.kind == "neg_bool":
            return [True, False]
        if u.kind == "max_int":
            if u.base.nonnegative:
                return [c for c in int_consts if c >= 0]
            return list(int_consts)
        # Sets and maps start empty.
        return [bottom(u)]

    def domains(u: LatticeType) -> list[list[Any]]:
        if u.kind == "lex":
            return domains(u.first) + domains(u.second)
        if u.kind == "tuple":
            return [d for e in u.elements for d in domains(e)]
        return [leaf_domain(u)]

    def rebuild(u: LatticeType, leaves: list[Any]) -> Any:
        if u.kind == "lex":
            return (rebuild(u.first, leaves), rebuild(u.second, leaves))
        if u.kind == "tuple":
            return tuple(rebuild(e, leaves) for e in u.elements)
        return leaves.pop(0)

    out = []
    for combo in itertools.product(*domains(t)):
        out.append(rebuild(t, list(combo)))
    return out


# ---------------------------------------------------------------------------
# Term streams


_LITERAL_KINDS = frozenset({"BoolLit", "IntLit", "EmptySet", "EmptyMap"})


def _is_literal(t: Term) -> bool:
    return t.kind in _LITERAL_KINDS


def _literals(sort: ScalarSort, constants: Sequence[int]) -> list[Term]:
    if sort is ScalarSort.BOOL:
        return [E.false(), E.true()]
    if sort in (ScalarSort.INT, ScalarSort.ENUM_INT):
        vals = [0, 1] + [c for c in constants if c not in (0, 1)]
        return [E.ilit(v, sort) for v in vals]
    if sort is ScalarSort.CLOCK_INT:
        return [E.ilit(0, sort)]
    return []  # opaque values and node IDs have no literal forms


def bottom_term(t: LatticeType) -> Term:
    """A closed term denoting ``bottom(t)``."""
    if t.kind == "or_bool":
        return E.false()
    if t.kind == "neg_bool":
        return E.true()
    if t.kind == "max_int":
        return E.ilit(0, t.base)
    if t.kind == "lset":
        return E.empty_set(t.elem)
    if t.kind == "lmap":
        return E.empty_map(t.key, E.struct_sort(t.value))
    if t.kind == "lex":
        return E.tuple_make(bottom_term(t.first), bottom_term(t.second))
    return E.tuple_make(*(bottom_term(e) for e in t.elements))


def _contains_complex(s: Sort) -> bool:
    if s.kind in ("set", "map"):
        return True
    if s.kind == "tuple":
        return any(_contains_complex(e) for e in s.elements)
    return False


@dataclass
class _Entry:
    term: Term
    depth: int


class SizedTermStream:
    """Deterministic term stream in nondecreasing size order."""

    def __init__(self, gen: "TermGenerator", sort: Sort, root: bool = True):
        self.gen = gen
        self.sort = sort
        self.root = root

    @property
    def max_size(self) -> int:
        return self.gen.size_cap

    def bucket(self, size: int) -> tuple[Term, ...]:
        if self.root:
            return self.gen.root_bucket(self.sort, size)
        return tuple(e.term for e in self.gen.bucket(self.sort, size))

    def __iter__(self) -> Iterator[Term]:
        for n in range(1, self.max_size + 1):
            yield from self.bucket(n)


def enumerate_terms(
    cfg: GrammarConfig, env_sorts: dict[str, Sort], result_sort: Sort
) -> SizedTermStream:
    """Well-sorted candidates for the given role, smallest first."""
    gen = TermGenerator(cfg, env_sorts, result_sort)
    return SizedTermStream(gen, E.erase(result_sort))


class TermGenerator:
    """Bottom-up, size-indexed dynamic programming over the typed grammar."""

    def __init__(self, cfg: GrammarConfig, env_sorts: dict[str, Sort], result_sort: Sort):
        self.cfg = cfg
        self.result_sort = E.erase(result_sort)
        self.env = {name: env_sorts[name] for name in sorted(env_sorts)}
        self._buckets: dict[tuple[Sort, int], tuple[_Entry, ...]] = {}
        self._root: dict[tuple[Sort, int], tuple[Term, ...]] = {}

        # Lattice info for positions inside the result (and lattice-typed
        # env entries): struct sort -> lattice types seen there.
        self.ltypes: dict[Sort, tuple[LatticeType, ...]] = {}
        for s in env_sorts.values():
            if s.kind == "lattice":
                self._register_ltype(s.ltype)
        if result_sort.kind == "lattice":
            self._register_ltype(result_sort.ltype)

        self.closure = self._closure()
        self.seeds = self._condition_seeds()
        self.state_reads = self._state_read_paths()

        # Widest composite node bounds sizes reachable at the depth budget.
        arity = 3
        for s in self.closure:
            if s.kind == "tuple":
                arity = max(arity, len(s.elements))
        self.size_cap = (arity ** cfg.depth - 1) // (arity - 1)

    # -- setup ---------------------------------------------------------------

    def _register_ltype(self, t: LatticeType) -> None:
        s = E.struct_sort(t)
        have = self.ltypes.get(s, ())
        if t not in have:
            self.ltypes[s] = have + (t,)
        if t.kind == "lmap":
            self._register_ltype(t.value)
        elif t.kind == "lex":
            self._register_ltype(t.first)
            self._register_ltype(t.second)
        elif t.kind == "tuple":
            for e in t.elements:
                self._register_ltype(e)

    def _closure(self) -> list[Sort]:
        todo = [self.result_sort, E.BOOL]
        todo.extend(E.erase(s) for s in self.env.values())
        seen: dict[Sort, None] = {}
        while todo:
            s = todo.pop(0)
            if s in seen:
                continue
            seen[s] = None
            if s.kind == "set":
                todo.append(E.scalar(s.elem))
            elif s.kind == "map":
                todo.append(E.scalar(s.key))
                todo.append(s.value)
            elif s.kind == "tuple":
                todo.extend(s.elements)
        return list(seen)

    def _condition_seeds(self) -> list[_Entry]:
        """Boolean inputs plus equality comparisons over integer inputs."""
        seeds: list[_Entry] = []
        scalars = [
            (name, E.erase(s).scalar)
            for name, s in self.env.items()
            if E.erase(s).kind == "scalar" and name != STATE_VAR
        ]
        for name, sc in scalars:
            if sc is ScalarSort.BOOL:
                seeds.append(_Entry(E.var(name), 1))
        for name, sc in scalars:
            if sc is not ScalarSort.BOOL and sc is not ScalarSort.NODE_ID:
                for lit in _literals(sc, self.cfg.constants):
                    seeds.append(_Entry(E.eq(E.var(name), lit), 3))
        for (n1, s1), (n2, s2) in itertools.combinations(scalars, 2):
            if s1 is s2 and s1 is not ScalarSort.BOOL:
                seeds.append(_Entry(E.eq(E.var(n1), E.var(n2)), 3))
        return seeds

    def _state_read_paths(self) -> list[tuple[Term, int, LatticeType]]:
        """Own-slot read bases: node-keyed map components of the state.

        Only populated for non-idempotent state transitions, where the
        update may read state slots owned by the current node.
        """
        if self.cfg.role != ROLE_STATE_TRANSITION or not self.cfg.non_idempotent:
            return []
        s = self.env.get(STATE_VAR)
        if s is None or s.kind != "lattice":
            return []
        t = s.ltype
        out: list[tuple[Term, int, LatticeType]] = []
        if t.kind == "lmap" and t.key is ScalarSort.NODE_ID:
            out.append((E.var(STATE_VAR), 1, t))
        elif t.kind == "tuple":
            for i, e in enumerate(t.elements):
                if e.kind == "lmap" and e.key is ScalarSort.NODE_ID:
                    out.append((E.tuple_get(E.var(STATE_VAR), i), 2, e))
        return out

    # -- bucket machinery ------------------------------------------------------

    def root_bucket(self, sort: Sort, size: int) -> tuple[Term, ...]:
        """Stream for the task's top level; adds conditionals over complex sorts."""
        key = (sort, size)
        got = self._root.get(key)
        if got is not None:
            return got
        out = [e.term for e in self.bucket(sort, size)]
        # Conditionals returning sets/maps live only at the top level, with
        # conditions seeded from the inputs.
        if _contains_complex(sort):
            cap = self.cfg.depth - 1
            for cond in self.seeds:
                csize = E.term_size(cond.term)
                cdepth = E.term_depth(cond.term)
                if cdepth > cap:
                    continue
                rest = size - 1 - csize
                for tsize in range(1, rest):
                    esize = rest - tsize
                    for a in self.bucket(sort, tsize):
                        if a.depth > cap:
                            continue
                        for b in self.bucket(sort, esize):
                            if b.depth > cap:
                                continue
                            if tsize == esize and a.term == b.term:
                                continue
                            d = 1 + max(cdepth, a.depth, b.depth)
                            out.append(E.ite(cond.term, a.term, b.term))
        got = tuple(out)
        self._root[key] = got
        return got

    def bucket(self, sort: Sort, size: int) -> tuple[_Entry, ...]:
        key = (sort, size)
        got = self._buckets.get(key)
        if got is not None:
            return got
        if size < 1 or size > self.size_cap:
            self._buckets[key] = ()
            return ()
        out: list[_Entry] = []
        if size == 1:
            self._atoms(sort, out)
        else:
            self._compose(sort, size, out)
        got = tuple(out)
        self._buckets[key] = got
        return got

    def _atoms(self, sort: Sort, out: list[_Entry]) -> None:
        for name, s in self.env.items():
            if E.erase(s) != sort:
                continue
            if name == STATE_VAR and self.cfg.role == ROLE_STATE_TRANSITION:
                continue  # transitions read state only via own-slot lookups
            out.append(_Entry(E.var(name), 1))
        if sort.kind == "scalar":
            for lit in _literals(sort.scalar, self.cfg.constants):
                out.append(_Entry(lit, 1))
        elif sort.kind == "set":
            out.append(_Entry(E.empty_set(sort.elem), 1))
        elif sort.kind == "map":
            out.append(_Entry(E.empty_map(sort.key, sort.value), 1))

    def _pairs(self, sa: Sort, sb: Sort, size: int, commutative: bool):
        """(a, b) operand pairs with |a| + |b| == size, canonically ordered."""
        for asize in range(1, size):
            bsize = size - asize
            if commutative and asize > bsize:
                continue
            abucket = self.bucket(sa, asize)
            bbucket = self.bucket(sb, bsize)
            if not abucket or not bbucket:
                continue
            if commutative and asize == bsize:
                for i, a in enumerate(abucket):
                    for b in bbucket[i + 1 :]:
                        yield a, b
            else:
                for a in abucket:
                    for b in bbucket:
                        yield a, b

    def _ordered_pairs(self, sa: Sort, sb: Sort, size: int, skip_same: bool):
        for asize in range(1, size):
            bsize = size - asize
            abucket = self.bucket(sa, asize)
            bbucket = self.bucket(sb, bsize)
            if not abucket or not bbucket:
                continue
            same = skip_same and asize == bsize
            for i, a in enumerate(abucket):
                for j, b in enumerate(bbucket):
                    if same and i == j:
                        continue
                    yield a, b

    def _emit(self, out: list[_Entry], term: Term, depth: int) -> None:
        out.append(_Entry(term, depth))

    def _compose(self, sort: Sort, size: int, out: list[_Entry]) -> None:
        budget = size - 1  # children node budget
        if sort.kind == "scalar" and sort.scalar is ScalarSort.BOOL:
            self._compose_bool(size, budget, out)
        elif sort.kind == "scalar":
            self._compose_scalar(sort, size, budget, out)
        elif sort.kind == "set":
            self._compose_set(sort, size, budget, out)
        elif sort.kind == "map":
            self._compose_map(sort, size, budget, out)
        elif sort.kind == "tuple":
            self._compose_tuple(sort, size, budget, out)
        # Shared productions: map lookups, tuple projections, reductions.
        self._reads_into(sort, size, budget, out)
        if sort.kind == "scalar" and not _contains_complex(sort):
            self._scalar_ite(sort, size, budget, out)

    def _compose_bool(self, size: int, budget: int, out: list[_Entry]) -> None:
        cap = self.cfg.depth - 1  # max child depth under a new node
        for a, b in self._pairs(E.BOOL, E.BOOL, budget, commutative=True):
            if a.depth > cap or b.depth > cap:
                continue
            if _is_literal(a.term) or _is_literal(b.term):
                continue
            d = 1 + max(a.depth, b.depth)
            self._emit(out, E.and_(a.term, b.term), d)
            self._emit(out, E.or_(a.term, b.term), d)
        if budget >= 1:
            for a in self.bucket(E.BOOL, budget):
                # Double negation and negated comparisons have smaller duals.
                if a.depth > cap or _is_literal(a.term) \
                        or a.term.kind in ("Not", "Gt", "Geq"):
                    continue
                self._emit(out, E.not_(a.term), 1 + a.depth)
        for s in self.closure:
            if s.kind != "scalar":
                continue
            boolean = s.scalar is ScalarSort.BOOL
            for a, b in self._pairs(s, s, budget, commutative=True):
                if a.depth > cap or b.depth > cap:
                    continue
                if _is_literal(a.term) and _is_literal(b.term):
                    continue
                # (= true x) is x, (= false x) is (not x)
                if boolean and (_is_literal(a.term) or _is_literal(b.term)):
                    continue
                self._emit(out, E.eq(a.term, b.term), 1 + max(a.depth, b.depth))
            if s.scalar.supports_comparison:
                for a, b in self._ordered_pairs(s, s, budget, skip_same=True):
                    if a.depth > cap or b.depth > cap:
                        continue
                    if _is_literal(a.term) and _is_literal(b.term):
                        continue
                    d = 1 + max(a.depth, b.depth)
                    self._emit(out, E.gt(a.term, b.term), d)
                    self._emit(out, E.geq(a.term, b.term), d)
        for s in self.closure:
            if s.kind != "set":
                continue
            elem = E.scalar(s.elem)
            for x, st in self._ordered_pairs(elem, s, budget, skip_same=False):
                if x.depth > cap or st.depth > cap:
                    continue
                if st.term.kind in ("EmptySet", "Singleton"):
                    continue  # reducible to false / equality
                self._emit(out, E.member(x.term, st.term), 1 + max(x.depth, st.depth))
            for a, b in self._ordered_pairs(s, s, budget, skip_same=True):
                if a.depth > cap or b.depth > cap:
                    continue
                if a.term.kind == "EmptySet":
                    continue  # trivially true
                self._emit(out, E.subset(a.term, b.term), 1 + max(a.depth, b.depth))
        self._bool_reduces(size, budget, out)

    def _bool_reduces(self, size: int, budget: int, out: list[_Entry]) -> None:
        # Boolean reductions enter the query grammar with the node-ID
        # productions: they exist to aggregate per-node slots.
        if not self.cfg.non_idempotent:
            return
        cap = self.cfg.depth - 1
        for s in self.closure:
            if s.kind != "map" or s.value != E.BOOL:
                continue
            for m in self.bucket(s, budget - 1):
                if m.depth > cap or not self._reducible_map(m.term):
                    continue
                d = 1 + max(m.depth, 1)
                self._emit(out, E.reduce_(m.term, "OrAll", E.false()), d)
                self._emit(out, E.reduce_(m.term, "AndAll", E.true()), d)

    def _compose_scalar(self, sort: Sort, size: int, budget: int, out: list[_Entry]) -> None:
        sc = sort.scalar
        cap = self.cfg.depth - 1
        if sc.supports_arithmetic:
            for a, b in self._pairs(sort, sort, budget, commutative=True):
                if a.depth > cap or b.depth > cap:
                    continue
                if _is_literal(a.term) and _is_literal(b.term):
                    continue
                if self._is_zero(a.term) or self._is_zero(b.term):
                    continue
                self._emit(out, E.add(a.term, b.term), 1 + max(a.depth, b.depth))
            for a, b in self._ordered_pairs(sort, sort, budget, skip_same=True):
                if a.depth > cap or b.depth > cap:
                    continue
                if _is_literal(a.term) and _is_literal(b.term):
                    continue
                if self._is_zero(b.term):
                    continue
                self._emit(out, E.sub(a.term, b.term), 1 + max(a.depth, b.depth))
            # Sum reduce over Int-valued maps (node-ID aggregation)
            if self.cfg.non_idempotent:
                for s in self.closure:
                    if s.kind == "map" and s.value == sort:
                        for m in self.bucket(s, budget - 1):
                            if m.depth <= cap and self._reducible_map(m.term):
                                self._emit(
                                    out,
                                    E.reduce_(m.term, "Sum", E.ilit(0)),
                                    1 + max(m.depth, 1),
                                )
        # Join reduce over maps whose values carry this scalar lattice
        for s in self.closure:
            if s.kind != "map" or s.value != sort:
                continue
            for lt in self.ltypes.get(s, ()):
                for m in self.bucket(s, budget - 1):
                    if m.depth <= cap and self._reducible_map(m.term):
                        init = bottom_term(lt.value)
                        self._emit(
                            out,
                            E.reduce_(m.term, "JoinAll", init, ltype=lt.value),
                            1 + max(m.depth, E.term_depth(init)),
                        )

    @staticmethod
    def _is_zero(t: Term) -> bool:
        return t.kind == "IntLit" and t.value == 0

    def _scalar_ite(self, sort: Sort, size: int, budget: int, out: list[_Entry]) -> None:
        for cond in self.seeds:
            csize = E.term_size(cond.term)
            cdepth = E.term_depth(cond.term)
            rest = budget - csize
            if rest < 2 or cdepth >= self.cfg.depth:
                continue
            cap = self.cfg.depth - 1
            for a, b in self._ordered_pairs(sort, sort, rest, skip_same=True):
                if a.depth > cap or b.depth > cap:
                    continue
                if _is_literal(a.term) and _is_literal(b.term) and sort == E.BOOL:
                    continue
                d = 1 + max(cdepth, a.depth, b.depth)
                self._emit(out, E.ite(cond.term, a.term, b.term), d)

    def _compose_set(self, sort: Sort, size: int, budget: int, out: list[_Entry]) -> None:
        elem = E.scalar(sort.elem)
        cap = self.cfg.depth - 1
        for x in self.bucket(elem, budget):
            if x.depth <= cap:
                self._emit(out, E.singleton(x.term), 1 + x.depth)
        for a, b in self._pairs(sort, sort, budget, commutative=True):
            if a.depth > cap or b.depth > cap:
                continue
            if a.term.kind == "EmptySet" or b.term.kind == "EmptySet":
                continue
            self._emit(out, E.union(a.term, b.term), 1 + max(a.depth, b.depth))
        for a, b in self._ordered_pairs(sort, sort, budget, skip_same=True):
            if a.depth > cap or b.depth > cap:
                continue
            if a.term.kind == "EmptySet" or b.term.kind == "EmptySet":
                continue
            self._emit(out, E.diff(a.term, b.term), 1 + max(a.depth, b.depth))

    def _map_ltypes(self, sort: Sort) -> tuple[LatticeType, ...]:
        got = self.ltypes.get(sort, ())
        if got:
            return got
        # No lattice annotation known for this map shape; nothing to join.
        return ()

    def _compose_map(self, sort: Sort, size: int, budget: int, out: list[_Entry]) -> None:
        # Map keys identify entities, which only ever come from inputs; every
        # shipped design keys entries by an operation or query argument.
        cap = self.cfg.depth - 1
        key = E.scalar(sort.key)
        keys = [e for e in self.bucket(key, 1) if e.term.kind == "VarRef"]
        for k in keys:
            for v in self.bucket(sort.value, budget - 1):
                if v.depth <= cap:
                    self._emit(out, E.singleton_map(k.term, v.term), 1 + v.depth)
        for lt in self._map_ltypes(sort):
            for a, b in self._pairs(sort, sort, budget, commutative=True):
                if a.depth > cap or b.depth > cap:
                    continue
                if a.term.kind == "EmptyMap" or b.term.kind == "EmptyMap":
                    continue
                self._emit(
                    out,
                    E.map_join_union(lt.value, a.term, b.term),
                    1 + max(a.depth, b.depth),
                )

    def _compose_tuple(self, sort: Sort, size: int, budget: int, out: list[_Entry]) -> None:
        n = len(sort.elements)
        if n > budget:
            return
        cap = self.cfg.depth - 1
        def parts(i: int, remaining: int, acc: list[_Entry]):
            if i == n - 1:
                for e in self.bucket(sort.elements[i], remaining):
                    if e.depth <= cap:
                        yield acc + [e]
                return
            for s in range(1, remaining - (n - 1 - i) + 1):
                for e in self.bucket(sort.elements[i], s):
                    if e.depth <= cap:
                        yield from parts(i + 1, remaining - s, acc + [e])
        for combo in parts(0, budget, []):
            d = 1 + max(e.depth for e in combo)
            self._emit(out, E.tuple_make(*(e.term for e in combo)), d)

    def _reducible_map(self, t: Term) -> bool:
        # Reductions aggregate replicated state, not freshly built maps.
        return t.kind in ("VarRef", "TupleGet")

    def _reads_into(self, sort: Sort, size: int, budget: int, out: list[_Entry]) -> None:
        cap = self.cfg.depth - 1
        # Own-slot reads for non-idempotent transitions.
        for base, bsize, mtype in self.state_reads:
            if E.struct_sort(mtype.value) != sort:
                continue
            dsize = budget - bsize - 1
            if dsize >= 1:
                for dflt in self.bucket(sort, dsize):
                    if dflt.depth > cap or bsize > cap:
                        continue
                    d = 1 + max(bsize, 1, dflt.depth)
                    self._emit(
                        out,
                        E.map_get(base, E.var(NODE_VAR), dflt.term),
                        d,
                    )
        # General lookups / projections (queries and map-valued reads).
        for s in self.closure:
            if s.kind == "map" and s.value == sort:
                keys = [
                    _Entry(E.var(name), 1)
                    for name, es in self.env.items()
                    if E.erase(es) == E.scalar(s.key) and name != STATE_VAR
                ]
                if not keys:
                    continue
                for msize in range(1, budget - 1):
                    for m in self.bucket(s, msize):
                        if m.depth > cap or not self._lookup_base(m.term):
                            continue
                        for k in keys:
                            dsize = budget - msize - 1
                            for dflt in self.bucket(sort, dsize):
                                if dflt.depth > cap:
                                    continue
                                d = 1 + max(m.depth, 1, dflt.depth)
                                self._emit(out, E.map_get(m.term, k.term, dflt.term), d)
            if s.kind == "tuple":
                for i, es in enumerate(s.elements):
                    if es != sort:
                        continue
                    for tt in self.bucket(s, budget):
                        if tt.depth > cap or tt.term.kind == "TupleMake":
                            continue  # projections of builds fold away
                        self._emit(out, E.tuple_get(tt.term, i), 1 + tt.depth)

    def _lookup_base(self, t: Term) -> bool:
        """Map operands worth looking up: state reads and merged maps."""
        if self.cfg.role == ROLE_STATE_TRANSITION and self.state_reads:
            return False  # transitions read state only via own-slot lookups
        return t.kind in ("VarRef", "TupleGet", "MapJoinUnion", "MapGetDefault")


# ---------------------------------------------------------------------------
# Role-specific stream builders


def transition_env_sorts(spec: SequentialSpec, state_type: LatticeType) -> dict[str, Sort]:
    env: dict[str, Sort] = {n: E.scalar(s) for n, s in spec.log_fields()}
    if spec.non_idempotent:
        env[STATE_VAR] = E.lattice_sort(state_type)
        env[NODE_VAR] = E.scalar(ScalarSort.NODE_ID)
    return env


def query_env_sorts(spec: SequentialSpec, state_type: LatticeType) -> dict[str, Sort]:
    env: dict[str, Sort] = {n: E.scalar(s) for n, s in spec.query_fields}
    env[STATE_VAR] = E.lattice_sort(state_type)
    return env


def transition_stream(
    spec: SequentialSpec, state_type: LatticeType, depth: int
) -> SizedTermStream:
    cfg = config_for_spec(spec, depth, ROLE_STATE_TRANSITION)
    return enumerate_terms(cfg, transition_env_sorts(spec, state_type), E.lattice_sort(state_type))


def query_stream(
    spec: SequentialSpec, state_type: LatticeType, depth: int
) -> SizedTermStream:
    cfg = config_for_spec(spec, depth, ROLE_QUERY)
    return enumerate_terms(cfg, query_env_sorts(spec, state_type), spec.query_result_sort())


def initial_state_candidates(
    spec: SequentialSpec, state_type: LatticeType, depth: int
) -> list[Any]:
    cfg = config_for_spec(spec, depth, ROLE_INITIAL_STATE)
    return enumerate_initial_states(cfg, state_type)


def paired_candidates(
    f_stream: SizedTermStream, q_stream: SizedTermStream
) -> Iterator[tuple[Term, Term]]:
    """(transition, query) pairs interleaved by combined size."""
    cap = f_stream.max_size + q_stream.max_size
    for total in range(2, cap + 1):
        for fsize in range(1, total):
            qsize = total - fsize
            fb = f_stream.bucket(fsize)
            if not fb:
                continue
            qb = q_stream.bucket(qsize)
            if not qb:
                continue
            for f in fb:
                for q in qb:
                    yield f, q
