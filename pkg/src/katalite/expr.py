"""Typed expression language shared by sequential specs and synthesized logic.

A ``Term`` is a small immutable AST. The same grammar writes sequential
state transitions, queries, operation orderings and the synthesized update
deltas of CRDT designs. Evaluation is pure and total over well-sorted
inputs; ``compile_term`` turns a term into a closure for hot loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .lattice import (
    EMPTY_MAP,
    EMPTY_SET,
    FrozenMap,
    LatticeType,
    ScalarSort,
    bottom,
    join_fn,
    type_from_json,
    type_to_json,
)


class TypecheckError(Exception):
    def __init__(self, message: str, term: "Term | None" = None):
        super().__init__(message)
        self.term = term


class EvalError(Exception):
    pass


# ---------------------------------------------------------------------------
# Sorts


@dataclass(frozen=True)
class Sort:
    """Sort of a term: scalar, set, map, tuple, or a lattice-typed slot.

    ``Lattice`` sorts annotate CRDT-side variables (the replica state); for
    typechecking they behave like their structural shape, obtained via
    :func:`erase`.
    """

    kind: str  # "scalar" | "set" | "map" | "tuple" | "lattice"
    scalar: ScalarSort | None = None
    elem: ScalarSort | None = None
    key: ScalarSort | None = None
    value: "Sort | None" = None
    elements: "tuple[Sort, ...]" = ()
    ltype: LatticeType | None = None

    def __repr__(self) -> str:
        if self.kind == "scalar":
            return self.scalar.value
        if self.kind == "set":
            return f"SetOf({self.elem.value})"
        if self.kind == "map":
            return f"MapOf({self.key.value}, {self.value!r})"
        if self.kind == "tuple":
            return "TupleOf(%s)" % ", ".join(repr(e) for e in self.elements)
        return f"Lattice({self.ltype!r})"


def scalar(s: ScalarSort) -> Sort:
    return Sort("scalar", scalar=s)


BOOL = scalar(ScalarSort.BOOL)
INT = scalar(ScalarSort.INT)
OPAQUE = scalar(ScalarSort.OPAQUE_INT)
CLOCK = scalar(ScalarSort.CLOCK_INT)
ENUM = scalar(ScalarSort.ENUM_INT)
NODE = scalar(ScalarSort.NODE_ID)


def set_of(elem: ScalarSort) -> Sort:
    return Sort("set", elem=elem)


def map_of(key: ScalarSort, value: Sort) -> Sort:
    return Sort("map", key=key, value=value)


def tuple_of(*elements: Sort) -> Sort:
    return Sort("tuple", elements=tuple(elements))


def lattice_sort(t: LatticeType) -> Sort:
    return Sort("lattice", ltype=t)


def struct_sort(t: LatticeType) -> Sort:
    """The structural sort of values of lattice type ``t``."""
    if t.kind in ("or_bool", "neg_bool"):
        return BOOL
    if t.kind == "max_int":
        return scalar(t.base)
    if t.kind == "lset":
        return set_of(t.elem)
    if t.kind == "lmap":
        return map_of(t.key, struct_sort(t.value))
    if t.kind == "lex":
        return tuple_of(struct_sort(t.first), struct_sort(t.second))
    if t.kind == "tuple":
        return tuple_of(*(struct_sort(e) for e in t.elements))
    raise TypecheckError(f"unknown lattice kind {t.kind}")


def erase(s: Sort) -> Sort:
    """Collapse Lattice sorts to their structural shape."""
    return struct_sort(s.ltype) if s.kind == "lattice" else s


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Term:
    """One AST node. ``args`` are child terms; the rest is per-kind payload."""

    kind: str
    args: "tuple[Term, ...]" = ()
    name: str | None = None  # VarRef
    value: Any = None  # literals
    sort: ScalarSort | None = None  # literal / empty-set element sort
    vsort: Sort | None = None  # EmptyMap value sort
    ltype: LatticeType | None = None  # lattice-aware nodes
    index: int | None = None  # TupleGet
    reducer: str | None = None  # Reduce: "Sum" | "OrAll" | "AndAll" | "JoinAll"

    def __repr__(self) -> str:
        return pretty(self)


# Constructor helpers. Specs and designs are written with these.

def true() -> Term:
    return Term("BoolLit", value=True)


def false() -> Term:
    return Term("BoolLit", value=False)


def blit(v: bool) -> Term:
    return Term("BoolLit", value=bool(v))


def ilit(v: int, sort: ScalarSort = ScalarSort.INT) -> Term:
    return Term("IntLit", value=int(v), sort=sort)


def var(name: str) -> Term:
    return Term("VarRef", name=name)


def and_(a: Term, b: Term) -> Term:
    return Term("And", args=(a, b))


def or_(a: Term, b: Term) -> Term:
    return Term("Or", args=(a, b))


def not_(a: Term) -> Term:
    return Term("Not", args=(a,))


def eq(a: Term, b: Term) -> Term:
    return Term("Eq", args=(a, b))


def gt(a: Term, b: Term) -> Term:
    return Term("Gt", args=(a, b))


def geq(a: Term, b: Term) -> Term:
    return Term("Geq", args=(a, b))


def add(a: Term, b: Term) -> Term:
    return Term("Add", args=(a, b))


def sub(a: Term, b: Term) -> Term:
    return Term("Sub", args=(a, b))


def ite(c: Term, t: Term, e: Term) -> Term:
    return Term("Ite", args=(c, t, e))


def empty_set(elem: ScalarSort) -> Term:
    return Term("EmptySet", sort=elem)


def singleton(x: Term) -> Term:
    return Term("Singleton", args=(x,))


def union(a: Term, b: Term) -> Term:
    return Term("Union", args=(a, b))


def diff(a: Term, b: Term) -> Term:
    return Term("Diff", args=(a, b))


def member(x: Term, s: Term) -> Term:
    return Term("Member", args=(x, s))


def subset(a: Term, b: Term) -> Term:
    return Term("Subset", args=(a, b))


def empty_map(key: ScalarSort, vsort: Sort) -> Term:
    return Term("EmptyMap", sort=key, vsort=vsort)


def singleton_map(k: Term, v: Term) -> Term:
    return Term("SingletonMap", args=(k, v))


def map_join_union(value_ltype: LatticeType, a: Term, b: Term) -> Term:
    return Term("MapJoinUnion", args=(a, b), ltype=value_ltype)


def map_get(m: Term, k: Term, default: Term) -> Term:
    return Term("MapGetDefault", args=(m, k, default))


def tuple_get(t: Term, index: int) -> Term:
    return Term("TupleGet", args=(t,), index=index)


def tuple_make(*items: Term) -> Term:
    return Term("TupleMake", args=tuple(items))


def lattice_join(t: LatticeType, a: Term, b: Term) -> Term:
    return Term("LatticeJoin", args=(a, b), ltype=t)


def lattice_bottom(t: LatticeType) -> Term:
    return Term("LatticeBottom", ltype=t)


def reduce_(m: Term, reducer: str, init: Term, ltype: LatticeType | None = None) -> Term:
    if reducer not in ("Sum", "OrAll", "AndAll", "JoinAll"):
        raise TypecheckError(f"unknown reducer {reducer!r}")
    if reducer == "JoinAll" and ltype is None:
        raise TypecheckError("JoinAll reduce needs the value lattice type")
    return Term("Reduce", args=(m, init), reducer=reducer, ltype=ltype)


# ---------------------------------------------------------------------------
# Environment


@dataclass(frozen=True)
class Env:
    """Variable bindings: a sort and a concrete value per name."""

    sorts: Mapping[str, Sort] = field(default_factory=dict)
    values: Mapping[str, Any] = field(default_factory=dict)

    def bind(self, name: str, sort: Sort, value: Any) -> "Env":
        s = dict(self.sorts)
        v = dict(self.values)
        s[name] = sort
        v[name] = value
        return Env(s, v)


# ---------------------------------------------------------------------------
# Metrics


def term_size(t: Term) -> int:
    return 1 + sum(term_size(a) for a in t.args)


def term_depth(t: Term) -> int:
    if not t.args:
        return 1
    return 1 + max(term_depth(a) for a in t.args)


# ---------------------------------------------------------------------------
# Typechecking


def _fail(msg: str, t: Term):
    raise TypecheckError(f"{msg} (in {pretty(t)})", t)


def typecheck(term: Term, env_sorts: Mapping[str, Sort]) -> Sort:
    """Return the structural sort of ``term`` or raise :class:`TypecheckError`.

    Enforces the sort discipline of the specialized integer kinds: no
    arithmetic on opaque/enum/clock/node values, no order comparison on
    enums, equality everywhere.
    """
    k = term.kind
    if k == "BoolLit":
        return BOOL
    if k == "IntLit":
        if term.sort is ScalarSort.BOOL:
            _fail("integer literal with Bool sort", term)
        return scalar(term.sort)
    if k == "VarRef":
        s = env_sorts.get(term.name)
        if s is None:
            _fail(f"unbound variable {term.name!r}", term)
        return erase(s)
    if k in ("And", "Or"):
        for a in term.args:
            if typecheck(a, env_sorts) != BOOL:
                _fail(f"{k} needs Bool operands", term)
        return BOOL
    if k == "Not":
        if typecheck(term.args[0], env_sorts) != BOOL:
            _fail("Not needs a Bool operand", term)
        return BOOL
    if k == "Eq":
        sa = typecheck(term.args[0], env_sorts)
        sb = typecheck(term.args[1], env_sorts)
        if sa != sb:
            _fail(f"Eq on mismatched sorts {sa!r} vs {sb!r}", term)
        return BOOL
    if k in ("Gt", "Geq"):
        sa = typecheck(term.args[0], env_sorts)
        sb = typecheck(term.args[1], env_sorts)
        if sa != sb or sa.kind != "scalar" or not sa.scalar.supports_comparison:
            _fail(f"{k} needs comparable scalar operands, got {sa!r}, {sb!r}", term)
        return BOOL
    if k in ("Add", "Sub"):
        sa = typecheck(term.args[0], env_sorts)
        sb = typecheck(term.args[1], env_sorts)
        if sa != sb or sa.kind != "scalar" or not sa.scalar.supports_arithmetic:
            _fail(f"{k} needs Int operands, got {sa!r}, {sb!r}", term)
        return sa
    if k == "Ite":
        if typecheck(term.args[0], env_sorts) != BOOL:
            _fail("Ite condition must be Bool", term)
        st = typecheck(term.args[1], env_sorts)
        se = typecheck(term.args[2], env_sorts)
        if st != se:
            _fail(f"Ite branches disagree: {st!r} vs {se!r}", term)
        return st
    if k == "EmptySet":
        return set_of(term.sort)
    if k == "Singleton":
        se = typecheck(term.args[0], env_sorts)
        if se.kind != "scalar":
            _fail("set elements must be scalars", term)
        return set_of(se.scalar)
    if k in ("Union", "Diff"):
        sa = typecheck(term.args[0], env_sorts)
        sb = typecheck(term.args[1], env_sorts)
        if sa != sb or sa.kind != "set":
            _fail(f"{k} needs equal set sorts", term)
        return sa
    if k == "Member":
        sx = typecheck(term.args[0], env_sorts)
        ss = typecheck(term.args[1], env_sorts)
        if ss.kind != "set" or sx != scalar(ss.elem):
            _fail("Member needs elem sort matching the set", term)
        return BOOL
    if k == "Subset":
        sa = typecheck(term.args[0], env_sorts)
        sb = typecheck(term.args[1], env_sorts)
        if sa != sb or sa.kind != "set":
            _fail("Subset needs equal set sorts", term)
        return BOOL
    if k == "EmptyMap":
        return map_of(term.sort, erase(term.vsort))
    if k == "SingletonMap":
        sk = typecheck(term.args[0], env_sorts)
        sv = typecheck(term.args[1], env_sorts)
        if sk.kind != "scalar":
            _fail("map keys must be scalars", term)
        return map_of(sk.scalar, sv)
    if k == "MapJoinUnion":
        sa = typecheck(term.args[0], env_sorts)
        sb = typecheck(term.args[1], env_sorts)
        if sa != sb or sa.kind != "map":
            _fail("MapJoinUnion needs equal map sorts", term)
        if erase(struct_sort(term.ltype)) != sa.value:
            _fail("MapJoinUnion value lattice does not match map value sort", term)
        return sa
    if k == "MapGetDefault":
        sm = typecheck(term.args[0], env_sorts)
        sk = typecheck(term.args[1], env_sorts)
        sd = typecheck(term.args[2], env_sorts)
        if sm.kind != "map":
            _fail("MapGetDefault needs a map", term)
        if sk != scalar(sm.key):
            _fail("MapGetDefault key sort mismatch", term)
        if sd != sm.value:
            _fail("MapGetDefault default sort mismatch", term)
        return sm.value
    if k == "TupleGet":
        st = typecheck(term.args[0], env_sorts)
        if st.kind != "tuple" or not (0 <= term.index < len(st.elements)):
            _fail("TupleGet on non-tuple or bad index", term)
        return st.elements[term.index]
    if k == "TupleMake":
        return tuple_of(*(typecheck(a, env_sorts) for a in term.args))
    if k == "LatticeJoin":
        want = struct_sort(term.ltype)
        for a in term.args:
            if typecheck(a, env_sorts) != want:
                _fail("LatticeJoin operand does not match its lattice type", term)
        return want
    if k == "LatticeBottom":
        return struct_sort(term.ltype)
    if k == "Reduce":
        sm = typecheck(term.args[0], env_sorts)
        si = typecheck(term.args[1], env_sorts)
        if sm.kind != "map":
            _fail("Reduce folds over map values", term)
        if si != sm.value:
            _fail("Reduce init sort must match map value sort", term)
        r = term.reducer
        if r == "Sum":
            if sm.value != INT:
                _fail("Sum reduce needs Int map values", term)
        elif r in ("OrAll", "AndAll"):
            if sm.value != BOOL:
                _fail(f"{r} reduce needs Bool map values", term)
        else:  # JoinAll
            if struct_sort(term.ltype) != sm.value:
                _fail("JoinAll lattice does not match map value sort", term)
        return sm.value
    _fail(f"unknown term kind {k!r}", term)


# ---------------------------------------------------------------------------
# Evaluation


def eval_term(term: Term, env: Env | Mapping[str, Any]) -> Any:
    """Evaluate ``term``; deterministic and total over well-sorted inputs."""
    values = env.values if isinstance(env, Env) else env
    return compile_term(term)(values)


def compile_term(term: Term) -> Callable[[Mapping[str, Any]], Any]:
    """Build a closure evaluating ``term`` against a name->value mapping."""
    k = term.kind
    if k == "BoolLit" or k == "IntLit":
        v = term.value
        return lambda env: v
    if k == "VarRef":
        name = term.name
        def run(env):
            try:
                return env[name]
            except KeyError:
                raise EvalError(f"unbound variable {name!r}")
        return run
    sub_fns = [compile_term(a) for a in term.args]
    if k == "And":
        fa, fb = sub_fns
        return lambda env: fa(env) and fb(env)
    if k == "Or":
        fa, fb = sub_fns
        return lambda env: fa(env) or fb(env)
    if k == "Not":
        (fa,) = sub_fns
        return lambda env: not fa(env)
    if k == "Eq":
        fa, fb = sub_fns
        return lambda env: fa(env) == fb(env)
    if k == "Gt":
        fa, fb = sub_fns
        return lambda env: fa(env) > fb(env)
    if k == "Geq":
        fa, fb = sub_fns
        return lambda env: fa(env) >= fb(env)
    if k == "Add":
        fa, fb = sub_fns
        return lambda env: fa(env) + fb(env)
    if k == "Sub":
        fa, fb = sub_fns
        return lambda env: fa(env) - fb(env)
    if k == "Ite":
        fc, ft, fe = sub_fns
        return lambda env: ft(env) if fc(env) else fe(env)
    if k == "EmptySet":
        return lambda env: EMPTY_SET
    if k == "Singleton":
        (fx,) = sub_fns
        return lambda env: frozenset((fx(env),))
    if k == "Union":
        fa, fb = sub_fns
        return lambda env: fa(env) | fb(env)
    if k == "Diff":
        fa, fb = sub_fns
        return lambda env: fa(env) - fb(env)
    if k == "Member":
        fx, fs = sub_fns
        return lambda env: fx(env) in fs(env)
    if k == "Subset":
        fa, fb = sub_fns
        return lambda env: fa(env) <= fb(env)
    if k == "EmptyMap":
        return lambda env: EMPTY_MAP
    if k == "SingletonMap":
        fk, fv = sub_fns
        return lambda env: FrozenMap(((fk(env), fv(env)),))
    if k == "MapJoinUnion":
        fa, fb = sub_fns
        jv = join_fn(term.ltype)
        def run(env):
            a = fa(env)
            b = fb(env)
            if not b:
                return a
            if not a:
                return b
            out = dict(a)
            for key, w in b.items():
                if key in out:
                    out[key] = jv(out[key], w)
                else:
                    out[key] = w
            return FrozenMap(out)
        return run
    if k == "MapGetDefault":
        fm, fk, fd = sub_fns
        def run(env):
            m = fm(env)
            key = fk(env)
            if key in m:
                return m[key]
            return fd(env)
        return run
    if k == "TupleGet":
        (ft,) = sub_fns
        i = term.index
        return lambda env: ft(env)[i]
    if k == "TupleMake":
        fns = tuple(sub_fns)
        return lambda env: tuple(f(env) for f in fns)
    if k == "LatticeJoin":
        fa, fb = sub_fns
        j = join_fn(term.ltype)
        return lambda env: j(fa(env), fb(env))
    if k == "LatticeBottom":
        v = bottom(term.ltype)
        return lambda env: v
    if k == "Reduce":
        fm, fi = sub_fns
        r = term.reducer
        if r == "Sum":
            return lambda env: fi(env) + sum(fm(env).values())
        if r == "OrAll":
            def run(env):
                acc = fi(env)
                for v in fm(env).values():
                    acc = acc or v
                return acc
            return run
        if r == "AndAll":
            def run(env):
                acc = fi(env)
                for v in fm(env).values():
                    acc = acc and v
                return acc
            return run
        j = join_fn(term.ltype)
        def run(env):
            acc = fi(env)
            for v in fm(env).values():
                acc = j(acc, v)
            return acc
        return run
    raise EvalError(f"unknown term kind {k!r}")


# ---------------------------------------------------------------------------
# Serialization and pretty printing


def term_to_json(t: Term) -> dict:
    out: dict[str, Any] = {"kind": t.kind}
    if t.args:
        out["args"] = [term_to_json(a) for a in t.args]
    if t.name is not None:
        out["name"] = t.name
    if t.value is not None or t.kind == "BoolLit":
        out["value"] = t.value
    if t.sort is not None:
        out["sort"] = t.sort.value
    if t.vsort is not None:
        out["value_sort"] = sort_to_json(t.vsort)
    if t.ltype is not None:
        out["ltype"] = type_to_json(t.ltype)
    if t.index is not None:
        out["index"] = t.index
    if t.reducer is not None:
        out["reducer"] = t.reducer
    return out


def term_from_json(data: dict) -> Term:
    return Term(
        kind=data["kind"],
        args=tuple(term_from_json(a) for a in data.get("args", ())),
        name=data.get("name"),
        value=data.get("value"),
        sort=ScalarSort(data["sort"]) if "sort" in data else None,
        vsort=sort_from_json(data["value_sort"]) if "value_sort" in data else None,
        ltype=type_from_json(data["ltype"]) if "ltype" in data else None,
        index=data.get("index"),
        reducer=data.get("reducer"),
    )


def sort_to_json(s: Sort) -> dict:
    if s.kind == "scalar":
        return {"kind": "Scalar", "scalar": s.scalar.value}
    if s.kind == "set":
        return {"kind": "SetOf", "elem": s.elem.value}
    if s.kind == "map":
        return {"kind": "MapOf", "key": s.key.value, "value": sort_to_json(s.value)}
    if s.kind == "tuple":
        return {"kind": "TupleOf", "elements": [sort_to_json(e) for e in s.elements]}
    return {"kind": "Lattice", "ltype": type_to_json(s.ltype)}


def sort_from_json(data: dict) -> Sort:
    kind = data["kind"]
    if kind == "Scalar":
        return scalar(ScalarSort(data["scalar"]))
    if kind == "SetOf":
        return set_of(ScalarSort(data["elem"]))
    if kind == "MapOf":
        return map_of(ScalarSort(data["key"]), sort_from_json(data["value"]))
    if kind == "TupleOf":
        return tuple_of(*(sort_from_json(e) for e in data["elements"]))
    if kind == "Lattice":
        return lattice_sort(type_from_json(data["ltype"]))
    raise TypecheckError(f"unknown sort kind {kind!r}")


_SYMBOLS = {
    "And": "and",
    "Or": "or",
    "Not": "not",
    "Eq": "=",
    "Gt": ">",
    "Geq": ">=",
    "Add": "+",
    "Sub": "-",
    "Ite": "if",
    "Singleton": "singleton",
    "Union": "union",
    "Diff": "diff",
    "Member": "member",
    "Subset": "subset",
    "SingletonMap": "map-entry",
    "MapJoinUnion": "map-union",
    "MapGetDefault": "get",
    "TupleMake": "tuple",
    "LatticeJoin": "join",
}


def pretty(t: Term) -> str:
    """Compact s-expression rendering for reports and logs."""
    k = t.kind
    if k == "BoolLit":
        return "true" if t.value else "false"
    if k == "IntLit":
        return str(t.value)
    if k == "VarRef":
        return t.name
    if k == "EmptySet":
        return "(empty-set)"
    if k == "EmptyMap":
        return "(empty-map)"
    if k == "LatticeBottom":
        return f"(bottom {t.ltype!r})"
    if k == "TupleGet":
        return f"(nth {t.index} {pretty(t.args[0])})"
    if k == "Reduce":
        return "(reduce %s %s %s)" % (
            t.reducer.lower(),
            pretty(t.args[0]),
            pretty(t.args[1]),
        )
    head = _SYMBOLS.get(k, k.lower())
    inner = " ".join(pretty(a) for a in t.args)
    return f"({head} {inner})"
