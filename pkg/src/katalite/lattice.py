"""Semilattice type system: types, values, joins, bottoms, order, validity.

Every CRDT state in this package is a value of some ``LatticeType``. The
merge function of a replica is always the lattice join, so associativity,
commutativity and idempotence of merging hold by construction rather than
by per-design proof.

Values are plain immutable Python data:

* ``OrBool`` / ``NegBool``  -> ``bool``
* ``MaxInt``                -> ``int``
* ``LSet``                  -> ``frozenset``
* ``LMap``                  -> ``FrozenMap``
* ``LexProduct``            -> 2-``tuple``
* ``FreeTuple``             -> n-``tuple``
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Iterator, Mapping


class LatticeError(Exception):
    """Structural mismatch between a lattice type and a value."""


class ScalarSort(enum.Enum):
    BOOL = "Bool"
    INT = "Int"
    OPAQUE_INT = "OpaqueInt"
    CLOCK_INT = "ClockInt"
    ENUM_INT = "EnumInt"
    NODE_ID = "NodeID"

    @property
    def is_integer(self) -> bool:
        return self is not ScalarSort.BOOL

    @property
    def supports_comparison(self) -> bool:
        # EnumInt is equality-only; clocks and opaques compare but have no
        # arithmetic.
        return self in (ScalarSort.INT, ScalarSort.OPAQUE_INT, ScalarSort.CLOCK_INT)

    @property
    def supports_arithmetic(self) -> bool:
        return self is ScalarSort.INT

    @property
    def nonnegative(self) -> bool:
        return self in (ScalarSort.CLOCK_INT, ScalarSort.NODE_ID)


# Canonical ordering of scalar sorts, used for deterministic enumeration.
SCALAR_ORDER = {s: i for i, s in enumerate(ScalarSort)}

# Sorts allowed as the base of a MaxInt lattice: max() needs a total order,
# which EnumInt (equality-only) and NodeID (opaque identifiers) do not offer.
MAXINT_BASES = (ScalarSort.INT, ScalarSort.OPAQUE_INT, ScalarSort.CLOCK_INT)


class FrozenMap(Mapping):
    """Immutable, hashable mapping used for LMap values."""

    __slots__ = ("_d", "_hash")

    def __init__(self, items: Any = ()):
        d = dict(items)
        object.__setattr__(self, "_d", d)
        object.__setattr__(self, "_hash", None)

    def __getitem__(self, key):
        return self._d[key]

    def __iter__(self) -> Iterator:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __hash__(self) -> int:
        h = self._hash
        if h is None:
            h = hash(frozenset(self._d.items()))
            object.__setattr__(self, "_hash", h)
        return h

    def __eq__(self, other) -> bool:
        if isinstance(other, FrozenMap):
            return self._d == other._d
        if isinstance(other, dict):
            return self._d == other
        return NotImplemented

    def __repr__(self) -> str:
        items = ", ".join(f"{k!r}: {v!r}" for k, v in sorted(self._d.items()))
        return "{%s}" % items

    def __reduce__(self):
        return (FrozenMap, (tuple(self._d.items()),))

    def set(self, key, value) -> "FrozenMap":
        d = dict(self._d)
        d[key] = value
        return FrozenMap(d)


EMPTY_MAP = FrozenMap()
EMPTY_SET: frozenset = frozenset()


@dataclass(frozen=True)
class LatticeType:
    """A node of the semilattice composition tree.

    ``kind`` is one of ``or_bool``, ``neg_bool``, ``max_int``, ``lset``,
    ``lmap``, ``lex`` and ``tuple``; only the fields relevant to the kind
    are populated. FreeTuple appears only at the top level of a state type.
    """

    kind: str
    base: ScalarSort | None = None  # max_int
    elem: ScalarSort | None = None  # lset
    key: ScalarSort | None = None  # lmap
    value: "LatticeType | None" = None  # lmap
    first: "LatticeType | None" = None  # lex
    second: "LatticeType | None" = None  # lex
    elements: "tuple[LatticeType, ...]" = ()  # tuple

    def __repr__(self) -> str:
        return type_to_str(self)


OR_BOOL = LatticeType("or_bool")
NEG_BOOL = LatticeType("neg_bool")


def max_int(base: ScalarSort) -> LatticeType:
    if base not in MAXINT_BASES:
        raise LatticeError(f"MaxInt base must be comparable, got {base}")
    return LatticeType("max_int", base=base)


def lset(elem: ScalarSort) -> LatticeType:
    return LatticeType("lset", elem=elem)


def lmap(key: ScalarSort, value: LatticeType) -> LatticeType:
    return LatticeType("lmap", key=key, value=value)


def lex_product(first: LatticeType, second: LatticeType) -> LatticeType:
    if first.kind == "tuple" or second.kind == "tuple":
        raise LatticeError("FreeTuple may appear only at the top level")
    return LatticeType("lex", first=first, second=second)


def free_tuple(*elements: LatticeType) -> LatticeType:
    if len(elements) < 2:
        raise LatticeError("FreeTuple needs arity >= 2")
    if any(e.kind == "tuple" for e in elements):
        raise LatticeError("FreeTuple does not nest")
    return LatticeType("tuple", elements=tuple(elements))


_KIND_ORDER = {
    "or_bool": 0,
    "neg_bool": 1,
    "max_int": 2,
    "lset": 3,
    "lmap": 4,
    "lex": 5,
    "tuple": 6,
}


def type_size(t: LatticeType) -> int:
    """Node count, scalar leaves included."""
    if t.kind in ("or_bool", "neg_bool"):
        return 1
    if t.kind in ("max_int", "lset"):
        return 2
    if t.kind == "lmap":
        return 2 + type_size(t.value)
    if t.kind == "lex":
        return 1 + type_size(t.first) + type_size(t.second)
    if t.kind == "tuple":
        return 1 + sum(type_size(e) for e in t.elements)
    raise LatticeError(f"unknown lattice kind {t.kind}")


def type_depth(t: LatticeType) -> int:
    """AST depth with scalar-sort leaves at depth 1.

    FreeTuples count as right-nested pairs so that arity is bounded by the
    depth budget.
    """
    if t.kind in ("or_bool", "neg_bool"):
        return 1
    if t.kind in ("max_int", "lset"):
        return 2
    if t.kind == "lmap":
        return 1 + max(1, type_depth(t.value))
    if t.kind == "lex":
        return 1 + max(type_depth(t.first), type_depth(t.second))
    if t.kind == "tuple":
        depth = type_depth(t.elements[-1])
        for e in reversed(t.elements[:-1]):
            depth = 1 + max(type_depth(e), depth)
        return depth
    raise LatticeError(f"unknown lattice kind {t.kind}")


def type_key(t: LatticeType) -> tuple:
    """Deterministic ordering key following grammar production order."""
    tag = _KIND_ORDER[t.kind]
    if t.kind in ("or_bool", "neg_bool"):
        return (tag,)
    if t.kind == "max_int":
        return (tag, SCALAR_ORDER[t.base])
    if t.kind == "lset":
        return (tag, SCALAR_ORDER[t.elem])
    if t.kind == "lmap":
        return (tag, SCALAR_ORDER[t.key], type_key(t.value))
    if t.kind == "lex":
        return (tag, type_key(t.first), type_key(t.second))
    return (tag,) + tuple(type_key(e) for e in t.elements)


def bottom(t: LatticeType) -> Any:
    """The least element: the identity of join."""
    if t.kind == "or_bool":
        return False
    if t.kind == "neg_bool":
        return True
    if t.kind == "max_int":
        return 0
    if t.kind == "lset":
        return EMPTY_SET
    if t.kind == "lmap":
        return EMPTY_MAP
    if t.kind == "lex":
        return (bottom(t.first), bottom(t.second))
    if t.kind == "tuple":
        return tuple(bottom(e) for e in t.elements)
    raise LatticeError(f"unknown lattice kind {t.kind}")


def _check_scalar(sort: ScalarSort, v: Any) -> bool:
    if sort is ScalarSort.BOOL:
        return isinstance(v, bool)
    if not isinstance(v, int) or isinstance(v, bool):
        return False
    if sort.nonnegative:
        return v >= 0
    return True


def validate(t: LatticeType, v: Any) -> bool:
    """True iff ``v`` structurally matches ``t`` and sort constraints hold."""
    if t.kind in ("or_bool", "neg_bool"):
        return isinstance(v, bool)
    if t.kind == "max_int":
        return _check_scalar(t.base, v)
    if t.kind == "lset":
        return isinstance(v, frozenset) and all(_check_scalar(t.elem, x) for x in v)
    if t.kind == "lmap":
        return isinstance(v, FrozenMap) and all(
            _check_scalar(t.key, k) and validate(t.value, w) for k, w in v.items()
        )
    if t.kind == "lex":
        return (
            isinstance(v, tuple)
            and len(v) == 2
            and validate(t.first, v[0])
            and validate(t.second, v[1])
        )
    if t.kind == "tuple":
        return (
            isinstance(v, tuple)
            and len(v) == len(t.elements)
            and all(validate(e, x) for e, x in zip(t.elements, v))
        )
    return False


def join(t: LatticeType, a: Any, b: Any) -> Any:
    """The least upper bound of ``a`` and ``b`` under ``t``."""
    return join_fn(t)(a, b)


def _joiner(t: LatticeType):
    kind = t.kind
    if kind == "or_bool":
        def j(a, b):
            if not isinstance(a, bool) or not isinstance(b, bool):
                raise LatticeError(f"OrBool join on non-bool {a!r}, {b!r}")
            return a or b
        return j
    if kind == "neg_bool":
        def j(a, b):
            if not isinstance(a, bool) or not isinstance(b, bool):
                raise LatticeError(f"NegBool join on non-bool {a!r}, {b!r}")
            return a and b
        return j
    if kind == "max_int":
        def j(a, b):
            if isinstance(a, bool) or isinstance(b, bool):
                raise LatticeError("MaxInt join on bool")
            return a if a >= b else b
        return j
    if kind == "lset":
        def j(a, b):
            if not isinstance(a, frozenset) or not isinstance(b, frozenset):
                raise LatticeError("LSet join on non-set")
            return a | b
        return j
    if kind == "lmap":
        jv = _joiner(t.value)
        def j(a, b):
            if not isinstance(a, FrozenMap) or not isinstance(b, FrozenMap):
                raise LatticeError("LMap join on non-map")
            if not b:
                return a
            if not a:
                return b
            out = dict(a)
            for k, w in b.items():
                if k in out:
                    out[k] = jv(out[k], w)
                else:
                    out[k] = w
            return FrozenMap(out)
        return j
    if kind == "lex":
        jf = _joiner(t.first)
        js = _joiner(t.second)
        def j(a, b):
            if not isinstance(a, tuple) or not isinstance(b, tuple):
                raise LatticeError("LexProduct join on non-pair")
            a1, b1 = a
            a2, b2 = b
            if a1 == a2:
                return (a1, js(b1, b2))
            up = jf(a1, a2)
            if up == a1:
                return a  # first strictly dominates
            if up == a2:
                return b
            return (up, js(b1, b2))  # incomparable firsts
        return j
    if kind == "tuple":
        joiners = tuple(_joiner(e) for e in t.elements)
        def j(a, b):
            if not isinstance(a, tuple) or not isinstance(b, tuple):
                raise LatticeError("FreeTuple join on non-tuple")
            if len(a) != len(joiners) or len(b) != len(joiners):
                raise LatticeError("FreeTuple arity mismatch")
            return tuple(jj(x, y) for jj, x, y in zip(joiners, a, b))
        return j
    raise LatticeError(f"unknown lattice kind {kind}")


_JOINERS: dict[LatticeType, Any] = {}


def join_fn(t: LatticeType):
    """Compiled join closure for ``t`` (memoized; join is a hot path)."""
    f = _JOINERS.get(t)
    if f is None:
        f = _joiner(t)
        _JOINERS[t] = f
    return f


def semantic_eq(t: LatticeType, a: Any, b: Any) -> bool:
    """Value equality under ``t``.

    Map entries bound to the value type's bottom are retained and compare
    different from absent keys: the query language can tell them apart via
    lookup defaults, so no normalization happens anywhere.
    """
    return a == b


def leq(t: LatticeType, a: Any, b: Any) -> bool:
    """Derived partial order: ``a <= b`` iff ``join(a, b) == b``."""
    return semantic_eq(t, join(t, a, b), b)


# ---------------------------------------------------------------------------
# Serialization


def type_to_json(t: LatticeType) -> dict:
    if t.kind == "or_bool":
        return {"kind": "OrBool"}
    if t.kind == "neg_bool":
        return {"kind": "NegBool"}
    if t.kind == "max_int":
        return {"kind": "MaxInt", "base": t.base.value}
    if t.kind == "lset":
        return {"kind": "LSet", "elem": t.elem.value}
    if t.kind == "lmap":
        return {"kind": "LMap", "key": t.key.value, "value": type_to_json(t.value)}
    if t.kind == "lex":
        return {
            "kind": "LexProduct",
            "first": type_to_json(t.first),
            "second": type_to_json(t.second),
        }
    if t.kind == "tuple":
        return {"kind": "FreeTuple", "elements": [type_to_json(e) for e in t.elements]}
    raise LatticeError(f"unknown lattice kind {t.kind}")


def type_from_json(data: dict) -> LatticeType:
    kind = data["kind"]
    if kind == "OrBool":
        return OR_BOOL
    if kind == "NegBool":
        return NEG_BOOL
    if kind == "MaxInt":
        return max_int(ScalarSort(data["base"]))
    if kind == "LSet":
        return lset(ScalarSort(data["elem"]))
    if kind == "LMap":
        return lmap(ScalarSort(data["key"]), type_from_json(data["value"]))
    if kind == "LexProduct":
        return lex_product(type_from_json(data["first"]), type_from_json(data["second"]))
    if kind == "FreeTuple":
        return free_tuple(*(type_from_json(e) for e in data["elements"]))
    raise LatticeError(f"unknown lattice type kind {kind!r}")


def value_to_json(t: LatticeType, v: Any) -> Any:
    """Type-directed JSON form of a lattice value."""
    if t.kind in ("or_bool", "neg_bool", "max_int"):
        return v
    if t.kind == "lset":
        return sorted(v)
    if t.kind == "lmap":
        return [[k, value_to_json(t.value, w)] for k, w in sorted(v.items())]
    if t.kind == "lex":
        return [value_to_json(t.first, v[0]), value_to_json(t.second, v[1])]
    if t.kind == "tuple":
        return [value_to_json(e, x) for e, x in zip(t.elements, v)]
    raise LatticeError(f"unknown lattice kind {t.kind}")


def value_from_json(t: LatticeType, data: Any) -> Any:
    if t.kind in ("or_bool", "neg_bool", "max_int"):
        return data
    if t.kind == "lset":
        return frozenset(data)
    if t.kind == "lmap":
        return FrozenMap((k, value_from_json(t.value, w)) for k, w in data)
    if t.kind == "lex":
        return (value_from_json(t.first, data[0]), value_from_json(t.second, data[1]))
    if t.kind == "tuple":
        return tuple(value_from_json(e, x) for e, x in zip(t.elements, data))
    raise LatticeError(f"unknown lattice kind {t.kind}")


# ---------------------------------------------------------------------------
# Compact textual form, e.g. "Map(Opaque, OrBool)"; used by --hint-state and
# in reports.

_SCALAR_ALIASES = {
    "bool": ScalarSort.BOOL,
    "int": ScalarSort.INT,
    "opaque": ScalarSort.OPAQUE_INT,
    "opaqueint": ScalarSort.OPAQUE_INT,
    "clock": ScalarSort.CLOCK_INT,
    "clockint": ScalarSort.CLOCK_INT,
    "enum": ScalarSort.ENUM_INT,
    "enumint": ScalarSort.ENUM_INT,
    "nodeid": ScalarSort.NODE_ID,
}

_SCALAR_SHORT = {
    ScalarSort.BOOL: "Bool",
    ScalarSort.INT: "Int",
    ScalarSort.OPAQUE_INT: "Opaque",
    ScalarSort.CLOCK_INT: "Clock",
    ScalarSort.ENUM_INT: "Enum",
    ScalarSort.NODE_ID: "NodeID",
}


def type_to_str(t: LatticeType) -> str:
    if t.kind == "or_bool":
        return "OrBool"
    if t.kind == "neg_bool":
        return "NegBool"
    if t.kind == "max_int":
        return f"MaxInt({_SCALAR_SHORT[t.base]})"
    if t.kind == "lset":
        return f"Set({_SCALAR_SHORT[t.elem]})"
    if t.kind == "lmap":
        return f"Map({_SCALAR_SHORT[t.key]}, {type_to_str(t.value)})"
    if t.kind == "lex":
        return f"LexProduct({type_to_str(t.first)}, {type_to_str(t.second)})"
    if t.kind == "tuple":
        inner = ", ".join(type_to_str(e) for e in t.elements)
        return f"FreeTuple({inner})"
    raise LatticeError(f"unknown lattice kind {t.kind}")


def type_from_str(text: str) -> LatticeType:
    """Parse the compact form produced by :func:`type_to_str`."""
    tokens = _tokenize(text)
    t, pos = _parse_type(tokens, 0)
    if pos != len(tokens):
        raise LatticeError(f"trailing input in type string: {text!r}")
    return t


def _tokenize(text: str) -> list[str]:
    # Angle brackets are accepted as synonyms for parentheses.
    out = []
    word = ""
    for ch in text:
        if ch.isalnum() or ch == "_":
            word += ch
        else:
            if word:
                out.append(word)
                word = ""
            if ch in "(),<>":
                out.append({"<": "(", ">": ")"}.get(ch, ch))
            elif not ch.isspace():
                raise LatticeError(f"unexpected character {ch!r} in type string")
    if word:
        out.append(word)
    return out


def _expect(tokens: list[str], pos: int, tok: str) -> int:
    if pos >= len(tokens) or tokens[pos] != tok:
        raise LatticeError(f"expected {tok!r} at position {pos} in type string")
    return pos + 1


def _parse_scalar(tokens: list[str], pos: int) -> tuple[ScalarSort, int]:
    name = tokens[pos].lower()
    if name not in _SCALAR_ALIASES:
        raise LatticeError(f"unknown scalar sort {tokens[pos]!r}")
    return _SCALAR_ALIASES[name], pos + 1


def _parse_type(tokens: list[str], pos: int) -> tuple[LatticeType, int]:
    if pos >= len(tokens):
        raise LatticeError("unexpected end of type string")
    head = tokens[pos].lower()
    pos += 1
    if head == "orbool":
        return OR_BOOL, pos
    if head == "negbool":
        return NEG_BOOL, pos
    if head == "maxint":
        pos = _expect(tokens, pos, "(")
        base, pos = _parse_scalar(tokens, pos)
        pos = _expect(tokens, pos, ")")
        return max_int(base), pos
    if head == "set":
        pos = _expect(tokens, pos, "(")
        elem, pos = _parse_scalar(tokens, pos)
        pos = _expect(tokens, pos, ")")
        return lset(elem), pos
    if head == "map":
        pos = _expect(tokens, pos, "(")
        key, pos = _parse_scalar(tokens, pos)
        pos = _expect(tokens, pos, ",")
        value, pos = _parse_type(tokens, pos)
        pos = _expect(tokens, pos, ")")
        return lmap(key, value), pos
    if head in ("lexproduct", "lexicalproduct", "lex"):
        pos = _expect(tokens, pos, "(")
        first, pos = _parse_type(tokens, pos)
        pos = _expect(tokens, pos, ",")
        second, pos = _parse_type(tokens, pos)
        pos = _expect(tokens, pos, ")")
        return lex_product(first, second), pos
    if head == "freetuple":
        pos = _expect(tokens, pos, "(")
        elements = []
        while True:
            elem, pos = _parse_type(tokens, pos)
            elements.append(elem)
            if pos < len(tokens) and tokens[pos] == ",":
                pos += 1
                continue
            break
        pos = _expect(tokens, pos, ")")
        return free_tuple(*elements), pos
    raise LatticeError(f"unknown lattice type {head!r}")
