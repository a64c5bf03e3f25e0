"""SQL subset parser and Volcano plan builder.

The grammar covers single-device scans, one optional comparison predicate,
and windowed aggregation:

    SELECT item ("," item)* FROM path [WHERE sensor op literal] [GROUP BY duration]
    item     := sensor | ("count" | "max_value") "(" sensor ")"
    op       := "=" | "<" | ">" | "<=" | ">="
    literal  := integer | float | 'single-quoted string'
    duration := integer unit, unit in {ms, s, m, h}
    path     := identifier ("." identifier)*

Planning is a pure function of (SQL text, catalog): two nodes holding
coherent catalogs produce byte-identical serialized plans, which is what
makes shipping only the SQL statement sufficient for migration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .errors import PlanError, SqlSyntaxError, UnknownSeries, UnsupportedFeature
from .tsstore import SeriesPath, ValueType

__all__ = [
    "Literal",
    "SelectItem",
    "Predicate",
    "Query",
    "OperatorNode",
    "Catalog",
    "parse",
    "render",
    "plan",
    "serialize_plan",
]

AGGREGATE_FUNCTIONS = ("count", "max_value")
COMPARISON_OPS = ("=", "<", ">", "<=", ">=")
_UNIT_MS = {"ms": 1, "s": 1000, "m": 60_000, "h": 3_600_000}

Literal = Union[int, float, str]


@dataclass(frozen=True)
class SelectItem:
    sensor: str
    func: Optional[str] = None   # None for a plain column

    def render(self) -> str:
        return f"{self.func}({self.sensor})" if self.func else self.sensor


@dataclass(frozen=True)
class Predicate:
    sensor: str
    op: str
    literal: Literal

    def render(self) -> str:
        if isinstance(self.literal, str):
            lit = "'" + self.literal.replace("'", "''") + "'"
        else:
            lit = repr(self.literal)
        return f"{self.sensor} {self.op} {lit}"


@dataclass(frozen=True)
class Query:
    select_items: tuple[SelectItem, ...]
    source: tuple[str, ...]
    predicate: Optional[Predicate] = None
    group_by_ms: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.select_items:
            raise PlanError("empty select list")
        agg = [item for item in self.select_items if item.func]
        if agg and len(agg) != len(self.select_items):
            raise PlanError("aggregate and plain select items cannot be mixed")
        if bool(agg) != (self.group_by_ms is not None):
            raise PlanError("GROUP BY requires aggregate items and vice versa")
        if self.group_by_ms is not None and self.group_by_ms <= 0:
            raise PlanError("window width must be positive")

    @property
    def is_aggregation(self) -> bool:
        return self.group_by_ms is not None


# --- lexer -------------------------------------------------------------------

_PUNCT = ("<=", ">=", "=", "<", ">", "(", ")", ",", ".")


@dataclass(frozen=True)
class _Token:
    kind: str      # ident | int | float | string | duration | punct | eof
    text: str
    value: object
    offset: int


def _lex(sql: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(sql)
    while i < n:
        ch = sql[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "'":
            j = i + 1
            parts = []
            while True:
                if j >= n:
                    raise SqlSyntaxError("unterminated string literal", i)
                if sql[j] == "'":
                    if j + 1 < n and sql[j + 1] == "'":   # escaped quote
                        parts.append("'")
                        j += 2
                        continue
                    break
                parts.append(sql[j])
                j += 1
            tokens.append(_Token("string", sql[i:j + 1], "".join(parts), i))
            i = j + 1
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and sql[i + 1].isdigit()):
            j = i + 1
            while j < n and sql[j].isdigit():
                j += 1
            is_float = False
            if j < n and sql[j] == "." and j + 1 < n and sql[j + 1].isdigit():
                is_float = True
                j += 1
                while j < n and sql[j].isdigit():
                    j += 1
            # duration suffix: digits immediately followed by a unit (5m, 300ms)
            k = j
            while k < n and sql[k].isalpha():
                k += 1
            if k > j and not is_float:
                unit = sql[j:k].lower()
                if unit not in _UNIT_MS:
                    raise SqlSyntaxError(f"unknown duration unit {unit!r}", j)
                tokens.append(_Token("duration", sql[i:k], int(sql[i:j]) * _UNIT_MS[unit], i))
                i = k
                continue
            text = sql[i:j]
            tokens.append(_Token("float" if is_float else "int", text,
                                 float(text) if is_float else int(text), i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (sql[j].isalnum() or sql[j] == "_"):
                j += 1
            text = sql[i:j]
            tokens.append(_Token("ident", text, text, i))
            i = j
            continue
        for punct in _PUNCT:
            if sql.startswith(punct, i):
                tokens.append(_Token("punct", punct, punct, i))
                i += len(punct)
                break
        else:
            raise SqlSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(_Token("eof", "", None, n))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self._tokens = tokens
        self._pos = 0

    def _peek(self) -> _Token:
        return self._tokens[self._pos]

    def _next(self) -> _Token:
        tok = self._tokens[self._pos]
        self._pos += 1
        return tok

    def _expect_keyword(self, word: str) -> None:
        tok = self._next()
        if tok.kind != "ident" or tok.text.lower() != word:
            raise SqlSyntaxError(f"expected {word.upper()}", tok.offset)

    def _expect_punct(self, punct: str) -> None:
        tok = self._next()
        if tok.kind != "punct" or tok.text != punct:
            raise SqlSyntaxError(f"expected {punct!r}", tok.offset)

    def _at_keyword(self, word: str) -> bool:
        tok = self._peek()
        return tok.kind == "ident" and tok.text.lower() == word

    def parse_query(self) -> Query:
        self._expect_keyword("select")
        items = [self._parse_item()]
        while self._peek().kind == "punct" and self._peek().text == ",":
            self._next()
            items.append(self._parse_item())
        self._expect_keyword("from")
        source = self._parse_path()
        predicate = None
        group_by = None
        if self._at_keyword("where"):
            self._next()
            predicate = self._parse_predicate()
        if self._at_keyword("group"):
            self._next()
            self._expect_keyword("by")
            tok = self._next()
            if tok.kind != "duration":
                raise SqlSyntaxError("expected window duration (e.g. 5m)", tok.offset)
            group_by = tok.value
        tok = self._peek()
        if tok.kind != "eof":
            if tok.kind == "ident" and tok.text.lower() in ("join", "order", "limit", "having", "group"):
                raise UnsupportedFeature(f"{tok.text.upper()} is outside the supported subset")
            raise SqlSyntaxError(f"unexpected trailing input {tok.text!r}", tok.offset)
        return Query(tuple(items), source, predicate, group_by)

    def _parse_item(self) -> SelectItem:
        tok = self._next()
        if tok.kind != "ident":
            raise SqlSyntaxError("expected column or aggregate", tok.offset)
        nxt = self._peek()
        if nxt.kind == "punct" and nxt.text == "(":
            func = tok.text.lower()
            if func not in AGGREGATE_FUNCTIONS:
                raise UnsupportedFeature(f"aggregate function {tok.text!r} not supported")
            self._next()
            inner = self._next()
            if inner.kind != "ident":
                raise SqlSyntaxError("expected sensor inside aggregate", inner.offset)
            self._expect_punct(")")
            return SelectItem(inner.text, func)
        return SelectItem(tok.text)

    def _parse_path(self) -> tuple[str, ...]:
        tok = self._next()
        if tok.kind != "ident":
            raise SqlSyntaxError("expected source path", tok.offset)
        segments = [tok.text]
        while self._peek().kind == "punct" and self._peek().text == ".":
            self._next()
            tok = self._next()
            if tok.kind != "ident":
                raise SqlSyntaxError("expected path segment", tok.offset)
            segments.append(tok.text)
        return tuple(segments)

    def _parse_predicate(self) -> Predicate:
        sensor = self._next()
        if sensor.kind != "ident":
            raise SqlSyntaxError("expected sensor in predicate", sensor.offset)
        op = self._next()
        if op.kind != "punct" or op.text not in COMPARISON_OPS:
            raise SqlSyntaxError("expected comparison operator", op.offset)
        lit = self._next()
        if lit.kind not in ("int", "float", "string"):
            raise SqlSyntaxError("expected literal", lit.offset)
        return Predicate(sensor.text, op.text, lit.value)


def parse(sql: str) -> Query:
    """Parse one statement; a pure function of the text."""
    return _Parser(_lex(sql)).parse_query()


def render(query: Query) -> str:
    """Canonical SQL text; parse(render(q)) == q."""
    parts = ["SELECT ", ", ".join(item.render() for item in query.select_items),
             " FROM ", ".".join(query.source)]
    if query.predicate:
        parts += [" WHERE ", query.predicate.render()]
    if query.group_by_ms is not None:
        parts += [" GROUP BY ", f"{query.group_by_ms}ms"]
    return "".join(parts)


# --- catalog -------------------------------------------------------------------

@dataclass(frozen=True)
class SensorInfo:
    value_type: ValueType
    time_bounds: Optional[tuple[int, int]]   # (min_ts, max_ts) or None when empty


class Catalog:
    """Device -> sensors map with value types and time bounds.

    Both tiers build this from their own store; identical data implies an
    identical catalog, which in turn makes planning deterministic.
    """

    def __init__(self) -> None:
        self._devices: dict[str, dict[str, SensorInfo]] = {}

    def register_device(self, device: SeriesPath) -> None:
        self._devices.setdefault(str(device), {})

    def register_sensor(
        self,
        device: SeriesPath,
        sensor: str,
        value_type: ValueType,
        time_bounds: Optional[tuple[int, int]] = None,
    ) -> None:
        self._devices.setdefault(str(device), {})[sensor] = SensorInfo(value_type, time_bounds)

    @classmethod
    def from_store(cls, store, device: SeriesPath) -> "Catalog":
        catalog = cls()
        catalog.register_device(device)
        prefix = str(device) + "."
        for name in store.series_names():
            if name.startswith(prefix) and "." not in name[len(prefix):]:
                series = SeriesPath.parse(name)
                try:
                    bounds = store.time_bounds(series)
                except Exception:
                    bounds = None
                catalog.register_sensor(device, series.leaf, store.value_type(series), bounds)
        return catalog

    def resolve_device(self, source: tuple[str, ...]) -> SeriesPath:
        """Exact path, or unique suffix match (Table II queries say just ``dev``)."""
        dotted = ".".join(source)
        if dotted in self._devices:
            return SeriesPath.parse(dotted)
        matches = [
            name for name in sorted(self._devices)
            if name.split(".")[-len(source):] == list(source)
        ]
        if not matches:
            raise UnknownSeries(f"no device matches {dotted!r}")
        if len(matches) > 1:
            raise PlanError(f"ambiguous device {dotted!r}: {matches}")
        return SeriesPath.parse(matches[0])

    def sensor_info(self, device: SeriesPath, sensor: str) -> SensorInfo:
        sensors = self._devices.get(str(device))
        if sensors is None or sensor not in sensors:
            raise UnknownSeries(f"{device}.{sensor}")
        return sensors[sensor]


# --- plan tree -----------------------------------------------------------------

@dataclass(frozen=True)
class OperatorNode:
    """Logical plan node: scans are leaves, Filter is unary, Merge is n-ary."""

    kind: str                      # series_scan | agg_scan | filter | project | merge
    params: tuple[tuple[str, object], ...]
    children: tuple["OperatorNode", ...] = ()

    def __post_init__(self) -> None:
        if self.kind in ("series_scan", "agg_scan") and self.children:
            raise PlanError(f"{self.kind} must be a leaf")
        if self.kind == "filter" and len(self.children) != 1:
            raise PlanError("filter takes exactly one child")

    def param(self, name: str):
        for key, value in self.params:
            if key == name:
                return value
        raise KeyError(name)

    def leaves(self) -> list["OperatorNode"]:
        if not self.children:
            return [self]
        return [leaf for child in self.children for leaf in child.leaves()]


def _node(kind: str, params: dict, children: tuple[OperatorNode, ...] = ()) -> OperatorNode:
    return OperatorNode(kind, tuple(sorted(params.items())), children)


def plan(query: Query, catalog: Catalog) -> OperatorNode:
    """Deterministic operator tree: one scan leaf per selected sensor."""
    device = catalog.resolve_device(query.source)
    if query.is_aggregation:
        if query.predicate is not None:
            raise UnsupportedFeature("predicates with aggregation are not supported")
        children = []
        for item in query.select_items:
            info = catalog.sensor_info(device, item.sensor)
            if item.func == "max_value" and info.value_type not in (ValueType.INT64, ValueType.FLOAT64):
                raise PlanError(f"max_value needs a numeric sensor, {item.sensor} is {info.value_type.name}")
            lo, hi = _window_domain(info.time_bounds)
            children.append(
                _node("agg_scan", {
                    "series": str(device.child(item.sensor)),
                    "fn": item.func,
                    "lo": lo,
                    "hi": hi,
                    "width": query.group_by_ms,
                    "label": item.render(),
                })
            )
        return children[0] if len(children) == 1 else _node(
            "merge", {"columns": tuple(i.render() for i in query.select_items)}, tuple(children)
        )

    if query.predicate is not None:
        selected = {item.sensor for item in query.select_items}
        if query.predicate.sensor not in selected:
            raise PlanError("predicate sensor must appear in the select list")
    children = []
    for item in query.select_items:
        info = catalog.sensor_info(device, item.sensor)
        leaf = _node("series_scan", {
            "series": str(device.child(item.sensor)),
            "label": item.sensor,
        })
        if query.predicate is not None and query.predicate.sensor == item.sensor:
            _check_literal_type(query.predicate, info.value_type)
            leaf = _node("filter", {
                "sensor": item.sensor,
                "op": query.predicate.op,
                "literal": query.predicate.literal,
            }, (leaf,))
        children.append(leaf)
    if len(children) == 1:
        return children[0]
    return _node("merge", {"columns": tuple(i.render() for i in query.select_items)}, tuple(children))


def _window_domain(bounds: Optional[tuple[int, int]]) -> tuple[int, int]:
    if bounds is None:
        return (0, 0)
    return (bounds[0], bounds[1] + 1)   # [min_ts, max_ts] inclusive -> half-open


def _check_literal_type(predicate: Predicate, vt: ValueType) -> None:
    lit = predicate.literal
    if vt is ValueType.STRING and not isinstance(lit, str):
        raise PlanError(f"sensor {predicate.sensor} is STRING, literal is {type(lit).__name__}")
    if vt in (ValueType.INT64, ValueType.FLOAT64) and isinstance(lit, str):
        raise PlanError(f"sensor {predicate.sensor} is numeric, literal is a string")
    if vt is ValueType.BOOL and not isinstance(lit, (bool, int)):
        raise PlanError(f"sensor {predicate.sensor} is BOOL")


def serialize_plan(node: OperatorNode) -> str:
    """Canonical s-expression form; structural equality == string equality."""
    params = " ".join(f"{k}={_fmt(v)}" for k, v in node.params)
    if not node.children:
        return f"({node.kind} {params})"
    inner = " ".join(serialize_plan(child) for child in node.children)
    return f"({node.kind} {params} {inner})" if params else f"({node.kind} {inner})"


def _fmt(value) -> str:
    if isinstance(value, str):
        return '"' + value.replace('"', '\\"') + '"'
    if isinstance(value, tuple):
        return "[" + ",".join(_fmt(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)
