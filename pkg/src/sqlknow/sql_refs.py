"""Schema reference extraction: which tables and columns a query reads.

Walks the query with proper scope handling (CTEs, derived tables, correlated
subqueries, join conditions) and resolves identifiers case-insensitively
against the schema. ``SELECT *`` expands to every column of the scope's base
tables. Unresolvable identifiers are collected and reported together, never
silently dropped.

Resolution rules for unqualified columns: select-list aliases shadow nothing
but resolve to themselves; otherwise the nearest scope wins and, within a
scope, the first FROM-order base table containing the column; derived tables
whose output list is statically known count as no-ops (their base references
were recorded when the subquery was parsed).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SqlParseError, UnresolvedIdentifierError, UnsupportedSqlError
from .schema import DatabaseSchema
from .sql_tokens import TYPE_NAMES, Kind, Token, check_balanced, tokenize

_JOIN_WORDS = {"JOIN", "INNER", "LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "NATURAL"}
_COMPOUND_WORDS = {"UNION", "INTERSECT", "EXCEPT"}


@dataclass(frozen=True)
class ReferenceSet:
    tables: frozenset[str]
    columns: frozenset[str]  # "table.column", canonical schema casing


@dataclass(frozen=True)
class ConsistencyReport:
    ok: bool
    diagnostics: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


class _Source:
    __slots__ = ("kind", "table_name", "alias", "outputs", "has_unknown")

    def __init__(self, kind, table_name=None, alias=None, outputs=None, has_unknown=False):
        self.kind = kind  # "table" | "derived"
        self.table_name = table_name  # canonical, for base tables
        self.alias = alias  # lower-case or None
        self.outputs = outputs  # lower-case output column names (derived)
        self.has_unknown = has_unknown

    def addressable_as(self, qualifier: str) -> bool:
        if self.alias is not None:
            return self.alias == qualifier
        return self.table_name is not None and self.table_name.lower() == qualifier


class _Scope:
    __slots__ = ("sources", "output_aliases", "parent")

    def __init__(self, parent=None):
        self.sources: list[_Source] = []
        self.output_aliases: set[str] = set()
        self.parent = parent


class _Extractor:
    def __init__(self, schema: DatabaseSchema):
        self.schema = schema
        self.tables: set[str] = set()
        self.columns: set[str] = set()
        self.unresolved: list[str] = []

    # -- recording -------------------------------------------------------------

    def _record_table(self, name: str) -> None:
        self.tables.add(self.schema.table(name).name)

    def _record_column(self, table: str, column: str) -> None:
        self.columns.add(self.schema.column_id(table, column))
        self._record_table(table)

    def _expand_table(self, table: str) -> None:
        tdef = self.schema.table(table)
        for c in tdef.columns:
            self.columns.add(f"{tdef.name}.{c.name}")
        self.tables.add(tdef.name)

    # -- statement level ---------------------------------------------------------

    def parse_statement(self, tokens: list[Token]) -> None:
        if not tokens:
            raise SqlParseError("empty statement", 0)
        check_balanced(tokens)
        first = tokens[0]
        if not (first.is_kw("SELECT", "WITH") or first.value == "("):
            raise UnsupportedSqlError(
                f"only SELECT/WITH queries are supported (got {first.value!r})"
            )
        self.parse_select(tokens, parent=None, ctes={})

    def parse_select(self, tokens: list[Token], parent, ctes: dict) -> list | None:
        """Parse a (possibly compound) select; returns its output column names.

        Output names are lower-case; None means they could not be determined.
        """
        tokens = _strip_outer_parens(tokens)
        i = 0
        ctes = dict(ctes)
        if tokens and tokens[0].is_kw("WITH"):
            i = 1
            if i < len(tokens) and tokens[i].is_kw("RECURSIVE"):
                i += 1
            while i < len(tokens):
                if tokens[i].kind is not Kind.IDENT:
                    raise SqlParseError("expected CTE name", tokens[i].pos)
                cte_name = tokens[i].value.lower()
                i += 1
                if not (i < len(tokens) and tokens[i].is_kw("AS")):
                    raise SqlParseError("expected AS in CTE definition", tokens[i - 1].pos)
                i += 1
                if not (i < len(tokens) and tokens[i].value == "("):
                    raise SqlParseError("expected ( after AS", tokens[i - 1].pos)
                close = _matching_paren(tokens, i)
                body = tokens[i + 1 : close]
                outputs = self.parse_select(body, parent=None, ctes=ctes)
                ctes[cte_name] = outputs
                i = close + 1
                if i < len(tokens) and tokens[i].value == ",":
                    i += 1
                    continue
                break
        body = tokens[i:]
        segments = _split_compound(body)
        outputs = None
        for idx, seg in enumerate(segments):
            seg_out = self.parse_core(seg, parent, ctes)
            if idx == 0:
                outputs = seg_out
        return outputs

    def parse_core(self, tokens: list[Token], parent, ctes: dict) -> list | None:
        tokens = _strip_outer_parens(tokens)
        if not tokens or not tokens[0].is_kw("SELECT"):
            if tokens and tokens[0].is_kw("WITH"):
                return self.parse_select(tokens, parent, ctes)
            raise SqlParseError("expected SELECT", tokens[0].pos if tokens else 0)
        regions = _split_regions(tokens)
        scope = _Scope(parent)

        on_regions: list[list[Token]] = []
        using_groups: list[list[Token]] = []
        natural_pairs: list[int] = []  # index of the right-hand source of a NATURAL join
        if regions["from"]:
            self._parse_sources(regions["from"], scope, ctes, on_regions, using_groups,
                                natural_pairs)

        items = regions["select"]
        scope.output_aliases = _collect_aliases(items)

        self._scan_expr(items, scope, ctes, items_level=True)
        for region in on_regions:
            self._scan_expr(region, scope, ctes)
        for key in ("where", "group", "having", "order", "limit"):
            if regions[key]:
                self._scan_expr(regions[key], scope, ctes)
        for group in using_groups:
            for tok in group:
                if tok.kind is Kind.IDENT:
                    self._resolve_using(tok.value.lower(), scope)
        for right_idx in natural_pairs:
            self._resolve_natural(scope, right_idx)

        return _output_names(items, scope)

    # -- FROM clause -----------------------------------------------------------

    def _parse_sources(self, tokens, scope, ctes, on_regions, using_groups, natural_pairs):
        i = 0
        n = len(tokens)
        pending_natural = False
        while i < n:
            tok = tokens[i]
            if tok.value == "(":
                close = _matching_paren(tokens, i)
                inner = tokens[i + 1 : close]
                if inner and inner[0].is_kw("SELECT", "WITH"):
                    outputs = self.parse_select(inner, parent=None, ctes=ctes)
                    alias, i = _read_alias(tokens, close + 1)
                    src = _Source(
                        "derived",
                        alias=alias,
                        outputs=[o for o in outputs if o] if outputs else None,
                        has_unknown=outputs is None or any(o is None for o in outputs),
                    )
                    scope.sources.append(src)
                else:
                    # parenthesized join: flatten into the same scope
                    self._parse_sources(inner, scope, ctes, on_regions, using_groups,
                                        natural_pairs)
                    i = close + 1
            elif tok.kind is Kind.IDENT:
                name = tok.value
                j = i + 1
                while j + 1 < n and tokens[j].value == "." and tokens[j + 1].kind is Kind.IDENT:
                    name = tokens[j + 1].value  # db-qualified: keep last part
                    j += 2
                alias, j = _read_alias(tokens, j)
                lname = name.lower()
                if lname in ctes:
                    outputs = ctes[lname]
                    scope.sources.append(
                        _Source(
                            "derived",
                            alias=alias or lname,
                            outputs=[o for o in outputs if o] if outputs else None,
                            has_unknown=outputs is None or any(o is None for o in outputs),
                        )
                    )
                elif self.schema.has_table(name):
                    self._record_table(name)
                    tdef = self.schema.table(name)
                    scope.sources.append(
                        _Source(
                            "table",
                            table_name=tdef.name,
                            alias=alias,
                            outputs=[c.name.lower() for c in tdef.columns],
                        )
                    )
                else:
                    self.unresolved.append(name)
                    scope.sources.append(_Source("derived", alias=alias or lname,
                                                 outputs=None, has_unknown=True))
                if pending_natural:
                    natural_pairs.append(len(scope.sources) - 1)
                    pending_natural = False
                i = j
            elif tok.value == ",":
                i += 1
            elif tok.kind is Kind.KEYWORD and tok.value in _JOIN_WORDS:
                if tok.value == "NATURAL":
                    pending_natural = True
                i += 1
            elif tok.is_kw("ON"):
                end = _expr_end(tokens, i + 1)
                on_regions.append(tokens[i + 1 : end])
                i = end
            elif tok.is_kw("USING"):
                if i + 1 < n and tokens[i + 1].value == "(":
                    close = _matching_paren(tokens, i + 1)
                    using_groups.append(tokens[i + 2 : close])
                    i = close + 1
                else:
                    raise SqlParseError("expected ( after USING", tok.pos)
            else:
                raise SqlParseError(f"unexpected token {tok.value!r} in FROM", tok.pos)

    # -- expression scanning ------------------------------------------------------

    def _scan_expr(self, tokens, scope, ctes, items_level=False):
        i = 0
        n = len(tokens)
        prev = None
        while i < n:
            tok = tokens[i]
            if tok.value == "(":
                close = _matching_paren(tokens, i)
                inner = tokens[i + 1 : close]
                if inner and inner[0].is_kw("SELECT", "WITH"):
                    self.parse_select(inner, parent=scope, ctes=ctes)
                else:
                    self._scan_expr(inner, scope, ctes)
                prev = tokens[close]
                i = close + 1
                continue
            if tok.kind is Kind.IDENT:
                if i + 1 < n and tokens[i + 1].value == "(":
                    prev = tok  # function name; arguments handled by paren branch
                    i += 1
                    continue
                if (
                    tok.value.upper() in TYPE_NAMES
                    and prev is not None
                    and prev.is_kw("AS")
                ):
                    prev = tok  # CAST target type
                    i += 1
                    continue
                parts = [tok.value]
                j = i + 1
                starred = False
                while j + 1 < n and tokens[j].value == ".":
                    follower = tokens[j + 1]
                    if follower.kind is Kind.IDENT:
                        parts.append(follower.value)
                        j += 2
                        continue
                    if follower.kind is Kind.OP and follower.value == "*":
                        starred = True
                        j += 2
                    break
                if starred:
                    self._resolve_qualified_star(parts[-1].lower(), scope)
                elif len(parts) == 1:
                    self._resolve_unqualified(parts[0].lower(), scope)
                else:
                    self._resolve_qualified(parts[-2].lower(), parts[-1].lower(), scope)
                prev = tokens[j - 1]
                i = j
                continue
            if (
                tok.kind is Kind.OP
                and tok.value == "*"
                and items_level
                and (prev is None or prev.value == ",")
            ):
                self._expand_star(scope)
            prev = tok
            i += 1

    # -- resolution ----------------------------------------------------------------

    def _find_source(self, qualifier: str, scope) -> _Source | None:
        sc = scope
        while sc is not None:
            for src in sc.sources:
                if src.addressable_as(qualifier):
                    return src
            sc = sc.parent
        return None

    def _resolve_qualified(self, qualifier: str, column: str, scope) -> None:
        src = self._find_source(qualifier, scope)
        if src is None:
            self.unresolved.append(f"{qualifier}.{column}")
            return
        if src.kind == "table":
            if self.schema.has_column(src.table_name, column):
                self._record_column(src.table_name, column)
            else:
                self.unresolved.append(f"{qualifier}.{column}")
            return
        if src.has_unknown or src.outputs is None or column in src.outputs:
            return  # derived output; base references already recorded
        self.unresolved.append(f"{qualifier}.{column}")

    def _resolve_unqualified(self, column: str, scope) -> None:
        sc = scope
        while sc is not None:
            if column in sc.output_aliases:
                return
            for src in sc.sources:
                if src.kind == "table" and self.schema.has_column(src.table_name, column):
                    self._record_column(src.table_name, column)
                    return
            for src in sc.sources:
                if src.kind == "derived" and src.outputs and column in src.outputs:
                    return
            if any(src.kind == "derived" and src.has_unknown for src in sc.sources):
                return  # benefit of the doubt for opaque derived outputs
            sc = sc.parent
        self.unresolved.append(column)

    def _resolve_qualified_star(self, qualifier: str, scope) -> None:
        src = self._find_source(qualifier, scope)
        if src is None:
            self.unresolved.append(f"{qualifier}.*")
        elif src.kind == "table":
            self._expand_table(src.table_name)

    def _resolve_using(self, column: str, scope) -> None:
        hit = False
        for src in scope.sources:
            if src.kind == "table" and self.schema.has_column(src.table_name, column):
                self._record_column(src.table_name, column)
                hit = True
            elif src.kind == "derived" and (
                src.has_unknown or (src.outputs and column in src.outputs)
            ):
                hit = True
        if not hit:
            self.unresolved.append(column)

    def _resolve_natural(self, scope, right_idx: int) -> None:
        # a NATURAL join reads every column name shared with the preceding sources
        if right_idx >= len(scope.sources):
            return
        right = scope.sources[right_idx]
        if right.kind != "table":
            return
        right_cols = {c.name.lower() for c in self.schema.table(right.table_name).columns}
        for src in scope.sources[:right_idx]:
            if src.kind != "table":
                continue
            for c in self.schema.table(src.table_name).columns:
                if c.name.lower() in right_cols:
                    self._record_column(src.table_name, c.name)
                    self._record_column(right.table_name, c.name)

    def _expand_star(self, scope) -> None:
        for src in scope.sources:
            if src.kind == "table":
                self._expand_table(src.table_name)


# -- token-span helpers ------------------------------------------------------------


def _matching_paren(tokens: list[Token], open_idx: int) -> int:
    depth = 0
    for i in range(open_idx, len(tokens)):
        if tokens[i].value == "(":
            depth += 1
        elif tokens[i].value == ")":
            depth -= 1
            if depth == 0:
                return i
    raise SqlParseError("unbalanced parenthesis", tokens[open_idx].pos)


def _strip_outer_parens(tokens: list[Token]) -> list[Token]:
    while (
        len(tokens) >= 2
        and tokens[0].value == "("
        and _matching_paren(tokens, 0) == len(tokens) - 1
    ):
        tokens = tokens[1:-1]
    return tokens


def _split_compound(tokens: list[Token]) -> list[list[Token]]:
    segments = []
    depth = 0
    start = 0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.value == "(":
            depth += 1
        elif tok.value == ")":
            depth -= 1
        elif depth == 0 and tok.kind is Kind.KEYWORD and tok.value in _COMPOUND_WORDS:
            segments.append(tokens[start:i])
            if i + 1 < len(tokens) and tokens[i + 1].is_kw("ALL"):
                i += 1
            start = i + 1
        i += 1
    segments.append(tokens[start:])
    return [s for s in segments if s]


_REGION_STARTS = {"FROM": "from", "WHERE": "where", "GROUP": "group",
                  "HAVING": "having", "ORDER": "order", "LIMIT": "limit",
                  "OFFSET": "limit"}


def _split_regions(tokens: list[Token]) -> dict[str, list[Token]]:
    regions = {k: [] for k in ("select", "from", "where", "group", "having", "order", "limit")}
    current = "select"
    depth = 0
    i = 0
    n = len(tokens)
    # skip SELECT [DISTINCT|ALL]
    if tokens and tokens[0].is_kw("SELECT"):
        i = 1
        if i < n and tokens[i].is_kw("DISTINCT", "ALL"):
            i += 1
    while i < n:
        tok = tokens[i]
        if tok.value == "(":
            depth += 1
        elif tok.value == ")":
            depth -= 1
        if depth == 0 and tok.kind is Kind.KEYWORD and tok.value in _REGION_STARTS:
            current = _REGION_STARTS[tok.value]
            if tok.value in ("GROUP", "ORDER") and i + 1 < n and tokens[i + 1].is_kw("BY"):
                i += 2
                continue
            i += 1
            continue
        regions[current].append(tok)
        i += 1
    return regions


def _expr_end(tokens: list[Token], start: int) -> int:
    """End of an ON condition: the next top-level join keyword or comma."""
    depth = 0
    for i in range(start, len(tokens)):
        tok = tokens[i]
        if tok.value == "(":
            depth += 1
        elif tok.value == ")":
            depth -= 1
        elif depth == 0 and (
            tok.value == "," or (tok.kind is Kind.KEYWORD and tok.value in _JOIN_WORDS)
        ):
            return i
    return len(tokens)


def _read_alias(tokens: list[Token], i: int) -> tuple[str | None, int]:
    if i < len(tokens) and tokens[i].is_kw("AS"):
        if i + 1 < len(tokens) and tokens[i + 1].kind is Kind.IDENT:
            return tokens[i + 1].value.lower(), i + 2
        raise SqlParseError("expected alias after AS", tokens[i].pos)
    if i < len(tokens) and tokens[i].kind is Kind.IDENT:
        return tokens[i].value.lower(), i + 1
    return None, i


def _split_items(tokens: list[Token]) -> list[list[Token]]:
    items = []
    depth = 0
    start = 0
    for i, tok in enumerate(tokens):
        if tok.value == "(":
            depth += 1
        elif tok.value == ")":
            depth -= 1
        elif tok.value == "," and depth == 0:
            items.append(tokens[start:i])
            start = i + 1
    items.append(tokens[start:])
    return [it for it in items if it]


def _collect_aliases(items_tokens: list[Token]) -> set[str]:
    aliases = set()
    for item in _split_items(items_tokens):
        if len(item) >= 2 and item[-2].is_kw("AS") and item[-1].kind is Kind.IDENT:
            aliases.add(item[-1].value.lower())
    return aliases


def _output_names(items_tokens: list[Token], scope: _Scope) -> list | None:
    names: list = []
    for item in _split_items(items_tokens):
        if len(item) >= 2 and item[-2].is_kw("AS") and item[-1].kind is Kind.IDENT:
            names.append(item[-1].value.lower())
        elif len(item) == 1 and item[0].kind is Kind.IDENT:
            names.append(item[0].value.lower())
        elif (
            len(item) == 3
            and item[0].kind is Kind.IDENT
            and item[1].value == "."
            and item[2].kind is Kind.IDENT
        ):
            names.append(item[2].value.lower())
        elif len(item) == 1 and item[0].kind is Kind.OP and item[0].value == "*":
            for src in scope.sources:
                if src.outputs is not None:
                    names.extend(src.outputs)
                else:
                    names.append(None)
        else:
            names.append(None)
    return names


def extract_references(sql: str, schema: DatabaseSchema) -> ReferenceSet:
    """Tables and columns the query reads, across subqueries, CTEs and joins."""
    tokens = tokenize(sql)
    extractor = _Extractor(schema)
    extractor.parse_statement(tokens)
    if extractor.unresolved:
        raise UnresolvedIdentifierError(extractor.unresolved)
    return ReferenceSet(
        tables=frozenset(extractor.tables), columns=frozenset(extractor.columns)
    )


def check_schema_consistency(sql: str, schema: DatabaseSchema) -> ConsistencyReport:
    """True iff the query parses and every referenced table/column exists."""
    try:
        extract_references(sql, schema)
    except (SqlParseError, UnsupportedSqlError) as exc:
        return ConsistencyReport(False, (f"parse: {exc}",))
    except UnresolvedIdentifierError as exc:
        return ConsistencyReport(False, tuple(f"unresolved: {n}" for n in exc.names))
    return ConsistencyReport(True)
