"""SQL skeleton extraction: mask schema identifiers and literals, keep structure.

Masking alphabet: tables ``_T``, columns ``_C``, literals/parameters ``_V``.
Keywords, operators, clause layout and aggregate/function names survive;
aliases are erased; whitespace collapses to single spaces. ``numbered=True``
switches to indexed slots (``_T1``, ``_C2``, ...) keyed by distinct original
identifier, which template expansion uses to keep bindings apart.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SqlParseError, UnsupportedSqlError
from .sql_tokens import TYPE_NAMES, Kind, Token, check_balanced, tokenize

_JOIN_KEYWORDS = {"JOIN", "INNER", "LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "NATURAL"}
_CLAUSE_KEYWORDS = {
    "SELECT": "select",
    "FROM": "from",
    "WHERE": "where",
    "GROUP": "group",
    "HAVING": "having",
    "ORDER": "order",
    "LIMIT": "limit",
    "OFFSET": "limit",
    "WITH": "with",
    "ON": "on",
    "USING": "using",
}


def _is_value_piece(piece: str) -> bool:
    """True for emitted pieces that can end an expression (operand position)."""
    return piece in (")", "END") or piece.startswith(("_C", "_V"))


@dataclass(frozen=True)
class SlotArity:
    table: int = 0
    column: int = 0
    value: int = 0


@dataclass(frozen=True)
class SqlSkeleton:
    text: str
    keyword_sequence: tuple[str, ...]
    arity: SlotArity

    def __str__(self) -> str:
        return self.text


class _Masker:
    def __init__(self, tokens: list[Token], numbered: bool):
        self.tokens = tokens
        self.numbered = numbered
        self.out: list[str] = []
        self.attach: list[bool] = []  # piece glues to the previous one
        self.keywords: list[str] = []
        self.counts = {"T": 0, "C": 0, "V": 0}
        self.slot_ids: dict[tuple[str, str], int] = {}
        # frame: [clause, from_expect, func_name]
        self.frames: list[list] = [["start", "table", None]]
        self.prev_function = False

    @property
    def clause(self) -> str:
        return self.frames[-1][0]

    @clause.setter
    def clause(self, value: str) -> None:
        self.frames[-1][0] = value

    @property
    def from_expect(self) -> str:
        return self.frames[-1][1]

    @from_expect.setter
    def from_expect(self, value: str) -> None:
        self.frames[-1][1] = value

    @property
    def func_name(self):
        return self.frames[-1][2]

    def emit(self, text: str, attach: bool = False, function: bool = False) -> None:
        self.out.append(text)
        self.attach.append(attach)
        self.prev_function = function

    def slot(self, kind: str, original: str) -> str:
        self.counts[kind] += 1
        if not self.numbered:
            return f"_{kind}"
        key = (kind, original.lower())
        if key not in self.slot_ids:
            self.slot_ids[key] = len([k for k in self.slot_ids if k[0] == kind]) + 1
        return f"_{kind}{self.slot_ids[key]}"

    def run(self) -> None:
        toks = self.tokens
        i = 0
        while i < len(toks):
            tok = toks[i]
            if tok.kind is Kind.KEYWORD:
                i = self._keyword(toks, i)
            elif tok.kind is Kind.IDENT:
                i = self._ident(toks, i)
            elif tok.kind in (Kind.NUMBER, Kind.STRING, Kind.PARAM):
                self._literal(tok)
                i += 1
            elif tok.kind is Kind.PLACEHOLDER:
                self._placeholder(tok)
                i += 1
            elif tok.kind is Kind.OP:
                self.emit(tok.value)
                i += 1
            else:
                i = self._punct(toks, i)

    def _keyword(self, toks: list[Token], i: int) -> int:
        word = toks[i].value
        if word in ("INSERT", "UPDATE", "DELETE", "CREATE", "VALUES"):
            raise UnsupportedSqlError(f"{word} statements are outside the supported subset")
        if word == "AS":
            structural = self.clause == "with" or self.func_name == "CAST"
            if not structural and i + 1 < len(toks) and toks[i + 1].kind is Kind.IDENT:
                return i + 2  # drop alias definition
            self.keywords.append(word)
            self.emit(word)
            return i + 1
        if word == "CAST":
            self.keywords.append(word)
            self.emit(word, function=True)
            return i + 1
        if word in _JOIN_KEYWORDS:
            self.clause = "from"
            self.from_expect = "table"
        elif word in _CLAUSE_KEYWORDS:
            self.clause = _CLAUSE_KEYWORDS[word]
            if word == "FROM":
                self.from_expect = "table"
        elif word in ("UNION", "INTERSECT", "EXCEPT"):
            self.clause = "compound"
        self.keywords.append(word)
        self.emit(word)
        return i + 1

    def _ident(self, toks: list[Token], i: int) -> int:
        nxt = toks[i + 1] if i + 1 < len(toks) else None
        if nxt is not None and nxt.value == "(" and self.clause not in ("from", "with"):
            self.emit(toks[i].value.upper(), function=True)
            return i + 1
        if self.clause == "from":
            if nxt is not None and nxt.value == "(":
                raise UnsupportedSqlError(
                    f"table-valued function {toks[i].value!r} is not supported"
                )
            if self.from_expect == "alias":
                return i + 1  # bare table alias
            # qualified table name (db.table): collapse into one slot
            original = toks[i].value
            j = i + 1
            while j + 1 < len(toks) and toks[j].value == "." and toks[j + 1].kind is Kind.IDENT:
                original += "." + toks[j + 1].value
                j += 2
            self.emit(self.slot("T", original))
            self.from_expect = "alias"
            return j
        if self.clause == "with":
            self.emit(self.slot("T", toks[i].value))
            return i + 1
        if (
            self.func_name == "CAST"
            and self.out
            and self.out[-1] == "AS"
            and toks[i].value.upper() in TYPE_NAMES
        ):
            self.emit(toks[i].value.upper())  # cast target type, structural
            return i + 1
        # expression context: collapse qualified references into one column slot
        parts = [toks[i].value]
        j = i + 1
        while j + 1 < len(toks) and toks[j].value == ".":
            follower = toks[j + 1]
            if follower.kind is Kind.IDENT:
                parts.append(follower.value)
                j += 2
                continue
            if follower.kind is Kind.OP and follower.value == "*":
                self.emit(self.slot("T", ".".join(parts)))
                self.emit(".", attach=True)
                self.emit("*", attach=True)
                return j + 2
            break
        if (
            len(parts) == 1
            and self.clause == "select"
            and self.out
            and (_is_value_piece(self.out[-1]) or self.out[-1] == "*")
        ):
            return j  # bare column alias in the select list
        self.emit(self.slot("C", ".".join(parts)))
        return j

    def _literal(self, tok: Token) -> None:
        # fold a unary sign into the literal so "= -5" masks as "= _V"
        if (
            self.out
            and self.out[-1] in ("-", "+")
            and (len(self.out) < 2 or not _is_value_piece(self.out[-2]))
        ):
            self.out.pop()
            self.attach.pop()
        self.emit(self.slot("V", tok.value if tok.kind is not Kind.PARAM else "?"))

    def _placeholder(self, tok: Token) -> None:
        kind = tok.value[1]
        self.counts[kind] += 1
        self.emit(tok.value)
        if self.clause == "from" and kind == "T":
            self.from_expect = "alias"

    def _punct(self, toks: list[Token], i: int) -> int:
        val = toks[i].value
        if val == "(":
            nxt = i + 1
            is_subquery = nxt < len(toks) and toks[nxt].is_kw("SELECT", "WITH")
            func = self.out[-1] if self.prev_function else None
            self.emit("(", attach=self.prev_function)
            if is_subquery:
                self.frames.append(["subquery", "table", None])
            elif func is not None:
                self.frames.append(["expr", "table", func])
            else:
                self.frames.append([self.clause, self.from_expect, None])
            return i + 1
        if val == ")":
            if len(self.frames) > 1:
                self.frames.pop()
            if self.clause == "from":
                self.from_expect = "alias"  # derived table just closed
            self.emit(")", attach=True)
            return i + 1
        if val == ",":
            if self.clause == "from":
                self.from_expect = "table"
            self.emit(",", attach=True)
            return i + 1
        if val == ".":
            self.emit(".", attach=True)
            return i + 1
        raise SqlParseError(f"unexpected token {val!r}", toks[i].pos)

    def render(self) -> str:
        pieces = []
        for idx, text in enumerate(self.out):
            if idx == 0 or self.attach[idx] or self.out[idx - 1] in ("(", "."):
                pieces.append(text)
            else:
                pieces.append(" " + text)
        return "".join(pieces)


def skeletonize(sql: str, dialect: str = "sqlite", numbered: bool = False) -> SqlSkeleton:
    """Mask one query into its structural skeleton.

    Raises SqlParseError on malformed input and UnsupportedSqlError for
    constructs outside the supported dialect subset. Idempotent: masking a
    skeleton returns it unchanged.
    """
    if dialect != "sqlite":
        raise UnsupportedSqlError(f"unsupported dialect {dialect!r}")
    tokens = tokenize(sql)
    if not tokens:
        raise SqlParseError("empty statement", 0)
    check_balanced(tokens)
    first = tokens[0]
    if not (first.is_kw("SELECT", "WITH") or first.value == "("):
        raise UnsupportedSqlError(
            f"only SELECT/WITH queries are supported (got {first.value!r})"
        )
    masker = _Masker(tokens, numbered)
    masker.run()
    return SqlSkeleton(
        text=masker.render(),
        keyword_sequence=tuple(masker.keywords),
        arity=SlotArity(
            table=masker.counts["T"], column=masker.counts["C"], value=masker.counts["V"]
        ),
    )


def skeleton_tokens(skeleton: SqlSkeleton | str) -> list[str]:
    """Token list used for TF-IDF: words/placeholders with punctuation split off."""
    text = skeleton.text if isinstance(skeleton, SqlSkeleton) else skeleton
    for ch in "(),":
        text = text.replace(ch, f" {ch} ")
    return text.split()
