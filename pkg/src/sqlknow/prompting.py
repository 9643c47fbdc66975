"""Prompt assembly: render the generation prompt from linked knowledge.

The scaffolding lives in a versioned asset file with four placeholders, filled
in template order: the selected schema as annotated DDL, the linked domain
terms, the retrieved skeleton exemplars (or full medoid QA pairs when
configured), and the user question verbatim. Assembly is byte-deterministic.

When the rendered prompt exceeds the token budget, content is dropped in a
fixed order: lowest-score columns first, then the last (least probable)
skeletons, then lowest-score terms. Scaffolding and the question are never
truncated; if they alone exceed the budget, assembly fails.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Callable

from .errors import BudgetExceededError
from .knowledge import KnowledgeBase
from .linker import LinkResult
from .schema import DatabaseSchema
from .skeleton import SqlSkeleton
from .textproc import estimate_tokens

MIN_BUDGET = 256
EMPTY_SECTION = "(none)"

_PLACEHOLDERS = (
    "${DATABASE_SCHEMA}",
    "${DOMAIN_KG}",
    "${QA_PAIRS}",
    "${USER_QUESTION}",
)


def load_template() -> str:
    return (
        resources.files("sqlknow.assets").joinpath("prompt_template.txt").read_text("utf-8")
    )


@dataclass(frozen=True)
class PromptSections:
    database_schema: str
    domain_term: str
    query_pattern: str
    user_question: str


@dataclass(frozen=True)
class PromptBundle:
    text: str
    sections: PromptSections
    token_count: int
    truncated: bool


@dataclass(frozen=True)
class PromptConfig:
    tokenizer: Callable[[str], int] | None = None  # None -> built-in estimator
    qa_pairs_mode: bool = False


@dataclass
class _ColumnEntry:
    column_id: str
    score: float
    expanded: bool


def _count_tokens(text: str, config: PromptConfig) -> int:
    if config.tokenizer is not None:
        return config.tokenizer(text)
    return estimate_tokens(text)


def _render_schema(
    link: LinkResult,
    schema: DatabaseSchema,
    kb: KnowledgeBase | None,
    kept_columns: set[str],
) -> str:
    blocks = []
    for table_name, _score in link.tables:
        tdef = schema.table(table_name)
        selected = [
            c for c in tdef.columns if f"{tdef.name}.{c.name}" in kept_columns
        ]
        if not selected:
            continue
        lines = [f"CREATE TABLE {tdef.name} ("]
        rendered = []
        for col in selected:
            col_id = f"{tdef.name}.{col.name}"
            decl = f"  {col.name} {col.type}"
            if col.pk:
                decl += " PRIMARY KEY"
            if col.fk:
                ref_table, ref_col = col.fk.split(".", 1)
                decl += f" REFERENCES {ref_table}({ref_col})"
            comments = []
            if kb is not None:
                ann = kb.annotation_for(col_id)
                if ann is not None:
                    comments.append(ann.description)
                mappings = kb.mappings_for(col_id)
                if mappings:
                    codes = ", ".join(f"{m.code} = \"{m.meaning}\"" for m in mappings)
                    comments.append(f"codes: {codes}")
            rendered.append((decl, "; ".join(comments)))
        body = []
        for idx, (decl, comment) in enumerate(rendered):
            line = decl + ("," if idx < len(rendered) - 1 else "")
            if comment:
                line += f" -- {comment}"
            body.append(line)
        lines.append("\n".join(body))
        closing = ");"
        if kb is not None:
            ann = kb.annotation_for(tdef.name)
            if ann is not None:
                closing += f" -- {ann.description}"
        lines.append(closing)
        blocks.append("\n".join(lines))
    return "\n".join(blocks) if blocks else EMPTY_SECTION


def _render_terms(terms) -> str:
    if not terms:
        return EMPTY_SECTION
    lines = []
    for term, _score in terms:
        line = f"- {term.term_text}: {term.sql_expression}"
        if term.explanation:
            line += f" -- {term.explanation}"
        lines.append(line)
    return "\n".join(lines)


def _render_patterns(skeletons, qa_pairs, config: PromptConfig) -> str:
    if config.qa_pairs_mode and qa_pairs:
        lines = []
        for i, (question, sql) in enumerate(qa_pairs, start=1):
            lines.append(f"{i}. Q: {question}")
            lines.append(f"   A: {sql}")
        return "\n".join(lines)
    if not skeletons:
        return EMPTY_SECTION
    return "\n".join(
        f"{i}. {s.text if isinstance(s, SqlSkeleton) else s}"
        for i, s in enumerate(skeletons, start=1)
    )


def assemble(
    link: LinkResult,
    skeletons: list[SqlSkeleton],
    q: str,
    budget: int,
    schema: DatabaseSchema = None,
    kb: KnowledgeBase | None = None,
    config: PromptConfig = PromptConfig(),
    qa_pairs: list[tuple[str, str]] | None = None,
) -> PromptBundle:
    """Build the prompt for one question under a token budget."""
    if budget < MIN_BUDGET:
        raise ValueError(f"budget must be >= {MIN_BUDGET}")
    if schema is None:
        raise ValueError("schema is required to render the prompt")
    template = load_template()

    column_entries: list[_ColumnEntry] = []
    for table, cols in link.columns.items():
        for col_id, score in cols:
            column_entries.append(_ColumnEntry(col_id, score, expanded=False))
    for col_id in sorted(link.expansion_added):
        column_entries.append(_ColumnEntry(col_id, 0.0, expanded=True))

    kept_columns = {e.column_id for e in column_entries}
    kept_skeletons = list(skeletons)
    kept_terms = list(link.terms)
    kept_qa = list(qa_pairs or [])
    truncated = False

    def render() -> tuple[str, PromptSections]:
        sections = PromptSections(
            database_schema=_render_schema(link, schema, kb, kept_columns),
            domain_term=_render_terms(kept_terms),
            query_pattern=_render_patterns(kept_skeletons, kept_qa, config),
            user_question=q,
        )
        text = template
        text = text.replace("${DATABASE_SCHEMA}", sections.database_schema)
        text = text.replace("${DOMAIN_KG}", sections.domain_term)
        text = text.replace("${QA_PAIRS}", sections.query_pattern)
        text = text.replace("${USER_QUESTION}", sections.user_question)
        return text, sections

    # droppable columns, lowest score first (expansion columns carry their own
    # rank); ties drop the lexicographically later id first
    drop_order = sorted(column_entries, key=lambda e: (e.score, _reverse_key(e.column_id)))
    drop_cursor = 0

    while True:
        text, sections = render()
        tokens = _count_tokens(text, config)
        if tokens <= budget:
            return PromptBundle(
                text=text, sections=sections, token_count=tokens, truncated=truncated
            )
        truncated = True
        if drop_cursor < len(drop_order):
            kept_columns.discard(drop_order[drop_cursor].column_id)
            drop_cursor += 1
            continue
        if kept_qa:
            kept_qa.pop()
            continue
        if kept_skeletons:
            kept_skeletons.pop()
            continue
        if kept_terms:
            kept_terms.pop()
            continue
        raise BudgetExceededError(
            f"scaffolding and question need {tokens} tokens; budget is {budget}"
        )


def _reverse_key(s: str) -> tuple:
    """Sort key that orders strings descending under an ascending sort."""
    return tuple(-ord(ch) for ch in s)


def template_placeholders_in_order(template: str | None = None) -> list[str]:
    """The placeholder regions, in the order they appear in the template."""
    text = template if template is not None else load_template()
    found = []
    for placeholder in _PLACEHOLDERS:
        idx = text.find(placeholder)
        if idx >= 0:
            found.append((idx, placeholder))
    return [p for _, p in sorted(found)]
