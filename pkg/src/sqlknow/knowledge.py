"""Knowledge base: the four per-database knowledge tables plus validation states.

The four logical tables are schema annotations, value mappings, domain terms,
and query-pattern references; the pattern graph itself is stored separately and
linked through ``graph_ref``. Tables are append-only: entries advance through
validation states and rejected entries are dropped at persist time rather than
edited in place.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .errors import IllegalTransition, InvariantViolation
from .schema import DatabaseSchema

# Both reviewers must reach this score on both dimensions to queue for humans.
LLM_GATE_MIN_SCORE = 4
REQUIRED_LLM_REVIEWS = 2
REQUIRED_HUMAN_VOTES = 2


class State(Enum):
    PENDING = "Pending"
    LLM_SCORED = "LlmScored"
    HUMAN_QUEUED = "HumanQueued"
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"


class Source(Enum):
    LLM = "llm"
    HUMAN = "human"


@dataclass(frozen=True)
class LlmScore:
    model_id: str
    semantic_consistency: int  # 1-5
    sql_validity: int  # 1-5

    def passes_gate(self) -> bool:
        return (
            self.semantic_consistency >= LLM_GATE_MIN_SCORE
            and self.sql_validity >= LLM_GATE_MIN_SCORE
        )


@dataclass(frozen=True)
class HumanVote:
    annotator_id: str
    accept: bool


@dataclass(frozen=True)
class ValidationStatus:
    state: State = State.PENDING
    llm_scores: tuple[LlmScore, ...] = ()
    human_votes: tuple[HumanVote, ...] = ()
    adjudication: HumanVote | None = None


def _status_after_scores(scores: tuple[LlmScore, ...]) -> State:
    if all(s.passes_gate() for s in scores):
        return State.HUMAN_QUEUED
    return State.REJECTED


def advance_validation(status: ValidationStatus, event) -> ValidationStatus:
    """Apply one validation event and return the new status.

    Events are ``LlmScore`` or ``HumanVote`` instances; adjudications are
    ``HumanVote`` wrapped in :class:`Adjudication`. Transitions follow
    Pending -> LlmScored -> {HumanQueued | Rejected} -> {Accepted | Rejected};
    anything else raises :class:`IllegalTransition`. Accepted and Rejected are
    terminal.
    """
    state = status.state
    if state in (State.ACCEPTED, State.REJECTED):
        raise IllegalTransition(f"{state.value} is terminal")

    if isinstance(event, LlmScore):
        if state not in (State.PENDING, State.LLM_SCORED):
            raise IllegalTransition(f"score event not legal in state {state.value}")
        scores = status.llm_scores + (event,)
        if len(scores) > REQUIRED_LLM_REVIEWS:
            raise IllegalTransition("both reviewer scores already recorded")
        if len(scores) < REQUIRED_LLM_REVIEWS:
            return replace(status, state=State.LLM_SCORED, llm_scores=scores)
        return replace(status, state=_status_after_scores(scores), llm_scores=scores)

    if isinstance(event, Adjudication):
        if state is not State.HUMAN_QUEUED:
            raise IllegalTransition("adjudication only applies to queued items")
        votes = {v.accept for v in status.human_votes}
        if len(status.human_votes) < REQUIRED_HUMAN_VOTES or len(votes) != 2:
            raise IllegalTransition("adjudication requires two disagreeing votes")
        new_state = State.ACCEPTED if event.vote.accept else State.REJECTED
        return replace(status, state=new_state, adjudication=event.vote)

    if isinstance(event, HumanVote):
        if state is not State.HUMAN_QUEUED:
            raise IllegalTransition(f"vote event not legal in state {state.value}")
        if any(v.annotator_id == event.annotator_id for v in status.human_votes):
            raise IllegalTransition(f"annotator {event.annotator_id} already voted")
        votes = status.human_votes + (event,)
        if len(votes) > REQUIRED_HUMAN_VOTES:
            raise IllegalTransition("both annotator votes already recorded")
        if len(votes) < REQUIRED_HUMAN_VOTES:
            return replace(status, human_votes=votes)
        decisions = {v.accept for v in votes}
        if len(decisions) == 1:
            new_state = State.ACCEPTED if votes[0].accept else State.REJECTED
            return replace(status, state=new_state, human_votes=votes)
        # Disagreement: stay queued awaiting a third-expert adjudication.
        return replace(status, human_votes=votes)

    raise IllegalTransition(f"unknown event type {type(event).__name__}")


@dataclass(frozen=True)
class Adjudication:
    """Tie-break decision by a third expert after two disagreeing votes."""

    vote: HumanVote


# -- the four tables ---------------------------------------------------------


@dataclass(frozen=True)
class SchemaAnnotation:
    target: str  # table name or "table.column"
    description: str
    abbreviation_expansion: str | None = None
    source: Source = Source.LLM
    status: ValidationStatus = field(default_factory=ValidationStatus)

    @property
    def item_key(self) -> str:
        return "ann:" + _digest(self.target)


@dataclass(frozen=True)
class ValueMapping:
    column: str  # "table.column"
    code: str
    meaning: str
    status: ValidationStatus = field(default_factory=ValidationStatus)

    @property
    def item_key(self) -> str:
        return "map:" + _digest(f"{self.column}|{self.code}")


class Operator(Enum):
    ADD = "+"
    SUB = "-"
    MUL = "*"
    DIV = "/"
    NONE = "none"


@dataclass(frozen=True)
class DomainTerm:
    term_text: str
    sql_expression: str
    columns_used: tuple[str, ...]  # "table.column" ids
    operator: Operator = Operator.NONE
    confidence: float = 0.0
    explanation: str = ""
    status: ValidationStatus = field(default_factory=ValidationStatus)

    @property
    def item_key(self) -> str:
        return "term:" + _digest(f"{self.term_text}|{self.sql_expression}")


@dataclass(frozen=True)
class QueryPatternRef:
    """Row of the fourth table: a pointer from this database into the shared graph."""

    graph_ref: str
    skeleton_cluster: int
    note: str = ""

    @property
    def item_key(self) -> str:
        return "pat:" + _digest(f"{self.graph_ref}|{self.skeleton_cluster}")


def _digest(text: str) -> str:
    return hashlib.blake2b(text.encode("utf-8"), digest_size=6).hexdigest()


@dataclass(frozen=True)
class KnowledgeBase:
    """Immutable container for one database's knowledge tables.

    Mutation is copy-and-replace (``dataclasses.replace``); loaded values can be
    shared read-only across pipeline stages.
    """

    db_id: str
    annotations: tuple[SchemaAnnotation, ...] = ()
    value_mappings: tuple[ValueMapping, ...] = ()
    terms: tuple[DomainTerm, ...] = ()
    pattern_refs: tuple[QueryPatternRef, ...] = ()
    graph_ref: str = ""
    # number of review-log events already folded into the stored statuses
    validation_cursor: int = 0

    def annotation_for(self, target: str) -> SchemaAnnotation | None:
        key = target.lower()
        for ann in self.annotations:
            if ann.target.lower() == key:
                return ann
        return None

    def mappings_for(self, column_id: str) -> list[ValueMapping]:
        key = column_id.lower()
        return [m for m in self.value_mappings if m.column.lower() == key]

    def accepted_terms(self) -> list[DomainTerm]:
        return [t for t in self.terms if t.status.state is State.ACCEPTED]

    def active_terms(self) -> list[DomainTerm]:
        """Terms usable by retrieval: everything not rejected."""
        return [t for t in self.terms if t.status.state is not State.REJECTED]

    def merge_annotations(self, new: list[SchemaAnnotation]) -> "KnowledgeBase":
        """Add annotations, never letting an llm-sourced one displace a human one."""
        by_target = {a.target.lower(): a for a in self.annotations}
        for ann in new:
            existing = by_target.get(ann.target.lower())
            if existing is not None and existing.source is Source.HUMAN and ann.source is Source.LLM:
                continue
            by_target[ann.target.lower()] = ann
        merged = tuple(sorted(by_target.values(), key=lambda a: a.target.lower()))
        return replace(self, annotations=merged)

    def validate(self, schema: DatabaseSchema | None = None) -> None:
        seen_mappings: set[tuple[str, str]] = set()
        for m in self.value_mappings:
            key = (m.column.lower(), m.code)
            if key in seen_mappings:
                raise InvariantViolation(f"duplicate value mapping for {m.column}={m.code}")
            seen_mappings.add(key)
        for t in self.terms:
            if not 0.0 <= t.confidence <= 1.0:
                raise InvariantViolation(f"term {t.term_text!r} confidence out of [0,1]")
            if t.status.state is State.REJECTED:
                raise InvariantViolation(f"rejected term {t.term_text!r} present in terms table")
            if not t.columns_used:
                raise InvariantViolation(f"term {t.term_text!r} references no columns")
        if schema is None:
            return
        if schema.db_id != self.db_id:
            raise InvariantViolation(
                f"knowledge base {self.db_id!r} validated against schema {schema.db_id!r}"
            )
        for ann in self.annotations:
            if "." in ann.target:
                if schema.resolve_column_id(ann.target) is None:
                    raise InvariantViolation(f"annotation target {ann.target} not in schema")
            elif not schema.has_table(ann.target):
                raise InvariantViolation(f"annotation target {ann.target} not in schema")
        for m in self.value_mappings:
            if schema.resolve_column_id(m.column) is None:
                raise InvariantViolation(f"value mapping column {m.column} not in schema")
        for t in self.terms:
            for col in t.columns_used:
                if schema.resolve_column_id(col) is None:
                    raise InvariantViolation(
                        f"term {t.term_text!r} references unknown column {col}"
                    )


# -- persistence ---------------------------------------------------------------


def _status_to_dict(s: ValidationStatus) -> dict:
    return {
        "state": s.state.value,
        "llm_scores": [
            {
                "model_id": x.model_id,
                "semantic_consistency": x.semantic_consistency,
                "sql_validity": x.sql_validity,
            }
            for x in s.llm_scores
        ],
        "human_votes": [
            {"annotator_id": v.annotator_id, "accept": v.accept} for v in s.human_votes
        ],
        "adjudication": (
            {"annotator_id": s.adjudication.annotator_id, "accept": s.adjudication.accept}
            if s.adjudication
            else None
        ),
    }


def _status_from_dict(d: dict) -> ValidationStatus:
    return ValidationStatus(
        state=State(d.get("state", "Pending")),
        llm_scores=tuple(
            LlmScore(x["model_id"], x["semantic_consistency"], x["sql_validity"])
            for x in d.get("llm_scores", [])
        ),
        human_votes=tuple(
            HumanVote(v["annotator_id"], v["accept"]) for v in d.get("human_votes", [])
        ),
        adjudication=(
            HumanVote(d["adjudication"]["annotator_id"], d["adjudication"]["accept"])
            if d.get("adjudication")
            else None
        ),
    )


def kb_to_dict(kb: KnowledgeBase) -> dict:
    return {
        "db_id": kb.db_id,
        "annotations": [
            {
                "target": a.target,
                "description": a.description,
                "abbreviation_expansion": a.abbreviation_expansion,
                "source": a.source.value,
                "status": _status_to_dict(a.status),
            }
            for a in kb.annotations
        ],
        "value_mappings": [
            {
                "column": m.column,
                "code": m.code,
                "meaning": m.meaning,
                "status": _status_to_dict(m.status),
            }
            for m in kb.value_mappings
        ],
        "terms": [
            {
                "term_text": t.term_text,
                "sql_expression": t.sql_expression,
                "columns_used": list(t.columns_used),
                "operator": t.operator.value,
                "confidence": t.confidence,
                "explanation": t.explanation,
                "status": _status_to_dict(t.status),
            }
            for t in kb.terms
        ],
        "pattern_refs": [
            {"graph_ref": p.graph_ref, "skeleton_cluster": p.skeleton_cluster, "note": p.note}
            for p in kb.pattern_refs
        ],
        "graph_ref": kb.graph_ref,
        "validation_cursor": kb.validation_cursor,
    }


def kb_from_dict(data: dict) -> KnowledgeBase:
    return KnowledgeBase(
        db_id=data["db_id"],
        annotations=tuple(
            SchemaAnnotation(
                target=a["target"],
                description=a["description"],
                abbreviation_expansion=a.get("abbreviation_expansion"),
                source=Source(a.get("source", "llm")),
                status=_status_from_dict(a.get("status", {})),
            )
            for a in data.get("annotations", [])
        ),
        value_mappings=tuple(
            ValueMapping(
                column=m["column"],
                code=m["code"],
                meaning=m["meaning"],
                status=_status_from_dict(m.get("status", {})),
            )
            for m in data.get("value_mappings", [])
        ),
        terms=tuple(
            DomainTerm(
                term_text=t["term_text"],
                sql_expression=t["sql_expression"],
                columns_used=tuple(t.get("columns_used", [])),
                operator=Operator(t.get("operator", "none")),
                confidence=float(t.get("confidence", 0.0)),
                explanation=t.get("explanation", ""),
                status=_status_from_dict(t.get("status", {})),
            )
            for t in data.get("terms", [])
        ),
        pattern_refs=tuple(
            QueryPatternRef(
                graph_ref=p["graph_ref"],
                skeleton_cluster=int(p["skeleton_cluster"]),
                note=p.get("note", ""),
            )
            for p in data.get("pattern_refs", [])
        ),
        graph_ref=data.get("graph_ref", ""),
        validation_cursor=int(data.get("validation_cursor", 0)),
    )


def store_kb(kb: KnowledgeBase, path: str | Path, schema: DatabaseSchema | None = None) -> None:
    """Write the KB as stable-key-ordered JSON; invalid KBs are rejected."""
    kb.validate(schema)
    Path(path).write_text(
        json.dumps(kb_to_dict(kb), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def load_kb(path: str | Path) -> KnowledgeBase:
    return kb_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
