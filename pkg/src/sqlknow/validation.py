"""Validation pipeline runner: dual-reviewer scoring and the human review queue.

Items (annotations, value mappings, domain terms) move through the state
machine in :mod:`sqlknow.knowledge`. This module applies the two gateway
reviewer scores to Pending items and replays/append-logs human events so two
annotators can work asynchronously against the same file-backed queue.
Rejected terms are dropped from the terms table when events are applied; the
event log remains the append-only record.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

from .gateway import Gateway
from .knowledge import (
    Adjudication,
    HumanVote,
    KnowledgeBase,
    LlmScore,
    State,
    ValidationStatus,
    advance_validation,
)


def _items_by_key(kb: KnowledgeBase) -> dict[str, object]:
    index: dict[str, object] = {}
    for item in list(kb.annotations) + list(kb.value_mappings) + list(kb.terms):
        index[item.item_key] = item
    return index


def _replace_item(kb: KnowledgeBase, key: str, new_status: ValidationStatus) -> KnowledgeBase:
    def swap(seq):
        out = []
        for item in seq:
            if item.item_key == key:
                item = replace(item, status=new_status)
            out.append(item)
        return tuple(out)

    kb = replace(
        kb,
        annotations=swap(kb.annotations),
        value_mappings=swap(kb.value_mappings),
        terms=swap(kb.terms),
    )
    # the terms table never holds rejected entries
    return replace(
        kb, terms=tuple(t for t in kb.terms if t.status.state is not State.REJECTED)
    )


def event_to_obj(event: dict):
    kind = event["event"]
    if kind == "score":
        return LlmScore(
            model_id=event["model_id"],
            semantic_consistency=int(event["semantic_consistency"]),
            sql_validity=int(event["sql_validity"]),
        )
    if kind == "vote":
        return HumanVote(annotator_id=event["annotator_id"], accept=bool(event["accept"]))
    if kind == "adjudicate":
        return Adjudication(
            HumanVote(annotator_id=event["annotator_id"], accept=bool(event["accept"]))
        )
    raise ValueError(f"unknown event kind {kind!r}")


def apply_events(kb: KnowledgeBase, events: list[dict]) -> KnowledgeBase:
    """Replay logged events onto the KB, in order."""
    for event in events:
        index = _items_by_key(kb)
        item = index.get(event["item"])
        if item is None:
            continue  # e.g. a term rejected and dropped earlier in the log
        new_status = advance_validation(item.status, event_to_obj(event))
        kb = _replace_item(kb, event["item"], new_status)
    return kb


def scoring_payload(item) -> tuple[str, str]:
    """(natural-language side, SQL side) pair scored by the reviewers."""
    from .knowledge import DomainTerm, SchemaAnnotation, ValueMapping

    if isinstance(item, DomainTerm):
        return item.term_text, item.sql_expression
    if isinstance(item, ValueMapping):
        return item.meaning, f"{item.column} = '{item.code}'"
    if isinstance(item, SchemaAnnotation):
        return item.description, item.target
    raise TypeError(type(item).__name__)


def run_llm_reviews(kb: KnowledgeBase, gateway: Gateway) -> tuple[KnowledgeBase, list[dict]]:
    """Score every Pending item with both configured reviewer models.

    Returns the updated KB and the score events that were applied.
    """
    events: list[dict] = []
    models = gateway.config.models
    for item in list(kb.annotations) + list(kb.value_mappings) + list(kb.terms):
        if item.status.state is not State.PENDING:
            continue
        question, sql = scoring_payload(item)
        for model in models:
            semantic, validity = gateway.score_pair(question, sql, model)
            events.append(
                {
                    "item": item.item_key,
                    "event": "score",
                    "model_id": model,
                    "semantic_consistency": semantic,
                    "sql_validity": validity,
                }
            )
    return apply_events(kb, events), events


def human_queue(kb: KnowledgeBase) -> list:
    """Items awaiting human votes or adjudication, in stable key order."""
    queued = [
        item
        for item in list(kb.annotations) + list(kb.value_mappings) + list(kb.terms)
        if item.status.state is State.HUMAN_QUEUED
    ]
    return sorted(queued, key=lambda it: it.item_key)


def needs_adjudication(item) -> bool:
    votes = item.status.human_votes
    return len(votes) == 2 and votes[0].accept != votes[1].accept


def vote_event(item_key: str, annotator_id: str, accept: bool) -> dict:
    return {"item": item_key, "event": "vote", "annotator_id": annotator_id, "accept": accept}


def adjudicate_event(item_key: str, annotator_id: str, accept: bool) -> dict:
    return {
        "item": item_key,
        "event": "adjudicate",
        "annotator_id": annotator_id,
        "accept": accept,
    }


# -- file-backed event log -----------------------------------------------------------


def read_event_log(path: str | Path) -> list[dict]:
    p = Path(path)
    if not p.exists():
        return []
    events = []
    for line in p.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            events.append(json.loads(line))
    return events


def append_events(path: str | Path, events: list[dict]) -> None:
    if not events:
        return
    with open(path, "a", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event, sort_keys=True, ensure_ascii=False) + "\n")
