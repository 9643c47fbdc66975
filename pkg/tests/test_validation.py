"""Validation pipeline runner: LLM scoring stage and event-log replay."""

from dataclasses import replace

from sqlknow.gateway import MockScript, mock_gateway
from sqlknow.knowledge import State
from sqlknow.validation import (
    adjudicate_event,
    append_events,
    apply_events,
    human_queue,
    needs_adjudication,
    read_event_log,
    run_llm_reviews,
    vote_event,
)

from fixture_db import schools_kb


def pending_kb():
    kb = schools_kb()
    pending_terms = tuple(replace(t, status=replace(t.status, state=State.PENDING,
                                                    llm_scores=(), human_votes=(),
                                                    adjudication=None))
                          for t in kb.terms)
    return replace(kb, terms=pending_terms, annotations=(), value_mappings=())


def test_llm_stage_scores_with_both_models_and_queues():
    kb = pending_kb()
    gateway = mock_gateway()  # score_pair default (5, 5)
    scored, events = run_llm_reviews(kb, gateway)
    assert len(events) == 2 * len(kb.terms)
    assert all(t.status.state is State.HUMAN_QUEUED for t in scored.terms)
    models = {e["model_id"] for e in events}
    assert models == set(gateway.config.models)


def test_failing_scores_drop_terms_from_table():
    kb = pending_kb()
    gateway = mock_gateway(MockScript(score_pass_rate=0.0))
    scored, _events = run_llm_reviews(kb, gateway)
    assert scored.terms == ()  # rejected terms never stay in the terms table


def test_vote_events_accept_items():
    kb = pending_kb()
    scored, _ = run_llm_reviews(kb, mock_gateway())
    queue = human_queue(scored)
    assert queue
    key = queue[0].item_key
    kb2 = apply_events(scored, [vote_event(key, "ann1", True), vote_event(key, "ann2", True)])
    accepted = [t for t in kb2.terms if t.item_key == key]
    assert accepted and accepted[0].status.state is State.ACCEPTED


def test_disagreement_then_adjudication():
    kb = pending_kb()
    scored, _ = run_llm_reviews(kb, mock_gateway())
    key = human_queue(scored)[0].item_key
    kb2 = apply_events(scored, [vote_event(key, "ann1", True), vote_event(key, "ann2", False)])
    item = [t for t in kb2.terms if t.item_key == key][0]
    assert needs_adjudication(item)
    kb3 = apply_events(kb2, [adjudicate_event(key, "expert", True)])
    item3 = [t for t in kb3.terms if t.item_key == key][0]
    assert item3.status.state is State.ACCEPTED


def test_event_log_round_trip(tmp_path):
    path = tmp_path / "events.jsonl"
    events = [vote_event("term:abc", "ann1", True), adjudicate_event("term:abc", "x", False)]
    append_events(path, events)
    append_events(path, [vote_event("term:def", "ann2", False)])
    loaded = read_event_log(path)
    assert loaded == events + [vote_event("term:def", "ann2", False)]
    assert read_event_log(tmp_path / "missing.jsonl") == []


def test_replay_is_idempotent_across_reload(tmp_path):
    kb = pending_kb()
    scored, score_events = run_llm_reviews(kb, mock_gateway())
    key = human_queue(scored)[0].item_key
    votes = [vote_event(key, "ann1", True), vote_event(key, "ann2", True)]
    path = tmp_path / "events.jsonl"
    append_events(path, score_events + votes)
    replayed = apply_events(pending_kb(), read_event_log(path))
    item = [t for t in replayed.terms if t.item_key == key][0]
    assert item.status.state is State.ACCEPTED
