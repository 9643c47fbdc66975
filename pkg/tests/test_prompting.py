"""Prompt assembly: golden files, budgets, truncation order, determinism."""

from pathlib import Path

import pytest

from sqlknow.errors import BudgetExceededError
from sqlknow.knowledge import KnowledgeBase
from sqlknow.linker import link
from sqlknow.prompting import (
    PromptConfig,
    assemble,
    load_template,
    template_placeholders_in_order,
)
from sqlknow.schema import ColumnDef, DatabaseSchema, TableDef
from sqlknow.skeleton import skeletonize

GOLDEN_DIR = Path(__file__).parent / "data" / "golden"


def mini_schema():
    return DatabaseSchema(
        db_id="mini",
        tables=[
            TableDef("employees", (
                ColumnDef("id", "INTEGER", pk=True),
                ColumnDef("name", "TEXT"),
                ColumnDef("salary", "REAL"),
            )),
        ],
    )


def full_inputs(schools, kb):
    q = "What is the free meal rate of partially virtual schools in San Joaquin?"
    link_result = link(q, schools, kb, k1=5, k2=12, k3=5)
    skeletons = [
        skeletonize("SELECT FreeMealCount / Enrollment FROM frpm WHERE CDSCode = 'x'"),
        skeletonize("SELECT School FROM schools WHERE Virtual = 'P' AND County = 'y'"),
        skeletonize("SELECT COUNT(*) FROM schools WHERE County = 'z'"),
    ]
    return link_result, skeletons, q


def test_template_has_all_placeholders_once_in_order():
    template = load_template()
    placeholders = template_placeholders_in_order(template)
    assert placeholders == [
        "${DATABASE_SCHEMA}", "${DOMAIN_KG}", "${QA_PAIRS}", "${USER_QUESTION}"
    ]
    for p in placeholders:
        assert template.count(p) == 1


def test_minimal_golden_byte_for_byte():
    schema = mini_schema()
    q = "Who earns the highest salary?"
    link_result = link(q, schema, KnowledgeBase(db_id="mini"), k1=5, k2=12, k3=1)
    bundle = assemble(link_result, [], q, budget=4096, schema=schema,
                      kb=KnowledgeBase(db_id="mini"))
    assert bundle.text == (GOLDEN_DIR / "golden_minimal.txt").read_text(encoding="utf-8")
    assert not bundle.truncated


def test_full_golden_byte_for_byte(schools, kb):
    link_result, skeletons, q = full_inputs(schools, kb)
    bundle = assemble(link_result, skeletons, q, budget=4096, schema=schools, kb=kb)
    assert bundle.text == (GOLDEN_DIR / "golden_full.txt").read_text(encoding="utf-8")
    assert not bundle.truncated
    assert bundle.token_count <= 4096


def test_truncated_golden_byte_for_byte(schools, kb):
    link_result, skeletons, q = full_inputs(schools, kb)
    bundle = assemble(link_result, skeletons, q, budget=400, schema=schools, kb=kb)
    assert bundle.text == (GOLDEN_DIR / "golden_truncated.txt").read_text(encoding="utf-8")
    assert bundle.truncated
    assert bundle.token_count <= 400
    assert q in bundle.text  # the question is never truncated


def test_budgets_2048_and_4096_respected(schools, kb):
    link_result, skeletons, q = full_inputs(schools, kb)
    for budget in (2048, 4096):
        bundle = assemble(link_result, skeletons, q, budget=budget, schema=schools, kb=kb)
        assert bundle.token_count <= budget


def test_reassembly_is_byte_identical(schools, kb):
    link_result, skeletons, q = full_inputs(schools, kb)
    a = assemble(link_result, skeletons, q, budget=4096, schema=schools, kb=kb)
    b = assemble(link_result, skeletons, q, budget=4096, schema=schools, kb=kb)
    assert a.text == b.text


def test_sections_appear_in_template_order(schools, kb):
    link_result, skeletons, q = full_inputs(schools, kb)
    bundle = assemble(link_result, skeletons, q, budget=4096, schema=schools, kb=kb)
    schema_pos = bundle.text.index("### DATABASE SCHEMA")
    domain_pos = bundle.text.index("### DOMAIN KNOWLEDGE")
    pattern_pos = bundle.text.index("### RELEVANT QA PAIRS")
    question_pos = bundle.text.index("### QUESTION")
    assert schema_pos < domain_pos < pattern_pos < question_pos
    for header in ("### DATABASE SCHEMA", "### DOMAIN KNOWLEDGE",
                   "### RELEVANT QA PAIRS", "### QUESTION"):
        assert bundle.text.count(header) == 1


def test_truncation_drops_columns_before_skeletons_before_terms(schools, kb):
    link_result, skeletons, q = full_inputs(schools, kb)
    untruncated = assemble(link_result, skeletons, q, budget=4096, schema=schools, kb=kb)
    n_columns_full = untruncated.sections.database_schema.count("\n")

    # a budget that forces some truncation but not a total wipe drops columns
    mid = assemble(link_result, skeletons, q, budget=560, schema=schools, kb=kb)
    assert mid.truncated
    assert mid.sections.database_schema.count("\n") < n_columns_full
    # skeletons and terms still present at this budget
    assert mid.sections.query_pattern != "(none)"
    assert mid.sections.domain_term != "(none)"

    tight = assemble(link_result, skeletons, q, budget=420, schema=schools, kb=kb)
    assert tight.truncated
    # all columns went first, then skeletons; terms survive the longest
    assert tight.sections.database_schema == "(none)"
    assert tight.sections.domain_term != "(none)"
    assert q in tight.text


def test_budget_below_minimum_rejected(schools, kb):
    link_result, skeletons, q = full_inputs(schools, kb)
    with pytest.raises(ValueError):
        assemble(link_result, skeletons, q, budget=128, schema=schools, kb=kb)


def test_budget_too_small_for_scaffolding_errors(schools, kb):
    link_result, skeletons, _ = full_inputs(schools, kb)
    long_question = "why " * 400
    with pytest.raises(BudgetExceededError):
        assemble(link_result, skeletons, long_question, budget=300,
                 schema=schools, kb=kb)


def test_qa_pairs_mode_renders_question_sql_exemplars(schools, kb):
    link_result, skeletons, q = full_inputs(schools, kb)
    qa = [("How many schools are in Fresno county?",
           "SELECT COUNT(*) FROM schools WHERE County = 'Fresno'")]
    bundle = assemble(
        link_result, skeletons, q, budget=4096, schema=schools, kb=kb,
        config=PromptConfig(qa_pairs_mode=True), qa_pairs=qa,
    )
    assert "1. Q: How many schools are in Fresno county?" in bundle.text
    assert "   A: SELECT COUNT(*) FROM schools WHERE County = 'Fresno'" in bundle.text


def test_pluggable_tokenizer(schools, kb):
    link_result, skeletons, q = full_inputs(schools, kb)
    calls = []

    def exact(text):
        calls.append(text)
        return len(text.split())

    bundle = assemble(link_result, skeletons, q, budget=4096, schema=schools, kb=kb,
                      config=PromptConfig(tokenizer=exact))
    assert calls
    assert bundle.token_count == len(bundle.text.split())
