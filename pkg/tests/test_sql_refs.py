"""Reference extraction against the hand-labeled corpus and edge cases."""

import pytest

from sqlknow.errors import UnresolvedIdentifierError
from sqlknow.sql_refs import check_schema_consistency, extract_references


def test_join_with_aliases(racing):
    refs = extract_references(
        "SELECT a.name FROM circuits a JOIN races b ON a.circuitId = b.circuitId", racing
    )
    assert refs.tables == {"circuits", "races"}
    assert refs.columns == {"circuits.name", "circuits.circuitId", "races.circuitId"}


def test_constant_select_is_empty(racing):
    refs = extract_references("SELECT 1", racing)
    assert refs.tables == frozenset() and refs.columns == frozenset()


def test_star_expansion(racing):
    refs = extract_references("SELECT * FROM constructors", racing)
    assert refs.columns == {
        "constructors.constructorId",
        "constructors.constructorRef",
        "constructors.name",
        "constructors.nationality",
    }


def test_unresolved_identifiers_are_reported(racing):
    with pytest.raises(UnresolvedIdentifierError) as err:
        extract_references("SELECT bogus, alsobad FROM circuits", racing)
    assert err.value.names == ["alsobad", "bogus"]


def test_every_column_table_is_listed(racing, skeleton_corpus):
    for row in skeleton_corpus:
        refs = extract_references(row["sql"], racing)
        for col in refs.columns:
            assert col.split(".", 1)[0] in refs.tables, row["id"]


def test_corpus_references_match_hand_labels(racing, skeleton_corpus):
    mismatches = []
    for row in skeleton_corpus:
        refs = extract_references(row["sql"], racing)
        got_tables = sorted(refs.tables)
        got_columns = sorted(refs.columns)
        if got_tables != row["tables"] or got_columns != row["columns"]:
            mismatches.append((row["id"], row["tables"], got_tables,
                               row["columns"], got_columns))
    assert not mismatches, "\n".join(
        f"#{i}: tables expected {te} got {tg}\n    columns expected {ce}\n"
        f"    columns got      {cg}"
        for i, te, tg, ce, cg in mismatches
    )


def test_consistency_ok(racing):
    assert check_schema_consistency("SELECT name FROM circuits", racing).ok


def test_consistency_names_missing_column(racing):
    report = check_schema_consistency("SELECT missingcol FROM circuits", racing)
    assert not report.ok
    assert any("missingcol" in d for d in report.diagnostics)


def test_consistency_parse_failure(racing):
    report = check_schema_consistency("SELECT FROM WHERE ((", racing)
    assert not report.ok
    assert any("parse" in d for d in report.diagnostics)


def test_consistency_is_false_branch_not_exception(racing):
    for text in ["", "x y z", "SELECT nope FROM races", "DELETE FROM races"]:
        report = check_schema_consistency(text, racing)
        assert report.ok is False
