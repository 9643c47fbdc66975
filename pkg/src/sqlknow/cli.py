"""Operator CLI wiring the pipeline stages together.

Every subcommand runs offline with ``--mock``, reads/writes only files, and
emits exactly one run manifest. Exit codes: 0 success, 1 usage or config
error, 2 partial failure (outputs written, some items failed), 3 pipeline
error.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sqlite3
import sys
import time
from dataclasses import replace
from pathlib import Path

import click

from . import knowledge as kn
from . import linker as lk
from . import pattern_graph as pg
from . import prompting
from . import reward as rw
from . import synthesis as syn
from . import validation as vd
from .config import AppConfig, config_snapshot, load_config
from .errors import ConfigError, SqlKnowError
from .gateway import Gateway
from .schema import load_schema_any
from .skeleton import skeletonize
from .term_miner import enrich_schema, mine_terms

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2
EXIT_PIPELINE = 3


class PartialFailure(SqlKnowError):
    """Outputs were written but some items failed."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(
    manifest_path: Path,
    command: str,
    config: AppConfig,
    inputs: list[Path],
    outputs: list[Path],
    started: float,
    gateway: Gateway | None,
    extra: dict | None = None,
) -> None:
    manifest = {
        "command": command,
        "config": config_snapshot(config),
        "seeds": {"seed": config.seed},
        "input_digests": {str(p): _sha256(Path(p)) for p in inputs if Path(p).exists()},
        "output_paths": [str(p) for p in outputs],
        "timing_seconds": round(time.monotonic() - started, 6),
        "token_usage": gateway.usage_summary() if gateway else {},
    }
    if extra:
        manifest.update(extra)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _load_corpus(path: Path, db_id: str | None = None) -> list[dict]:
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        row = json.loads(line)
        if db_id is None or row.get("db_id") in (None, db_id):
            rows.append(row)
    return rows


def _gateway(config: AppConfig, mock: bool) -> Gateway:
    gw_config = config.gateway
    if mock:
        gw_config = replace(gw_config, backend="mock")
    return Gateway(gw_config)


def _load_kb_or_new(path: Path, db_id: str) -> kn.KnowledgeBase:
    if path.exists():
        return kn.load_kb(path)
    return kn.KnowledgeBase(db_id=db_id)


pass_config = click.make_pass_decorator(AppConfig)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file.")
@click.option("--seed", type=int, default=None, help="Override the global seed.")
@click.pass_context
def cli(ctx, config_path, seed):
    """Knowledge-base construction and retrieval for text-to-SQL."""
    config = load_config(config_path)
    if seed is not None:
        config = replace(config, seed=seed)
    ctx.obj = config


@cli.command("enrich-schema")
@click.option("--db", "db_path", type=click.Path(exists=True), required=True)
@click.option("--db-id", default=None)
@click.option("--kb", "kb_path", type=click.Path(), required=True)
@click.option("--mock", is_flag=True, default=False)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@pass_config
def enrich_schema_cmd(config, db_path, db_id, kb_path, mock, manifest_path):
    """Annotate tables/columns and map coded values into the KB."""
    started = time.monotonic()
    schema = load_schema_any(db_path, db_id)
    gateway = _gateway(config, mock)
    result = enrich_schema(schema, gateway)
    kb = _load_kb_or_new(Path(kb_path), schema.db_id)
    kb = kb.merge_annotations(result.annotations)
    existing = {(m.column.lower(), m.code) for m in kb.value_mappings}
    new_maps = tuple(
        m for m in result.value_mappings if (m.column.lower(), m.code) not in existing
    )
    kb = replace(kb, value_mappings=kb.value_mappings + new_maps)
    kn.store_kb(kb, kb_path, schema)
    click.echo(
        f"annotations: {len(result.annotations)}, value mappings: {len(result.value_mappings)}, "
        f"failures: {len(result.failures)}"
    )
    _write_manifest(
        Path(manifest_path or f"{kb_path}.manifest.json"), "enrich-schema", config,
        [Path(db_path)], [Path(kb_path)], started, gateway,
        extra={"failures": result.failures},
    )
    if result.failures:
        raise PartialFailure(f"{len(result.failures)} enrichment items failed")


@cli.command("mine-terms")
@click.option("--db", "db_path", type=click.Path(exists=True), required=True)
@click.option("--db-id", default=None)
@click.option("--kb", "kb_path", type=click.Path(), required=True)
@click.option("--top-k", type=int, default=None)
@click.option("--n-target", type=int, default=None)
@click.option("--mock", is_flag=True, default=False)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@pass_config
def mine_terms_cmd(config, db_path, db_id, kb_path, top_k, n_target, mock, manifest_path):
    """Mine domain terms by cross-cluster column combination."""
    started = time.monotonic()
    schema = load_schema_any(db_path, db_id)
    gateway = _gateway(config, mock)
    mine_config = replace(
        config.mine,
        seed=config.seed,
        **({"top_k": top_k} if top_k is not None else {}),
        **({"n_target": n_target} if n_target is not None else {}),
    )
    kb = _load_kb_or_new(Path(kb_path), schema.db_id)
    result = mine_terms(schema, gateway, mine_config, kb)
    existing = {t.item_key for t in kb.terms}
    new_terms = tuple(t for t in result.terms if t.item_key not in existing)
    kb = replace(kb, terms=kb.terms + new_terms)
    kn.store_kb(kb, kb_path, schema)
    report = result.report
    click.echo(
        f"terms returned: {report.returned} (valid generated: {report.valid_generated}, "
        f"clusters: {report.clusters}, review calls: {report.review_calls})"
    )
    click.echo(
        f"accepted terms: {report.accepted_current} / target {report.accepted_target}"
    )
    _write_manifest(
        Path(manifest_path or f"{kb_path}.manifest.json"), "mine-terms", config,
        [Path(db_path)], [Path(kb_path)], started, gateway,
        extra={"mining_report": report.__dict__},
    )
    if report.partial:
        raise PartialFailure("mining stopped before reaching the target")


@cli.command("build-graph")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True,
              help="JSONL with {id, db_id, question, sql} records.")
@click.option("--db", "db_path", type=click.Path(exists=True), required=True)
@click.option("--db-id", default=None)
@click.option("--kb", "kb_path", type=click.Path(), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--kq", type=int, default=None, help="Pinned question-cluster count.")
@click.option("--ks", type=int, default=None, help="Pinned skeleton-cluster count.")
@click.option("--mock", is_flag=True, default=False,
              help="Accepted for uniformity; this command is offline regardless.")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@pass_config
def build_graph_cmd(config, corpus_path, db_path, db_id, kb_path, out_path, kq, ks,
                    mock, manifest_path):
    """Cluster the corpus and build the pattern graph."""
    started = time.monotonic()
    schema = load_schema_any(db_path, db_id)
    rows = _load_corpus(Path(corpus_path), schema.db_id)
    pairs = [(r["question"], r["sql"]) for r in rows]
    kb = kn.load_kb(kb_path) if kb_path and Path(kb_path).exists() else None
    graph_config = replace(config.graph, seed=config.seed, embed=config.embed)
    if kq is not None:
        graph_config = replace(graph_config, question_clusters=kq)
    if ks is not None:
        graph_config = replace(graph_config, skeleton_clusters=ks)
    graph = pg.build_graph(pairs, schema, kb, graph_config)
    pg.store_graph(graph, out_path)
    outputs = [Path(out_path)]
    if kb is not None:
        refs = tuple(
            kn.QueryPatternRef(graph_ref=graph.graph_id, skeleton_cluster=sc.id)
            for sc in graph.skeleton_clusters
        )
        kb = replace(kb, graph_ref=graph.graph_id, pattern_refs=refs)
        kn.store_kb(kb, kb_path, schema)
        outputs.append(Path(kb_path))
    click.echo(
        f"graph: {len(graph.question_clusters)} question clusters, "
        f"{len(graph.skeleton_clusters)} skeleton clusters, {len(graph.edges)} edges, "
        f"{len(graph.dropped)} pairs dropped"
    )
    _write_manifest(
        Path(manifest_path or f"{out_path}.manifest.json"), "build-graph", config,
        [Path(corpus_path), Path(db_path)], outputs, started, None,
        extra={"dropped": [list(d) for d in graph.dropped]},
    )
    if graph.dropped:
        raise PartialFailure(f"{len(graph.dropped)} pairs dropped")


@cli.command("link")
@click.option("--db", "db_path", type=click.Path(exists=True), required=True)
@click.option("--db-id", default=None)
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
@click.option("--question", required=True)
@click.option("--k1", type=int, default=None)
@click.option("--k2", type=int, default=None)
@click.option("--k3", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--mock", is_flag=True, default=False,
              help="Accepted for uniformity; this command is offline regardless.")
@pass_config
def link_cmd(config, db_path, db_id, kb_path, question, k1, k2, k3, out_path, mock,
             manifest_path):
    """Link a question to tables, columns and domain terms."""
    started = time.monotonic()
    schema = load_schema_any(db_path, db_id)
    kb = kn.load_kb(kb_path) if kb_path else None
    result = lk.link(
        question, schema, kb,
        k1=k1 or config.link.k1, k2=k2 or config.link.k2, k3=k3 or config.link.k3,
    )
    payload = {
        "question": result.question,
        "tables": [[t, s] for t, s in result.tables],
        "columns": {t: [[c, s] for c, s in cols] for t, cols in result.columns.items()},
        "terms": [
            {"term_text": t.term_text, "sql_expression": t.sql_expression, "score": s}
            for t, s in result.terms
        ],
        "expansion_added": sorted(result.expansion_added),
    }
    Path(out_path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    click.echo(f"linked {len(result.tables)} tables, {len(result.linked_column_ids())} columns")
    _write_manifest(
        Path(manifest_path or f"{out_path}.manifest.json"), "link", config,
        [Path(db_path)] + ([Path(kb_path)] if kb_path else []), [Path(out_path)],
        started, None,
    )


@cli.command("eval-slr")
@click.option("--db", "db_path", type=click.Path(exists=True), required=True)
@click.option("--db-id", default=None)
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
@click.option("--eval", "eval_path", type=click.Path(exists=True), required=True,
              help="JSONL with {question, sql} records (gold).")
@click.option("--k2", "k2_list", default="4,8,12,16", help="Comma-separated k2 sweep.")
@click.option("--k1", type=int, default=None)
@click.option("--k3", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--mock", is_flag=True, default=False,
              help="Accepted for uniformity; this command is offline regardless.")
@pass_config
def eval_slr_cmd(config, db_path, db_id, kb_path, eval_path, k2_list, k1, k3, out_path,
                 mock, manifest_path):
    """Schema Linking Recall over a k2 sweep, written as CSV."""
    started = time.monotonic()
    schema = load_schema_any(db_path, db_id)
    kb = kn.load_kb(kb_path) if kb_path else None
    rows = _load_corpus(Path(eval_path), schema.db_id)
    eval_set = [(r["question"], r["sql"]) for r in rows]
    k1 = k1 or config.link.k1
    k3 = k3 or config.link.k3
    sweep = [int(v) for v in k2_list.split(",") if v.strip()]
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k2", "slr_step1", "slr_step2", "hits", "evaluated", "excluded"])
        for k2 in sweep:
            step1 = lk.slr(eval_set, schema, kb, k1=k1, k2=k2, k3=k3, step2=False)
            step2 = lk.slr(eval_set, schema, kb, k1=k1, k2=k2, k3=k3, step2=True)
            writer.writerow(
                [k2, f"{step1.recall:.6f}", f"{step2.recall:.6f}", step2.hits,
                 step2.evaluated, step2.excluded]
            )
            click.echo(f"k2={k2}: step1={step1.recall:.4f} step2={step2.recall:.4f}")
    _write_manifest(
        Path(manifest_path or f"{out_path}.manifest.json"), "eval-slr", config,
        [Path(db_path), Path(eval_path)], [Path(out_path)], started, None,
    )


@cli.command("assemble-prompt")
@click.option("--db", "db_path", type=click.Path(exists=True), required=True)
@click.option("--db-id", default=None)
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
@click.option("--graph", "graph_path", type=click.Path(exists=True), default=None)
@click.option("--question", required=True)
@click.option("--budget", type=int, default=None)
@click.option("--k4", type=int, default=None)
@click.option("--qa-pairs", "qa_pairs_mode", is_flag=True, default=False,
              help="Emit full medoid QA pairs instead of skeletons.")
@click.option("--mock", is_flag=True, default=False,
              help="Accepted for uniformity; this command is offline regardless.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@pass_config
def assemble_prompt_cmd(config, db_path, db_id, kb_path, graph_path, question, budget, k4,
                        qa_pairs_mode, out_path, mock, manifest_path):
    """Assemble the generation prompt for one question."""
    started = time.monotonic()
    schema = load_schema_any(db_path, db_id)
    kb = kn.load_kb(kb_path) if kb_path else None
    link_result = lk.link(
        question, schema, kb, k1=config.link.k1, k2=config.link.k2, k3=config.link.k3
    )
    skeletons = []
    qa_pairs = None
    if graph_path:
        graph = pg.load_graph(graph_path)
        skeletons = pg.retrieve_skeletons(
            question, graph, k4 or config.link.k4, seed=config.seed, schema=schema, kb=kb
        )
        if qa_pairs_mode:
            by_text = {sc.medoid_skeleton: sc for sc in graph.skeleton_clusters}
            qa_pairs = [
                (by_text[s.text].medoid_question, by_text[s.text].medoid_sql)
                for s in skeletons
                if s.text in by_text
            ]
    bundle = prompting.assemble(
        link_result, skeletons, question,
        budget or config.budgets.inference,
        schema=schema, kb=kb,
        config=prompting.PromptConfig(qa_pairs_mode=qa_pairs_mode),
        qa_pairs=qa_pairs,
    )
    Path(out_path).write_text(bundle.text, encoding="utf-8")
    click.echo(f"tokens: {bundle.token_count}, truncated: {bundle.truncated}")
    _write_manifest(
        Path(manifest_path or f"{out_path}.manifest.json"), "assemble-prompt", config,
        [Path(db_path)] + ([Path(kb_path)] if kb_path else [])
        + ([Path(graph_path)] if graph_path else []),
        [Path(out_path)], started, None,
        extra={"token_count": bundle.token_count, "truncated": bundle.truncated},
    )


@cli.command("build-templates")
@click.option("--db", "db_path", type=click.Path(exists=True), required=True)
@click.option("--db-id", default=None)
@click.option("--graph", "graph_path", type=click.Path(exists=True), default=None,
              help="Use the graph's representative skeletons.")
@click.option("--skeletons", "skeletons_path", type=click.Path(exists=True), default=None,
              help="Text file with one skeleton per line.")
@click.option("--pool-target", type=int, default=None)
@click.option("--mock", is_flag=True, default=False)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@pass_config
def build_templates_cmd(config, db_path, db_id, graph_path, skeletons_path, pool_target,
                        mock, out_path, manifest_path):
    """Expand skeletons into executable SQL templates."""
    started = time.monotonic()
    if not graph_path and not skeletons_path:
        raise ConfigError("provide --graph or --skeletons")
    schema = load_schema_any(db_path, db_id)
    gateway = _gateway(config, mock)
    skeletons = []
    if graph_path:
        skeletons.extend(pg.representative_queries(pg.load_graph(graph_path)))
    if skeletons_path:
        for line in Path(skeletons_path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line:
                skeletons.append(skeletonize(line))
    synth_config = replace(config.synth, seed=config.seed)
    if pool_target is not None:
        synth_config = replace(synth_config, pool_target=pool_target)
    pool, report = syn.build_template_pool(skeletons, schema, gateway, synth_config)
    with open(out_path, "w", encoding="utf-8") as fh:
        for template in pool:
            fh.write(json.dumps(syn.template_to_dict(template), sort_keys=True,
                                ensure_ascii=False) + "\n")
    click.echo(
        f"templates: {len(pool)} retained of {report.requested} requested "
        f"({len(report.rejected)} rejected, {len(report.skipped_skeletons)} skeletons skipped)"
    )
    _write_manifest(
        Path(manifest_path or f"{out_path}.manifest.json"), "build-templates", config,
        [Path(db_path)], [Path(out_path)], started, gateway,
        extra={"rejected": len(report.rejected)},
    )
    if report.rejected or report.skipped_skeletons:
        raise PartialFailure("some templates were rejected or skipped")


@cli.command("synthesize")
@click.option("--db", "db_path", type=click.Path(exists=True), required=True)
@click.option("--db-id", default=None)
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
@click.option("--graph", "graph_path", type=click.Path(exists=True), required=True)
@click.option("--templates", "templates_path", type=click.Path(exists=True), required=True)
@click.option("--m-real", type=int, required=True,
              help="Number of real training examples being mixed with.")
@click.option("--rho", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--mock", is_flag=True, default=False)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@pass_config
def synthesize_cmd(config, db_path, db_id, kb_path, graph_path, templates_path, m_real,
                   rho, alpha, mock, out_path, manifest_path):
    """Sample templates, generate question-SQL pairs, and augment 16x."""
    started = time.monotonic()
    schema = load_schema_any(db_path, db_id)
    kb = kn.load_kb(kb_path) if kb_path else None
    gateway = _gateway(config, mock)
    graph = pg.load_graph(graph_path)
    reps = pg.representative_queries(graph)
    pool = [
        syn.template_from_dict(json.loads(line))
        for line in Path(templates_path).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    synth_config = replace(
        config.synth,
        seed=config.seed,
        **({"rho": rho} if rho is not None else {}),
        **({"alpha": alpha} if alpha is not None else {}),
    )
    sampled = syn.sample_templates(
        pool, reps, m_real, synth_config.rho, synth_config.alpha,
        guided=True, seed=config.seed, config=synth_config,
    )
    pairs, gen_report = syn.generate_pairs(sampled, schema, kb, gateway,
                                           k_terms=synth_config.k_terms)
    total = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            for variant in syn.augment(pair, schema, gateway, synth_config):
                fh.write(json.dumps(syn.dataset_record(variant, schema.db_id),
                                    sort_keys=True, ensure_ascii=False) + "\n")
                total += 1
    click.echo(
        f"sampled {len(sampled)} templates -> {len(pairs)} base pairs -> {total} augmented pairs"
    )
    _write_manifest(
        Path(manifest_path or f"{out_path}.manifest.json"), "synthesize", config,
        [Path(db_path), Path(graph_path), Path(templates_path)], [Path(out_path)],
        started, gateway,
        extra={"sampled": len(sampled), "base_pairs": len(pairs), "augmented": total,
               "rejected": len(gen_report.rejected)},
    )
    if gen_report.rejected:
        raise PartialFailure(f"{len(gen_report.rejected)} templates rejected at generation")


@cli.command("score-reward")
@click.option("--db", "db_path", type=click.Path(exists=True), required=True,
              help="SQLite database file (queries are executed).")
@click.option("--db-id", default=None)
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
@click.option("--candidates", "candidates_path", type=click.Path(exists=True), required=True,
              help="JSONL with {id, question, gold_sql, candidate_sql | candidates}.")
@click.option("--mock", is_flag=True, default=False,
              help="Accepted for uniformity; this command is offline regardless.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@pass_config
def score_reward_cmd(config, db_path, db_id, kb_path, candidates_path, out_path, mock,
                     manifest_path):
    """Score candidate SQL with the tiered execution/knowledge reward."""
    started = time.monotonic()
    from .schema import schema_from_sqlite_file

    schema = schema_from_sqlite_file(db_path, db_id)
    kb = kn.load_kb(kb_path) if kb_path else None
    conn = sqlite3.connect(db_path)
    results = []
    histogram: dict[str, int] = {}
    failures = 0
    try:
        for row in _load_corpus(Path(candidates_path)):
            question = row["question"]
            gold = row["gold_sql"]
            candidates = row.get("candidates") or [row["candidate_sql"]]
            link_result = lk.link(
                question, schema, kb,
                k1=config.link.k1, k2=config.link.k2, k3=config.link.k3,
            )
            entry = {"id": row.get("id"), "scores": []}
            for candidate in candidates:
                try:
                    outcome = rw.score(
                        candidate, gold, conn, link_result, kb=kb, schema=schema,
                        timeout_ms=config.reward_timeout_ms,
                    )
                except ValueError as exc:
                    entry["scores"].append({"error": str(exc)})
                    failures += 1
                    continue
                entry["scores"].append(
                    {"tier": outcome.tier.value, "value": outcome.value,
                     "diagnostics": outcome.diagnostics}
                )
                histogram[outcome.tier.value] = histogram.get(outcome.tier.value, 0) + 1
            results.append(entry)
    finally:
        conn.close()
    payload = {"results": results, "tier_histogram": dict(sorted(histogram.items()))}
    Path(out_path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    click.echo("tier histogram: " + json.dumps(dict(sorted(histogram.items()))))
    _write_manifest(
        Path(manifest_path or f"{out_path}.manifest.json"), "score-reward", config,
        [Path(db_path), Path(candidates_path)], [Path(out_path)], started, None,
    )
    if failures:
        raise PartialFailure(f"{failures} candidates could not be scored")


@cli.command("review")
@click.option("--db", "db_path", type=click.Path(exists=True), required=True)
@click.option("--db-id", default=None)
@click.option("--kb", "kb_path", type=click.Path(exists=True), required=True)
@click.option("--events", "events_path", type=click.Path(), default=None,
              help="Append-only event log (defaults to <kb>.events.jsonl).")
@click.option("--annotator", default=None, help="Annotator id for votes.")
@click.option("--adjudicator", default=None, help="Adjudicator id for tie-breaks.")
@click.option("--llm-score/--no-llm-score", default=True,
              help="Score Pending items with both reviewer models first.")
@click.option("--mock", is_flag=True, default=False)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@pass_config
def review_cmd(config, db_path, db_id, kb_path, events_path, annotator, adjudicator,
               llm_score, mock, manifest_path):
    """Review queue: LLM gate, then one-at-a-time human votes/adjudications."""
    started = time.monotonic()
    schema = load_schema_any(db_path, db_id)
    events_file = Path(events_path or f"{kb_path}.events.jsonl")
    kb = kn.load_kb(kb_path)
    logged_events = vd.read_event_log(events_file)
    # fold in only the log suffix not already reflected in the stored statuses
    kb = vd.apply_events(kb, logged_events[kb.validation_cursor :])
    folded = len(logged_events)
    gateway = _gateway(config, mock) if llm_score else None
    new_events: list[dict] = []
    if llm_score:
        kb, score_events = vd.run_llm_reviews(kb, gateway)
        new_events.extend(score_events)
        if score_events:
            click.echo(f"scored {len(score_events) // 2} pending items with both reviewers")

    queue = vd.human_queue(kb)
    if not queue:
        click.echo("queue empty")
    for item in queue:
        question, sql = vd.scoring_payload(item)
        needs_adj = vd.needs_adjudication(item)
        click.echo(f"\n[{item.item_key}] {type(item).__name__}")
        click.echo(f"  text: {question}")
        click.echo(f"  sql:  {sql}")
        if needs_adj:
            if adjudicator is None:
                click.echo("  needs adjudication (rerun with --adjudicator)")
                continue
            decision = click.prompt("  adjudicate [a]ccept/[r]eject/[s]kip", default="s")
            if decision.lower().startswith("a"):
                new_events.append(vd.adjudicate_event(item.item_key, adjudicator, True))
            elif decision.lower().startswith("r"):
                new_events.append(vd.adjudicate_event(item.item_key, adjudicator, False))
            continue
        if annotator is None:
            click.echo("  awaiting votes (rerun with --annotator)")
            continue
        if any(v.annotator_id == annotator for v in item.status.human_votes):
            click.echo("  already voted by this annotator")
            continue
        decision = click.prompt("  vote [a]ccept/[r]eject/[s]kip", default="s")
        if decision.lower().startswith("a"):
            new_events.append(vd.vote_event(item.item_key, annotator, True))
        elif decision.lower().startswith("r"):
            new_events.append(vd.vote_event(item.item_key, annotator, False))

    if new_events:
        kb = vd.apply_events(kb, [e for e in new_events if e["event"] != "score"])
        vd.append_events(events_file, new_events)
    kb = replace(kb, validation_cursor=folded + len(new_events))
    kn.store_kb(kb, kb_path, schema)
    accepted = sum(
        1
        for item in list(kb.annotations) + list(kb.value_mappings) + list(kb.terms)
        if item.status.state is kn.State.ACCEPTED
    )
    click.echo(f"\naccepted items: {accepted}; queue remaining: {len(vd.human_queue(kb))}")
    _write_manifest(
        Path(manifest_path or f"{kb_path}.review-manifest.json"), "review", config,
        [Path(db_path)], [Path(kb_path), events_file], started, gateway,
        extra={"events_appended": len(new_events)},
    )


@cli.command("export-graph")
@click.option("--graph", "graph_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--mock", is_flag=True, default=False,
              help="Accepted for uniformity; this command is offline regardless.")
@pass_config
def export_graph_cmd(config, graph_path, out_path, mock, manifest_path):
    """Export the pattern graph as a Cypher statement stream."""
    started = time.monotonic()
    graph = pg.load_graph(graph_path)
    Path(out_path).write_text(pg.export_cypher(graph), encoding="utf-8")
    click.echo(f"wrote {len(graph.edges)} edges")
    _write_manifest(
        Path(manifest_path or f"{out_path}.manifest.json"), "export-graph", config,
        [Path(graph_path)], [Path(out_path)], started, None,
    )


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except PartialFailure as exc:
        click.echo(f"partial failure: {exc}", err=True)
        return EXIT_PARTIAL
    except (ConfigError, click.UsageError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    except SqlKnowError as exc:
        click.echo(f"pipeline error: {exc}", err=True)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
