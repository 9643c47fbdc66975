"""Synthetic question-SQL data: template pool, biased sampling, generation,
and the 4x4 augmentation fan-out.

The number of templates drawn is N = ceil(rho/(1-rho) * M/fanout), where M is
the real-example count, rho the target synthetic share of the combined set,
and fanout the augmentation multiplier (1+sql_variants) * (1+phrasings).
Guided sampling weights template i by S_i^alpha where S_i is its mean cosine
similarity to the representative query skeletons; alpha > 0 pulls toward known
patterns, alpha < 0 pushes away, alpha = 0 is uniform. Non-positive
similarities are clamped to a small epsilon before exponentiation.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from math import ceil

import numpy as np

from .errors import ConfigError, GatewayError, SqlParseError, UnsupportedSqlError
from .gateway import Gateway
from .knowledge import KnowledgeBase
from .schema import DatabaseSchema
from .skeleton import SqlSkeleton, skeletonize
from .sql_refs import check_schema_consistency, extract_references
from .sql_tokens import Kind, tokenize
from .textproc import HashingEmbedder, cosine

SIMILARITY_EPSILON = 1e-6


class Difficulty(Enum):
    EASY = "Easy"
    MEDIUM = "Medium"
    HARD = "Hard"


@dataclass(frozen=True)
class SqlTemplate:
    id: str
    skeleton_id: str
    sql_text: str
    difficulty: Difficulty
    tables_used: int
    embedding: tuple[float, ...]


@dataclass(frozen=True)
class ValidationFlags:
    syntactic: bool
    schema_consistent: bool
    semantic_ok: bool

    @property
    def passed(self) -> bool:
        return self.syntactic and self.schema_consistent and self.semantic_ok


@dataclass(frozen=True)
class SynthPair:
    question: str
    sql: str
    template_id: str
    variant_tag: tuple[int, int] = (0, 0)  # (sql_variant 0-3, phrasing 0-3)
    cot: str = ""
    validation: ValidationFlags = ValidationFlags(True, True, True)


@dataclass(frozen=True)
class SynthConfig:
    rho: float = 0.6
    alpha: float = 10.0
    sql_variants: int = 3
    phrasings: int = 3
    seed: int = 0
    k_terms: int = 5
    pool_target: int | None = None  # None -> retain every valid template
    bucket_shares: tuple[tuple[int, float], ...] = ((1, 0.3), (2, 0.4), (3, 0.3))
    all_synthetic_n: int | None = None  # N when rho == 1 (no real data left)
    embed_dimension: int = 512

    @property
    def fanout(self) -> int:
        return (1 + self.sql_variants) * (1 + self.phrasings)


def _skeleton_digest(text: str) -> str:
    return hashlib.blake2b(text.encode("utf-8"), digest_size=4).hexdigest()


def _template_embedding(sql: str, dimension: int) -> tuple[float, ...]:
    skeleton = skeletonize(sql)
    emb = HashingEmbedder(dimension).embed(skeleton.text)
    return tuple(float(v) for v in emb.values)


@dataclass
class PoolReport:
    requested: int = 0
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (skeleton, reason)
    skipped_skeletons: list[str] = field(default_factory=list)


def build_template_pool(
    skeletons: list[SqlSkeleton],
    schema: DatabaseSchema,
    gateway: Gateway,
    config: SynthConfig = SynthConfig(),
) -> tuple[list[SqlTemplate], PoolReport]:
    """Expand each skeleton into one concrete template per difficulty level.

    Every retained template passes schema consistency; retention is capped per
    table-count bucket when ``pool_target`` is set. A skeleton is skipped after
    three failed gateway attempts.
    """
    if not skeletons:
        raise ValueError("skeleton list must be nonempty")
    tables_payload = [
        {"name": t.name, "columns": [c.name for c in t.columns]} for t in schema.tables
    ]
    report = PoolReport()
    candidates: list[SqlTemplate] = []
    for skeleton in skeletons:
        skeleton_id = _skeleton_digest(skeleton.text)
        for difficulty in Difficulty:
            report.requested += 1
            response = None
            for _attempt in range(3):
                try:
                    response = gateway.complete(
                        {
                            "task": "expand_template",
                            "skeleton": skeleton.text,
                            "tables": tables_payload,
                            "difficulty": difficulty.value,
                            "db_id": schema.db_id,
                        }
                    )
                    break
                except GatewayError:
                    continue
            if response is None:
                report.skipped_skeletons.append(skeleton.text)
                break
            sql = str(response.get("sql", "")).strip()
            consistency = check_schema_consistency(sql, schema)
            if not consistency.ok:
                report.rejected.append((skeleton.text, "; ".join(consistency.diagnostics)))
                continue
            refs = extract_references(sql, schema)
            candidates.append(
                SqlTemplate(
                    id=f"tpl-{len(candidates):05d}",
                    skeleton_id=skeleton_id,
                    sql_text=sql,
                    difficulty=difficulty,
                    tables_used=len(refs.tables),
                    embedding=_template_embedding(sql, config.embed_dimension),
                )
            )
    if config.pool_target is None:
        return candidates, report

    shares = dict(config.bucket_shares)
    top_bucket = max(shares)
    caps = {b: ceil(share * config.pool_target) for b, share in shares.items()}
    kept: list[SqlTemplate] = []
    counts: dict[int, int] = {}
    for template in candidates:
        bucket = min(template.tables_used, top_bucket)
        if counts.get(bucket, 0) >= caps.get(bucket, 0):
            continue
        counts[bucket] = counts.get(bucket, 0) + 1
        kept.append(template)
    return kept, report


def template_similarities(pool: list[SqlTemplate], reps: list[SqlSkeleton],
                          dimension: int = 512) -> np.ndarray:
    """S_i: mean cosine similarity of each template to the representative set."""
    embedder = HashingEmbedder(dimension)
    rep_vecs = [embedder.embed(r.text).values for r in reps]
    sims = np.zeros(len(pool))
    for i, template in enumerate(pool):
        tvec = np.asarray(template.embedding)
        if rep_vecs:
            sims[i] = float(np.mean([cosine(tvec, rv) for rv in rep_vecs]))
    return sims


def power_weights(similarities: np.ndarray, alpha: float) -> np.ndarray:
    """p_i = S_i^alpha / sum_j S_j^alpha with non-positive S clamped to epsilon."""
    sims = np.asarray(similarities, dtype=float)
    clamped = np.where(sims <= 0.0, SIMILARITY_EPSILON, sims)
    if np.any(sims <= 0.0):
        warnings.warn("non-positive template similarities clamped to epsilon")
    weights = clamped**alpha
    return weights / weights.sum()


def sampling_probabilities(
    pool: list[SqlTemplate],
    reps: list[SqlSkeleton],
    alpha: float,
    guided: bool,
    dimension: int = 512,
) -> np.ndarray:
    n = len(pool)
    if not guided or not reps:
        return np.full(n, 1.0 / n)
    return power_weights(template_similarities(pool, reps, dimension), alpha)


def draw_count(m_real: int, rho: float, fanout: int) -> int:
    """N = ceil(rho/(1-rho) * M/fanout); the synthetic share of the combined
    set then sits within one fan-out quantum of rho."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must be in [0, 1) for guided mixing")
    return ceil(rho / (1.0 - rho) * m_real / fanout)


def sample_templates(
    pool: list[SqlTemplate],
    reps: list[SqlSkeleton],
    m_real: int,
    rho: float,
    alpha: float,
    guided: bool = True,
    seed: int = 0,
    config: SynthConfig = SynthConfig(),
) -> list[SqlTemplate]:
    """Draw N templates with replacement under the (rho, alpha) policy."""
    if not pool:
        raise ValueError("template pool must be nonempty")
    if rho >= 1.0:
        if config.all_synthetic_n is None:
            raise ConfigError("rho=1 requires all_synthetic_n in the config")
        n = config.all_synthetic_n
        guided = False
    else:
        n = draw_count(m_real, rho, config.fanout)
    probs = sampling_probabilities(pool, reps, alpha, guided and bool(reps),
                                   config.embed_dimension)
    cumulative = np.cumsum(probs)
    rng = np.random.Generator(np.random.PCG64(seed))
    chosen = []
    for _ in range(n):
        r = rng.random()
        idx = int(np.searchsorted(cumulative, r, side="right"))
        chosen.append(pool[min(idx, len(pool) - 1)])
    return chosen


# -- pair generation -----------------------------------------------------------------


@dataclass
class GenerationReport:
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (template_id, gate)


def _relevant_terms(template: SqlTemplate, schema: DatabaseSchema,
                    kb: KnowledgeBase | None, k_terms: int) -> list[dict]:
    if kb is None or k_terms <= 0:
        return []
    try:
        refs = extract_references(template.sql_text, schema)
        used = set(refs.columns)
    except Exception:
        used = set()
    scored = []
    for term in kb.active_terms():
        overlap = len(used & set(term.columns_used))
        scored.append((-overlap, -term.confidence, term.term_text, term))
    scored.sort(key=lambda t: t[:3])
    return [
        {"term": t.term_text, "expression": t.sql_expression, "explanation": t.explanation}
        for _, _, _, t in scored[:k_terms]
    ]


def _semantic_gate(question: str, sql: str, gateway: Gateway) -> bool:
    """Both reviewer models must give >= 4 on both scoring dimensions."""
    for model in gateway.config.models:
        semantic, validity = gateway.score_pair(question, sql, model)
        if semantic < 4 or validity < 4:
            return False
    return True


def generate_pairs(
    templates: list[SqlTemplate],
    schema: DatabaseSchema,
    kb: KnowledgeBase | None,
    gateway: Gateway,
    k_terms: int = 5,
) -> tuple[list[SynthPair], GenerationReport]:
    """Generate one question-SQL pair per template through the gateway.

    A pair is kept only when it parses, is schema-consistent, and passes the
    dual-reviewer semantic gate; rejections carry the failing gate name.
    """
    report = GenerationReport()
    pairs: list[SynthPair] = []
    for template in templates:
        try:
            refs = extract_references(template.sql_text, schema)
            tables_used = sorted(refs.tables)
            columns_used = sorted(refs.columns)
        except Exception:
            tables_used, columns_used = [], []
        try:
            response = gateway.complete(
                {
                    "task": "generate_pair",
                    "template_sql": template.sql_text,
                    "tables_used": tables_used,
                    "columns": columns_used,
                    "knowledge": _relevant_terms(template, schema, kb, k_terms),
                    "db_id": schema.db_id,
                }
            )
        except GatewayError as exc:
            report.rejected.append((template.id, f"gateway: {exc}"))
            continue
        sql = str(response.get("sql", "")).strip()
        question = str(response.get("question", "")).strip()
        cot = str(response.get("cot", ""))
        try:
            skeletonize(sql)
            syntactic = True
        except (SqlParseError, UnsupportedSqlError):
            syntactic = False
        consistent = bool(check_schema_consistency(sql, schema)) if syntactic else False
        semantic = _semantic_gate(question, sql, gateway) if consistent else False
        flags = ValidationFlags(syntactic, consistent, semantic)
        if not flags.passed:
            gate = (
                "syntactic" if not syntactic
                else "schema_consistent" if not consistent
                else "semantic"
            )
            report.rejected.append((template.id, gate))
            continue
        pairs.append(
            SynthPair(
                question=question,
                sql=sql,
                template_id=template.id,
                variant_tag=(0, 0),
                cot=cot,
                validation=flags,
            )
        )
    return pairs, report


# -- augmentation --------------------------------------------------------------------


def _identifier_map(original: str, variant: str) -> dict[str, str]:
    """Positional mapping of changed identifiers, for minimal CoT adaptation."""
    try:
        orig = [t.value for t in tokenize(original) if t.kind is Kind.IDENT]
        var = [t.value for t in tokenize(variant) if t.kind is Kind.IDENT]
    except SqlParseError:
        return {}
    if len(orig) != len(var):
        return {}
    return {o: v for o, v in zip(orig, var) if o != v}


def _adapt_cot(cot: str, mapping: dict[str, str]) -> str:
    out = cot
    for old, new in mapping.items():
        out = out.replace(old, new)
    return out


def augment(
    pair: SynthPair,
    schema: DatabaseSchema,
    gateway: Gateway,
    config: SynthConfig = SynthConfig(),
) -> list[SynthPair]:
    """Fan a validated pair out into (1+sql_variants) x (1+phrasings) pairs.

    Each SQL rewrite must re-pass schema consistency; a failing rewrite is
    regenerated once and then falls back to the original SQL for that slot.
    """
    if not pair.validation.passed:
        raise ValueError("augment requires a validated pair")
    variants = [pair.sql]
    rewrites: list[str] = []
    try:
        response = gateway.complete(
            {"task": "rewrite_sql", "sql": pair.sql, "db_id": schema.db_id}
        )
        rewrites = [str(v) for v in response.get("variants", [])]
    except GatewayError:
        rewrites = []
    for slot in range(config.sql_variants):
        candidate = rewrites[slot] if slot < len(rewrites) else pair.sql
        if not check_schema_consistency(candidate, schema).ok:
            try:
                retry = gateway.complete(
                    {"task": "rewrite_sql", "sql": pair.sql, "db_id": schema.db_id,
                     "retry_slot": slot}
                )
                retried = retry.get("variants", [])
                candidate = str(retried[slot]) if slot < len(retried) else pair.sql
            except GatewayError:
                candidate = pair.sql
            if not check_schema_consistency(candidate, schema).ok:
                candidate = pair.sql  # fallback slot
        variants.append(candidate)

    out: list[SynthPair] = []
    for v_idx, variant_sql in enumerate(variants):
        mapping = _identifier_map(pair.sql, variant_sql)
        cot = _adapt_cot(pair.cot, mapping)
        phrasings = [pair.question]
        try:
            response = gateway.complete(
                {
                    "task": "rephrase_question",
                    "question": pair.question,
                    "sql": variant_sql,
                    "db_id": schema.db_id,
                }
            )
            alt = [str(p) for p in response.get("phrasings", [])]
        except GatewayError:
            alt = []
        for slot in range(config.phrasings):
            phrasings.append(alt[slot] if slot < len(alt) else pair.question)
        for p_idx, question in enumerate(phrasings):
            out.append(
                replace(
                    pair,
                    question=question,
                    sql=variant_sql,
                    cot=cot,
                    variant_tag=(v_idx, p_idx),
                )
            )
    return out


def dataset_record(pair: SynthPair, db_id: str, provenance: str = "synthesized") -> dict:
    """Line-delimited output record consumable by an external trainer."""
    return {
        "db_id": db_id,
        "question": pair.question,
        "sql": pair.sql,
        "cot": pair.cot,
        "template_id": pair.template_id,
        "variant_tag": list(pair.variant_tag),
        "provenance": provenance,
    }


def template_to_dict(template: SqlTemplate) -> dict:
    return {
        "id": template.id,
        "skeleton_id": template.skeleton_id,
        "sql": template.sql_text,
        "difficulty": template.difficulty.value,
        "tables_used": template.tables_used,
        "embedding": list(template.embedding),
    }


def template_from_dict(data: dict) -> SqlTemplate:
    return SqlTemplate(
        id=data["id"],
        skeleton_id=data["skeleton_id"],
        sql_text=data["sql"],
        difficulty=Difficulty(data["difficulty"]),
        tables_used=int(data["tables_used"]),
        embedding=tuple(float(v) for v in data["embedding"]),
    )
