"""Question masking and deterministic vectorization.

Two vector spaces: feature-hashed character trigrams for natural-language text
(questions, templates) and TF-IDF over skeleton tokens for SQL skeletons. Both
are pure functions of their inputs so every downstream pipeline stays
reproducible; a gateway-backed encoder can replace the hashing embedder via
``EmbedConfig(backend="gateway")``.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .knowledge import KnowledgeBase
from .schema import DatabaseSchema
from .skeleton import SqlSkeleton, skeleton_tokens

_KIND_PRIORITY = {"TERM": 0, "TAB": 1, "COL": 2, "VAL": 3}

_TOKEN_SPLIT_RE = re.compile(r"\w+|[^\w\s]")

# Multiplier covering sub-word tokenization of real model tokenizers.
TOKEN_SAFETY_FACTOR = 1.3


def estimate_tokens(text: str, factor: float = TOKEN_SAFETY_FACTOR) -> int:
    """Conservative token estimate: word/punctuation count times a safety factor."""
    return math.ceil(len(_TOKEN_SPLIT_RE.findall(text)) * factor)


def split_identifier(name: str) -> list[str]:
    """Lower-case word parts of an identifier (underscores, camelCase, digits)."""
    s = re.sub(r"([a-z0-9])([A-Z])", r"\1 \2", name)
    s = re.sub(r"([A-Za-z])([0-9])", r"\1 \2", s)
    return s.replace("_", " ").replace(".", " ").lower().split()


def spaced_identifier(name: str) -> str:
    return " ".join(split_identifier(name))


@dataclass(frozen=True)
class MaskedQuestion:
    text: str
    mask_spans: tuple[tuple[int, int, str], ...]  # (start, end, kind) in the original


@dataclass(frozen=True)
class EmbedConfig:
    backend: str = "default"  # "default" | "gateway"
    dimension: int = 512
    endpoint: str | None = None


@dataclass
class Embedding:
    values: np.ndarray
    is_zero: bool = False

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class TfIdfVector:
    weights: dict[int, float]
    dim: int

    def to_array(self) -> np.ndarray:
        arr = np.zeros(self.dim)
        for idx, w in self.weights.items():
            arr[idx] = w
        return arr


# -- question masking -----------------------------------------------------------


@lru_cache(maxsize=65536)
def _boundary_pattern(candidate: str) -> re.Pattern:
    return re.compile(
        r"(?<![A-Za-z0-9])" + re.escape(candidate) + r"(?![A-Za-z0-9])", re.IGNORECASE
    )


def mask_question(
    q: str,
    schema: DatabaseSchema,
    kb: KnowledgeBase | None = None,
    mask_schema_mentions: bool = True,
    mask_values: bool = True,
) -> MaskedQuestion:
    """Replace schema mentions, values and domain terms with placeholder tokens.

    Longest match wins; ties break to the leftmost occurrence, then by kind
    (TERM over TAB over COL over VAL). Spans index the original string, so the
    original can always be reconstructed around the masks.
    """
    candidates: list[tuple[int, int, str]] = []

    def add_matches(surface: str, kind: str) -> None:
        surface = surface.strip()
        if not surface:
            return
        for m in _boundary_pattern(surface).finditer(q):
            candidates.append((m.start(), m.end(), kind))

    if mask_schema_mentions:
        for table in schema.tables:
            add_matches(table.name, "TAB")
            for col in table.columns:
                add_matches(col.name, "COL")
        if kb is not None:
            for ann in kb.annotations:
                if not ann.abbreviation_expansion:
                    continue
                kind = "COL" if "." in ann.target else "TAB"
                add_matches(ann.abbreviation_expansion, kind)
    if mask_values:
        for values in schema.value_samples.values():
            for v in values:
                add_matches(v, "VAL")
        for m in re.finditer(r"'[^']*'|\"[^\"]*\"", q):
            candidates.append((m.start(), m.end(), "VAL"))
        for m in re.finditer(r"(?<![A-Za-z0-9.])\d+(?:\.\d+)?(?![A-Za-z0-9.])", q):
            candidates.append((m.start(), m.end(), "VAL"))
    if kb is not None:
        for term in kb.accepted_terms():
            add_matches(term.term_text, "TERM")

    candidates.sort(key=lambda c: (-(c[1] - c[0]), c[0], _KIND_PRIORITY[c[2]]))
    chosen: list[tuple[int, int, str]] = []
    for start, end, kind in candidates:
        if any(s < end and start < e for s, e, _ in chosen):
            continue
        chosen.append((start, end, kind))
    chosen.sort()

    pieces = []
    cursor = 0
    for start, end, kind in chosen:
        pieces.append(q[cursor:start])
        pieces.append(f"<{kind}>")
        cursor = end
    pieces.append(q[cursor:])
    return MaskedQuestion(text="".join(pieces), mask_spans=tuple(chosen))


def unmask(masked: MaskedQuestion, original: str) -> str:
    """Reverse a masking given the original string; used to verify spans."""
    out = masked.text
    for start, end, kind in reversed(masked.mask_spans):
        token = f"<{kind}>"
        idx = out.rindex(token)
        out = out[:idx] + original[start:end] + out[idx + len(token) :]
    return out


# -- hashed trigram embeddings --------------------------------------------------


class HashingEmbedder:
    """Deterministic signed feature hashing of character trigrams.

    Stateless (nothing to fit); composes transformer-style with the clustering
    estimators.
    """

    def __init__(self, dimension: int = 512):
        if dimension < 16:
            raise ValueError("embedding dimension must be >= 16")
        self.dimension = dimension

    def get_params(self) -> dict:
        return {"dimension": self.dimension}

    def transform(self, texts: list[str]) -> list[Embedding]:
        return [self.embed(t) for t in texts]

    def embed(self, text: str) -> Embedding:
        norm = " ".join(text.casefold().split())
        values = np.zeros(self.dimension)
        if not norm:
            return Embedding(values=values, is_zero=True)
        grams = [norm] if len(norm) < 3 else [norm[i : i + 3] for i in range(len(norm) - 2)]
        for g in grams:
            h = int.from_bytes(
                hashlib.blake2b(g.encode("utf-8"), digest_size=8).digest(), "big"
            )
            bucket = h % self.dimension
            sign = 1.0 if (h >> 40) & 1 == 0 else -1.0
            values[bucket] += sign
        norm2 = float(np.linalg.norm(values))
        if norm2 == 0.0:
            return Embedding(values=values, is_zero=True)
        return Embedding(values=values / norm2)


def embed(text: str, config: EmbedConfig = EmbedConfig(), gateway=None) -> Embedding:
    """Embed one text under the configured backend.

    The default backend is pure and bitwise-reproducible; the gateway backend
    defers to an external embedding endpoint and surfaces its failures as
    retryable gateway errors.
    """
    if config.backend == "gateway":
        if gateway is None:
            raise ValueError("gateway backend requires a gateway instance")
        values = np.asarray(gateway.embed_text(text, config.dimension), dtype=float)
        norm2 = float(np.linalg.norm(values))
        if norm2 == 0.0:
            return Embedding(values=values, is_zero=True)
        return Embedding(values=values / norm2)
    return HashingEmbedder(config.dimension).embed(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


# -- TF-IDF over skeleton tokens ---------------------------------------------------


class SkeletonTfidf:
    """Raw-count TF with smoothed log IDF, L2-normalized.

    IDF is computed over the fitted skeleton corpus only; the vocabulary is
    sorted so vectors do not depend on corpus order.
    """

    def __init__(self):
        self.vocabulary_: dict[str, int] = {}
        self.idf_: np.ndarray | None = None

    def get_params(self) -> dict:
        return {}

    def fit(self, skeletons: list[SqlSkeleton]) -> "SkeletonTfidf":
        if not skeletons:
            raise ValueError("empty skeleton corpus")
        docs = [skeleton_tokens(s) for s in skeletons]
        vocab = sorted({tok for doc in docs for tok in doc})
        self.vocabulary_ = {tok: i for i, tok in enumerate(vocab)}
        n = len(docs)
        df = np.zeros(len(vocab))
        for doc in docs:
            for tok in set(doc):
                df[self.vocabulary_[tok]] += 1
        self.idf_ = np.log((1.0 + n) / (1.0 + df)) + 1.0
        return self

    def transform(self, skeletons: list[SqlSkeleton]) -> list[TfIdfVector]:
        if self.idf_ is None:
            raise ValueError("fit before transform")
        out = []
        dim = len(self.vocabulary_)
        for s in skeletons:
            counts: dict[int, float] = {}
            for tok in skeleton_tokens(s):
                idx = self.vocabulary_.get(tok)
                if idx is not None:
                    counts[idx] = counts.get(idx, 0.0) + 1.0
            weights = {i: c * float(self.idf_[i]) for i, c in counts.items()}
            norm2 = math.sqrt(sum(w * w for w in weights.values()))
            if norm2 > 0:
                weights = {i: w / norm2 for i, w in weights.items()}
            out.append(TfIdfVector(weights=weights, dim=dim))
        return out

    def fit_transform(self, skeletons: list[SqlSkeleton]) -> list[TfIdfVector]:
        return self.fit(skeletons).transform(skeletons)


def tfidf_corpus(skeletons: list[SqlSkeleton]) -> list[TfIdfVector]:
    return SkeletonTfidf().fit_transform(skeletons)


def stack_embeddings(embeddings: list[Embedding]) -> np.ndarray:
    return np.vstack([e.values for e in embeddings])


def stack_tfidf(vectors: list[TfIdfVector]) -> np.ndarray:
    return np.vstack([v.to_array() for v in vectors])
