"""Single boundary to external chat-completion/embedding services.

Every other module talks to LLMs only through :class:`Gateway`; the mock
backend makes the whole pipeline deterministic and offline. The mock resolves
each request against scripted rules first, then falls back to built-in
deterministic responders (pure functions of payload and seed), so the same
request always produces the same response. No other module in the package may
open sockets; an audit test enforces that.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum

from .errors import ConfigError, GatewayError
from .textproc import HashingEmbedder, estimate_tokens, spaced_identifier


class RequestKind(Enum):
    COMPLETE = "complete"
    EMBED = "embed"
    REVIEW = "review"
    SCORE_PAIR = "score_pair"


@dataclass(frozen=True)
class RequestParams:
    temperature: float = 0.0
    max_tokens: int = 512
    model: str = "reviewer-a"


@dataclass(frozen=True)
class GatewayRequest:
    kind: RequestKind
    payload: dict
    params: RequestParams = field(default_factory=RequestParams)


_REQUIRED_PAYLOAD_KEYS = {
    RequestKind.COMPLETE: ("task",),
    RequestKind.EMBED: ("text",),
    RequestKind.REVIEW: ("expression",),
    RequestKind.SCORE_PAIR: ("question", "sql"),
}


def _validate(req: GatewayRequest) -> None:
    missing = [k for k in _REQUIRED_PAYLOAD_KEYS[req.kind] if k not in req.payload]
    if missing:
        raise ConfigError(f"{req.kind.value} payload missing keys: {missing}")


def _stable_fraction(*parts, seed: int = 0) -> float:
    """Deterministic pseudo-uniform in [0, 1) derived from the request."""
    blob = json.dumps(parts, sort_keys=True, default=str) + f"|{seed}"
    h = int.from_bytes(hashlib.blake2b(blob.encode(), digest_size=8).digest(), "big")
    return (h % 10**9) / 10**9


@dataclass(frozen=True)
class MockRule:
    kind: RequestKind
    contains: str | None = None  # substring of the JSON-serialized payload
    model: str | None = None
    response: object = None  # dict, or callable(GatewayRequest) -> dict

    def matches(self, req: GatewayRequest) -> bool:
        if self.kind is not req.kind:
            return False
        if self.model is not None and self.model != req.params.model:
            return False
        if self.contains is not None:
            blob = json.dumps(req.payload, sort_keys=True, default=str)
            if self.contains not in blob:
                return False
        return True


@dataclass
class MockScript:
    """Deterministic canned behaviour for the mock backend."""

    rules: list[MockRule] = field(default_factory=list)
    review_approval_rate: float = 1.0
    score_pass_rate: float = 1.0
    seed: int = 0

    def respond(self, req: GatewayRequest) -> dict:
        for rule in self.rules:
            if rule.matches(req):
                if callable(rule.response):
                    return rule.response(req)
                return dict(rule.response)
        return self.default_response(req)

    # -- built-in deterministic responders ------------------------------------

    def default_response(self, req: GatewayRequest) -> dict:
        if req.kind is RequestKind.EMBED:
            dim = int(req.payload.get("dimension", 512))
            emb = HashingEmbedder(dim).embed(str(req.payload["text"]))
            return {"values": emb.values.tolist()}
        if req.kind is RequestKind.REVIEW:
            return self._review(req)
        if req.kind is RequestKind.SCORE_PAIR:
            return self._score_pair(req)
        return self._complete(req)

    def _review(self, req: GatewayRequest) -> dict:
        draw = _stable_fraction("review", req.payload, seed=self.seed)
        if draw >= self.review_approval_rate:
            return {"valid": False, "confidence": 0.0, "explanation": "not a meaningful combination"}
        confidence = 0.5 + _stable_fraction("conf", req.payload, seed=self.seed) * 0.5
        names = req.payload.get("base_names") or []
        op = req.payload.get("operator", "/")
        joiner = {"+": "total of", "-": "difference between", "*": "product of", "/": "ratio of"}
        term_text = None
        if len(names) == 2:
            link = " and " if op != "/" else " to "
            term_text = f"{joiner.get(op, 'combination of')} {names[0]}{link}{names[1]}"
        return {
            "valid": True,
            "confidence": round(confidence, 6),
            "explanation": "ratio of two measures" if op == "/" else "combination of two measures",
            "term_text": term_text,
        }

    def _score_pair(self, req: GatewayRequest) -> dict:
        draw = _stable_fraction("score", req.payload, req.params.model, seed=self.seed)
        if draw >= self.score_pass_rate:
            return {"semantic_consistency": 3, "sql_validity": 5}
        return {"semantic_consistency": 5, "sql_validity": 5}

    def _complete(self, req: GatewayRequest) -> dict:
        task = req.payload["task"]
        if task == "annotate":
            return _annotate_response(req.payload)
        if task == "map_values":
            return _map_values_response(req.payload)
        if task == "expand_template":
            return _expand_template_response(req.payload)
        if task == "generate_pair":
            return _generate_pair_response(req.payload)
        if task == "rewrite_sql":
            sql = req.payload.get("sql", "")
            return {"variants": [sql, sql, sql]}
        if task == "rephrase_question":
            q = req.payload.get("question", "")
            return {
                "phrasings": [
                    f"Could you tell me {_lower_first(q)}",
                    f"Please show {_lower_first(q)}",
                    f"I would like to know {_lower_first(q)}",
                ]
            }
        return {"text": f"ok:{task}"}


_KNOWN_EXPANSIONS = {
    "dob": "date of birth",
    "frpm": "Free and Reduced-Price Meal Program statistics",
    "capacity": "number of available seats",
    "cds": "county-district-school code",
    "cdscode": "county-district-school code",
}


def _lower_first(text: str) -> str:
    return text[:1].lower() + text[1:] if text else text


def _annotate_response(payload: dict) -> dict:
    name = payload.get("name", "")
    known = _KNOWN_EXPANSIONS.get(name.lower())
    if known:
        return {"description": known, "abbreviation_expansion": known}
    spaced = spaced_identifier(name)
    expansion = spaced if spaced != name.lower() else None
    kind = payload.get("kind", "column")
    return {"description": f"{spaced} {kind}".strip(), "abbreviation_expansion": expansion}


def _map_values_response(payload: dict) -> dict:
    column = payload.get("column", "").lower()
    codes = payload.get("codes", [])
    mapping = {}
    for code in codes:
        if "gender" in column or "sex" in column:
            mapping[code] = {"M": "Male", "F": "Female"}.get(code, f"code {code}")
        elif "virtual" in column:
            mapping[code] = {
                "F": "Fully virtual",
                "P": "Partially virtual",
                "N": "Not virtual",
            }.get(code, f"code {code}")
        else:
            mapping[code] = f"code {code}"
    return {"mapping": mapping}


def _expand_template_response(payload: dict) -> dict:
    """Slot-fill a skeleton against the tables listed in the payload."""
    skeleton = payload.get("skeleton", "")
    tables = payload.get("tables", [])  # [{"name": ..., "columns": [...]}]
    if not tables:
        return {"sql": skeleton}
    offset = int(
        _stable_fraction("expand", skeleton, payload.get("difficulty", "")) * len(tables)
    )
    chosen: list[dict] = []
    slot_map: dict[str, str] = {}
    counters = {"T": 0, "C": 0, "V": 0}
    values = ["1", "2", "'A'", "3", "0"]

    def fill(match: re.Match) -> str:
        token = match.group(0)
        if token in slot_map:
            return slot_map[token]
        kind = token[1]
        idx = counters[kind]
        counters[kind] += 1
        if kind == "T":
            table = tables[(offset + idx) % len(tables)]
            chosen.append(table)
            out = table["name"]
        elif kind == "C":
            table = chosen[idx % len(chosen)] if chosen else tables[offset % len(tables)]
            cols = table["columns"]
            out = f"{table['name']}.{cols[idx % len(cols)]}"
        else:
            out = values[idx % len(values)]
        if len(token) > 2:  # numbered slots bind once
            slot_map[token] = out
        return out

    sql = re.sub(r"_[TCV]\d*", fill, skeleton)
    return {"sql": sql}


def _generate_pair_response(payload: dict) -> dict:
    sql = payload.get("template_sql", payload.get("sql", ""))
    columns = payload.get("columns") or []
    tables = payload.get("tables_used") or []
    if columns and tables:
        question = f"What is {columns[0]} for each row of {tables[0]}?"
    elif tables:
        question = f"How many rows does {tables[0]} contain?"
    else:
        question = "What does this query return?"
    cot = "Identify the target tables, map the requested quantities to columns, then apply the filters."
    return {"sql": sql, "question": question, "cot": cot}


# -- gateway -------------------------------------------------------------------


@dataclass
class GatewayConfig:
    backend: str = "mock"  # "mock" | "http"
    endpoint: str = ""
    auth_env: str = "SQLKNOW_API_TOKEN"
    models: tuple[str, str] = ("reviewer-a", "reviewer-b")
    concurrency: int = 4
    retries: int = 3
    backoff_base: float = 0.5


@dataclass
class UsageRecord:
    kind: str
    model: str
    input_tokens: int
    output_tokens: int


class Gateway:
    """Dispatches requests to the configured backend and accounts tokens."""

    def __init__(self, config: GatewayConfig | None = None, script: MockScript | None = None):
        self.config = config or GatewayConfig()
        self.script = script or MockScript()
        self.usage: list[UsageRecord] = []
        self._semaphore = threading.Semaphore(max(1, self.config.concurrency))
        self._lock = threading.Lock()

    def dispatch(self, req: GatewayRequest) -> dict:
        _validate(req)
        with self._semaphore:
            if self.config.backend == "mock":
                response = self.script.respond(req)
            elif self.config.backend == "http":
                response = self._dispatch_http(req)
            else:
                raise ConfigError(f"unknown gateway backend {self.config.backend!r}")
        self._record(req, response)
        return response

    def _record(self, req: GatewayRequest, response: dict) -> None:
        payload_text = json.dumps(req.payload, sort_keys=True, default=str)
        response_text = json.dumps(response, sort_keys=True, default=str)
        with self._lock:
            self.usage.append(
                UsageRecord(
                    kind=req.kind.value,
                    model=req.params.model,
                    input_tokens=estimate_tokens(payload_text),
                    output_tokens=estimate_tokens(response_text),
                )
            )

    def usage_summary(self) -> dict:
        summary: dict[str, dict] = {}
        for rec in self.usage:
            slot = summary.setdefault(
                rec.kind, {"calls": 0, "input_tokens": 0, "output_tokens": 0}
            )
            slot["calls"] += 1
            slot["input_tokens"] += rec.input_tokens
            slot["output_tokens"] += rec.output_tokens
        return summary

    # -- convenience wrappers -----------------------------------------------------

    def embed_text(self, text: str, dimension: int) -> list[float]:
        resp = self.dispatch(
            GatewayRequest(RequestKind.EMBED, {"text": text, "dimension": dimension})
        )
        return resp["values"]

    def complete(self, payload: dict, model: str | None = None) -> dict:
        params = RequestParams(model=model) if model else RequestParams()
        return self.dispatch(GatewayRequest(RequestKind.COMPLETE, payload, params))

    def review(self, payload: dict, model: str | None = None) -> dict:
        params = RequestParams(model=model) if model else RequestParams()
        return self.dispatch(GatewayRequest(RequestKind.REVIEW, payload, params))

    def score_pair(self, question: str, sql: str, model: str) -> tuple[int, int]:
        resp = self.dispatch(
            GatewayRequest(
                RequestKind.SCORE_PAIR,
                {"question": question, "sql": sql},
                RequestParams(model=model),
            )
        )
        return int(resp["semantic_consistency"]), int(resp["sql_validity"])

    # -- HTTP backend ---------------------------------------------------------------

    def _dispatch_http(self, req: GatewayRequest) -> dict:
        import os

        token = os.environ.get(self.config.auth_env, "")
        if req.kind is RequestKind.EMBED:
            body = {"model": req.params.model, "input": req.payload["text"]}
        else:
            body = {
                "model": req.params.model,
                "temperature": req.params.temperature,
                "max_tokens": req.params.max_tokens,
                "messages": [
                    {
                        "role": "user",
                        "content": json.dumps(req.payload, sort_keys=True, default=str),
                    }
                ],
            }
        data = json.dumps(body).encode("utf-8")
        last_error: Exception | None = None
        for attempt in range(self.config.retries):
            try:
                request = urllib.request.Request(
                    self.config.endpoint,
                    data=data,
                    headers={
                        "Content-Type": "application/json",
                        "Authorization": f"Bearer {token}",
                    },
                )
                with urllib.request.urlopen(request, timeout=30) as resp:
                    raw = json.loads(resp.read().decode("utf-8"))
                return self._parse_http_response(req, raw)
            except urllib.error.HTTPError as exc:
                if exc.code in (401, 403):
                    raise GatewayError(f"authentication failed ({exc.code})") from exc
                last_error = exc
            except (urllib.error.URLError, OSError, TimeoutError, ValueError) as exc:
                last_error = exc
            time.sleep(self.config.backoff_base * (2**attempt))
        raise GatewayError(
            f"gateway unreachable after {self.config.retries} attempts: {last_error}"
        )

    @staticmethod
    def _parse_http_response(req: GatewayRequest, raw: dict) -> dict:
        if req.kind is RequestKind.EMBED:
            return {"values": raw["data"][0]["embedding"]}
        content = raw["choices"][0]["message"]["content"]
        try:
            return json.loads(content)
        except (json.JSONDecodeError, TypeError):
            return {"text": content}


def mock_gateway(script: MockScript | None = None, **config_kwargs) -> Gateway:
    return Gateway(GatewayConfig(backend="mock", **config_kwargs), script=script)
