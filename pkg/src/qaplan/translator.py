"""Query to intermediate-representation translation.

Two backends share one entry point, :func:`translate`:

* ``fixture`` looks the query up in a JSON file of recorded translations;
* ``llm`` sends the catalog prompt to an OpenAI-compatible chat endpoint and
  keeps the last parseable block of facts from the reply.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import httpx

from .asp import FactSet, ParseError, parse_facts
from .catalog import Catalog, build_prompt

log = logging.getLogger(__name__)

API_KEY_ENV = "QAPLAN_LLM_API_KEY"
SYSTEM_MESSAGE = "You convert user requests into ASP facts. Reply with facts only."
_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


class TranslationError(RuntimeError):
    pass


class TranslationFailed(TranslationError):
    pass


class TransportError(TranslationError):
    pass


class FixtureMiss(TranslationError, LookupError):
    pass


@dataclass(frozen=True)
class TranslatorConfig:
    backend: str = "fixture"
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 0.0
    max_retries: int = 2
    timeout: float = 30.0
    fixtures_path: str | None = None
    reference_date: dt.date | None = None

    def __post_init__(self):
        if self.backend not in ("llm", "fixture"):
            raise ValueError(f"unknown translator backend {self.backend!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must lie in [0, 2], got {self.temperature}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        if self.backend == "llm" and not (self.endpoint and self.model):
            raise ValueError("the llm backend needs an endpoint and a model")
        if self.backend == "fixture" and not self.fixtures_path:
            raise ValueError("the fixture backend needs a fixtures file")


@dataclass(frozen=True)
class TranslationResult:
    facts: FactSet
    raw_response: str
    attempts: int = 1


def normalize_query(query: str) -> str:
    return " ".join(query.split()).casefold()


# --- fixture backend -------------------------------------------------------------

@dataclass(frozen=True)
class FixtureEntry:
    query: str
    facts: str
    reference_date: str | None = None


def load_fixtures(path) -> dict[str, FixtureEntry]:
    path = Path(path)
    return _load_fixtures(str(path.resolve()), path.stat().st_mtime_ns)


@lru_cache(maxsize=8)
def _load_fixtures(path: str, _mtime: int) -> dict[str, FixtureEntry]:
    records = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(records, list):
        raise ValueError(f"{path}: fixtures must be a JSON list")
    index: dict[str, FixtureEntry] = {}
    for i, rec in enumerate(records):
        if not isinstance(rec, dict) or not isinstance(rec.get("query"), str) or not isinstance(rec.get("facts"), str):
            raise ValueError(f"{path}: record {i} needs string fields 'query' and 'facts'")
        key = normalize_query(rec["query"])
        if key in index and index[key].facts != rec["facts"]:
            raise ValueError(f"{path}: conflicting fixtures for {rec['query']!r}")
        index[key] = FixtureEntry(rec["query"], rec["facts"], rec.get("reference_date"))
    return index


def _translate_fixture(query: str, config: TranslatorConfig) -> TranslationResult:
    entry = load_fixtures(config.fixtures_path).get(normalize_query(query))
    if entry is None:
        raise FixtureMiss(f"no fixture for query {query!r}")
    facts = parse_facts(entry.facts)
    _check_facts(facts)
    return TranslationResult(facts, entry.facts, 1)


# --- llm backend -----------------------------------------------------------------

def llm_chat(prompt: str, config: TranslatorConfig, client: httpx.Client | None = None) -> str:
    """One chat-completion round trip; returns the assistant message content."""
    key = os.environ.get(API_KEY_ENV)
    if not key:
        raise TransportError(f"environment variable {API_KEY_ENV} is not set")
    body = {
        "model": config.model,
        "messages": [
            {"role": "system", "content": SYSTEM_MESSAGE},
            {"role": "user", "content": prompt},
        ],
        "temperature": config.temperature,
    }
    url = config.endpoint.rstrip("/") + "/chat/completions"
    owned = client is None
    client = client or httpx.Client(timeout=config.timeout)
    try:
        resp = client.post(url, json=body, headers={"Authorization": f"Bearer {key}"})
    except httpx.HTTPError as exc:
        raise TransportError(f"{url}: {exc}") from exc
    finally:
        if owned:
            client.close()
    if not resp.is_success:
        raise TransportError(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"{url}: malformed completion payload") from exc


def extract_facts(response: str) -> FactSet:
    """Keep the final contiguous block of parseable facts in ``response``.

    A fenced code block, if present, narrows the search to the last one.
    Raises :class:`ParseError` when no non-empty block parses.
    """
    fences = _FENCE_RE.findall(response)
    text = fences[-1] if fences else response
    lines = text.splitlines()
    for end in range(len(lines), 0, -1):
        if not lines[end - 1].strip():
            continue
        for start in range(end):
            try:
                facts = parse_facts("\n".join(lines[start:end]))
            except ParseError:
                continue
            if len(facts):
                return facts
    raise ParseError("no parseable facts in response", 1, 1)


def _check_facts(facts: FactSet) -> None:
    if not facts.select("_goal"):
        raise TranslationFailed("translation contains no _goal atom")
    bad = sorted({a.predicate for a in facts if not a.predicate.startswith("_")})
    if bad:
        raise TranslationFailed(f"translation uses non-intermediate predicates {bad}")


def _translate_llm(query, catalog, config, client) -> TranslationResult:
    prompt = build_prompt(catalog, query)
    last = ""
    reason = ""
    for attempt in range(1, config.max_retries + 2):
        last = llm_chat(prompt, config, client)
        try:
            facts = extract_facts(last)
            _check_facts(facts)
        except (ParseError, TranslationFailed) as exc:
            reason = str(exc)
            log.warning("attempt %d: unusable translation (%s)", attempt, reason)
            continue
        return TranslationResult(facts, last, attempt)
    raise TranslationFailed(f"no usable translation after {config.max_retries + 1} attempts: {reason}")


def translate(
    query: str, catalog: Catalog, config: TranslatorConfig, client: httpx.Client | None = None
) -> TranslationResult:
    if not query.strip():
        raise ValueError("query is empty")
    if config.backend == "fixture":
        return _translate_fixture(query, config)
    return _translate_llm(query, catalog, config, client)
