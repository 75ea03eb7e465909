"""Backend interfaces: candidate generation, pair scoring, language detection.

The engine only ever talks to the three narrow protocols defined here.  The
reference remote implementation speaks JSON over HTTP (``HttpBackend``); the
synthetic lab provides in-process implementations of the same protocols.

Prompt construction for instruction-following generators also lives here:
a small registry of instruction patterns plus few-shot rendering.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import requests

from .core import ConfigError, Direction, LanguageTag

__all__ = [
    "BackendError",
    "BackendSuite",
    "BackendUnreachable",
    "DEFAULT_TEMPLATES",
    "Exemplar",
    "HttpBackend",
    "LanguageDetector",
    "PairScorer",
    "PromptTemplate",
    "RetryPolicy",
    "ScorePair",
    "TemplateError",
    "TranslateRequest",
    "Translator",
    "UNKNOWN_LANGUAGE",
    "UnsupportedDirection",
    "clamp_score",
    "display_name",
    "encode_translate_request",
    "render_prompt",
    "template_by_id",
]

UNKNOWN_LANGUAGE = "unknown"

ENV_BACKEND_URL = "TRANSZERO_BACKEND_URL"


# ------------------------------------------------------------------ errors


class BackendError(RuntimeError):
    """Base class for backend failures."""


class BackendUnreachable(BackendError):
    """Transport kept failing after the retry budget was spent."""


class UnsupportedDirection(BackendError):
    """The backend cannot serve the requested language pair.  Not retryable."""


class TemplateError(ConfigError):
    """Instruction pattern is missing a required placeholder."""


# ------------------------------------------------------------------ prompts


_PLACEHOLDERS = ("{src_lan}", "{trg_lan}", "{src_sent}")


@dataclass(frozen=True)
class PromptTemplate:
    """An instruction pattern with language-name and source-text slots.

    Every pattern must mention all three placeholders at least once; language
    placeholders may legitimately repeat (several stock patterns name the
    languages both in the instruction line and as answer-line prefixes).
    """

    template_id: str
    pattern: str

    def __post_init__(self) -> None:
        if not self.template_id:
            raise TemplateError("empty template id")
        missing = [p for p in _PLACEHOLDERS if p not in self.pattern]
        if missing:
            raise TemplateError(f"pattern {self.template_id!r} is missing {missing}")


DEFAULT_TEMPLATES: tuple[PromptTemplate, ...] = (
    PromptTemplate(
        "translate-from-lines",
        "Translate this from {src_lan} to {trg_lan}:\n{src_lan}: {src_sent}\n{trg_lan}:",
    ),
    PromptTemplate(
        "translate-following",
        "Translate the following text from {src_lan} into {trg_lan}.\n{src_lan}: {src_sent}\n{trg_lan}:",
    ),
    PromptTemplate(
        "please-translate",
        "Please translate the {src_lan} into {trg_lan}: {src_sent}",
    ),
    PromptTemplate(
        "equals-form",
        "{src_lan}: {src_sent} = {trg_lan}:",
    ),
    PromptTemplate(
        "can-be-translated",
        "{src_sent} in {src_lan} can be translated to {trg_lan} as:",
    ),
    PromptTemplate(
        "src-colon-lines",
        "{src_lan}: {src_sent}\n{trg_lan}:",
    ),
    PromptTemplate(
        "explain-in",
        "Explain the following {src_lan} sentence in {trg_lan}: {src_sent}",
    ),
)

DEFAULT_TEMPLATE_ID = DEFAULT_TEMPLATES[0].template_id

_TEMPLATE_INDEX = {t.template_id: t for t in DEFAULT_TEMPLATES}


def template_by_id(template_id: str) -> PromptTemplate:
    try:
        return _TEMPLATE_INDEX[template_id]
    except KeyError:
        raise TemplateError(f"unknown template id {template_id!r}") from None


_DISPLAY_NAMES = {
    "en": "English",
    "de": "German",
    "fr": "French",
    "es": "Spanish",
    "it": "Italian",
    "pt": "Portuguese",
    "ru": "Russian",
    "zh": "Chinese",
    "cs": "Czech",
    "ja": "Japanese",
    "ko": "Korean",
    "nl": "Dutch",
    "uk": "Ukrainian",
    "is": "Icelandic",
}


def display_name(tag: LanguageTag) -> str:
    """Human-readable language name used inside prompts; the tag itself for
    synthetic or unmapped codes."""
    return _DISPLAY_NAMES.get(tag.code, tag.code)


# ------------------------------------------------------------------ requests


@dataclass(frozen=True)
class Exemplar:
    """A completed translation shown to the generator as in-context guidance."""

    src: str
    tgt: str


@dataclass(frozen=True)
class TranslateRequest:
    text: str
    direction: Direction
    exemplars: tuple[Exemplar, ...] = ()
    num_candidates: int = 1
    temperature: float = 1.0
    top_k: int = 50
    instruction: str = DEFAULT_TEMPLATE_ID
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.text:
            raise ConfigError("translate request with empty text")
        if self.num_candidates < 1:
            raise ConfigError("num_candidates must be >= 1")
        if self.temperature < 0.0:
            raise ConfigError("temperature must be >= 0")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")


@dataclass(frozen=True)
class ScorePair:
    """Two same-language texts submitted for semantic agreement scoring."""

    a: str
    b: str
    lang: LanguageTag


def _fill(template: PromptTemplate, direction: Direction, text: str) -> str:
    return (
        template.pattern.replace("{src_lan}", display_name(direction.src))
        .replace("{trg_lan}", display_name(direction.tgt))
        .replace("{src_sent}", text)
    )


def render_prompt(template: PromptTemplate, request: TranslateRequest) -> str:
    """Render the full prompt: completed exemplar blocks first, then the final
    instruction for the request text.

    Each exemplar is rendered with the same pattern and completed with its
    target text, so the generator sees worked examples in the exact format it
    is asked to continue.
    """
    blocks: list[str] = []
    for ex in request.exemplars:
        rendered = _fill(template, request.direction, ex.src)
        joiner = " " if rendered.endswith(":") else "\n"
        blocks.append(rendered + joiner + ex.tgt)
    blocks.append(_fill(template, request.direction, request.text))
    return "\n\n".join(blocks)


# ------------------------------------------------------------------ protocols


@runtime_checkable
class Translator(Protocol):
    def translate(self, request: TranslateRequest) -> list[str]:
        """Return exactly ``request.num_candidates`` candidate strings.

        A failed generation is an empty string; callers treat empty
        candidates as failed, never as an exception.
        """
        ...


@runtime_checkable
class PairScorer(Protocol):
    def score_pairs(self, pairs: Sequence[ScorePair]) -> list[float]:
        """Return one agreement score in [0, 1] per pair, in order."""
        ...


@runtime_checkable
class LanguageDetector(Protocol):
    def detect(self, texts: Sequence[str]) -> list[str]:
        """Return one language code per text, ``"unknown"`` when undecidable."""
        ...


@dataclass
class BackendSuite:
    """The three capabilities the engine needs, bundled."""

    translator: Translator
    scorer: PairScorer
    detector: LanguageDetector


def clamp_score(value: float) -> float:
    return 0.0 if value < 0.0 else 1.0 if value > 1.0 else float(value)


# ------------------------------------------------------------------ wire


def encode_translate_request(request: TranslateRequest) -> dict:
    """Build the JSON body for a generation call, exactly as sent on the wire."""
    return {
        "text": request.text,
        "src_lang": str(request.direction.src),
        "tgt_lang": str(request.direction.tgt),
        "exemplars": [{"src": ex.src, "tgt": ex.tgt} for ex in request.exemplars],
        "num_candidates": request.num_candidates,
        "temperature": request.temperature,
        "top_k": request.top_k,
        "instruction": request.instruction,
        "seed": request.seed,
    }


def encode_score_request(pairs: Sequence[ScorePair]) -> dict:
    return {"pairs": [{"a": p.a, "b": p.b, "lang": str(p.lang)} for p in pairs]}


def encode_detect_request(texts: Sequence[str]) -> dict:
    return {"texts": list(texts)}


@dataclass(frozen=True)
class RetryPolicy:
    """Transport retry behaviour: `retries` extra attempts with exponential
    backoff starting at `backoff_s`."""

    retries: int = 2
    backoff_s: float = 0.5
    timeout_s: float = 120.0


class HttpBackend:
    """JSON-over-HTTP client implementing all three backend protocols.

    The base URL comes from the constructor or the ``TRANSZERO_BACKEND_URL``
    environment variable.  5xx responses and transport errors are retried per
    the policy; 4xx responses are treated as non-retryable backend errors.
    Scores are clamped into [0, 1] at this boundary.
    """

    def __init__(
        self,
        base_url: str | None = None,
        *,
        retry: RetryPolicy = RetryPolicy(),
        session: requests.Session | None = None,
    ) -> None:
        url = base_url or os.environ.get(ENV_BACKEND_URL)
        if not url:
            raise ConfigError(f"no backend URL given and {ENV_BACKEND_URL} is unset")
        self.base_url = url.rstrip("/")
        self.retry = retry
        self._session = session or requests.Session()

    # -- protocol implementations -------------------------------------

    def translate(self, request: TranslateRequest) -> list[str]:
        data = self._post("/translate", encode_translate_request(request))
        candidates = data.get("candidates")
        if not isinstance(candidates, list) or not all(isinstance(c, str) for c in candidates):
            raise BackendError("malformed /translate response: expected a list of strings")
        if len(candidates) != request.num_candidates:
            raise BackendError(
                f"/translate returned {len(candidates)} candidates, expected {request.num_candidates}"
            )
        return candidates

    def score_pairs(self, pairs: Sequence[ScorePair]) -> list[float]:
        if not pairs:
            return []
        data = self._post("/score", encode_score_request(pairs))
        scores = data.get("scores")
        if not isinstance(scores, list) or len(scores) != len(pairs):
            raise BackendError("malformed /score response")
        return [clamp_score(float(s)) for s in scores]

    def detect(self, texts: Sequence[str]) -> list[str]:
        if not texts:
            return []
        data = self._post("/detect", encode_detect_request(texts))
        langs = data.get("langs")
        if not isinstance(langs, list) or len(langs) != len(texts):
            raise BackendError("malformed /detect response")
        return [str(l) for l in langs]

    def suite(self) -> BackendSuite:
        return BackendSuite(translator=self, scorer=self, detector=self)

    # -- transport ----------------------------------------------------

    def _post(self, path: str, body: dict) -> dict:
        url = self.base_url + path
        last_error: Exception | None = None
        for attempt in range(self.retry.retries + 1):
            if attempt:
                time.sleep(self.retry.backoff_s * (2 ** (attempt - 1)))
            try:
                response = self._session.post(url, json=body, timeout=self.retry.timeout_s)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = BackendError(f"{path} -> HTTP {response.status_code}")
                continue
            if response.status_code >= 400:
                raise BackendError(f"{path} -> HTTP {response.status_code}: {response.text[:200]}")
            try:
                return response.json()
            except ValueError as exc:
                raise BackendError(f"{path} returned non-JSON body") from exc
        raise BackendUnreachable(f"{url} unreachable after {self.retry.retries + 1} attempts: {last_error}")
