"""Shared wire-protocol conformance fixtures.

The engine is the source of truth for the HTTP protocol, so the fixtures are
generated from its own request encoders and written as plain JSON that any
server implementation can test against without importing this package.  Each
case carries the exact request body plus a declarative ``expect`` block
(required keys, element types, lengths, numeric bounds) that a dozen-line
checker can enforce in any language.
"""

from __future__ import annotations

import json
from pathlib import Path

from .backends import (
    Exemplar,
    ScorePair,
    TranslateRequest,
    encode_detect_request,
    encode_score_request,
    encode_translate_request,
)
from .core import Direction, LanguageTag

__all__ = ["generate_fixtures", "validate_response", "write_fixtures"]

_EN = LanguageTag("en")
_DE = LanguageTag("de")

_SENT = "The committee approved the proposal after a short debate."
_SENT_DE = "Der Ausschuss billigte den Vorschlag nach einer kurzen Debatte."


def generate_fixtures() -> dict:
    """Build the conformance cases from the engine's own encoders."""
    translate_basic = TranslateRequest(
        text=_SENT,
        direction=Direction(_EN, _DE),
        num_candidates=3,
        temperature=0.7,
        top_k=40,
        seed=1234,
    )
    translate_fewshot = TranslateRequest(
        text="The weather stayed calm throughout the night.",
        direction=Direction(_EN, _DE),
        exemplars=(
            Exemplar(_SENT, _SENT_DE),
            Exemplar("The river rose quickly.", "Der Fluss stieg schnell an."),
        ),
        num_candidates=1,
        temperature=1.0,
        top_k=50,
        instruction="translate-from-lines",
        seed=99,
    )
    score_mixed = [
        ScorePair(_SENT, _SENT, _EN),
        ScorePair(_SENT, "A completely unrelated remark about gardening.", _EN),
        ScorePair(_SENT_DE, _SENT_DE, _DE),
    ]
    detect_texts = [_SENT, _SENT_DE, "12345"]

    return {
        "version": 1,
        "endpoints": {
            "translate": {"path": "/translate", "method": "POST"},
            "score": {"path": "/score", "method": "POST"},
            "detect": {"path": "/detect", "method": "POST"},
            "health": {"path": "/health", "method": "GET"},
        },
        "cases": [
            {
                "name": "translate-candidate-count",
                "endpoint": "translate",
                "request": encode_translate_request(translate_basic),
                "expect": {
                    "keys": ["candidates"],
                    "list_field": "candidates",
                    "length": translate_basic.num_candidates,
                    "element_type": "string",
                },
            },
            {
                "name": "translate-fewshot",
                "endpoint": "translate",
                "request": encode_translate_request(translate_fewshot),
                "expect": {
                    "keys": ["candidates"],
                    "list_field": "candidates",
                    "length": 1,
                    "element_type": "string",
                },
            },
            {
                "name": "score-bounds",
                "endpoint": "score",
                "request": encode_score_request(score_mixed),
                "expect": {
                    "keys": ["scores"],
                    "list_field": "scores",
                    "length": len(score_mixed),
                    "element_type": "number",
                    "min": 0.0,
                    "max": 1.0,
                },
            },
            {
                "name": "score-identical-pair",
                "endpoint": "score",
                "request": encode_score_request([ScorePair(_SENT, _SENT, _EN)]),
                "expect": {
                    "keys": ["scores"],
                    "list_field": "scores",
                    "length": 1,
                    "element_type": "number",
                    "min": 0.0,
                    "max": 1.0,
                    "first_at_least": 0.9,
                },
            },
            {
                "name": "detect-shape",
                "endpoint": "detect",
                "request": encode_detect_request(detect_texts),
                "expect": {
                    "keys": ["langs"],
                    "list_field": "langs",
                    "length": len(detect_texts),
                    "element_type": "string",
                },
            },
        ],
    }


def validate_response(case: dict, response: dict) -> list[str]:
    """Check a decoded response body against a case's ``expect`` block.

    Returns a list of problems; empty means conformant.  The logic is kept
    trivially portable on purpose — server test suites in other ecosystems
    re-implement exactly these rules from the fixture data.
    """
    expect = case["expect"]
    problems: list[str] = []
    for key in expect["keys"]:
        if key not in response:
            problems.append(f"missing key {key!r}")
    field = expect["list_field"]
    values = response.get(field)
    if not isinstance(values, list):
        return problems + [f"{field!r} is not a list"]
    if len(values) != expect["length"]:
        problems.append(f"{field!r} has length {len(values)}, expected {expect['length']}")
    for i, value in enumerate(values):
        if expect["element_type"] == "string" and not isinstance(value, str):
            problems.append(f"{field}[{i}] is not a string")
        if expect["element_type"] == "number" and not isinstance(value, (int, float)):
            problems.append(f"{field}[{i}] is not a number")
    if expect.get("min") is not None:
        low = [v for v in values if isinstance(v, (int, float)) and v < expect["min"]]
        if low:
            problems.append(f"values below {expect['min']}: {low}")
    if expect.get("max") is not None:
        high = [v for v in values if isinstance(v, (int, float)) and v > expect["max"]]
        if high:
            problems.append(f"values above {expect['max']}: {high}")
    if "first_at_least" in expect and values:
        if not isinstance(values[0], (int, float)) or values[0] < expect["first_at_least"]:
            problems.append(f"{field}[0] = {values[0]!r} below {expect['first_at_least']}")
    return problems


def write_fixtures(path: str | Path) -> dict:
    """Write the fixture file (stable formatting) and return the payload."""
    payload = generate_fixtures()
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return payload
