import json

from transzero.backends import (
    Exemplar,
    ScorePair,
    TranslateRequest,
    encode_score_request,
    encode_translate_request,
)
from transzero.contract import generate_fixtures, validate_response, write_fixtures
from transzero.core import Direction, LanguageTag


def case_by_name(payload, name):
    return next(c for c in payload["cases"] if c["name"] == name)


def test_fixture_shape():
    payload = generate_fixtures()
    assert payload["version"] == 1
    assert set(payload["endpoints"]) == {"translate", "score", "detect", "health"}
    assert payload["endpoints"]["health"] == {"path": "/health", "method": "GET"}
    for name in ("translate", "score", "detect"):
        assert payload["endpoints"][name]["method"] == "POST"
        assert payload["endpoints"][name]["path"] == f"/{name}"
    assert [c["name"] for c in payload["cases"]] == [
        "translate-candidate-count",
        "translate-fewshot",
        "score-bounds",
        "score-identical-pair",
        "detect-shape",
    ]
    for case in payload["cases"]:
        assert case["endpoint"] in payload["endpoints"]
        assert isinstance(case["request"], dict)
        assert {"keys", "list_field", "length", "element_type"} <= set(case["expect"])


def test_requests_match_engine_encoders():
    payload = generate_fixtures()
    basic = case_by_name(payload, "translate-candidate-count")
    assert basic["request"] == encode_translate_request(
        TranslateRequest(
            text=basic["request"]["text"],
            direction=Direction(LanguageTag("en"), LanguageTag("de")),
            num_candidates=3,
            temperature=0.7,
            top_k=40,
            seed=1234,
        )
    )
    assert basic["expect"]["length"] == basic["request"]["num_candidates"] == 3

    fewshot = case_by_name(payload, "translate-fewshot")
    assert len(fewshot["request"]["exemplars"]) == 2
    for ex in fewshot["request"]["exemplars"]:
        assert set(ex) == {"src", "tgt"}

    bounds = case_by_name(payload, "score-bounds")
    assert len(bounds["request"]["pairs"]) == 3
    assert all(set(p) == {"a", "b", "lang"} for p in bounds["request"]["pairs"])

    identical = case_by_name(payload, "score-identical-pair")
    pair = identical["request"]["pairs"][0]
    assert pair["a"] == pair["b"]
    assert identical["expect"]["first_at_least"] == 0.9

    detect = case_by_name(payload, "detect-shape")
    assert detect["request"]["texts"][-1] == "12345"
    assert detect["expect"]["keys"] == ["langs"]


def test_validate_response_accepts_conformant_bodies():
    payload = generate_fixtures()
    good = {
        "translate-candidate-count": {"candidates": ["a", "b", "c"]},
        "translate-fewshot": {"candidates": ["x"]},
        "score-bounds": {"scores": [1.0, 0.1, 0.97]},
        "score-identical-pair": {"scores": [1.0]},
        "detect-shape": {"langs": ["en", "de", "unknown"]},
    }
    for name, body in good.items():
        assert validate_response(case_by_name(payload, name), body) == []


def test_validate_response_flags_specific_violations():
    payload = generate_fixtures()
    translate = case_by_name(payload, "translate-candidate-count")
    assert validate_response(translate, {}) == [
        "missing key 'candidates'",
        "'candidates' is not a list",
    ]
    assert any(
        "length 2" in p for p in validate_response(translate, {"candidates": ["a", "b"]})
    )
    assert any(
        "not a string" in p for p in validate_response(translate, {"candidates": ["a", 1, "c"]})
    )

    bounds = case_by_name(payload, "score-bounds")
    problems = validate_response(bounds, {"scores": [-0.5, 0.2, 1.4]})
    assert any("below 0.0" in p for p in problems)
    assert any("above 1.0" in p for p in problems)

    identical = case_by_name(payload, "score-identical-pair")
    assert any(
        "below 0.9" in p for p in validate_response(identical, {"scores": [0.2]})
    )
    assert validate_response(identical, {"scores": [0.95]}) == []

    detect = case_by_name(payload, "detect-shape")
    assert any(
        "not a string" in p for p in validate_response(detect, {"langs": ["en", None, "de"]})
    )


def test_write_fixtures_is_stable(tmp_path):
    first = tmp_path / "a.json"
    second = tmp_path / "nested" / "b.json"
    payload = write_fixtures(first)
    write_fixtures(second)
    assert first.read_bytes() == second.read_bytes()  # deterministic output
    loaded = json.loads(first.read_text(encoding="utf-8"))
    assert loaded == payload
    assert first.read_text(encoding="utf-8").endswith("\n")


def test_checked_in_fixtures_match_generator():
    # the repository copy consumed by external servers must never drift
    from pathlib import Path

    checked_in = Path(__file__).resolve().parents[1] / "contracts" / "wire_fixtures.json"
    assert checked_in.exists(), "contracts/wire_fixtures.json missing; regenerate it"
    assert json.loads(checked_in.read_text(encoding="utf-8")) == generate_fixtures()
