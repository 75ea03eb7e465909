"""Builtin model backends and the registry that loads them by identifier.

The builtins are deterministic and dependency-free: generation is a seeded
word-level recoding into the target language (exemplar vocabulary wins over
the synthetic mapping), scoring is token-overlap F1, and detection is a
stopword/charset vote.  Real generation or metric models plug in by
registering another identifier; the server code only sees the three small
protocols below.
"""

from __future__ import annotations

import hashlib
import random
import re
from collections import Counter
from dataclasses import dataclass

from .config import ServerConfig


class ModelLoadError(RuntimeError):
    """A configured model identifier cannot be instantiated."""


_TOKEN_RE = re.compile(r"(\W+)", re.UNICODE)
_SYLLABLES = [
    "ba", "den", "fi", "gor", "ha", "jel", "ka", "lun",
    "mer", "nod", "pra", "qu", "rin", "sol", "tev", "wix",
]


def _recode_word(word: str, tgt_lang: str, variant: int) -> str:
    """Deterministic pseudo-word for ``word`` in ``tgt_lang``; ``variant`` 0
    is the canonical form, higher values are alternates."""
    if not any(c.isalpha() for c in word):
        return word  # numbers and symbols pass through
    digest = hashlib.sha256(f"{word.lower()}|{tgt_lang}|{variant}".encode()).digest()
    length = 2 + digest[0] % 3
    out = "".join(_SYLLABLES[digest[1 + i] % len(_SYLLABLES)] for i in range(length))
    return out.capitalize() if word[0].isupper() else out


class SeededGenerator:
    """Word-level recoder: same request, same candidates, any process."""

    identifier = "builtin-seeded"

    def __init__(self, device: str = "cpu") -> None:
        self.device = device

    def generate(
        self,
        text: str,
        src_lang: str,
        tgt_lang: str,
        exemplars: list[tuple[str, str]],
        num_candidates: int,
        temperature: float,
        top_k: int,
        seed: int | None,
    ) -> list[str]:
        lexicon: dict[str, str] = {}
        for ex_src, ex_tgt in exemplars:
            for s, t in zip(ex_src.split(), ex_tgt.split()):
                lexicon.setdefault(s.lower().strip(".,;:!?"), t.strip(".,;:!?"))

        rng = random.Random(f"{seed}|{src_lang}|{tgt_lang}|{text}")
        pieces = _TOKEN_RE.split(text)
        candidates = []
        for k in range(num_candidates):
            words = []
            for piece in pieces:
                if not piece or _TOKEN_RE.fullmatch(piece):
                    words.append(piece)
                    continue
                hit = lexicon.get(piece.lower())
                if hit is not None:
                    words.append(hit)
                    continue
                variant = 0
                if k > 0 and temperature > 0 and rng.random() < min(temperature, 1.0) * 0.5:
                    variant = rng.randrange(1, max(2, top_k))
                words.append(_recode_word(piece, tgt_lang, variant))
            candidates.append("".join(words))
        return candidates


class OverlapMetric:
    """Token-overlap F1 in [0, 1]; identical texts score exactly 1."""

    identifier = "builtin-overlap"

    def __init__(self, device: str = "cpu") -> None:
        self.device = device

    @staticmethod
    def score_pair(a: str, b: str) -> float:
        ta = Counter(w.lower() for w in re.findall(r"\w+", a))
        tb = Counter(w.lower() for w in re.findall(r"\w+", b))
        if not ta and not tb:
            return 1.0
        if not ta or not tb:
            return 0.0
        overlap = sum((ta & tb).values())
        return 2.0 * overlap / (sum(ta.values()) + sum(tb.values()))

    def score_batch(self, pairs: list[tuple[str, str, str]]) -> list[float]:
        return [self.score_pair(a, b) for a, b, _lang in pairs]


_STOPWORDS = {
    "en": {"the", "a", "an", "of", "and", "to", "in", "is", "was", "for", "on",
           "with", "that", "it", "as", "at", "by", "this", "after", "from"},
    "de": {"der", "die", "das", "und", "ist", "ein", "eine", "nicht", "mit",
           "nach", "von", "zu", "den", "dem", "im", "auf", "sich", "einer", "an"},
    "fr": {"le", "la", "les", "de", "des", "et", "est", "un", "une", "dans",
           "pour", "que", "qui", "au", "aux", "sur", "avec", "ne", "pas"},
    "es": {"el", "los", "las", "y", "es", "en", "por", "para", "con", "no",
           "se", "del", "al", "como", "una", "más", "su", "lo"},
}
_CHARSET_HINTS = {"de": "äöüß", "fr": "éèêàçœ", "es": "ñ¡¿í"}


class HeuristicDetector:
    """Stopword and charset vote; abstains with "unknown" rather than guess."""

    identifier = "builtin-heuristic"

    def __init__(self, device: str = "cpu") -> None:
        self.device = device

    def detect(self, texts: list[str]) -> list[str]:
        out = []
        for text in texts:
            words = [w.lower() for w in re.findall(r"\w+", text) if any(c.isalpha() for c in w)]
            if not words:
                out.append("unknown")
                continue
            scores = {
                lang: sum(1 for w in words if w in vocab)
                + sum(text.count(c) for c in _CHARSET_HINTS.get(lang, ""))
                for lang, vocab in _STOPWORDS.items()
            }
            best = max(scores.values())
            winners = [lang for lang, s in scores.items() if s == best]
            out.append(winners[0] if best > 0 and len(winners) == 1 else "unknown")
        return out


GENERATORS = {SeededGenerator.identifier: SeededGenerator}
METRICS = {OverlapMetric.identifier: OverlapMetric}
DETECTORS = {HeuristicDetector.identifier: HeuristicDetector}


@dataclass
class ModelBundle:
    generator: SeededGenerator
    metric: OverlapMetric
    detector: HeuristicDetector


def _pick(registry: dict, identifier: str, kind: str):
    try:
        factory = registry[identifier]
    except KeyError:
        raise ModelLoadError(
            f"unknown {kind} model {identifier!r}; available: {sorted(registry)}"
        ) from None
    return factory


def load_models(config: ServerConfig) -> ModelBundle:
    """Instantiate every configured backend; raises before any serving starts."""
    generator = _pick(GENERATORS, config.generation_model, "generation")(config.device)
    metric = _pick(METRICS, config.metric_model, "metric")(config.device)
    detector = DETECTORS[HeuristicDetector.identifier](config.device)
    return ModelBundle(generator=generator, metric=metric, detector=detector)
