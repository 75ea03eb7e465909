"""Deterministic synthetic translation worlds.

Every language owns a disjoint integer token range and a private cipher over a
shared concept space, so an exact translation exists between any two languages
and every score in a run can be recomputed by hand.  Sentences are
space-separated token ids ("103 57 8").

``ToyTranslator`` holds one logits table per direction and implements the
generation protocol: seeded sampling, greedy decoding at temperature 0, exact
log-probabilities, and an in-context bias that pulls sampled tokens toward
exemplar targets (so few-shot guidance actually steers the output).  The
exact-match scorer and token-range detector complete an in-process backend
suite.

Direction quality is shaped two ways:

* ``gt_prob`` -- probability mass on the ground-truth token (uncertainty;
  errors are fresh random draws each call);
* ``corrupt_frac`` -- fraction of source tokens whose argmax is deterministically
  wrong while the remaining mass stays near-uniform (a lossy channel whose
  greedy output is reproducibly wrong but whose sampled errors are not).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from ._kernels import match_count, sample_rows, seq_logprob
from .backends import BackendSuite, TranslateRequest, UNKNOWN_LANGUAGE, UnsupportedDirection
from .core import ConfigError, Direction, LanguageTag, Sentence

__all__ = [
    "DirectionProfile",
    "ExactMatchScorer",
    "RangeVoteDetector",
    "SyntheticWorld",
    "ToyTranslator",
    "gt_translate",
    "lab_suite",
    "load_world",
    "make_corpus",
    "parse_tokens",
    "save_world",
    "synth_score",
    "toy_logprob",
    "weak_pair_lab",
    "weak_pair_profiles",
]

# Logit given to a ground-truth target when a direction is exact; large enough
# that competing mass vanishes below float64 resolution.
_PERFECT_LOGIT = 50.0
# Margin of the designated wrong target on a corrupted row: wins the argmax,
# barely shifts the sampled distribution away from uniform.
_CORRUPT_MARGIN = 0.25


@lru_cache(maxsize=65536)
def parse_tokens(text: str) -> tuple[int, ...] | None:
    """Token ids of a lab sentence, or None when the text is not token-coded.

    Cached; callers must treat the result as read-only.
    """
    parts = text.split()
    if not parts:
        return None
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        return None


def _token_array(text: str) -> np.ndarray | None:
    toks = parse_tokens(text)
    if toks is None:
        return None
    return np.asarray(toks, dtype=np.int64)


def format_tokens(tokens: np.ndarray) -> str:
    return " ".join(str(int(t)) for t in tokens)


# ------------------------------------------------------------------ world


class SyntheticWorld:
    """Languages over disjoint token ranges with per-language ciphers.

    Language ``k`` occupies tokens ``[k*vocab_size, (k+1)*vocab_size)``.
    Concept ``c`` surfaces in language ``k`` as ``offset_k + perm_k[c]``, so
    the exact translation a->b maps a token through a's inverse cipher and b's
    cipher.  Round-tripping any chain of exact translations is the identity.
    """

    def __init__(
        self,
        languages: Sequence[LanguageTag],
        vocab_size: int,
        perms: dict[str, np.ndarray],
        seed: int = 0,
    ) -> None:
        if vocab_size < 2:
            raise ConfigError("vocab_size must be >= 2")
        if len(languages) < 2:
            raise ConfigError("a world needs at least two languages")
        self.languages = tuple(languages)
        self.vocab_size = int(vocab_size)
        self.seed = int(seed)
        self.perms = {}
        for lang in self.languages:
            perm = np.asarray(perms[lang.code], dtype=np.int64)
            if sorted(perm.tolist()) != list(range(vocab_size)):
                raise ConfigError(f"cipher for {lang} is not a permutation of 0..{vocab_size - 1}")
            self.perms[lang.code] = perm
        self._inverse = {code: np.argsort(p) for code, p in self.perms.items()}
        self._index = {lang: i for i, lang in enumerate(self.languages)}

    # -- construction --------------------------------------------------

    @classmethod
    def generate(
        cls,
        n_langs: int = 4,
        vocab_size: int = 50,
        seed: int = 0,
        *,
        identity: bool = False,
        tags: Sequence[str] | None = None,
    ) -> "SyntheticWorld":
        codes = list(tags) if tags is not None else [f"syn{i}" for i in range(n_langs)]
        rng = np.random.default_rng([seed, 0x5EED])
        perms = {}
        for code in codes:
            if identity:
                perms[code] = np.arange(vocab_size, dtype=np.int64)
            else:
                perms[code] = rng.permutation(vocab_size).astype(np.int64)
        return cls([LanguageTag(c) for c in codes], vocab_size, perms, seed)

    # -- token helpers -------------------------------------------------

    def lang_index(self, lang: LanguageTag) -> int:
        try:
            return self._index[lang]
        except KeyError:
            raise ConfigError(f"language {lang} not in this world") from None

    def offset(self, lang: LanguageTag) -> int:
        return self.lang_index(lang) * self.vocab_size

    def lang_of_token(self, token: int) -> LanguageTag | None:
        idx = token // self.vocab_size
        if 0 <= idx < len(self.languages) and token >= 0:
            return self.languages[idx]
        return None

    def gt_map(self, direction: Direction) -> np.ndarray:
        """Local-index mapping realizing the exact translation for a direction."""
        inv_src = self._inverse[direction.src.code]
        return self.perms[direction.tgt.code][inv_src]

    def translate_exact(self, x: Sentence, tgt: LanguageTag) -> Sentence:
        if x.lang == tgt:
            raise ConfigError("exact translation requested into the same language")
        toks = _token_array(x.text)
        if toks is None:
            raise ConfigError(f"not a token-coded sentence: {x.text!r}")
        local = toks - self.offset(x.lang)
        if local.min() < 0 or local.max() >= self.vocab_size:
            raise ConfigError(f"token out of range for language {x.lang}")
        mapped = self.gt_map(Direction(x.lang, tgt))[local] + self.offset(tgt)
        return Sentence(format_tokens(mapped), tgt)

    def sample_sentence(self, lang: LanguageTag, length: int, rng: np.random.Generator) -> Sentence:
        toks = rng.integers(0, self.vocab_size, size=length) + self.offset(lang)
        return Sentence(format_tokens(toks), lang)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "languages": [str(l) for l in self.languages],
            "seed": self.seed,
            "perms": {code: perm.tolist() for code, perm in self.perms.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticWorld":
        return cls(
            [LanguageTag(c) for c in data["languages"]],
            data["vocab_size"],
            {code: np.asarray(p, dtype=np.int64) for code, p in data["perms"].items()},
            data.get("seed", 0),
        )


def gt_translate(world: SyntheticWorld, x: Sentence, tgt: LanguageTag) -> Sentence:
    """Exact translation of a lab sentence into another language."""
    return world.translate_exact(x, tgt)


def make_corpus(
    world: SyntheticWorld, lang: LanguageTag, count: int, length: int, seed: int = 0
) -> list[Sentence]:
    rng = np.random.default_rng([world.seed, seed, world.lang_index(lang), 0xC0DE])
    return [world.sample_sentence(lang, length, rng) for _ in range(count)]


# ------------------------------------------------------------------ toy model


@dataclass(frozen=True)
class DirectionProfile:
    """Quality profile of one toy direction; see module docstring."""

    gt_prob: float = 1.0
    corrupt_frac: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.gt_prob <= 1.0):
            raise ConfigError("gt_prob must lie in (0, 1]")
        if not (0.0 <= self.corrupt_frac < 1.0):
            raise ConfigError("corrupt_frac must lie in [0, 1)")


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _direction_key(direction: Direction) -> tuple[str, str]:
    return (direction.src.code, direction.tgt.code)


class ToyTranslator:
    """Per-direction categorical token translator over a synthetic world.

    Each direction owns a ``(vocab, vocab)`` logits table: row ``v`` is the
    output distribution for local source token ``v``.  Decoding is
    position-independent, which keeps log-probabilities exact and gradients
    trivial -- the whole point of the lab.
    """

    def __init__(
        self,
        world: SyntheticWorld,
        tables: dict[tuple[str, str], np.ndarray],
        exemplar_bias: float = 4.0,
    ) -> None:
        self.world = world
        self.tables = tables
        self.exemplar_bias = float(exemplar_bias)

    # -- construction --------------------------------------------------

    @classmethod
    def build(
        cls,
        world: SyntheticWorld,
        profiles: dict[str, DirectionProfile] | None = None,
        default: DirectionProfile = DirectionProfile(),
        exemplar_bias: float = 4.0,
    ) -> "ToyTranslator":
        """Build tables for every ordered language pair.

        ``profiles`` keys are ``"src->tgt"`` code strings; unlisted directions
        use ``default``.
        """
        profiles = profiles or {}
        tables: dict[tuple[str, str], np.ndarray] = {}
        for i, src in enumerate(world.languages):
            for j, tgt in enumerate(world.languages):
                if i == j:
                    continue
                direction = Direction(src, tgt)
                profile = profiles.get(f"{src}->{tgt}", default)
                tables[_direction_key(direction)] = cls._make_table(world, direction, profile, i, j)
        return cls(world, tables, exemplar_bias)

    @staticmethod
    def _make_table(
        world: SyntheticWorld,
        direction: Direction,
        profile: DirectionProfile,
        src_index: int,
        tgt_index: int,
    ) -> np.ndarray:
        v = world.vocab_size
        gt = world.gt_map(direction)
        table = np.zeros((v, v), dtype=np.float64)
        if profile.gt_prob >= 1.0 - 1e-12:
            gt_logit = _PERFECT_LOGIT
        else:
            gt_logit = math.log(profile.gt_prob * (v - 1) / (1.0 - profile.gt_prob))
        table[np.arange(v), gt] = gt_logit
        if profile.corrupt_frac > 0.0:
            k = int(round(profile.corrupt_frac * v))
            rng = np.random.default_rng([world.seed, src_index, tgt_index, 0xBAD])
            corrupted = rng.choice(v, size=k, replace=False)
            for vv in corrupted:
                wrong = int(rng.integers(0, v - 1))
                if wrong >= gt[vv]:
                    wrong += 1
                table[vv, :] = 0.0
                table[vv, wrong] = _CORRUPT_MARGIN
        return table

    def clone(self) -> "ToyTranslator":
        """Deep copy; used to freeze reference weights before an update pass."""
        return ToyTranslator(
            self.world,
            {k: t.copy() for k, t in self.tables.items()},
            self.exemplar_bias,
        )

    def table(self, direction: Direction) -> np.ndarray:
        key = _direction_key(direction)
        if key not in self.tables:
            raise UnsupportedDirection(f"no toy table for {direction}")
        return self.tables[key]

    # -- generation ----------------------------------------------------

    def translate(self, request: TranslateRequest) -> list[str]:
        direction = request.direction
        table = self.table(direction)
        toks = _token_array(request.text)
        if toks is None:
            return ["" for _ in range(request.num_candidates)]
        v = self.world.vocab_size
        src_off = self.world.offset(direction.src)
        tgt_off = self.world.offset(direction.tgt)
        local = toks - src_off
        valid = (local >= 0) & (local < v)
        rows = table[np.clip(local, 0, v - 1)].copy()
        rows[~valid] = 0.0  # unknown source token: uniform guess

        if request.exemplars and self.exemplar_bias != 0.0:
            for ex in request.exemplars:
                ex_src = _token_array(ex.src)
                ex_tgt = _token_array(ex.tgt)
                if ex_src is None or ex_tgt is None:
                    continue
                m = min(len(toks), len(ex_src), len(ex_tgt))
                for t in range(m):
                    if ex_src[t] != toks[t]:
                        continue
                    ex_local = ex_tgt[t] - tgt_off
                    if 0 <= ex_local < v:
                        rows[t, ex_local] += self.exemplar_bias

        if request.temperature == 0.0:
            picked = np.argmax(rows, axis=1)
            text = format_tokens(picked + tgt_off)
            return [text] * request.num_candidates

        scaled = rows / request.temperature
        if request.top_k < v:
            keep = np.argsort(-scaled, axis=1, kind="stable")[:, : request.top_k]
            mask = np.zeros_like(scaled, dtype=bool)
            np.put_along_axis(mask, keep, True, axis=1)
            scaled = np.where(mask, scaled, -np.inf)
        shifted = scaled - scaled.max(axis=1, keepdims=True)
        probs = np.exp(shifted)
        cdf = np.cumsum(probs, axis=1)

        rng = np.random.default_rng(request.seed)
        draws = rng.random((request.num_candidates, len(toks)))
        out: list[str] = []
        for c in range(request.num_candidates):
            picked = sample_rows(cdf, draws[c])
            out.append(format_tokens(picked + tgt_off))
        return out

    # -- exact quantities ----------------------------------------------

    def logprob(self, src: Sentence, out: Sentence) -> float:
        """Exact log-probability of ``out`` given ``src`` under the plain
        (unbiased, temperature-1) model."""
        direction = Direction(src.lang, out.lang)
        table = self.table(direction)
        a = _token_array(src.text)
        b = _token_array(out.text)
        if a is None or b is None:
            raise ConfigError("logprob of non-token-coded text")
        if len(a) != len(b):
            raise ValueError(f"length mismatch: {len(a)} source vs {len(b)} output tokens")
        v = self.world.vocab_size
        la = a - self.world.offset(src.lang)
        lb = b - self.world.offset(out.lang)
        if ((la < 0) | (la >= v)).any() or ((lb < 0) | (lb >= v)).any():
            raise ValueError("token outside its language range")
        logz = _log_norm_rows(table)
        return float(seq_logprob(logz, la, lb))

    def gt_token_accuracy(self, direction: Direction) -> float:
        """Expected probability mass on the exact target token, averaged over
        source tokens.  Equals sampling accuracy at temperature 1."""
        table = self.table(direction)
        gt = self.world.gt_map(direction)
        probs = _softmax_rows(table)
        return float(probs[np.arange(self.world.vocab_size), gt].mean())


def _log_norm_rows(table: np.ndarray) -> np.ndarray:
    m = table.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(table - m).sum(axis=1, keepdims=True))
    return table - lse


def toy_logprob(translator: ToyTranslator, src: Sentence, out: Sentence) -> float:
    return translator.logprob(src, out)


# ------------------------------------------------------------------ scorer


def synth_score(a: str, b: str) -> float:
    """Token match rate of two lab texts, normalized by the longer length."""
    ta = _token_array(a)
    tb = _token_array(b)
    if ta is None or tb is None:
        return 1.0 if a == b else 0.0
    denom = max(len(ta), len(tb))
    if denom == 0:
        return 1.0
    return match_count(ta, tb) / denom


class ExactMatchScorer:
    """Pair scorer backed by exact token agreement.  Symmetric by
    construction, so the symmetrized metric equals the raw one."""

    def score_pairs(self, pairs) -> list[float]:
        return [synth_score(p.a, p.b) for p in pairs]


class RangeVoteDetector:
    """Detects a lab sentence's language by majority vote over token ranges.

    A strict plurality is required: ties and token-free texts come back as
    ``"unknown"``.
    """

    def __init__(self, world: SyntheticWorld) -> None:
        self.world = world

    def detect(self, texts) -> list[str]:
        out: list[str] = []
        for text in texts:
            toks = parse_tokens(text)
            if toks is None:
                out.append(UNKNOWN_LANGUAGE)
                continue
            counts: dict[str, int] = {}
            for tok in toks:
                lang = self.world.lang_of_token(tok)
                if lang is not None:
                    counts[lang.code] = counts.get(lang.code, 0) + 1
            if not counts:
                out.append(UNKNOWN_LANGUAGE)
                continue
            ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
            if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
                out.append(UNKNOWN_LANGUAGE)
            else:
                out.append(ranked[0][0])
        return out


# ------------------------------------------------------------------ presets


def lab_suite(world: SyntheticWorld, translator: ToyTranslator) -> BackendSuite:
    return BackendSuite(
        translator=translator,
        scorer=ExactMatchScorer(),
        detector=RangeVoteDetector(world),
    )


def weak_pair_profiles(
    weak: tuple[str, str] = ("syn0", "syn1"),
    weak_gt_prob: float = 0.5,
    return_gt_prob: float = 0.4,
) -> dict[str, DirectionProfile]:
    src, tgt = weak
    return {
        f"{src}->{tgt}": DirectionProfile(gt_prob=weak_gt_prob),
        f"{tgt}->{src}": DirectionProfile(gt_prob=return_gt_prob),
    }


def weak_pair_lab(
    n_langs: int = 4,
    vocab_size: int = 50,
    seed: int = 0,
    *,
    weak: tuple[str, str] = ("syn0", "syn1"),
    weak_gt_prob: float = 0.5,
    return_gt_prob: float = 0.4,
    exemplar_bias: float = 4.0,
) -> tuple[SyntheticWorld, ToyTranslator]:
    """A world with one weak direction and a noisy direct return channel.

    The weak direction (default syn0->syn1) places ``weak_gt_prob`` mass on
    the exact token -- the direction a training run is expected to improve.
    Its reverse keeps the correct argmax but only ``return_gt_prob`` mass on
    it, so sampled direct back-translations are imperfect in a way no
    candidate can influence: agreement with them stays a flat noise floor
    while multi-hop reconstructions through the remaining exact directions
    track actual fidelity.  All other directions are exact.
    """
    world = SyntheticWorld.generate(n_langs=n_langs, vocab_size=vocab_size, seed=seed)
    profiles = weak_pair_profiles(weak, weak_gt_prob, return_gt_prob)
    translator = ToyTranslator.build(world, profiles, exemplar_bias=exemplar_bias)
    return world, translator


# ------------------------------------------------------------------ files


def save_world(
    path: str | Path,
    world: SyntheticWorld,
    profiles: dict[str, DirectionProfile] | None = None,
    exemplar_bias: float = 4.0,
) -> None:
    data = world.to_dict()
    data["exemplar_bias"] = exemplar_bias
    data["profiles"] = {
        key: {"gt_prob": p.gt_prob, "corrupt_frac": p.corrupt_frac}
        for key, p in (profiles or {}).items()
    }
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_world(path: str | Path) -> tuple[SyntheticWorld, ToyTranslator]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    world = SyntheticWorld.from_dict(data)
    profiles = {
        key: DirectionProfile(gt_prob=p.get("gt_prob", 1.0), corrupt_frac=p.get("corrupt_frac", 0.0))
        for key, p in data.get("profiles", {}).items()
    }
    translator = ToyTranslator.build(world, profiles, exemplar_bias=data.get("exemplar_bias", 4.0))
    return world, translator
