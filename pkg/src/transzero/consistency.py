"""Round-trip agreement scoring and candidate rewards.

Agreement between two same-language texts is the symmetrized metric
``S(a, b) = (M(a, b) + M(b, a)) / 2``.  A candidate's reward compares every
reconstruction against both the original input (the literal route) and the
candidate's own direct back-translation (the free route), and keeps the
better of the two route means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .backends import PairScorer, ScorePair
from .core import Sentence

__all__ = [
    "ConsistencyReport",
    "EmptyReconstructionSet",
    "TrajectoryScore",
    "best_reconstruction",
    "consistency_S",
    "reward",
    "summarize_scores",
]


class EmptyReconstructionSet(ValueError):
    """Reward requested for a candidate with no reconstructions at all."""


@dataclass(frozen=True)
class TrajectoryScore:
    trajectory_id: int
    literal: float
    free: float

    @property
    def best(self) -> float:
        return self.literal if self.literal >= self.free else self.free


@dataclass(frozen=True)
class ConsistencyReport:
    """Scores for one candidate's reconstruction set.

    ``reward`` equals ``max(literal_mean, free_mean)``; ``best_index`` points
    at the reconstruction maximizing ``max(literal, free)`` with ties broken
    toward the earliest trajectory.
    """

    reward: float
    literal_mean: float
    free_mean: float
    best_index: int
    per_trajectory: tuple[TrajectoryScore, ...]


def consistency_S(x: Sentence, x2: Sentence, scorer: PairScorer) -> float:
    """Symmetrized agreement of two same-language sentences.

    Exactly symmetric in its arguments, bit for bit: swapping them only swaps
    the order of a commutative addition.
    """
    if x.lang != x2.lang:
        raise ValueError(f"cross-language agreement requested: {x.lang} vs {x2.lang}")
    forward, backward = scorer.score_pairs(
        [ScorePair(x.text, x2.text, x.lang), ScorePair(x2.text, x.text, x.lang)]
    )
    return (forward + backward) / 2.0


def summarize_scores(
    literal: Sequence[float], free: Sequence[float] | None
) -> tuple[float, float, float, int]:
    """Reduce per-trajectory route scores to (reward, literal_mean, free_mean,
    best_index).

    Means use exactly-rounded summation, so any permutation of the
    trajectory list yields bit-identical results.  ``free=None`` means the
    free route is unavailable and scores 0.
    """
    n = len(literal)
    if n == 0:
        raise EmptyReconstructionSet("no reconstructions to score")
    free_vals = list(free) if free is not None else [0.0] * n
    if len(free_vals) != n:
        raise ValueError("literal/free score lists differ in length")
    literal_mean = math.fsum(literal) / n
    free_mean = math.fsum(free_vals) / n
    best_index = 0
    best_val = -1.0
    for i in range(n):
        v = literal[i] if literal[i] >= free_vals[i] else free_vals[i]
        if v > best_val:
            best_val = v
            best_index = i
    return max(literal_mean, free_mean), literal_mean, free_mean, best_index


def reward(
    x: Sentence,
    x_d: Sentence | None,
    recons: Sequence[Sentence],
    scorer: PairScorer,
) -> ConsistencyReport:
    """Score a candidate from its reconstruction set.

    All pair scores are fetched in a single batched scorer call: for each
    reconstruction the literal pair against ``x`` (both orders) and, when a
    direct back-translation exists, the free pair against ``x_d``.
    """
    if not recons:
        raise EmptyReconstructionSet("no reconstructions to score")
    for r in recons:
        if r.lang != x.lang:
            raise ValueError(f"reconstruction in {r.lang}, expected {x.lang}")
    if x_d is not None and x_d.lang != x.lang:
        raise ValueError(f"direct back-translation in {x_d.lang}, expected {x.lang}")

    pairs: list[ScorePair] = []
    for r in recons:
        pairs.append(ScorePair(r.text, x.text, x.lang))
        pairs.append(ScorePair(x.text, r.text, x.lang))
        if x_d is not None:
            pairs.append(ScorePair(r.text, x_d.text, x.lang))
            pairs.append(ScorePair(x_d.text, r.text, x.lang))
    scores = scorer.score_pairs(pairs)

    stride = 4 if x_d is not None else 2
    literal = []
    free: list[float] | None = [] if x_d is not None else None
    for i in range(len(recons)):
        base = i * stride
        literal.append((scores[base] + scores[base + 1]) / 2.0)
        if free is not None:
            free.append((scores[base + 2] + scores[base + 3]) / 2.0)

    reward_val, literal_mean, free_mean, best_index = summarize_scores(literal, free)
    per = tuple(
        TrajectoryScore(i, literal[i], free[i] if free is not None else 0.0)
        for i in range(len(recons))
    )
    return ConsistencyReport(reward_val, literal_mean, free_mean, best_index, per)


def best_reconstruction(
    x: Sentence,
    x_d: Sentence | None,
    recons: Sequence[Sentence],
    scorer: PairScorer,
) -> tuple[Sentence, int]:
    """The reconstruction (and its trajectory index) a candidate should keep
    as its recorded source-language variant."""
    report = reward(x, x_d, recons, scorer)
    return recons[report.best_index], report.best_index
