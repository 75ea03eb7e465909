import math

import pytest
from hypothesis import given, strategies as st

from transzero.backends import ScorePair
from transzero.consistency import (
    ConsistencyReport,
    EmptyReconstructionSet,
    TrajectoryScore,
    best_reconstruction,
    consistency_S,
    reward,
    summarize_scores,
)
from transzero.core import LanguageTag, Sentence

EN = LanguageTag("en")
DE = LanguageTag("de")


class TableScorer:
    """Looks scores up in an asymmetric (a, b) -> value table; counts calls."""

    def __init__(self, table, default=0.0):
        self.table = table
        self.default = default
        self.calls = 0
        self.pairs_seen = 0

    def score_pairs(self, pairs):
        self.calls += 1
        self.pairs_seen += len(pairs)
        return [self.table.get((p.a, p.b), self.default) for p in pairs]


# ---------------------------------------------------------------- S


def test_consistency_S_averages_both_orders_in_one_call():
    scorer = TableScorer({("x", "y"): 0.8, ("y", "x"): 0.4})
    s = consistency_S(Sentence("x", EN), Sentence("y", EN), scorer)
    assert s == pytest.approx(0.6)
    assert scorer.calls == 1 and scorer.pairs_seen == 2


def test_consistency_S_symmetric_bitwise():
    scorer = TableScorer({("x", "y"): 0.1234567, ("y", "x"): 0.7654321})
    a, b = Sentence("x", EN), Sentence("y", EN)
    assert consistency_S(a, b, scorer) == consistency_S(b, a, scorer)


def test_consistency_S_rejects_cross_language():
    with pytest.raises(ValueError):
        consistency_S(Sentence("x", EN), Sentence("y", DE), TableScorer({}))


# ---------------------------------------------------------------- summarize


def test_summarize_takes_better_route_mean():
    r, lit, free, _ = summarize_scores([0.2, 0.4], [0.9, 0.1])
    assert lit == pytest.approx(0.3)
    assert free == pytest.approx(0.5)
    assert r == free


def test_summarize_missing_free_route_scores_zero():
    r, lit, free, best = summarize_scores([0.6, 0.8], None)
    assert free == 0.0
    assert r == lit == pytest.approx(0.7)
    assert best == 1


def test_summarize_best_index_prefers_earliest_on_ties():
    _, _, _, best = summarize_scores([0.5, 0.5, 0.5], [0.1, 0.5, 0.2])
    assert best == 0
    # per-trajectory max decides, not the literal route alone
    _, _, _, best = summarize_scores([0.1, 0.2, 0.1], [0.0, 0.0, 0.9])
    assert best == 2


def test_summarize_validation():
    with pytest.raises(EmptyReconstructionSet):
        summarize_scores([], None)
    with pytest.raises(ValueError):
        summarize_scores([0.1, 0.2], [0.3])


@given(
    scores=st.lists(
        st.tuples(
            st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
            st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        ),
        min_size=1,
        max_size=30,
    ),
    seed=st.randoms(use_true_random=False),
)
def test_summarize_permutation_invariant_bitwise(scores, seed):
    lit = [s[0] for s in scores]
    free = [s[1] for s in scores]
    base = summarize_scores(lit, free)
    shuffled = list(scores)
    seed.shuffle(shuffled)
    got = summarize_scores([s[0] for s in shuffled], [s[1] for s in shuffled])
    # exactly-rounded sums: the three aggregates match bit for bit
    assert got[0] == base[0] and got[1] == base[1] and got[2] == base[2]


@given(lit=st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=20))
def test_summarize_reward_bounds(lit):
    r, lm, fm, best = summarize_scores(lit, None)
    assert 0.0 <= r <= 1.0
    assert r == max(lm, fm)
    assert 0 <= best < len(lit)
    assert math.isfinite(r)


# ---------------------------------------------------------------- reward


def recon(text):
    return Sentence(text, EN)


def test_reward_single_batched_call_stride4():
    x = Sentence("src", EN)
    x_d = Sentence("direct", EN)
    scorer = TableScorer({}, default=0.5)
    report = reward(x, x_d, [recon("r0"), recon("r1"), recon("r2")], scorer)
    assert isinstance(report, ConsistencyReport)
    assert scorer.calls == 1
    assert scorer.pairs_seen == 3 * 4  # literal both orders + free both orders
    assert report.reward == pytest.approx(0.5)
    assert len(report.per_trajectory) == 3


def test_reward_without_direct_backtranslation_stride2():
    x = Sentence("src", EN)
    scorer = TableScorer({}, default=0.25)
    report = reward(x, None, [recon("r0"), recon("r1")], scorer)
    assert scorer.pairs_seen == 2 * 2
    assert report.free_mean == 0.0
    assert report.reward == pytest.approx(0.25)


def test_reward_routes_are_symmetrized_separately():
    x = Sentence("src", EN)
    x_d = Sentence("direct", EN)
    table = {
        ("r", "src"): 1.0,
        ("src", "r"): 0.0,  # literal = 0.5
        ("r", "direct"): 0.8,
        ("direct", "r"): 0.6,  # free = 0.7
    }
    report = reward(x, x_d, [recon("r")], TableScorer(table))
    ts = report.per_trajectory[0]
    assert ts == TrajectoryScore(0, 0.5, 0.7)
    assert ts.best == 0.7
    assert report.reward == pytest.approx(0.7)


def test_reward_language_checks():
    x = Sentence("src", EN)
    with pytest.raises(EmptyReconstructionSet):
        reward(x, None, [], TableScorer({}))
    with pytest.raises(ValueError):
        reward(x, None, [Sentence("r", DE)], TableScorer({}))
    with pytest.raises(ValueError):
        reward(x, Sentence("d", DE), [recon("r")], TableScorer({}))


def test_best_reconstruction_earliest_tie():
    x = Sentence("src", EN)
    scorer = TableScorer({}, default=0.4)  # every trajectory identical
    best, idx = best_reconstruction(x, None, [recon("a"), recon("b"), recon("c")], scorer)
    assert idx == 0 and best.text == "a"
