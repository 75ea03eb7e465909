import io
import math
import random

import pytest
from hypothesis import given, strategies as st

from transzero.core import Direction, LanguageTag, SearchConfig, Sentence, SppoSign
from transzero.gmcts import Genesis, SearchTree
from transzero.preference import (
    PreferencePair,
    SerializedNode,
    extract_pairs,
    pairs_from_tree,
    read_pairs_jsonl,
    serialize_tree,
    sppo_loss,
    sppo_loss_grad,
    win_rate,
    write_pairs_jsonl,
)

EN = LanguageTag("en")
DE = LanguageTag("de")
EN_DE = Direction(EN, DE)
SRC = Sentence("the source line", EN)


def make_pair(**overrides):
    kw = dict(
        source=SRC,
        direction=EN_DE,
        chosen="gut",
        rejected="schlecht",
        win_rate=0.75,
        instruction_id="direct/v1",
        chosen_utility=0.9,
        rejected_utility=0.4,
        root_utility=0.5,
    )
    kw.update(overrides)
    return PreferencePair(**kw)


# ---------------------------------------------------------------- win rate


@pytest.mark.parametrize(
    "nu_i,nu_j,expected",
    [
        (1.2290, 0.5595, 0.6614),
        (2.3230, 1.2290, 0.7491),
        (2.3230, 0.5801, 0.8511),
        (0.5626, 0.5275, 0.5088),
        (0.5657, 0.5626, 0.5008),
    ],
)
def test_win_rate_goldens(nu_i, nu_j, expected):
    assert win_rate(nu_i, nu_j) == pytest.approx(expected, abs=5e-4)


def test_win_rate_even_split_at_equal_utility():
    assert win_rate(0.37, 0.37) == 0.5


@given(
    st.floats(-20, 20, allow_nan=False),
    st.floats(-20, 20, allow_nan=False),
)
def test_win_rate_complement_and_bounds(a, b):
    p = win_rate(a, b)
    assert 0.0 < p < 1.0
    assert p + win_rate(b, a) == pytest.approx(1.0, abs=1e-12)
    if a - b > 1e-9:
        assert p > 0.5


# ---------------------------------------------------------------- serialization


def build_tree(entries, source=SRC, direction=EN_DE):
    """entries: (parent, text, N, Q, lang_ok) in creation order."""
    cfg = SearchConfig(languages=(EN, DE))
    tree = SearchTree(source, direction, cfg)
    tree.add_node(None, source.text, source.lang, Genesis.ROOT)
    for parent, text, n, q, ok in entries:
        node = tree.add_node(parent, text, direction.tgt, Genesis.INIT)
        node.N, node.Q, node.lang_ok = n, q, ok
    tree.root.N = sum(e[2] for e in entries if e[0] == 0)
    tree.root.Q = sum(e[3] for e in entries if e[0] == 0)
    return tree


def test_serialize_tree_merges_duplicates_breadth_first():
    tree = build_tree(
        [
            (0, "A", 2, 1.0, True),
            (0, "B", 1, 0.9, True),
            (0, "A", 3, 0.5, False),  # duplicate of node 1
            (1, "C", 1, 0.3, True),
        ]
    )
    out = serialize_tree(tree, detect_penalty=0.5)
    assert [n.id for n in out] == [0, 1, 2, 4]
    merged = out[1]
    assert (merged.N, merged.Q) == (5, 1.5)
    assert merged.lang_ok is False  # one failing copy poisons the merge
    assert merged.utility == pytest.approx((1.5 / 5) * 0.5)
    assert out[2].utility == pytest.approx(0.9)
    assert out[3].utility == pytest.approx(0.3)


def test_serialize_tree_root_is_untouched():
    tree = build_tree([(0, "A", 1, 0.8, True)])
    tree.root.lang_ok = False
    out = serialize_tree(tree, detect_penalty=0.25)
    assert out[0].is_root
    # the root never takes the detection penalty; it is only a threshold
    assert out[0].utility == pytest.approx(tree.root.Q / tree.root.N)


def test_serialize_tree_unvisited_node_scores_zero():
    tree = build_tree([(0, "A", 0, 0.0, True)])
    tree.root.N = 1
    out = serialize_tree(tree)
    assert out[1].utility == 0.0


def test_detect_penalty_halves_utility():
    tree = build_tree([(0, "A", 1, 0.8, False), (0, "B", 1, 0.5, True)])
    out = serialize_tree(tree, detect_penalty=0.5)
    assert out[1].utility == pytest.approx(0.4)
    assert out[2].utility == pytest.approx(0.5)


# ---------------------------------------------------------------- extraction


def candidates(utilities, root=0.5):
    """SerializedNode list: root first, then numbered candidates."""
    nodes = [SerializedNode(0, SRC.text, EN, 1, root, True, utility=root)]
    for i, u in enumerate(utilities, start=1):
        nodes.append(SerializedNode(i, f"cand-{i}", DE, 1, u, True, utility=u))
    return nodes


def test_extract_pairs_frozen_ten_candidate_oracle():
    # Hand-traced selection sort over these exact utilities; the six swaps
    # that survive the root filter, in emission order.
    nodes = candidates(
        [0.5595, 1.2290, 0.5801, 2.3230, 0.6117, 0.5275, 0.5626, 0.5657, 0.5601, 0.4676],
        root=0.5255,
    )
    pairs = extract_pairs(nodes, source=SRC, direction=EN_DE)
    got = [(p.chosen, p.rejected, p.win_rate) for p in pairs]
    expected = [
        ("cand-4", "cand-1", 0.8536),
        ("cand-5", "cand-3", 0.5079),
        ("cand-3", "cand-1", 0.5051),
        ("cand-8", "cand-1", 0.5015),
        ("cand-7", "cand-6", 0.5088),
        ("cand-9", "cand-6", 0.5081),
    ]
    assert len(got) == len(expected)
    for (c, r, w), (ec, er, ew) in zip(got, expected):
        assert (c, r) == (ec, er)
        assert w == pytest.approx(ew, abs=5e-4)
    for p in pairs:
        assert p.chosen_utility > p.root_utility
        assert p.chosen_utility > p.rejected_utility
        assert p.root_utility == 0.5255


def test_extract_pairs_sorted_input_is_silent():
    nodes = candidates([0.9, 0.8, 0.7, 0.6])
    assert extract_pairs(nodes, source=SRC, direction=EN_DE) == []


def test_extract_pairs_root_filter():
    # the swap happens, but the promoted candidate never beats the root
    nodes = candidates([0.2, 0.4], root=0.9)
    assert extract_pairs(nodes, source=SRC, direction=EN_DE) == []
    # explicit threshold overrides the serialized root
    loose = extract_pairs(nodes, nu_root=0.1, source=SRC, direction=EN_DE)
    assert [(p.chosen, p.rejected) for p in loose] == [("cand-2", "cand-1")]
    assert loose[0].root_utility == 0.1


def test_extract_pairs_requires_root_when_thresholdless():
    headless = candidates([0.2, 0.4])[1:]
    with pytest.raises(ValueError):
        extract_pairs(headless, source=SRC, direction=EN_DE)
    # fine once the threshold is explicit
    assert len(extract_pairs(headless, nu_root=0.0, source=SRC, direction=EN_DE)) == 1


def test_extract_pairs_equal_utilities_never_pair():
    nodes = candidates([0.6, 0.6, 0.6])
    assert extract_pairs(nodes, source=SRC, direction=EN_DE) == []


def test_pairs_from_tree_end_to_end():
    tree = build_tree(
        [
            (0, "A", 1, 0.4, True),
            (0, "B", 1, 0.9, True),
        ]
    )
    pairs = pairs_from_tree(tree)
    assert [(p.chosen, p.rejected) for p in pairs] == [("B", "A")]
    p = pairs[0]
    assert p.source == SRC and p.direction == EN_DE
    assert p.win_rate == pytest.approx(win_rate(0.9, 0.4))
    assert p.root_utility == pytest.approx(1.3 / 2)


def test_pairs_from_tree_penalty_flips_membership():
    # with full credit "A" pairs against "C"; flagging "A" halves it below
    # the root threshold (0.5) and its pair vanishes
    clean = pairs_from_tree(
        build_tree([(0, "C", 1, 0.0, True), (0, "A", 1, 0.9, True), (0, "B", 1, 0.6, True)])
    )
    assert [(p.chosen, p.rejected) for p in clean] == [("A", "C"), ("B", "C")]

    flagged_tree = build_tree(
        [(0, "C", 1, 0.0, True), (0, "A", 1, 0.9, False), (0, "B", 1, 0.6, True)]
    )
    flagged = pairs_from_tree(flagged_tree)
    assert [(p.chosen, p.rejected) for p in flagged] == [("B", "C")]

    # the flagged outcome is exactly what pre-halving A's reward predicts
    predicted_tree = build_tree(
        [(0, "C", 1, 0.0, True), (0, "A", 1, 0.45, True), (0, "B", 1, 0.6, True)]
    )
    predicted_tree.root.Q = flagged_tree.root.Q  # same filter threshold
    predicted = pairs_from_tree(predicted_tree)
    assert [(p.chosen, p.rejected, p.win_rate) for p in flagged] == [
        (p.chosen, p.rejected, p.win_rate) for p in predicted
    ]


# ---------------------------------------------------------------- loss


def test_sppo_loss_zero_at_identity_both_modes():
    for sign in SppoSign:
        assert sppo_loss(-1.0, -1.0, -2.0, -2.0, 0.5, eta=10.0, sign=sign) == 0.0


def test_sppo_loss_worked_example():
    # log-ratios +0.1 / -0.1, eta 10, p 0.6614: both brackets are +-1.514
    loss_sum = sppo_loss(-0.9, -1.0, -1.1, -1.0, 0.6614, eta=10.0)
    assert loss_sum == pytest.approx(4.5850, abs=1e-3)
    loss_diff = sppo_loss(-0.9, -1.0, -1.1, -1.0, 0.6614, eta=10.0, sign=SppoSign.PAPER_DIFFERENCE)
    assert loss_diff == pytest.approx(0.0, abs=1e-12)


def test_sppo_loss_validates_win_rate():
    for bad in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(ValueError):
            sppo_loss(-1.0, -1.0, -1.0, -1.0, bad, eta=1.0)


@given(
    st.floats(-5, 0),
    st.floats(-5, 0),
    st.floats(-5, 0),
    st.floats(-5, 0),
    st.floats(0.01, 0.99),
    st.floats(0.1, 20),
)
def test_sppo_sum_mode_is_nonnegative(tw, pw, tl, pl, p, eta):
    assert sppo_loss(tw, pw, tl, pl, p, eta) >= 0.0


def test_sppo_difference_mode_can_go_negative():
    # losing bracket dominates: reward-side ratio matches its target exactly
    eta, p = 2.0, 0.7
    bw_target = eta * (p - 0.5)
    loss = sppo_loss(bw_target, 0.0, 0.0, 0.0, p, eta, SppoSign.PAPER_DIFFERENCE)
    assert loss < 0.0


def test_sppo_grad_matches_finite_differences():
    rng = random.Random(0)
    h = 1e-6
    for _ in range(50):
        tw, pw, tl, pl = (rng.uniform(-5.0, 0.0) for _ in range(4))
        p = rng.uniform(0.05, 0.95)
        eta = rng.uniform(0.1, 20.0)
        for sign in SppoSign:
            gw, gl = sppo_loss_grad(tw, pw, tl, pl, p, eta, sign)
            fd_w = (
                sppo_loss(tw + h, pw, tl, pl, p, eta, sign)
                - sppo_loss(tw - h, pw, tl, pl, p, eta, sign)
            ) / (2 * h)
            fd_l = (
                sppo_loss(tw, pw, tl + h, pl, p, eta, sign)
                - sppo_loss(tw, pw, tl - h, pl, p, eta, sign)
            ) / (2 * h)
            assert abs(gw - fd_w) <= 1e-5 * max(1.0, abs(gw))
            assert abs(gl - fd_l) <= 1e-5 * max(1.0, abs(gl))


def test_sppo_grad_signs_differ_between_modes():
    args = (-0.5, -1.0, -2.0, -1.5, 0.7, 4.0)
    gw_sum, gl_sum = sppo_loss_grad(*args, SppoSign.SUM_OF_SQUARES)
    gw_diff, gl_diff = sppo_loss_grad(*args, SppoSign.PAPER_DIFFERENCE)
    assert gw_sum == gw_diff
    assert gl_sum == -gl_diff


# ---------------------------------------------------------------- files


def test_pair_record_roundtrip():
    pair = make_pair()
    again = PreferencePair.from_record(pair.to_record())
    assert again == pair
    assert set(pair.to_record()) == {
        "src",
        "src_lang",
        "tgt_lang",
        "chosen",
        "rejected",
        "win_rate",
        "instruction",
        "nu_chosen",
        "nu_rejected",
        "nu_root",
    }


@pytest.mark.parametrize("bad", [0.0, 1.0, 1.2, -0.1])
def test_pair_rejects_degenerate_win_rate(bad):
    with pytest.raises(ValueError):
        make_pair(win_rate=bad)


def test_write_read_jsonl_roundtrip(tmp_path):
    pairs = [make_pair(), make_pair(chosen="besser", win_rate=0.61)]
    path = tmp_path / "pairs.jsonl"
    n = write_pairs_jsonl(path, pairs, meta={"round": 3})
    assert n == 2
    meta, again = read_pairs_jsonl(path)
    assert again == pairs
    assert meta["schema"] == "preference-pairs/v1"
    assert meta["round"] == 3
    assert meta["recommended_learning_rate"] == pytest.approx(1e-6)
    assert meta["recommended_batch_pairs"] == 10000


def test_write_jsonl_to_stream_and_blank_line_tolerance(tmp_path):
    buf = io.StringIO()
    assert write_pairs_jsonl(buf, [make_pair()]) == 1
    lines = buf.getvalue().splitlines()
    assert len(lines) == 2 and '"meta"' in lines[0]
    padded = tmp_path / "padded.jsonl"
    padded.write_text(lines[0] + "\n\n" + lines[1] + "\n\n", encoding="utf-8")
    meta, pairs = read_pairs_jsonl(padded)
    assert len(pairs) == 1 and pairs[0] == make_pair()
