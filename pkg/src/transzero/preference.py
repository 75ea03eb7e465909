"""Turning finished search trees into preference training data.

The pipeline is: breadth-first serialization with duplicate candidates merged,
a recorded selection sort by utility whose executed swaps propose pairs, a
filter against the root's utility, and a two-way softmax turning utility gaps
into win rates.  The same module holds the squared-bracket preference loss
those win rates feed, in both of its sign conventions.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

from .backends import DEFAULT_TEMPLATE_ID
from .core import Direction, LanguageTag, Sentence, SppoSign
from .gmcts import SearchTree

__all__ = [
    "PreferencePair",
    "SerializedNode",
    "extract_pairs",
    "pairs_from_tree",
    "read_pairs_jsonl",
    "serialize_tree",
    "sppo_loss",
    "sppo_loss_grad",
    "win_rate",
    "write_pairs_jsonl",
]


@dataclass
class SerializedNode:
    """A tree node flattened for sorting; duplicates already merged."""

    id: int
    text: str
    lang: LanguageTag
    N: int
    Q: float
    lang_ok: bool
    utility: float = 0.0

    @property
    def is_root(self) -> bool:
        return self.id == 0


@dataclass(frozen=True)
class PreferencePair:
    source: Sentence
    direction: Direction
    chosen: str
    rejected: str
    win_rate: float
    instruction_id: str
    chosen_utility: float
    rejected_utility: float
    root_utility: float

    def __post_init__(self) -> None:
        if not (0.0 < self.win_rate < 1.0):
            raise ValueError(f"win_rate must lie strictly in (0, 1), got {self.win_rate}")

    def to_record(self) -> dict:
        return {
            "src": self.source.text,
            "src_lang": self.direction.src.code,
            "tgt_lang": self.direction.tgt.code,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "win_rate": self.win_rate,
            "instruction": self.instruction_id,
            "nu_chosen": self.chosen_utility,
            "nu_rejected": self.rejected_utility,
            "nu_root": self.root_utility,
        }

    @classmethod
    def from_record(cls, record: dict) -> "PreferencePair":
        direction = Direction(LanguageTag(record["src_lang"]), LanguageTag(record["tgt_lang"]))
        return cls(
            source=Sentence(record["src"], direction.src),
            direction=direction,
            chosen=record["chosen"],
            rejected=record["rejected"],
            win_rate=record["win_rate"],
            instruction_id=record["instruction"],
            chosen_utility=record["nu_chosen"],
            rejected_utility=record["nu_rejected"],
            root_utility=record["nu_root"],
        )


def serialize_tree(tree: SearchTree, detect_penalty: float = 0.5) -> list[SerializedNode]:
    """Level-order node list with duplicate (text, lang) candidates merged.

    A duplicate folds its visits and cumulative reward into the earliest
    occurrence; the merged node passes language detection only if every copy
    did.  Utilities are recomputed afterwards, and a candidate that failed
    detection has its utility multiplied by ``detect_penalty``.  The root is
    kept at position 0 untouched — it only supplies the filter threshold.
    """
    order: list[SerializedNode] = []
    index: dict[tuple[str, str], int] = {}
    queue = deque([0])
    while queue:
        node = tree.node(queue.popleft())
        queue.extend(node.children)
        key = (node.text, node.lang.code)
        if node.id != 0 and key in index:
            merged = order[index[key]]
            merged.N += node.N
            merged.Q += node.Q
            merged.lang_ok = merged.lang_ok and node.lang_ok
        else:
            serialized = SerializedNode(node.id, node.text, node.lang, node.N, node.Q, node.lang_ok)
            if node.id != 0:
                index[key] = len(order)
            order.append(serialized)
    for item in order:
        item.utility = item.Q / item.N if item.N > 0 else 0.0
        if not item.is_root and not item.lang_ok:
            item.utility *= detect_penalty
    return order


def win_rate(nu_i: float, nu_j: float) -> float:
    """Two-way softmax preference of utility ``nu_i`` over ``nu_j``."""
    return 1.0 / (1.0 + math.exp(nu_j - nu_i))


def extract_pairs(
    serialized: list[SerializedNode],
    nu_root: float | None = None,
    *,
    source: Sentence,
    direction: Direction,
    instruction_id: str = DEFAULT_TEMPLATE_ID,
) -> list[PreferencePair]:
    """Selection-sort the candidates into descending utility and emit a pair
    for every executed swap.

    The swapped-in maximum is the chosen side, the displaced occupant the
    rejected side.  A candidate pair survives only when the chosen utility
    strictly exceeds both the root's and the rejected's.  An already-sorted
    list therefore yields nothing.
    """
    if nu_root is None:
        if not serialized or not serialized[0].is_root:
            raise ValueError("serialized list must start with the root when nu_root is omitted")
        nu_root = serialized[0].utility
    work = [item for item in serialized if not item.is_root]
    pairs: list[PreferencePair] = []
    for i in range(len(work)):
        best = i
        for j in range(i + 1, len(work)):
            if work[j].utility > work[best].utility:
                best = j
        if best == i:
            continue
        displaced = work[i]
        work[i], work[best] = work[best], work[i]
        winner = work[i]
        if winner.utility > nu_root and winner.utility > displaced.utility:
            pairs.append(
                PreferencePair(
                    source=source,
                    direction=direction,
                    chosen=winner.text,
                    rejected=displaced.text,
                    win_rate=win_rate(winner.utility, displaced.utility),
                    instruction_id=instruction_id,
                    chosen_utility=winner.utility,
                    rejected_utility=displaced.utility,
                    root_utility=nu_root,
                )
            )
    return pairs


def pairs_from_tree(
    tree: SearchTree,
    detect_penalty: float = 0.5,
    instruction_id: str = DEFAULT_TEMPLATE_ID,
) -> list[PreferencePair]:
    serialized = serialize_tree(tree, detect_penalty)
    return extract_pairs(
        serialized,
        source=tree.source,
        direction=tree.direction,
        instruction_id=instruction_id,
    )


# ---------------------------------------------------------------- loss


def _brackets(
    logp_theta_w: float,
    logp_pre_w: float,
    logp_theta_l: float,
    logp_pre_l: float,
    p_w: float,
    eta: float,
) -> tuple[float, float]:
    bw = (logp_theta_w - logp_pre_w) - eta * (p_w - 0.5)
    bl = (logp_theta_l - logp_pre_l) - eta * ((1.0 - p_w) - 0.5)
    return bw, bl


def sppo_loss(
    logp_theta_w: float,
    logp_pre_w: float,
    logp_theta_l: float,
    logp_pre_l: float,
    p_w: float,
    eta: float,
    sign: SppoSign = SppoSign.SUM_OF_SQUARES,
) -> float:
    """Squared-bracket preference loss on log-probability ratios.

    Each bracket is the log-ratio of the current to the frozen pre-update
    policy minus ``eta`` times the centered win rate of that side.  The two
    squared brackets are added in ``sum_of_squares`` mode and subtracted in
    ``paper_difference`` mode.
    """
    if not (0.0 < p_w < 1.0):
        raise ValueError("p_w must lie strictly in (0, 1)")
    bw, bl = _brackets(logp_theta_w, logp_pre_w, logp_theta_l, logp_pre_l, p_w, eta)
    if sign is SppoSign.SUM_OF_SQUARES:
        return bw * bw + bl * bl
    return bw * bw - bl * bl


def sppo_loss_grad(
    logp_theta_w: float,
    logp_pre_w: float,
    logp_theta_l: float,
    logp_pre_l: float,
    p_w: float,
    eta: float,
    sign: SppoSign = SppoSign.SUM_OF_SQUARES,
) -> tuple[float, float]:
    """Partial derivatives of :func:`sppo_loss` with respect to the two
    current-policy log-probabilities (chosen, rejected)."""
    bw, bl = _brackets(logp_theta_w, logp_pre_w, logp_theta_l, logp_pre_l, p_w, eta)
    if sign is SppoSign.SUM_OF_SQUARES:
        return 2.0 * bw, 2.0 * bl
    return 2.0 * bw, -2.0 * bl


# ---------------------------------------------------------------- files


def write_pairs_jsonl(
    target: str | Path | TextIO,
    pairs: Iterable[PreferencePair],
    meta: dict | None = None,
) -> int:
    """Write pairs as JSON lines, preceded by one metadata record carrying
    recommended optimizer settings and provenance.  Returns the pair count."""
    header = {
        "meta": {
            "schema": "preference-pairs/v1",
            "recommended_learning_rate": 1e-6,
            "recommended_batch_pairs": 10000,
            **(meta or {}),
        }
    }
    count = 0

    def _emit(fh: TextIO) -> int:
        nonlocal count
        fh.write(json.dumps(header, ensure_ascii=False, sort_keys=True) + "\n")
        for pair in pairs:
            fh.write(json.dumps(pair.to_record(), ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
        return count

    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            return _emit(fh)
    return _emit(target)


def read_pairs_jsonl(path: str | Path) -> tuple[dict, list[PreferencePair]]:
    meta: dict = {}
    pairs: list[PreferencePair] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "meta" in record:
                meta = record["meta"]
            else:
                pairs.append(PreferencePair.from_record(record))
    return meta, pairs
