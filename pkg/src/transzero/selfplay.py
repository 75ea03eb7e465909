"""Round orchestration: many concurrent searches feeding one preference pool.

A round walks a tagged monolingual corpus, draws a seeded-random translation
direction per accepted line, runs the searches on a thread pool, and — only
after every search has finished — writes the extracted pairs as one JSONL
stream plus a machine-readable summary.  Per-input seeds are derived from
(global seed, round, input index), so results are identical no matter how
many workers run.

``train_round`` applies one epoch of minibatch gradient descent on the
squared-bracket preference loss to the in-process toy model; pools of pairs
destined for a real model are exported, not trained here.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import fsum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .backends import BackendSuite
from .core import Direction, SearchConfig, Sentence, SppoSign, validate_input
from .gmcts import InferenceCounters, SearchTree, run_search, tree_to_json
from .preference import PreferencePair, pairs_from_tree, read_pairs_jsonl, sppo_loss_grad, write_pairs_jsonl
from .synthlab import ToyTranslator, parse_tokens

log = logging.getLogger(__name__)

__all__ = [
    "SelfPlayRound",
    "run_round",
    "run_selfplay",
    "train_round",
]


@dataclass
class SelfPlayRound:
    """What one round consumed and produced."""

    round_index: int
    inputs: int = 0
    gate_failures: int = 0
    searches: int = 0
    search_failures: int = 0
    pairs: int = 0
    mean_root_utility: float | None = None
    translate_calls: int = 0
    score_calls: int = 0

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "inputs": self.inputs,
            "gate_failures": self.gate_failures,
            "searches": self.searches,
            "search_failures": self.search_failures,
            "pairs": self.pairs,
            "mean_root_utility": self.mean_root_utility,
            "translate_calls": self.translate_calls,
            "score_calls": self.score_calls,
        }


def _input_rng(cfg: SearchConfig, round_index: int, input_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, round_index, input_index]))


def _plan_input(
    cfg: SearchConfig, round_index: int, input_index: int, line: Sentence
) -> tuple[Direction, SearchConfig]:
    """Seeded direction draw plus a per-search config; independent of worker
    scheduling by construction."""
    rng = _input_rng(cfg, round_index, input_index)
    targets = [lang for lang in cfg.languages if lang != line.lang]
    direction = Direction(line.lang, targets[int(rng.integers(len(targets)))])
    search_seed = int(rng.integers(2**63))
    return direction, cfg.with_seed(search_seed)


def run_round(
    corpus: Sequence[Sentence],
    round_index: int,
    cfg: SearchConfig,
    backends: BackendSuite,
    sink: str | Path | None = None,
    workers: int = 4,
    meta: dict | None = None,
) -> tuple[SelfPlayRound, list[SearchTree | None], list[PreferencePair]]:
    """Run every accepted corpus line through a search and pool the pairs.

    Returns the report, the per-input trees (None where the gate rejected the
    line or the search crashed), and the pooled pairs in input order.  When
    ``sink`` is given the pairs are also written there as JSONL, after the
    round barrier.
    """
    report = SelfPlayRound(round_index)
    counters = InferenceCounters()

    tasks: list[tuple[int, Sentence, Direction, SearchConfig] | None] = []
    for idx, line in enumerate(corpus):
        report.inputs += 1
        decision = validate_input(line, cfg)
        if not decision.accepted:
            report.gate_failures += 1
            tasks.append(None)
            continue
        direction, search_cfg = _plan_input(cfg, round_index, idx, line)
        tasks.append((idx, line, direction, search_cfg))

    def _run(task) -> SearchTree | None:
        idx, line, direction, search_cfg = task
        try:
            return run_search(line, direction, search_cfg, backends)
        except Exception:
            log.exception("search %d of round %d failed", idx, round_index)
            return None

    trees: list[SearchTree | None] = [None] * len(tasks)
    live = [t for t in tasks if t is not None]
    if live:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            for task, tree in zip(live, pool.map(_run, live)):
                trees[task[0]] = tree

    pooled: list[PreferencePair] = []
    root_utilities: list[float] = []
    for tree in trees:
        if tree is None:
            continue
        report.searches += 1
        counters.merge(tree.counters)
        root = tree.root
        if root.N > 0:
            root_utilities.append(root.utility)
        pooled.extend(pairs_from_tree(tree, cfg.detect_penalty))
    report.search_failures = sum(
        1 for task, tree in zip(tasks, trees) if task is not None and tree is None
    )
    report.pairs = len(pooled)
    report.translate_calls = counters.translate_calls
    report.score_calls = counters.score_calls
    if root_utilities:
        report.mean_root_utility = fsum(root_utilities) / len(root_utilities)

    if sink is not None:
        header = {"round": round_index, "seed": cfg.seed, **(meta or {})}
        write_pairs_jsonl(sink, pooled, header)
    return report, trees, pooled


# ---------------------------------------------------------------- training


def _local_tokens(model: ToyTranslator, text: str, lang) -> np.ndarray | None:
    toks = parse_tokens(text)
    if toks is None:
        return None
    arr = np.asarray(toks, dtype=np.int64) - model.world.offset(lang)
    if arr.min() < 0 or arr.max() >= model.world.vocab_size:
        return None
    return arr


def _log_softmax(table: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = table.max(axis=1, keepdims=True)
    e = np.exp(table - m)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    return table - (m + np.log(z)), probs


def train_round(
    pairs: Iterable[PreferencePair] | str | Path,
    model: ToyTranslator,
    eta: float = 10.0,
    sign: SppoSign = SppoSign.SUM_OF_SQUARES,
    learning_rate: float = 1.0,
    batch_size: int = 64,
) -> ToyTranslator:
    """One epoch of minibatch SGD on the preference loss over toy tables.

    The pre-update policy is frozen once at entry; all brackets in the epoch
    are measured against it.  Pairs whose text does not tokenize against the
    model's world (or whose lengths disagree) are skipped.  The model is
    updated in place and returned.
    """
    if isinstance(pairs, (str, Path)):
        _, pairs = read_pairs_jsonl(pairs)
    pair_list = list(pairs)
    if not pair_list:
        return model
    pre = model.clone()
    used = 0
    skipped = 0

    for start in range(0, len(pair_list), batch_size):
        batch = pair_list[start : start + batch_size]
        grads: dict[tuple[str, str], np.ndarray] = {}
        cache: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}
        pre_cache: dict[tuple[str, str], np.ndarray] = {}
        contributing = 0
        for pair in batch:
            key = (pair.direction.src.code, pair.direction.tgt.code)
            if key not in model.tables:
                skipped += 1
                continue
            src = _local_tokens(model, pair.source.text, pair.direction.src)
            w = _local_tokens(model, pair.chosen, pair.direction.tgt)
            l = _local_tokens(model, pair.rejected, pair.direction.tgt)
            if src is None or w is None or l is None or not (len(src) == len(w) == len(l)):
                skipped += 1
                continue
            if key not in cache:
                cache[key] = _log_softmax(model.tables[key])
                pre_cache[key] = _log_softmax(pre.tables[key])[0]
            logtab, probs = cache[key]
            pre_logtab = pre_cache[key]
            lp_tw = float(logtab[src, w].sum())
            lp_tl = float(logtab[src, l].sum())
            lp_pw = float(pre_logtab[src, w].sum())
            lp_pl = float(pre_logtab[src, l].sum())
            g_w, g_l = sppo_loss_grad(lp_tw, lp_pw, lp_tl, lp_pl, pair.win_rate, eta, sign)
            grad = grads.setdefault(key, np.zeros_like(model.tables[key]))
            np.add.at(grad, src, -(g_w + g_l) * probs[src])
            np.add.at(grad, (src, w), g_w)
            np.add.at(grad, (src, l), g_l)
            used += 1
            contributing += 1
        if contributing:
            for key, grad in grads.items():
                model.tables[key] -= learning_rate * grad / contributing

    log.info("preference epoch: %d pairs used, %d skipped", used, skipped)
    return model


# ---------------------------------------------------------------- multi-round


def run_selfplay(
    corpus: Sequence[Sentence],
    cfg: SearchConfig,
    backends: BackendSuite,
    rounds: int,
    outdir: str | Path,
    workers: int = 4,
    train_model: ToyTranslator | None = None,
    learning_rate: float = 1.0,
    batch_size: int = 64,
    save_trees: bool = False,
    round_hook: Callable[[SelfPlayRound], None] | None = None,
    meta: dict | None = None,
) -> list[SelfPlayRound]:
    """Drive ``rounds`` alternations of search and (optionally) toy training.

    Writes, under ``outdir``: per-round pair JSONL and summary JSON, a
    cumulative ``rounds.csv``, and per-search trees when ``save_trees`` is
    set.  When ``train_model`` is given, each round's pooled pairs update it
    before the next round starts.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    reports: list[SelfPlayRound] = []
    for round_index in range(rounds):
        sink = out / f"round_{round_index:02d}.pairs.jsonl"
        report, trees, pooled = run_round(
            corpus, round_index, cfg, backends, sink=sink, workers=workers, meta=meta
        )
        (out / f"round_{round_index:02d}.summary.json").write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        if save_trees:
            tree_dir = out / "trees" / f"round_{round_index:02d}"
            tree_dir.mkdir(parents=True, exist_ok=True)
            for idx, tree in enumerate(trees):
                if tree is not None:
                    (tree_dir / f"tree_{idx:04d}.json").write_text(tree_to_json(tree), encoding="utf-8")
        if train_model is not None and pooled:
            train_round(
                pooled,
                train_model,
                eta=cfg.eta,
                sign=cfg.sppo_sign,
                learning_rate=learning_rate,
                batch_size=batch_size,
            )
        reports.append(report)
        if round_hook is not None:
            round_hook(report)

    with open(out / "rounds.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "round",
                "inputs",
                "gate_failures",
                "searches",
                "search_failures",
                "pairs",
                "mean_root_utility",
                "translate_calls",
                "score_calls",
            ]
        )
        for report in reports:
            writer.writerow(
                [
                    report.round_index,
                    report.inputs,
                    report.gate_failures,
                    report.searches,
                    report.search_failures,
                    report.pairs,
                    "" if report.mean_root_utility is None else f"{report.mean_root_utility:.6f}",
                    report.translate_calls,
                    report.score_calls,
                ]
            )
    return reports
