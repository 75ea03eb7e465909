"""Genetic Monte-Carlo tree search over translation candidates.

A search grows a tree of candidate translations of one source sentence.  Root
children come from a cheap sampled burst scored by single back-translation;
afterwards the loop cycles select / expand / simulate / backpropagate until the
node budget is spent.

Expansion is genetic: when the most promising node (highest UCB) differs from
the current best (highest utility), the two are *merged* by re-translating the
source with both candidates as few-shot exemplars; when they coincide, the
node is *mutated* by translating its best recorded reconstruction instead of
the original input.

Simulation rolls out a temporary width-``b`` depth-``n`` sub-tree through
random other languages and back-translates every leaf to the source language,
giving exactly ``b**n`` reconstructions whose round-trip consistency becomes
the node's reward.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .backends import BackendSuite, DEFAULT_TEMPLATE_ID, Exemplar, ScorePair, TranslateRequest
from .consistency import ConsistencyReport, TrajectoryScore, consistency_S, summarize_scores
from .core import ConfigError, Direction, LanguageTag, SearchConfig, Sentence, Trajectory, config_digest

__all__ = [
    "BudgetExhausted",
    "Genesis",
    "InferenceCounters",
    "SearchNode",
    "SearchTree",
    "SimulationReport",
    "account_inference",
    "backpropagate",
    "best_candidate",
    "expand",
    "initialize",
    "run_search",
    "score_hypothesis",
    "select",
    "simulate",
    "tree_from_json",
    "tree_to_dot",
    "tree_to_json",
    "ucb",
    "ucb_score",
]

Observer = Callable[[dict], None]


class BudgetExhausted(RuntimeError):
    """Raised when expand is called after the node budget is spent."""


class Genesis(str, Enum):
    ROOT = "root"
    INIT = "init"
    MERGE = "merge"
    MUTATE = "mutate"


@dataclass
class InferenceCounters:
    """Backend work accounting.

    ``translate_calls`` counts generated candidates (a burst of k candidates
    in one request counts k) and ``score_calls`` counts scored pairs; both are
    units of model work rather than HTTP round trips.  ``breakdown`` splits
    translate work by phase; ``detect_calls`` is kept in memory only.  The
    serialized form carries exactly the two headline counters.
    """

    translate_calls: int = 0
    score_calls: int = 0
    detect_calls: int = 0
    breakdown: dict = field(default_factory=dict)

    def add_translate(self, n: int, phase: str) -> None:
        self.translate_calls += n
        self.breakdown[phase] = self.breakdown.get(phase, 0) + n

    def add_score(self, n: int) -> None:
        self.score_calls += n

    def add_detect(self, n: int) -> None:
        self.detect_calls += n

    def bump(self, key: str, n: int = 1) -> None:
        self.breakdown[key] = self.breakdown.get(key, 0) + n

    def merge(self, other: "InferenceCounters") -> None:
        self.translate_calls += other.translate_calls
        self.score_calls += other.score_calls
        self.detect_calls += other.detect_calls
        for key, value in other.breakdown.items():
            self.breakdown[key] = self.breakdown.get(key, 0) + value

    def to_dict(self) -> dict:
        return {"translate_calls": self.translate_calls, "score_calls": self.score_calls}


@dataclass
class SearchNode:
    """One candidate in the tree.  The root holds the source sentence; every
    other node holds a target-language candidate."""

    id: int
    parent: int | None
    text: str
    lang: LanguageTag
    genesis: Genesis
    N: int = 0
    Q: float = 0.0
    lang_ok: bool = False
    x_d: Sentence | None = None
    x_prime: Sentence | None = None
    children: list[int] = field(default_factory=list)
    # Input actually fed to the generator for this node (source sentence for
    # init/merge, the parent's reconstruction for mutate).  In-memory only.
    gen_src: Sentence | None = None

    @property
    def utility(self) -> float:
        if self.N <= 0:
            raise ValueError(f"utility of unvisited node {self.id}")
        return self.Q / self.N

    @property
    def failed(self) -> bool:
        return self.text == ""

    def sentence(self) -> Sentence:
        return Sentence(self.text, self.lang)


@dataclass
class SimulationReport:
    origin: int
    trajectories: list[Trajectory]
    reconstructions: list[Sentence | None]
    consistency: ConsistencyReport
    inference_calls: int


class SearchTree:
    def __init__(
        self,
        source: Sentence,
        direction: Direction,
        cfg: SearchConfig | None,
        digest: str | None = None,
    ) -> None:
        if cfg is not None and source.lang != direction.src:
            raise ConfigError(f"source sentence is {source.lang}, direction starts at {direction.src}")
        self.source = source
        self.direction = direction
        self.cfg = cfg
        self.digest = digest if digest is not None else (config_digest(cfg) if cfg else "")
        self.nodes: list[SearchNode] = []
        self.rng = random.Random(cfg.seed if cfg else 0)
        self.counters = InferenceCounters()
        self.expansions: list[dict] = []

    # -- structure ------------------------------------------------------

    @property
    def root(self) -> SearchNode:
        return self.nodes[0]

    def node(self, node_id: int) -> SearchNode:
        return self.nodes[node_id]

    def add_node(
        self,
        parent: int | None,
        text: str,
        lang: LanguageTag,
        genesis: Genesis,
        gen_src: Sentence | None = None,
    ) -> SearchNode:
        node = SearchNode(len(self.nodes), parent, text, lang, genesis, gen_src=gen_src)
        self.nodes.append(node)
        if parent is not None:
            self.nodes[parent].children.append(node.id)
        return node

    def non_root(self) -> list[SearchNode]:
        return self.nodes[1:]

    def path_to_root(self, node_id: int) -> list[SearchNode]:
        """Node and its ancestors, root last."""
        out = []
        current: int | None = node_id
        while current is not None:
            node = self.nodes[current]
            out.append(node)
            current = node.parent
        return out

    def path_trajectory(self, node_id: int) -> Trajectory:
        """The generation chain from the source to a node as a language-
        alternating sequence: each step inserts the input actually translated
        (source for init/merge, a reconstruction for mutate) before the
        produced candidate.  For trees restored from JSON the inputs are
        approximated from recorded fields."""
        chain = list(reversed(self.path_to_root(node_id)))
        steps: list[Sentence] = [self.source]
        for node in chain[1:]:
            if node.failed:
                raise ValueError(f"node {node.id} holds no text")
            gen = node.gen_src
            if gen is None:
                if node.genesis is Genesis.MUTATE and node.parent is not None:
                    gen = self.nodes[node.parent].x_prime
                if gen is None:
                    gen = self.source
            if gen.text != steps[-1].text or gen.lang != steps[-1].lang:
                steps.append(gen)
            steps.append(node.sentence())
        return Trajectory(tuple(steps))


# ---------------------------------------------------------------- scores


def ucb_score(nu: float, parent_visits: int, child_visits: int) -> float:
    """Utility plus exploration bonus: nu + 2*sqrt(ln(parent)/(1+child))."""
    if parent_visits < 1:
        raise ValueError("parent_visits must be >= 1")
    return nu + 2.0 * math.sqrt(math.log(parent_visits) / (1.0 + child_visits))


def ucb(node: SearchNode, parent_visits: int) -> float:
    if node.N <= 0:
        raise ValueError(f"ucb of unvisited node {node.id}")
    return ucb_score(node.Q / node.N, parent_visits, node.N)


def _argmax_node(nodes: list[SearchNode], key: Callable[[SearchNode], float]) -> SearchNode:
    """Strict-maximum scan; earlier (smaller-id) node wins ties."""
    best = nodes[0]
    best_key = key(best)
    for node in nodes[1:]:
        k = key(node)
        if k > best_key:
            best, best_key = node, k
    return best


# ---------------------------------------------------------------- phases


def _request_seed(tree: SearchTree) -> int:
    return tree.rng.getrandbits(63)


def _backtranslate(
    tree: SearchTree,
    text: str,
    direction: Direction,
    backends: BackendSuite,
    temperature: float,
) -> Sentence | None:
    """Single back-translation; None on backend failure or empty output.

    Direct back-translations (x_d) are sampled at the search temperature so
    their noise is a fresh draw rather than a fixed function of the candidate;
    leaf reconstructions pass 0 for deterministic decoding.
    """
    cfg = tree.cfg
    req = TranslateRequest(
        text=text,
        direction=direction,
        num_candidates=1,
        temperature=temperature,
        top_k=cfg.top_k,
        instruction=DEFAULT_TEMPLATE_ID,
        seed=_request_seed(tree),
    )
    try:
        candidates = backends.translator.translate(req)
    except Exception:
        return None
    tree.counters.add_translate(1, "backtranslation")
    if not candidates or not candidates[0]:
        return None
    return Sentence(candidates[0], direction.tgt)


def _detect_ok(tree: SearchTree, texts: list[str], expected: LanguageTag, backends: BackendSuite) -> list[bool]:
    try:
        langs = backends.detector.detect(texts)
    except Exception:
        return [False] * len(texts)
    tree.counters.add_detect(len(texts))
    return [lang == expected.code for lang in langs]


def initialize(
    x: Sentence, direction: Direction, cfg: SearchConfig, backends: BackendSuite
) -> SearchTree:
    """Root plus up to ``width_b`` sampled children, each scored by the
    consistency of a single sampled back-translation (fast init).  Duplicate
    samples collapse, so fewer than ``width_b`` children are possible."""
    tree = SearchTree(x, direction, cfg)
    root = tree.add_node(None, x.text, x.lang, Genesis.ROOT)
    root.lang_ok = True

    req = TranslateRequest(
        text=x.text,
        direction=direction,
        num_candidates=cfg.width_b,
        temperature=cfg.temperature,
        top_k=cfg.top_k,
        instruction=DEFAULT_TEMPLATE_ID,
        seed=_request_seed(tree),
    )
    try:
        raw = backends.translator.translate(req)
        tree.counters.add_translate(cfg.width_b, "init")
    except Exception:
        raw = []

    seen: set[str] = set()
    candidates = []
    for text in raw:
        if text and text not in seen:
            seen.add(text)
            candidates.append(text)

    if not candidates:
        # Total generation failure: a single dead child keeps the tree shaped.
        node = tree.add_node(root.id, "", direction.tgt, Genesis.INIT, gen_src=x)
        backpropagate(tree, node, 0.0)
        return tree

    children = [tree.add_node(root.id, text, direction.tgt, Genesis.INIT, gen_src=x) for text in candidates]
    oks = _detect_ok(tree, [c.text for c in children], direction.tgt, backends)
    for child, ok in zip(children, oks):
        child.lang_ok = ok
        child.x_d = _backtranslate(tree, child.text, direction.reversed(), backends, cfg.temperature)
        child.x_prime = child.x_d
        if child.x_d is None:
            score = 0.0
        else:
            score = consistency_S(x, child.x_d, backends.scorer)
            tree.counters.add_score(2)
        backpropagate(tree, child, score)
    return tree


def select(tree: SearchTree) -> SearchNode:
    """Non-root node with the highest UCB; ties break toward the smallest id."""
    pool = tree.non_root()
    if not pool:
        raise ValueError("select on a tree without candidates")
    return _argmax_node(pool, lambda n: ucb(n, tree.nodes[n.parent].N))


def expand(tree: SearchTree, selected: SearchNode, backends: BackendSuite) -> SearchNode:
    """Grow one child of ``selected`` by merge or mutate.

    Merge fires when ``selected`` (the UCB choice) is not the highest-utility
    node: the source is re-translated with the utility leader and ``selected``
    as exemplars, in that order.  Otherwise the node is mutated by translating
    its best recorded reconstruction.  Generation failures yield a dead child
    that will be scored 0.
    """
    cfg = tree.cfg
    if len(tree.expansions) >= cfg.node_budget:
        raise BudgetExhausted(f"node budget {cfg.node_budget} spent")
    y_nu = _argmax_node(tree.non_root(), lambda n: n.utility)
    mode = Genesis.MERGE if y_nu.id != selected.id else Genesis.MUTATE

    text = ""
    gen_src: Sentence | None = None
    if mode is Genesis.MERGE:
        gen_src = tree.source
        req = TranslateRequest(
            text=tree.source.text,
            direction=tree.direction,
            exemplars=(
                Exemplar(tree.source.text, y_nu.text),
                Exemplar(tree.source.text, selected.text),
            ),
            num_candidates=1,
            temperature=cfg.temperature,
            top_k=cfg.top_k,
            instruction=DEFAULT_TEMPLATE_ID,
            seed=_request_seed(tree),
        )
    elif selected.x_prime is not None:
        gen_src = selected.x_prime
        req = TranslateRequest(
            text=selected.x_prime.text,
            direction=Direction(selected.x_prime.lang, tree.direction.tgt)
            if selected.x_prime.lang != tree.direction.tgt
            else tree.direction,
            num_candidates=1,
            temperature=cfg.temperature,
            top_k=cfg.top_k,
            instruction=DEFAULT_TEMPLATE_ID,
            seed=_request_seed(tree),
        )
    else:
        req = None

    if req is not None:
        try:
            out = backends.translator.translate(req)
            tree.counters.add_translate(1, "expansion")
            if out and out[0]:
                text = out[0]
        except Exception:
            text = ""

    node = tree.add_node(selected.id, text, tree.direction.tgt, mode, gen_src=gen_src)
    tree.counters.bump("merges" if mode is Genesis.MERGE else "mutates")
    if not node.failed:
        node.lang_ok = _detect_ok(tree, [node.text], tree.direction.tgt, backends)[0]
        node.x_d = _backtranslate(tree, node.text, tree.direction.reversed(), backends, cfg.temperature)
        node.x_prime = node.x_d
    tree.expansions.append(
        {
            "selected": selected.id,
            "argmax_utility": y_nu.id,
            "mode": mode.value,
            "new": node.id,
        }
    )
    return node


@dataclass
class _Branch:
    path: list[Sentence]  # from source through origin down the rollout
    alive: bool


def simulate(tree: SearchTree, node: SearchNode, backends: BackendSuite) -> SimulationReport:
    """Width-``b`` depth-``n`` rollout from a node.

    Every step translates the branch tip into a language drawn uniformly from
    the configured set minus the tip's own language.  Leaves are greedily
    back-translated to the source language (a leaf already in the source
    language stands as its own reconstruction).  Failed branches keep their
    slot with score 0 so the reconstruction count stays ``b**n``.
    """
    cfg = tree.cfg
    x = tree.source
    if node.failed:
        raise ValueError("cannot simulate a failed node")
    calls_before = tree.counters.translate_calls

    branches = [_Branch([x, node.sentence()], True)]
    for _ in range(cfg.sim_depth_n):
        grown: list[_Branch] = []
        for branch in branches:
            for _j in range(cfg.width_b):
                if not branch.alive:
                    grown.append(_Branch(list(branch.path), False))
                    continue
                tip = branch.path[-1]
                langs = [l for l in cfg.languages if l != tip.lang]
                target = tree.rng.choice(langs)
                req = TranslateRequest(
                    text=tip.text,
                    direction=Direction(tip.lang, target),
                    num_candidates=1,
                    temperature=cfg.temperature,
                    top_k=cfg.top_k,
                    instruction=DEFAULT_TEMPLATE_ID,
                    seed=_request_seed(tree),
                )
                try:
                    out = backends.translator.translate(req)
                    tree.counters.add_translate(1, "simulation")
                except Exception:
                    out = []
                if out and out[0]:
                    grown.append(_Branch(branch.path + [Sentence(out[0], target)], True))
                else:
                    grown.append(_Branch(list(branch.path), False))
        branches = grown

    recons: list[Sentence | None] = []
    for branch in branches:
        if not branch.alive:
            recons.append(None)
            continue
        leaf = branch.path[-1]
        if leaf.lang == x.lang:
            recons.append(leaf)
            continue
        recon = _backtranslate(tree, leaf.text, Direction(leaf.lang, x.lang), backends, 0.0)
        if recon is not None:
            branch.path.append(recon)
        recons.append(recon)

    x_d = node.x_d
    pairs: list[ScorePair] = []
    valid = [i for i, r in enumerate(recons) if r is not None]
    for i in valid:
        r = recons[i]
        pairs.append(ScorePair(r.text, x.text, x.lang))
        pairs.append(ScorePair(x.text, r.text, x.lang))
        if x_d is not None:
            pairs.append(ScorePair(r.text, x_d.text, x.lang))
            pairs.append(ScorePair(x_d.text, r.text, x.lang))
    scores: list[float] = []
    if pairs:
        scores = backends.scorer.score_pairs(pairs)
        tree.counters.add_score(len(pairs))

    stride = 4 if x_d is not None else 2
    literal = [0.0] * len(recons)
    free: list[float] | None = [0.0] * len(recons) if x_d is not None else None
    for slot, i in enumerate(valid):
        base = slot * stride
        literal[i] = (scores[base] + scores[base + 1]) / 2.0
        if free is not None:
            free[i] = (scores[base + 2] + scores[base + 3]) / 2.0

    reward_value, literal_mean, free_mean, best_index = summarize_scores(literal, free)
    report = ConsistencyReport(
        reward=reward_value,
        literal_mean=literal_mean,
        free_mean=free_mean,
        best_index=best_index,
        per_trajectory=tuple(
            TrajectoryScore(i, literal[i], free[i] if free is not None else 0.0)
            for i in range(len(recons))
        ),
    )

    best_valid = None
    best_key = -1.0
    for i in valid:
        k = max(literal[i], free[i] if free is not None else literal[i])
        if k > best_key:
            best_valid, best_key = i, k
    if best_valid is not None:
        node.x_prime = recons[best_valid]

    trajectories = [Trajectory(tuple(branch.path)) for branch in branches]
    return SimulationReport(
        origin=node.id,
        trajectories=trajectories,
        reconstructions=recons,
        consistency=report,
        inference_calls=tree.counters.translate_calls - calls_before,
    )


def backpropagate(tree: SearchTree, node: SearchNode, reward: float) -> SearchTree:
    for n in tree.path_to_root(node.id):
        n.N += 1
        n.Q += reward
    return tree


def run_search(
    x: Sentence,
    direction: Direction,
    cfg: SearchConfig,
    backends: BackendSuite,
    observer: Observer | None = None,
) -> SearchTree:
    """Full search: fast init, then budgeted select/expand/simulate/backprop
    cycles.  Deterministic for a fixed seed and deterministic backends."""
    tree = initialize(x, direction, cfg, backends)
    if all(n.failed for n in tree.non_root()):
        return tree
    for _ in range(cfg.node_budget):
        selected = select(tree)
        node = expand(tree, selected, backends)
        if observer is not None:
            observer(dict(tree.expansions[-1]))
        if node.failed:
            reward = 0.0
        else:
            reward = simulate(tree, node, backends).consistency.reward
        backpropagate(tree, node, reward)
    return tree


def score_hypothesis(
    x: Sentence,
    hypothesis: str,
    direction: Direction,
    cfg: SearchConfig,
    backends: BackendSuite,
) -> tuple[SearchTree, SimulationReport]:
    """Quality-estimate one existing translation: a single simulation on a
    minimal root+candidate tree, returning both for inspection."""
    tree = SearchTree(x, direction, cfg)
    root = tree.add_node(None, x.text, x.lang, Genesis.ROOT)
    root.lang_ok = True
    node = tree.add_node(root.id, hypothesis, direction.tgt, Genesis.INIT, gen_src=x)
    node.lang_ok = _detect_ok(tree, [hypothesis], direction.tgt, backends)[0]
    node.x_d = _backtranslate(tree, hypothesis, direction.reversed(), backends, cfg.temperature)
    node.x_prime = node.x_d
    report = simulate(tree, node, backends)
    backpropagate(tree, node, report.consistency.reward)
    return tree, report


def best_candidate(tree: SearchTree) -> SearchNode:
    """Highest-utility non-root node; the search's final translation."""
    pool = [n for n in tree.non_root() if n.N > 0 and not n.failed]
    if not pool:
        raise ValueError("tree holds no scored candidates")
    return _argmax_node(pool, lambda n: n.utility)


def account_inference(tree: SearchTree) -> dict:
    """Translate-call decomposition by phase plus genetic-operator tallies.

    Merge requests carry the instruction plus two exemplar blocks and mutate
    re-reads a reconstruction, so their per-call context cost exceeds a plain
    request; the tallies let a cost model weigh them separately.
    """
    b = tree.counters.breakdown
    return {
        "translate_calls": tree.counters.translate_calls,
        "score_calls": tree.counters.score_calls,
        "init": b.get("init", 0),
        "expansion": b.get("expansion", 0),
        "simulation": b.get("simulation", 0),
        "backtranslation": b.get("backtranslation", 0),
        "merges": b.get("merges", 0),
        "mutates": b.get("mutates", 0),
    }


# ---------------------------------------------------------------- export


def _sentence_payload(s: Sentence | None) -> dict | None:
    if s is None:
        return None
    return {"text": s.text, "lang": s.lang.code}


def tree_to_payload(tree: SearchTree) -> dict:
    return {
        "source": {"text": tree.source.text, "lang": tree.source.lang.code},
        "direction": {"src": tree.direction.src.code, "tgt": tree.direction.tgt.code},
        "config_digest": tree.digest,
        "nodes": [
            {
                "id": n.id,
                "parent": n.parent,
                "text": n.text,
                "lang": n.lang.code,
                "N": n.N,
                "Q": n.Q,
                "genesis": n.genesis.value,
                "lang_ok": n.lang_ok,
                "x_d": _sentence_payload(n.x_d),
                "x_prime": _sentence_payload(n.x_prime),
            }
            for n in tree.nodes
        ],
        "counters": tree.counters.to_dict(),
    }


def tree_to_json(tree: SearchTree) -> str:
    return json.dumps(tree_to_payload(tree), ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def _sentence_from_payload(data: dict | None) -> Sentence | None:
    if data is None:
        return None
    return Sentence(data["text"], LanguageTag(data["lang"]))


def tree_from_json(text: str) -> SearchTree:
    data = json.loads(text)
    source = Sentence(data["source"]["text"], LanguageTag(data["source"]["lang"]))
    direction = Direction(LanguageTag(data["direction"]["src"]), LanguageTag(data["direction"]["tgt"]))
    tree = SearchTree(source, direction, None, digest=data.get("config_digest", ""))
    for item in sorted(data["nodes"], key=lambda d: d["id"]):
        node = SearchNode(
            id=item["id"],
            parent=item["parent"],
            text=item["text"],
            lang=LanguageTag(item["lang"]),
            genesis=Genesis(item["genesis"]),
            N=item["N"],
            Q=item["Q"],
            lang_ok=item["lang_ok"],
            x_d=_sentence_from_payload(item.get("x_d")),
            x_prime=_sentence_from_payload(item.get("x_prime")),
        )
        if node.id != len(tree.nodes):
            raise ValueError("node ids must be dense and ordered")
        tree.nodes.append(node)
        if node.parent is not None:
            tree.nodes[node.parent].children.append(node.id)
    counters = data.get("counters", {})
    tree.counters.translate_calls = counters.get("translate_calls", 0)
    tree.counters.score_calls = counters.get("score_calls", 0)
    return tree


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def tree_to_dot(tree: SearchTree) -> str:
    """Graphviz view: one box per node with utility and visits."""
    lines = ["digraph search {", "  node [shape=box, fontname=\"monospace\"];"]
    for n in tree.nodes:
        if n.id == 0:
            label = f"root [{n.lang}]\\n{_dot_escape(n.text)}\\nN={n.N}"
        else:
            nu = f"{n.Q / n.N:.4f}" if n.N else "-"
            flag = "" if n.lang_ok else " !lang"
            label = f"#{n.id} {n.genesis.value}{flag}\\n{_dot_escape(n.text)}\\nnu={nu} N={n.N}"
        lines.append(f'  n{n.id} [label="{label}"];')
    for n in tree.nodes:
        if n.parent is not None:
            lines.append(f"  n{n.parent} -> n{n.id};")
    lines.append("}")
    return "\n".join(lines) + "\n"
