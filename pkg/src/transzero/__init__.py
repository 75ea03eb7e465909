"""Search-driven self-play for machine translation.

The package couples a genetic Monte-Carlo tree search over translation
candidates with round-trip consistency rewards, turns finished trees into
preference pairs with win rates, and can run whole self-play rounds against
either an HTTP model backend or a deterministic synthetic lab.
"""

from .backends import (
    BackendError,
    BackendSuite,
    BackendUnreachable,
    Exemplar,
    HttpBackend,
    ScorePair,
    TranslateRequest,
    UnsupportedDirection,
)
from .consistency import ConsistencyReport, consistency_S, reward
from .core import (
    ConfigError,
    Direction,
    GateDecision,
    LanguageTag,
    SearchConfig,
    Sentence,
    SppoSign,
    Trajectory,
    config_digest,
    load_config,
    save_config,
    validate_input,
    validate_trajectory,
)
from .gmcts import (
    Genesis,
    SearchNode,
    SearchTree,
    account_inference,
    best_candidate,
    run_search,
    score_hypothesis,
    tree_from_json,
    tree_to_json,
    ucb,
    ucb_score,
)
from .preference import (
    PreferencePair,
    extract_pairs,
    pairs_from_tree,
    serialize_tree,
    sppo_loss,
    sppo_loss_grad,
    win_rate,
    write_pairs_jsonl,
)
from .selfplay import SelfPlayRound, run_round, run_selfplay, train_round
from .synthlab import (
    DirectionProfile,
    ExactMatchScorer,
    RangeVoteDetector,
    SyntheticWorld,
    ToyTranslator,
    gt_translate,
    lab_suite,
    load_world,
    make_corpus,
    save_world,
    synth_score,
    toy_logprob,
    weak_pair_lab,
)

__version__ = "0.1.0"
