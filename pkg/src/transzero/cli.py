"""Operator commands.

Every command resolves its configuration the same way — flags override the
config file, the config file overrides defaults — and writes the effective
config next to its outputs so any run can be replayed.  Backends come either
from a synthetic lab world (``--lab world.json``) or from an HTTP service
(``--backend`` or the TRANSZERO_BACKEND_URL environment variable).

Exit codes: 0 success, 1 configuration or usage error, 2 input rejected by
the admission gate, 3 backend unreachable or direction unsupported.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backends import BackendError, BackendUnreachable, HttpBackend, UnsupportedDirection
from .core import (
    ConfigError,
    Direction,
    LanguageTag,
    SearchConfig,
    Sentence,
    SppoSign,
    config_digest,
    save_config,
    validate_input,
)
from .gmcts import (
    best_candidate,
    run_search,
    score_hypothesis,
    tree_from_json,
    tree_to_dot,
    tree_to_json,
)
from .preference import pairs_from_tree, serialize_tree, write_pairs_jsonl
from .selfplay import run_selfplay
from .synthlab import (
    SyntheticWorld,
    ToyTranslator,
    lab_suite,
    load_world,
    make_corpus,
    save_world,
    weak_pair_profiles,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_GATE = 2
EXIT_BACKEND = 3

# Lab sentences are short token strings; the character gate for real text
# would reject them all.
_LAB_GATE = [1, 1_000_000]


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this project reserves 2 for gate
    rejections, so usage errors are remapped to 1."""

    def error(self, message: str) -> None:  # noqa: A003 - argparse API
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class _GateRejected(Exception):
    def __init__(self, reason: str | None) -> None:
        super().__init__(reason or "rejected")
        self.reason = reason


def _add_backend_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lab", metavar="WORLD_JSON", help="use a synthetic lab world file as backend")
    p.add_argument("--backend", metavar="URL", help="backend service URL (default: $TRANSZERO_BACKEND_URL)")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="CONFIG_JSON", help="search configuration file")
    p.add_argument("--languages", help="comma-separated language codes")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--width", type=int, default=None, help="search/rollout width b")
    p.add_argument("--depth", type=int, default=None, help="rollout depth n")
    p.add_argument("--budget", type=int, default=None, help="expansion budget per search")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--eta", type=float, default=None, help="preference loss scale")
    p.add_argument("--penalty", type=float, default=None, help="detection penalty factor")
    p.add_argument(
        "--sppo-sign",
        choices=[s.value for s in SppoSign],
        default=None,
        help="squared-bracket combination mode",
    )
    p.add_argument("--gate", help="admission length bounds as LO,HI (characters)")


def _resolve_backends(args) -> tuple:
    """Returns (suite, world, translator); world/translator are None for HTTP."""
    if args.lab:
        world, translator = load_world(args.lab)
        return lab_suite(world, translator), world, translator
    backend = HttpBackend(args.backend)
    return backend.suite(), None, None


def _effective_config(args, world: SyntheticWorld | None) -> SearchConfig:
    data: dict = {}
    if world is not None:
        data["languages"] = [str(l) for l in world.languages]
        data["length_gate"] = list(_LAB_GATE)
    if args.config:
        data.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    if args.languages:
        data["languages"] = [c.strip() for c in args.languages.split(",") if c.strip()]
    for flag, key in [
        ("seed", "seed"),
        ("width", "width_b"),
        ("depth", "sim_depth_n"),
        ("budget", "node_budget"),
        ("temperature", "temperature"),
        ("top_k", "top_k"),
        ("eta", "eta"),
        ("penalty", "detect_penalty"),
        ("sppo_sign", "sppo_sign"),
    ]:
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if args.gate:
        parts = args.gate.split(",")
        if len(parts) != 2:
            raise ConfigError("--gate expects LO,HI")
        data["length_gate"] = [int(parts[0]), int(parts[1])]
    if "languages" not in data:
        raise ConfigError("no languages configured; pass --languages, --config, or --lab")
    return SearchConfig.from_dict(data)


def _write_summary(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands


def cmd_search(args) -> int:
    suite, world, _ = _resolve_backends(args)
    cfg = _effective_config(args, world)
    src, tgt = LanguageTag(args.src), LanguageTag(args.tgt)
    if tgt not in cfg.languages:
        raise ConfigError(f"target language {tgt} not in configured set")
    x = Sentence(args.text, src)
    decision = validate_input(x, cfg)
    if not decision.accepted:
        raise _GateRejected(decision.reason)

    tree = run_search(x, Direction(src, tgt), cfg, suite)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(tree_to_json(tree), encoding="utf-8")
    stem = out.with_suffix("")
    save_config(cfg, Path(f"{stem}.config.json"))
    try:
        best = best_candidate(tree)
    except ValueError as exc:
        # every generation call failed; the tree file is left for inspection
        raise BackendError(f"no usable candidates ({exc})") from exc
    _write_summary(
        Path(f"{stem}.summary.json"),
        {
            "config_digest": config_digest(cfg),
            "seed": cfg.seed,
            "tree": str(out),
            "nodes": len(tree.nodes),
            "best_id": best.id,
            "best_utility": best.utility,
            "counters": tree.counters.to_dict(),
        },
    )
    if args.dot:
        Path(f"{stem}.dot").write_text(tree_to_dot(tree), encoding="utf-8")
    print(best.text)
    return EXIT_OK


def _read_corpus(path: str) -> list[Sentence]:
    lines: list[Sentence] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            raw = raw.rstrip("\n")
            if not raw.strip():
                continue
            if "\t" not in raw:
                raise ConfigError(f"{path}:{lineno}: expected 'lang<TAB>text'")
            lang, text = raw.split("\t", 1)
            lines.append(Sentence(text, LanguageTag(lang)))
    return lines


def cmd_selfplay(args) -> int:
    suite, world, translator = _resolve_backends(args)
    cfg = _effective_config(args, world)
    if args.train and translator is None:
        raise ConfigError("--train requires --lab (only the toy model trains in-process)")
    corpus = _read_corpus(args.corpus)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, outdir / "config.json")
    reports = run_selfplay(
        corpus,
        cfg,
        suite,
        rounds=args.rounds,
        outdir=outdir,
        workers=args.workers,
        train_model=translator if args.train else None,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        save_trees=args.save_trees,
        meta={"config_digest": config_digest(cfg)},
    )
    _write_summary(
        outdir / "selfplay.json",
        {
            "config_digest": config_digest(cfg),
            "seed": cfg.seed,
            "rounds": [r.to_dict() for r in reports],
        },
    )
    print(str(outdir / "selfplay.json"))
    return EXIT_OK


def cmd_extract(args) -> int:
    tree = tree_from_json(Path(args.tree).read_text(encoding="utf-8"))
    pairs = pairs_from_tree(tree, detect_penalty=args.penalty)
    out = args.out or f"{Path(args.tree).with_suffix('')}.pairs.jsonl"
    count = write_pairs_jsonl(out, pairs, {"config_digest": tree.digest})
    print(f"{count} pairs -> {out}")
    return EXIT_OK


def cmd_score(args) -> int:
    suite, world, _ = _resolve_backends(args)
    cfg = _effective_config(args, world)
    src, tgt = LanguageTag(args.src_lang), LanguageTag(args.tgt_lang)
    x = Sentence(args.text, src)
    tree, report = score_hypothesis(x, args.hyp, Direction(src, tgt), cfg, suite)
    if tree.counters.translate_calls == 0:
        raise BackendError("backend produced no generations while scoring")
    payload = {
        "reward": report.consistency.reward,
        "literal_mean": report.consistency.literal_mean,
        "free_mean": report.consistency.free_mean,
        "reconstructions": len(report.reconstructions),
        "best_index": report.consistency.best_index,
    }
    print(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_inspect(args) -> int:
    tree = tree_from_json(Path(args.tree).read_text(encoding="utf-8"))
    payload = {
        "source": tree.source.text,
        "source_lang": tree.source.lang.code,
        "direction": str(tree.direction),
        "config_digest": tree.digest,
        "nodes": len(tree.nodes),
        "edges": sum(1 for n in tree.nodes if n.parent is not None),
        "counters": tree.counters.to_dict(),
    }
    if args.merged:
        payload["merged_nodes"] = len(serialize_tree(tree, args.penalty))
    try:
        best = best_candidate(tree)
        payload["best"] = {"id": best.id, "text": best.text, "utility": best.utility}
    except ValueError:
        payload["best"] = None
    if args.dot:
        Path(args.dot).write_text(tree_to_dot(tree), encoding="utf-8")
        payload["dot"] = args.dot
    print(json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_lab_init(args) -> int:
    world = SyntheticWorld.generate(n_langs=args.langs, vocab_size=args.vocab, seed=args.seed)
    if args.preset == "weak-pair":
        codes = [str(l) for l in world.languages]
        profiles = weak_pair_profiles(
            (codes[0], codes[1]), args.weak_gt_prob, args.return_gt_prob
        )
    else:
        profiles = {}
    save_world(args.out, world, profiles, exemplar_bias=args.exemplar_bias)
    print(args.out)
    return EXIT_OK


def cmd_lab_corpus(args) -> int:
    world, _ = load_world(args.world)
    sentences = make_corpus(world, LanguageTag(args.lang), args.count, args.length, args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(f"{s.lang.code}\t{s.text}\n")
    print(args.out)
    return EXIT_OK


def cmd_lab_accuracy(args) -> int:
    world, translator = load_world(args.world)
    src, tgt = LanguageTag(args.src_lang), LanguageTag(args.tgt_lang)
    acc = translator.gt_token_accuracy(Direction(src, tgt))
    print(f"{acc:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="transzero", description="Search-driven translation self-play")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", parents=[], help="run one search and print the best candidate")
    p.add_argument("text")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--out", default="tree.json")
    p.add_argument("--dot", action="store_true", help="also write a graph view")
    _add_backend_args(p)
    _add_config_args(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("selfplay", help="batch search rounds with pair extraction")
    p.add_argument("--corpus", required=True, help="TSV corpus: lang<TAB>text per line")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--outdir", required=True)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--train", action="store_true", help="update the lab model between rounds")
    p.add_argument("--learning-rate", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--save-trees", action="store_true")
    _add_backend_args(p)
    _add_config_args(p)
    p.set_defaults(func=cmd_selfplay)

    p = sub.add_parser("extract", help="preference pairs from a saved tree")
    p.add_argument("tree")
    p.add_argument("--out", default=None)
    p.add_argument("--penalty", type=float, default=0.5)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("score", help="quality-estimate an existing translation")
    p.add_argument("--text", required=True, help="source sentence")
    p.add_argument("--hyp", required=True, help="candidate translation")
    p.add_argument("--src-lang", required=True)
    p.add_argument("--tgt-lang", required=True)
    _add_backend_args(p)
    _add_config_args(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("inspect", help="summarize or render a saved tree")
    p.add_argument("tree")
    p.add_argument("--dot", default=None, help="write a graph view to this path")
    p.add_argument("--merged", action="store_true", help="count nodes after duplicate merging")
    p.add_argument("--penalty", type=float, default=0.5)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("lab-init", help="create a synthetic world file")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=["weak-pair", "uniform"], default="weak-pair")
    p.add_argument("--langs", type=int, default=4)
    p.add_argument("--vocab", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weak-gt-prob", type=float, default=0.5)
    p.add_argument("--return-gt-prob", type=float, default=0.4)
    p.add_argument("--exemplar-bias", type=float, default=4.0)
    p.set_defaults(func=cmd_lab_init)

    p = sub.add_parser("lab-corpus", help="sample a monolingual lab corpus")
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lang", required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--length", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lab_corpus)

    p = sub.add_parser("lab-accuracy", help="exact-token accuracy of a lab direction")
    p.add_argument("--world", required=True)
    p.add_argument("--src-lang", required=True)
    p.add_argument("--tgt-lang", required=True)
    p.set_defaults(func=cmd_lab_accuracy)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _GateRejected as exc:
        print(f"input rejected: {exc.reason}", file=sys.stderr)
        return EXIT_GATE
    except (BackendUnreachable, UnsupportedDirection) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
