import json

import pytest

from transzero.cli import main
from transzero.core import config_digest, load_config
from transzero.gmcts import tree_from_json
from transzero.preference import read_pairs_jsonl
from transzero.synthlab import load_world

FAST = ["--seed", "3", "--width", "2", "--depth", "1", "--budget", "4"]


@pytest.fixture(scope="module")
def lab_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-lab")
    world = root / "world.json"
    corpus = root / "corpus.tsv"
    assert main(["lab-init", "--out", str(world), "--seed", "0"]) == 0
    assert (
        main(
            [
                "lab-corpus",
                "--world",
                str(world),
                "--out",
                str(corpus),
                "--lang",
                "syn0",
                "--count",
                "3",
                "--length",
                "16",
                "--seed",
                "1",
            ]
        )
        == 0
    )
    return world, corpus


def first_line(corpus_path):
    lang, text = corpus_path.read_text(encoding="utf-8").splitlines()[0].split("\t", 1)
    return lang, text


# ---------------------------------------------------------------- usage


def test_no_command_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 1


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1


def test_missing_required_flag_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["lab-corpus", "--world", "w.json"])  # --out/--lang missing
    assert info.value.code == 1


# ---------------------------------------------------------------- lab world


def test_lab_init_writes_loadable_world(lab_files, capsys):
    world_file, _ = lab_files
    world, translator = load_world(world_file)
    assert [str(l) for l in world.languages] == ["syn0", "syn1", "syn2", "syn3"]
    assert world.vocab_size == 50


def test_lab_corpus_is_tagged_tsv(lab_files):
    _, corpus = lab_files
    lines = corpus.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 3
    for line in lines:
        lang, text = line.split("\t", 1)
        assert lang == "syn0"
        assert len(text.split()) == 16


@pytest.mark.parametrize(
    "src,tgt,expected",
    [("syn0", "syn1", "0.500000"), ("syn1", "syn0", "0.400000"), ("syn2", "syn3", "1.000000")],
)
def test_lab_accuracy_prints_six_decimals(lab_files, capsys, src, tgt, expected):
    world_file, _ = lab_files
    assert (
        main(["lab-accuracy", "--world", str(world_file), "--src-lang", src, "--tgt-lang", tgt])
        == 0
    )
    assert capsys.readouterr().out.strip() == expected


# ---------------------------------------------------------------- pipeline


def test_search_extract_inspect_pipeline(lab_files, tmp_path, capsys):
    world_file, corpus = lab_files
    lang, text = first_line(corpus)
    tree_path = tmp_path / "run" / "tree.json"

    rc = main(
        ["search", text, "--src", lang, "--tgt", "syn1", "--lab", str(world_file), "--out", str(tree_path), "--dot"]
        + FAST
    )
    assert rc == 0
    best_line = capsys.readouterr().out.strip()
    assert best_line  # the chosen translation is printed

    tree = tree_from_json(tree_path.read_text(encoding="utf-8"))
    assert tree.source.text == text
    from transzero.gmcts import Genesis

    expanded = sum(1 for n in tree.nodes if n.genesis in (Genesis.MERGE, Genesis.MUTATE))
    assert expanded == 4  # the full budget was spent

    cfg = load_config(tmp_path / "run" / "tree.config.json")
    assert cfg.seed == 3 and cfg.width_b == 2 and cfg.node_budget == 4
    assert tree.digest == config_digest(cfg)

    summary = json.loads((tmp_path / "run" / "tree.summary.json").read_text(encoding="utf-8"))
    assert summary["config_digest"] == tree.digest
    assert summary["nodes"] == len(tree.nodes)
    assert summary["counters"] == tree.counters.to_dict()
    assert (tmp_path / "run" / "tree.dot").exists()

    rc = main(["extract", str(tree_path)])
    assert rc == 0
    message = capsys.readouterr().out.strip()
    pairs_path = tmp_path / "run" / "tree.pairs.jsonl"
    assert message.endswith(str(pairs_path))
    meta, pairs = read_pairs_jsonl(pairs_path)
    assert meta["config_digest"] == tree.digest
    assert message.startswith(f"{len(pairs)} pairs")

    dot_out = tmp_path / "run" / "graph.dot"
    rc = main(["inspect", str(tree_path), "--merged", "--dot", str(dot_out)])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["nodes"] == len(tree.nodes)
    assert payload["edges"] == len(tree.nodes) - 1
    assert payload["merged_nodes"] <= len(tree.nodes)
    assert payload["best"]["text"] == best_line
    assert payload["dot"] == str(dot_out)
    assert dot_out.read_text(encoding="utf-8").startswith("digraph")


def test_score_reports_consistency(lab_files, capsys):
    world_file, corpus = lab_files
    lang, text = first_line(corpus)
    world, _ = load_world(world_file)
    from transzero.core import LanguageTag, Sentence
    from transzero.synthlab import gt_translate

    hyp = gt_translate(world, Sentence(text, LanguageTag(lang)), LanguageTag("syn1")).text
    rc = main(
        ["score", "--text", text, "--hyp", hyp, "--src-lang", lang, "--tgt-lang", "syn1", "--lab", str(world_file)]
        + FAST
    )
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert set(payload) == {"reward", "literal_mean", "free_mean", "reconstructions", "best_index"}
    assert 0.0 <= payload["reward"] <= 1.0
    assert payload["reconstructions"] == 2  # width 2, depth 1


def test_selfplay_writes_run_artifacts(lab_files, tmp_path, capsys):
    world_file, corpus = lab_files
    outdir = tmp_path / "run"
    rc = main(
        [
            "selfplay",
            "--corpus",
            str(corpus),
            "--outdir",
            str(outdir),
            "--rounds",
            "1",
            "--workers",
            "2",
            "--lab",
            str(world_file),
            "--save-trees",
        ]
        + FAST
    )
    assert rc == 0
    assert capsys.readouterr().out.strip() == str(outdir / "selfplay.json")
    for name in ["config.json", "round_00.pairs.jsonl", "round_00.summary.json", "rounds.csv", "selfplay.json"]:
        assert (outdir / name).exists()
    run = json.loads((outdir / "selfplay.json").read_text(encoding="utf-8"))
    assert len(run["rounds"]) == 1
    assert run["rounds"][0]["inputs"] == 3
    assert run["config_digest"] == config_digest(load_config(outdir / "config.json"))
    trees = list((outdir / "trees" / "round_00").glob("tree_*.json"))
    assert len(trees) == run["rounds"][0]["searches"]


def test_selfplay_pairs_independent_of_worker_count(lab_files, tmp_path):
    world_file, corpus = lab_files
    blobs = []
    for name, workers in [("a", "1"), ("b", "3")]:
        outdir = tmp_path / name
        rc = main(
            ["selfplay", "--corpus", str(corpus), "--outdir", str(outdir), "--workers", workers, "--lab", str(world_file)]
            + FAST
        )
        assert rc == 0
        blobs.append((outdir / "round_00.pairs.jsonl").read_bytes())
    assert blobs[0] == blobs[1]


# ---------------------------------------------------------------- precedence


def test_config_precedence_flags_beat_file_beats_world(lab_files, tmp_path):
    world_file, corpus = lab_files
    lang, text = first_line(corpus)
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"width_b": 3, "eta": 2.5}), encoding="utf-8")
    out = tmp_path / "tree.json"
    rc = main(
        [
            "search",
            text,
            "--src",
            lang,
            "--tgt",
            "syn1",
            "--lab",
            str(world_file),
            "--config",
            str(cfg_file),
            "--out",
            str(out),
            "--width",
            "2",
            "--depth",
            "1",
            "--budget",
            "2",
            "--seed",
            "0",
        ]
    )
    assert rc == 0
    cfg = load_config(tmp_path / "tree.config.json")
    assert cfg.width_b == 2  # flag beat the file
    assert cfg.eta == 2.5  # file beat the default
    assert [str(l) for l in cfg.languages] == ["syn0", "syn1", "syn2", "syn3"]  # world supplied
    assert cfg.length_gate == (1, 1_000_000)  # lab gate admits token strings


# ---------------------------------------------------------------- failures


def test_gate_rejection_exits_two(lab_files, tmp_path, capsys):
    world_file, corpus = lab_files
    lang, text = first_line(corpus)
    rc = main(
        ["search", text, "--src", lang, "--tgt", "syn1", "--lab", str(world_file), "--out", str(tmp_path / "t.json"), "--gate", "1000,2000"]
        + FAST
    )
    assert rc == 2
    assert "rejected" in capsys.readouterr().err


def test_unreachable_backend_exits_three(tmp_path, capsys):
    rc = main(
        [
            "search",
            "hello there, this sentence is long enough to pass the gate",
            "--src",
            "en",
            "--tgt",
            "de",
            "--backend",
            "http://127.0.0.1:9",
            "--languages",
            "en,de",
            "--out",
            str(tmp_path / "t.json"),
        ]
        + FAST
    )
    assert rc == 3
    assert "backend" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["search", "some text", "--src", "en", "--tgt", "de"],  # no languages anywhere
        ["search", "some text", "--src", "en", "--tgt", "de", "--languages", "en,de", "--gate", "5"],
        ["search", "some text", "--src", "en", "--tgt", "fr", "--languages", "en,de", "--backend", "http://x"],
    ],
)
def test_config_errors_exit_one(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_missing_world_file_exits_one(tmp_path, capsys):
    rc = main(["lab-accuracy", "--world", str(tmp_path / "absent.json"), "--src-lang", "a", "--tgt-lang", "b"])
    assert rc == 1


def test_corrupt_config_file_exits_one(lab_files, tmp_path, capsys):
    world_file, corpus = lab_files
    lang, text = first_line(corpus)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    rc = main(
        ["search", text, "--src", lang, "--tgt", "syn1", "--lab", str(world_file), "--config", str(bad), "--out", str(tmp_path / "t.json")]
    )
    assert rc == 1


def test_train_without_lab_exits_one(lab_files, tmp_path, capsys):
    _, corpus = lab_files
    rc = main(
        [
            "selfplay",
            "--corpus",
            str(corpus),
            "--outdir",
            str(tmp_path / "o"),
            "--train",
            "--backend",
            "http://127.0.0.1:9",
            "--languages",
            "syn0,syn1",
        ]
    )
    assert rc == 1
    assert "--lab" in capsys.readouterr().err
