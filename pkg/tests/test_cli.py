import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from flamseg import cli
from flamseg.annotation_io import read_annotation


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One small synth -> train -> annotate run shared by the tests below."""
    root = tmp_path_factory.mktemp("cli")
    corpus, models, anns = root / "corpus", root / "models", root / "anns"
    assert run("synth", "--out", corpus, "--kind", "styles", "--n-per-style", 2, "--dur-min", 6, "--dur-max", 8,
               "--workers", 1) == 0
    assert run("train", "--out", models, "--corpus", corpus, "--family", "cnn", "--epochs", 2) == 0
    assert run("train", "--out", models, "--corpus", corpus, "--family", "gmm") == 0
    assert run("annotate", "--out", anns, "--models", models, "--input", corpus, "--workers", 2) == 0
    return root


def test_synth_outputs(pipeline):
    corpus = pipeline / "corpus"
    assert len(list(corpus.glob("*.wav"))) == 18
    man = json.loads((corpus / "manifest.json").read_text())
    assert man["command"] == "synth" and man["options"]["seed"] == 0
    assert "metadata.csv" in man["artifacts"] and "tonas00.wav" in man["artifacts"]


def test_models_written(pipeline):
    names = sorted(p.name for p in (pipeline / "models").glob("*.model"))
    assert names == sorted(f"{t}.{f}.model" for t in ("vocal", "guitar", "palmas") for f in ("cnn", "gmm"))


def test_annotate_outputs_validate(pipeline):
    anns = pipeline / "anns"
    files = sorted(anns.glob("*.annotation.json"))
    assert len(files) == 18
    ann, doc = read_annotation(files[0])          # validates the schema
    assert doc["recording_id"] == files[0].name.split(".")[0]
    root = ET.parse(anns / f"{doc['recording_id']}.timeline.svg").getroot()
    assert root.tag.endswith("svg")


def test_annotate_single_file_with_gmm(pipeline, tmp_path):
    wav = pipeline / "corpus" / "bulerias00.wav"
    assert run("annotate", "--out", tmp_path, "--models", pipeline / "models", "--input", wav,
               "--family", "gmm") == 0
    read_annotation(tmp_path / "bulerias00.annotation.json")


def test_analysis_commands(pipeline, tmp_path):
    anns, meta = pipeline / "anns", pipeline / "corpus" / "metadata.csv"
    assert run("stats", "--out", tmp_path / "stats", "--annotations", anns) == 0
    stats = json.loads((tmp_path / "stats" / "global_stats.json").read_text())
    assert stats["nonsilent"]["n_recordings"] == 18

    assert run("discover", "--out", tmp_path / "disc", "--annotations", anns, "--metadata", meta,
               "--threshold", 0.9) == 0
    rows = list(csv.DictReader(open(tmp_path / "disc" / "acappella_precision.csv")))
    counts = [int(r["count"]) for r in rows]
    assert counts == sorted(counts)                  # thresholds decrease, sets grow

    assert run("similarity", "--out", tmp_path / "sim", "--annotations", anns, "--metadata", meta) == 0
    for name in ("scatter.csv", "distances_dtw-itakura.csv", "distances_profile-euclidean.csv",
                 "layout_dtw-itakura.json", "layout_profile-euclidean.json"):
        assert (tmp_path / "sim" / name).is_file()

    assert run("retrieve", "--out", tmp_path / "ret", "--annotations", anns, "--metadata", meta,
               "--metric", "profile-euclidean") == 0
    rows = list(csv.DictReader(open(tmp_path / "ret" / "mrr_profile-euclidean.csv")))
    assert len(rows) == 9
    assert all(0 <= float(r["MRR"]) <= 1 for r in rows)

    assert run("tonality", "--out", tmp_path / "ton", "--annotations", anns, "--metadata", meta) == 0
    rows = list(csv.DictReader(open(tmp_path / "ton" / "correlations.csv")))
    assert rows and all(-1 <= float(r["r_major"]) <= 1 for r in rows)
    assert (tmp_path / "ton" / "flamenco_template.csv").is_file()
    assert list((tmp_path / "ton").glob("kde_*.csv"))


def test_inspect(pipeline, tmp_path):
    assert run("inspect", "--out", tmp_path, "--model", pipeline / "models" / "vocal.cnn.model",
               "--input", pipeline / "corpus" / "tonas00.wav", "--time", 2.0) == 0
    info = json.loads((tmp_path / "image.json").read_text())
    assert abs(info["center_time"] - 2.0) < 0.2
    assert len((tmp_path / "filter_means.csv").read_text().splitlines()) == 1 + 2 * 2 * 16


def test_evaluate(pipeline, tmp_path):
    assert run("evaluate", "--out", tmp_path, "--corpus", pipeline / "corpus", "--task", "vocal",
               "--family", "gmm", "--folds", 2) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep[0]["task"] == "vocal" and len(rep[0]["folds"]) == 2
    assert (tmp_path / "report.csv").is_file()


def test_evaluate_failure_exit_code(pipeline, tmp_path):
    # more folds than song groups cannot be dealt
    assert run("evaluate", "--out", tmp_path, "--corpus", pipeline / "corpus", "--task", "palmas",
               "--family", "gmm", "--folds", 50) == cli.EXIT_FAILURE


def test_reruns_are_byte_identical(pipeline, tmp_path):
    anns, meta = pipeline / "anns", pipeline / "corpus" / "metadata.csv"
    for out in ("a", "b"):
        assert run("similarity", "--out", tmp_path / out, "--annotations", anns, "--metadata", meta) == 0
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


def test_inputs_are_not_mutated(pipeline, tmp_path):
    anns = pipeline / "anns"
    before = {p.name: p.read_bytes() for p in anns.iterdir()}
    run("stats", "--out", tmp_path, "--annotations", anns)
    assert {p.name: p.read_bytes() for p in anns.iterdir()} == before


# -- option resolution and exit codes -------------------------------------------------------

def test_exit_codes(tmp_path, pipeline):
    assert run("frobnicate", "--out", tmp_path) == cli.EXIT_USAGE
    assert run("stats") == cli.EXIT_USAGE
    assert run("stats", "--out", tmp_path, "--annotations", tmp_path / "nope") == cli.EXIT_MISSING
    assert run("annotate", "--out", tmp_path, "--models", tmp_path, "--input", "x.wav") == cli.EXIT_MISSING
    bad = tmp_path / "badmodels"
    bad.mkdir()
    for t in ("vocal", "guitar", "palmas"):
        (bad / f"{t}.cnn.model").write_bytes(b"garbage")
    wav = pipeline / "corpus" / "tonas00.wav"
    assert run("annotate", "--out", tmp_path / "o", "--models", bad, "--input", wav) == cli.EXIT_INVALID
    broken = tmp_path / "broken.wav"
    broken.write_bytes(b"RIFF....WAVEjunk")
    assert run("annotate", "--out", tmp_path / "o", "--models", pipeline / "models",
               "--input", broken) == cli.EXIT_INVALID
    assert len({cli.EXIT_USAGE, cli.EXIT_MISSING, cli.EXIT_INVALID, cli.EXIT_FAILURE}) == 4


def test_option_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "workers": 2, "retrieve": {"k": 3}}))
    parser = cli.build_parser()

    args = parser.parse_args(["retrieve", "--out", "o", "--annotations", "a", "--metadata", "m",
                              "--config", str(cfg)])
    opt = cli.resolve_options(args)
    assert (opt["seed"], opt["workers"], opt["k"]) == (5, 2, 3)

    monkeypatch.setenv("FLAMSEG_SEED", "7")
    monkeypatch.setenv("FLAMSEG_FULL_RANKING", "true")
    opt = cli.resolve_options(args)
    assert opt["seed"] == 7 and opt["full_ranking"] is True

    args = parser.parse_args(["retrieve", "--out", "o", "--annotations", "a", "--metadata", "m",
                              "--config", str(cfg), "--seed", "9", "--k", "4"])
    opt = cli.resolve_options(args)
    assert (opt["seed"], opt["k"]) == (9, 4)

    args = parser.parse_args(["stats", "--out", "o", "--annotations", "a", "--config", str(tmp_path / "no.json")])
    with pytest.raises(cli.CliError) as err:
        cli.resolve_options(args)
    assert err.value.code == cli.EXIT_MISSING


def test_version_flag(capsys):
    assert run("--version") == 0
    assert "flamseg" in capsys.readouterr().out
