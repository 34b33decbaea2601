import json
import os
import subprocess
import sys
import time

import pytest

from captionforge import FORMAT_VERSION, __version__
from captionforge.cli import main
from captionforge.fixtures import bundled_path
from captionforge.io import file_digest, save_checkpoint
from captionforge.metrics import METRIC_KEYS
from captionforge.policy import PolicyParams
from captionforge.text import Vocabulary

FEATS = bundled_path("features.jsonl")
REFS_EN = bundled_path("refs_en.jsonl")
REFS_ZH = bundled_path("refs_zh.jsonl")


def run(*args):
    return main([str(a) for a in args])


def read_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f]


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert __version__ in out and f"format {FORMAT_VERSION}" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "captionforge.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["score", "--cands", "x"])
    assert exc.value.code == 2


def test_vocab_is_byte_stable(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("vocab", "--corpus", REFS_EN, "--out", a) == 0
    assert run("vocab", "--corpus", REFS_EN, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    vocab = Vocabulary.load(a)
    assert len(vocab) == 24 and vocab.min_count == 5
    manifest = json.loads((tmp_path / "a.json.manifest.json").read_text())
    assert manifest["subcommand"] == "vocab"
    assert manifest["inputs"]["corpus"]["sha256"] == file_digest(REFS_EN)
    assert manifest["version"] == __version__
    assert "time" not in json.dumps(manifest)


def test_vocab_min_count_one_keeps_all(tmp_path):
    out = tmp_path / "v.json"
    assert run("vocab", "--corpus", REFS_ZH, "--lang", "zh", "--min-count", 1, "--out", out) == 0
    vocab = Vocabulary.load(out)
    refs = [json.loads(line)["refs"] for line in open(REFS_ZH, encoding="utf-8")]
    assert set(vocab.id_to_token[4:]) == {t for rs in refs for r in rs for t in r.split()}


def test_missing_input_exit_2(tmp_path, capsys):
    assert run("vocab", "--corpus", tmp_path / "nope.jsonl", "--out", tmp_path / "v.json") == 2
    assert "nope.jsonl" in capsys.readouterr().err


def test_malformed_jsonl_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "caption": "x"}\n{"id": "b", caption}\n')
    assert run("score", "--cands", bad, "--refs", REFS_EN, "--out", tmp_path / "r.json") == 2
    assert "bad.jsonl:2" in capsys.readouterr().err


def test_score_identity_and_mismatch(tmp_path, data_dir):
    refs = tmp_path / "refs.jsonl"
    cands = tmp_path / "cands.jsonl"
    refs.write_text('{"id": "a", "refs": ["a man rides a red bike"]}\n{"id": "b", "refs": ["the dog runs"]}\n')
    cands.write_text('{"id": "a", "caption": "A man rides a red bike"}\n{"id": "b", "caption": "The dog runs"}\n')
    out = tmp_path / "report.json"
    assert run("score", "--cands", cands, "--refs", refs, "--out", out) == 0
    rep = json.loads(out.read_text())
    assert list(rep["corpus"]) == list(METRIC_KEYS)
    assert all(rep["corpus"][k] == 1.0 for k in ("Bleu_1", "Bleu_4", "ROUGE_L"))
    # a three-token caption has no 4-grams, so that order contributes zero
    assert rep["per_sentence"]["a"]["CIDEr"] == pytest.approx(10.0, abs=1e-9)
    assert rep["per_sentence"]["b"]["CIDEr"] == pytest.approx(7.5, abs=1e-9)
    assert run("score", "--cands", cands, "--refs", REFS_EN, "--out", out) == 2


@pytest.mark.parametrize("lang", ["en", "zh"])
def test_score_golden(tmp_path, data_dir, lang):
    out = tmp_path / "report.json"
    code = run("score", "--cands", os.path.join(data_dir, f"cands_{lang}.jsonl"),
               "--refs", os.path.join(data_dir, f"refs_{lang}.jsonl"), "--lang", lang, "--out", out,
               "--plot", "--jobs", 3)
    assert code == 0
    got = json.loads(out.read_text())
    with open(os.path.join(data_dir, f"golden_{lang}.json"), encoding="utf-8") as f:
        golden = json.load(f)
    for k in METRIC_KEYS:
        assert got["corpus"][k] == pytest.approx(golden["corpus"][k], abs=1e-9)
        for key, row in golden["per_sentence"].items():
            assert got["per_sentence"][key][k] == pytest.approx(row[k], abs=1e-9)
    tsv = (tmp_path / "report.tsv").read_text().splitlines()
    assert tsv[0].split("\t") == ["id", *METRIC_KEYS] and tsv[-1].startswith("__corpus__")
    assert (tmp_path / "report.png").stat().st_size > 0


def test_score_plain_cider_flag(tmp_path, data_dir):
    args = ["score", "--cands", os.path.join(data_dir, "cands_en.jsonl"),
            "--refs", os.path.join(data_dir, "refs_en.jsonl")]
    assert run(*args, "--out", tmp_path / "d.json") == 0
    assert run(*args, "--out", tmp_path / "p.json", "--cider", "plain") == 0
    d = json.loads((tmp_path / "d.json").read_text())["corpus"]["CIDEr"]
    p = json.loads((tmp_path / "p.json").read_text())["corpus"]["CIDEr"]
    assert d != p


def test_score_jobs_from_environment(tmp_path, data_dir, monkeypatch):
    args = ["score", "--cands", os.path.join(data_dir, "cands_zh.jsonl"),
            "--refs", os.path.join(data_dir, "refs_zh.jsonl"), "--lang", "zh"]
    assert run(*args, "--out", tmp_path / "one.json") == 0
    monkeypatch.setenv("CAPTIONFORGE_JOBS", "4")
    assert run(*args, "--out", tmp_path / "four.json") == 0
    assert (tmp_path / "one.json").read_bytes() == (tmp_path / "four.json").read_bytes()
    monkeypatch.setenv("CAPTIONFORGE_JOBS", "many")
    assert run(*args, "--out", tmp_path / "x.json") == 2


def test_reward_lines(tmp_path, data_dir, capsys):
    weights = tmp_path / "w.json"
    weights.write_text(json.dumps({"cider": 1.0}))
    out = tmp_path / "r.jsonl"
    assert run("reward", "--cands", os.path.join(data_dir, "cands_en.jsonl"),
               "--refs", os.path.join(data_dir, "refs_en.jsonl"), "--weights", weights, "--out", out) == 0
    rows = read_jsonl(out)
    golden = json.load(open(os.path.join(data_dir, "golden_en.json"), encoding="utf-8"))
    assert [r["id"] for r in rows] == sorted(golden["per_sentence"])
    for r in rows:
        assert r["reward"] == pytest.approx(golden["per_sentence"][r["id"]]["CIDEr"], abs=1e-9)
    assert run("reward", "--cands", os.path.join(data_dir, "cands_en.jsonl"),
               "--refs", os.path.join(data_dir, "refs_en.jsonl")) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 10
    weights.write_text(json.dumps({"cider": -1}))
    assert run("reward", "--cands", os.path.join(data_dir, "cands_en.jsonl"),
               "--refs", os.path.join(data_dir, "refs_en.jsonl"), "--weights", weights) == 2


def test_train_scst_requires_init(tmp_path):
    assert run("train", "--phase", "scst", "--corpus", REFS_EN, "--features", FEATS,
               "--out", tmp_path / "c.json") == 2


def test_non_finite_checkpoint_exit_3(tmp_path):
    params = PolicyParams.init(5, 3, 15)
    params.out_bias[0] = float("nan")
    ckpt = tmp_path / "nan.json"
    save_checkpoint(ckpt, params, Vocabulary(["<pad>", "<bos>", "<eos>", "<unk>", "x"]))
    assert run("decode", "--ckpt", ckpt, "--features", FEATS, "--out", tmp_path / "o.jsonl") == 3


def test_feature_dimension_mismatch_exit_2(tmp_path):
    ckpt = tmp_path / "c.json"
    save_checkpoint(ckpt, PolicyParams.init(5, 3, 4), Vocabulary(["<pad>", "<bos>", "<eos>", "<unk>", "x"]))
    assert run("decode", "--ckpt", ckpt, "--features", FEATS, "--out", tmp_path / "o.jsonl") == 2


def _pipeline(work, seed=0):
    vocab = work / "vocab.json"
    xe = work / "xe.json"
    rl = work / "rl.json"
    caps = work / "caps.jsonl"
    report = work / "report.json"
    assert run("vocab", "--corpus", REFS_EN, "--out", vocab) == 0
    assert run("train", "--phase", "xe", "--preset", "desk", "--epochs", 2, "--corpus", REFS_EN,
               "--features", FEATS, "--vocab", vocab, "--seed", seed, "--out", xe) == 0
    assert run("train", "--phase", "scst", "--preset", "desk", "--epochs", 1, "--corpus", REFS_EN,
               "--features", FEATS, "--init", xe, "--seed", seed, "--out", rl) == 0
    assert run("decode", "--ckpt", rl, "--features", FEATS, "--beam", 3, "--max-len", 30, "--out", caps) == 0
    assert run("score", "--cands", caps, "--refs", REFS_EN, "--out", report) == 0
    return [vocab, xe, rl, caps, report]


def test_end_to_end_pipeline_is_fast_and_reproducible(tmp_path):
    start = time.perf_counter()
    first = tmp_path / "one"
    first.mkdir()
    outputs = _pipeline(first)
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    rows = read_jsonl(first / "caps.jsonl")
    assert len(rows) == 50 and set(rows[0]) == {"id", "caption", "logprob"}
    assert all(r["logprob"] <= 0 for r in rows)
    xe_curve = (first / "xe.curve.tsv").read_text().splitlines()
    assert xe_curve[0] == "phase\tepoch\tvalue\tlr" and len(xe_curve) == 3
    assert (first / "rl.curve.png").exists()
    manifest = json.loads((first / "rl.json.manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["config"]["phase"] == "scst"
    assert manifest["inputs"]["init"]["sha256"] == file_digest(first / "xe.json")

    second = tmp_path / "two"
    second.mkdir()
    again = _pipeline(second)
    for a, b in zip(outputs, again):
        assert a.read_bytes() == b.read_bytes(), a.name
        ma = json.loads(open(f"{a}.manifest.json").read())
        mb = json.loads(open(f"{b}.manifest.json").read())
        for m in (ma, mb):
            for entry in m["inputs"].values():
                entry.pop("path")
        assert ma == mb
    assert (first / "xe.curve.png").read_bytes() == (second / "xe.curve.png").read_bytes()


def test_decode_jobs_do_not_change_output(tmp_path):
    ckpt = tmp_path / "c.json"
    assert run("train", "--phase", "xe", "--preset", "desk", "--epochs", 1, "--corpus", REFS_ZH, "--lang", "zh",
               "--features", FEATS, "--out", ckpt, "--no-plot") == 0
    assert not (tmp_path / "c.curve.png").exists()
    assert run("decode", "--ckpt", ckpt, "--features", FEATS, "--out", tmp_path / "a.jsonl") == 0
    assert run("decode", "--ckpt", ckpt, "--features", FEATS, "--out", tmp_path / "b.jsonl", "--jobs", 4) == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert run("decode", "--ckpt", ckpt, "--features", FEATS, "--out", tmp_path / "c.jsonl",
               "--no-length-norm", "--beam", 1) == 0


def test_ensemble_decode(tmp_path):
    ckpt = tmp_path / "c.json"
    assert run("train", "--phase", "xe", "--preset", "desk", "--epochs", 1, "--corpus", REFS_EN,
               "--features", FEATS, "--out", ckpt, "--no-plot") == 0
    single = tmp_path / "single.jsonl"
    assert run("decode", "--ckpt", ckpt, "--features", FEATS, "--out", single) == 0
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"members": ["c.json", "c.json"], "weights": "uniform"}))
    for fusion in ("prob", "log"):
        out = tmp_path / f"ens_{fusion}.jsonl"
        assert run("ensemble-decode", "--spec", spec, "--features", FEATS, "--out", out, "--fusion", fusion) == 0
        assert out.read_bytes() == single.read_bytes()
    other = tmp_path / "other.json"
    assert run("train", "--phase", "xe", "--preset", "desk", "--epochs", 1, "--corpus", REFS_EN, "--seed", 5,
               "--features", FEATS, "--out", other, "--no-plot") == 0
    spec.write_text(json.dumps({"members": ["c.json", "other.json"], "weights": [0.6, 0.4]}))
    assert run("ensemble-decode", "--spec", spec, "--features", FEATS, "--out", tmp_path / "mix.jsonl",
               "--jobs", 2) == 0
    assert len(read_jsonl(tmp_path / "mix.jsonl")) == 50
    zh = tmp_path / "zh.json"
    assert run("train", "--phase", "xe", "--preset", "desk", "--epochs", 1, "--corpus", REFS_ZH, "--lang", "zh",
               "--features", FEATS, "--out", zh, "--no-plot") == 0
    spec.write_text(json.dumps({"members": ["c.json", "zh.json"]}))
    assert run("ensemble-decode", "--spec", spec, "--features", FEATS, "--out", tmp_path / "bad.jsonl") == 2
