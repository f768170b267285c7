import json

import pytest
from click.testing import CliRunner

from hiersteer.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def write_fixture(tmp_path, runner):
    r = runner.invoke(main, ["synth", "--branching", "2,2",
                             "--docs-per-leaf", "4", "--vocab", "120",
                             "--seed", "5", "--out-dir", str(tmp_path)])
    assert r.exit_code == 0, r.stderr
    return (tmp_path / "corpus.jsonl", tmp_path / "kb.json",
            tmp_path / "truth.json")


def test_synth_writes_files(tmp_path, runner):
    corpus, kb, truth = write_fixture(tmp_path, runner)
    lines = corpus.read_text().strip().splitlines()
    assert len(lines) == 2 * 2 * 4
    assert {"id", "text"} <= set(json.loads(lines[0]))
    assert "nodes" in json.loads(kb.read_text())
    assert "children" in json.loads(truth.read_text())


def test_extract_writes_tree_and_metadata(tmp_path, runner):
    corpus, kb, _ = write_fixture(tmp_path, runner)
    out = tmp_path / "constraints.json"
    r = runner.invoke(main, ["extract", "--corpus", str(corpus),
                             "--kb", str(kb), "--q", "1.0", "--min-ants", "1",
                             "--out", str(out)])
    assert r.exit_code == 0, r.stderr
    meta = json.loads(r.stdout.strip())
    assert meta["coverage"] == 1.0
    assert meta["iterations"] >= 1 and meta["num_ants"] > 0
    tree = json.loads(out.read_text())
    assert "children" in tree


def test_cluster_and_eval_pipeline(tmp_path, runner):
    corpus, kb, truth = write_fixture(tmp_path, runner)
    cons = tmp_path / "constraints.json"
    r = runner.invoke(main, ["extract", "--corpus", str(corpus), "--kb",
                             str(kb), "--q", "1.0", "--min-ants", "1",
                             "--out", str(cons)])
    assert r.exit_code == 0
    out = tmp_path / "tree.json"
    r = runner.invoke(main, ["cluster", "--corpus", str(corpus),
                             "--constraints", str(cons), "--lambda", "1e-6",
                             "--out", str(out)])
    assert r.exit_code == 0, r.stderr
    r = runner.invoke(main, ["eval", "--candidate", str(out),
                             "--truth", str(truth)])
    assert r.exit_code == 0, r.stderr
    scores = json.loads(r.stdout)
    assert 0.0 <= scores["triple_fan"] <= 1.0
    assert 0.0 <= scores["avg_nmi"] <= 1.0
    assert len(scores["layers"]) >= 1


def test_stdin_bundle_pipeline(runner):
    r = runner.invoke(main, ["synth", "--branching", "2,2",
                             "--docs-per-leaf", "3", "--vocab", "100",
                             "--seed", "9"])
    assert r.exit_code == 0
    bundle = r.stdout
    r = runner.invoke(main, ["cluster", "--lambda", "0"], input=bundle)
    assert r.exit_code == 0, r.stderr
    r = runner.invoke(main, ["eval"], input=r.stdout)
    assert r.exit_code == 0, r.stderr
    scores = json.loads(r.stdout)
    assert set(scores) == {"triple_fan", "avg_nmi", "layers"}


def test_cluster_determinism(tmp_path, runner):
    corpus, _, _ = write_fixture(tmp_path, runner)
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        r = runner.invoke(main, ["cluster", "--corpus", str(corpus),
                                 "--lambda", "0", "--out", str(out)])
        assert r.exit_code == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1]


def test_missing_corpus_exits_two(runner):
    r = runner.invoke(main, ["cluster", "--corpus", "/nonexistent.jsonl"])
    assert r.exit_code == 2
    err = json.loads(r.stderr.strip().splitlines()[-1])
    assert err["code"] == "FileNotFoundError"


def test_invalid_corpus_exits_two(tmp_path, runner):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a"}\n')
    r = runner.invoke(main, ["cluster", "--corpus", str(bad), "--lambda", "0"])
    assert r.exit_code == 2
    err = json.loads(r.stderr.strip().splitlines()[-1])
    assert err["code"] == "SchemaViolation"


def test_eval_rejects_incomplete_bundle(runner):
    r = runner.invoke(main, ["eval"], input='{"tree": {}}')
    assert r.exit_code == 2


def test_extract_missing_kb_exits_two(tmp_path, runner):
    corpus, _, _ = write_fixture(tmp_path, runner)
    r = runner.invoke(main, ["extract", "--corpus", str(corpus),
                             "--kb", str(tmp_path / "nope.json")])
    assert r.exit_code == 2
