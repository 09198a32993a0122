import json

import pytest

from vifidel.cli import run
from vifidel.embeddings import EmbeddingTable, save_binary_embeddings, save_text_embeddings

from conftest import TOY_VECTORS, write_jsonl


@pytest.fixture
def corpus(tmp_path):
    table = EmbeddingTable.from_dict(TOY_VECTORS)
    emb = tmp_path / "emb.txt"
    save_text_embeddings(table, emb)
    save_binary_embeddings(table, tmp_path / "emb.bin")
    write_jsonl(tmp_path / "gold.jsonl", [
        {"image_id": "1", "objects": [{"label": "dog"}, {"label": "toys"}]},
        {"image_id": "2", "objects": [{"label": "truck"}]},
        {"image_id": "3", "objects": [{"label": "cat"}]},
    ])
    write_jsonl(tmp_path / "det.jsonl", [
        {"image_id": "1", "objects": [{"label": "dog", "score": 0.9}, {"label": "beach", "score": 0.3}]},
        {"image_id": "2", "objects": [{"label": "field", "score": 0.5}]},
        {"image_id": "3", "objects": []},
    ])
    write_jsonl(tmp_path / "captions.jsonl", [
        {"image_id": "1", "candidate_id": "a", "caption": "A dog plays with the toys."},
        {"image_id": "2", "candidate_id": "a", "caption": "a small truck sitting on top of a field"},
        {"image_id": "3", "candidate_id": "b", "caption": "a kitten"},
    ])
    write_jsonl(tmp_path / "refs.jsonl", [
        {"image_id": "1", "references": ["a puppy with toys", "a dog", "dog and toys"]},
        {"image_id": "2", "references": ["a truck in a field", "a truck", "truck"]},
        {"image_id": "3", "references": ["a cat", "a kitten", "cat sitting"]},
    ])
    write_jsonl(tmp_path / "items.jsonl", [
        {"image_id": "1", "b": "a dog with toys", "c": "a truck on the beach", "label": "B", "split": "MM"},
        {"image_id": "2", "b": "a cat", "c": "a truck in a field", "label": ["C", "C", "B"], "split": "HM"},
        {"image_id": "3", "b": "a kitten", "c": "a beach", "label": "B", "split": "HC"},
        {"image_id": "9", "b": "x", "c": "y", "label": "B", "split": "HI"},
    ])
    write_jsonl(tmp_path / "judg.jsonl", [
        {"image_id": "1", "candidate": "a", "relevance": 5, "thoroughness": 4},
        {"image_id": "2", "candidate": "a", "relevance": 3, "thoroughness": 3},
        {"image_id": "3", "candidate": "b", "relevance": 1, "thoroughness": 2},
    ])
    return tmp_path


def score_args(c, *extra):
    return ["score", "--embeddings", str(c / "emb.txt"), "--detections", str(c / "gold.jsonl"),
            "--captions", str(c / "captions.jsonl"), *extra]


def test_score_smoke(corpus, capsys):
    out = corpus / "scores.jsonl"
    assert run(score_args(corpus, "--output", str(out), "--summary", str(corpus / "s.tsv"))) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    recs = [json.loads(l) for l in lines]
    assert [r["image_id"] for r in recs] == ["1", "2", "3"]
    assert all(0 < r["score"] <= 1 for r in recs)
    tsv = (corpus / "s.tsv").read_text().splitlines()
    assert tsv[0] == "image_id\tcandidate_id\tscore"
    assert tsv[1].split("\t")[2] == f"{recs[0]['score']:.6f}"
    assert tsv[-1].startswith("mean\t3\t")
    assert "3 items scored, 0 skipped" in capsys.readouterr().err


def test_score_stdout_and_dump_plan(corpus, capsys):
    assert run(score_args(corpus, "--dump-plan", "--workers", "1")) == 0
    recs = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert "plan" in recs[0] and recs[0]["plan"]["objective"] == recs[0]["wmd"]


def test_score_binary_embeddings_and_references(corpus):
    out1, out2 = corpus / "t.jsonl", corpus / "b.jsonl"
    common = ["--references", str(corpus / "refs.jsonl"), "--n-refs", "2"]
    assert run(score_args(corpus, "--output", str(out1), *common)) == 0
    args = score_args(corpus, "--output", str(out2), *common)
    args[2] = str(corpus / "emb.bin")
    assert run(args) == 0
    a = [json.loads(l)["score"] for l in out1.read_text().splitlines()]
    b = [json.loads(l)["score"] for l in out2.read_text().splitlines()]
    assert max(abs(x - y) for x, y in zip(a, b)) < 1e-6


def test_score_merge_and_thresholds(corpus):
    out = corpus / "m.jsonl"
    argv = score_args(corpus, "--detections", str(corpus / "det.jsonl"),
                      "--det-threshold", "gold", "--det-threshold", "d500", "--output", str(out))
    assert run(argv) == 0
    assert len(out.read_text().splitlines()) == 3


def test_missing_embeddings_exit_2(corpus, capsys, monkeypatch):
    monkeypatch.delenv("VIFIDEL_EMBEDDINGS", raising=False)
    code = run(["score", "--detections", str(corpus / "gold.jsonl"), "--captions", str(corpus / "captions.jsonl")])
    assert code == 2
    assert "usage:" in capsys.readouterr().err


def test_embeddings_from_environment(corpus, monkeypatch):
    monkeypatch.setenv("VIFIDEL_EMBEDDINGS", str(corpus / "emb.txt"))
    out = corpus / "env.jsonl"
    argv = ["score", "--detections", str(corpus / "gold.jsonl"), "--captions",
            str(corpus / "captions.jsonl"), "--output", str(out)]
    assert run(argv) == 0


def test_unknown_flag_exit_2(corpus):
    with pytest.raises(SystemExit) as exc:
        run(score_args(corpus, "--bogus"))
    assert exc.value.code == 2


def test_nonexistent_file_exit_2(corpus):
    argv = score_args(corpus)
    argv[4] = str(corpus / "missing.jsonl")
    assert run(argv) == 2


def test_data_error_exit_1(corpus, capsys):
    (corpus / "captions.jsonl").write_text('{"image_id": "1", "candidate_id": "a", "caption": "dog"}\n{broken\n')
    assert run(score_args(corpus)) == 1
    assert "captions.jsonl:2" in capsys.readouterr().err


def test_empty_policy_error_reports_line(corpus, capsys):
    write_jsonl(corpus / "captions.jsonl", [{"image_id": "1", "candidate_id": "a", "caption": "the of"}])
    assert run(score_args(corpus, "--empty-policy", "error")) == 1
    assert "captions.jsonl:1" in capsys.readouterr().err
    assert run(score_args(corpus, "--output", str(corpus / "z.jsonl"))) == 0
    assert json.loads((corpus / "z.jsonl").read_text())["score"] == 0.0


def test_score_skips_images_without_detections(corpus, capsys):
    write_jsonl(corpus / "captions.jsonl", [
        {"image_id": "1", "candidate_id": "a", "caption": "dog"},
        {"image_id": "77", "candidate_id": "a", "caption": "dog"},
    ])
    assert run(score_args(corpus, "--output", str(corpus / "o.jsonl"))) == 0
    assert len((corpus / "o.jsonl").read_text().splitlines()) == 1
    assert "1 items scored, 1 skipped" in capsys.readouterr().err


def test_eval_pairwise_table(corpus):
    out = corpus / "acc.tsv"
    argv = ["eval-pairwise", "--embeddings", str(corpus / "emb.txt"), "--detections", str(corpus / "gold.jsonl"),
            "--items", str(corpus / "items.jsonl"), "--references", str(corpus / "refs.jsonl"),
            "--n-refs", "0", "1", "3", "--output", str(out)]
    assert run(argv) == 0
    rows = [r.split("\t") for r in out.read_text().splitlines()]
    assert rows[0] == ["metric", "n_refs", "HC", "HI", "HM", "MM", "all", "n_items", "skipped"]
    assert [r[1] for r in rows[1:]] == ["0", "1", "3"]
    zero = rows[1]
    assert zero[2:7] == ["1.000000", "nan", "1.000000", "1.000000", "1.000000"]
    assert zero[7:] == ["3", "1"]


def test_eval_pairwise_wmd_baseline(corpus):
    out = corpus / "wmd.tsv"
    argv = ["eval-pairwise", "--embeddings", str(corpus / "emb.txt"), "--metric", "wmd-best",
            "--items", str(corpus / "items.jsonl"), "--references", str(corpus / "refs.jsonl"),
            "--n-refs", "0", "1", "--output", str(out)]
    assert run(argv) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("wmd-best\t1\t")


def test_eval_pairwise_seeded_subsets(corpus):
    out = corpus / "seeds.tsv"
    argv = ["eval-pairwise", "--embeddings", str(corpus / "emb.txt"), "--detections", str(corpus / "gold.jsonl"),
            "--items", str(corpus / "items.jsonl"), "--references", str(corpus / "refs.jsonl"),
            "--n-refs", "2", "--ref-sample-seeds", "1", "2", "3", "--output", str(out)]
    assert run(argv) == 0
    first = out.read_text()
    assert run(argv) == 0
    assert out.read_text() == first


def test_correlate(corpus):
    scores = corpus / "scores.jsonl"
    assert run(score_args(corpus, "--output", str(scores))) == 0
    out = corpus / "corr.tsv"
    assert run(["correlate", "--judgments", str(corpus / "judg.jsonl"), "--scores", str(scores), "--output", str(out)]) == 0
    header, values = out.read_text().splitlines()
    assert header == "relevance\tthoroughness"
    rel, tho = (float(v) for v in values.split("\t"))
    assert -1 <= rel <= 1 and -1 <= tho <= 1


def test_correlate_misaligned_exit_1(corpus):
    write_jsonl(corpus / "s.jsonl", [{"image_id": "1", "candidate_id": "zzz", "score": 0.1}])
    argv = ["correlate", "--judgments", str(corpus / "judg.jsonl"), "--scores", str(corpus / "s.jsonl")]
    assert run(argv) == 1


def test_combine(corpus):
    write_jsonl(corpus / "a.jsonl", [{"image_id": "1", "candidate_id": "a", "score": 0.4}])
    write_jsonl(corpus / "b.jsonl", [{"image_id": "1", "candidate_id": "a", "score": 0.6}])
    out = corpus / "ab.jsonl"
    assert run(["combine", str(corpus / "a.jsonl"), str(corpus / "b.jsonl"), "--output", str(out)]) == 0
    assert json.loads(out.read_text()) == {"image_id": "1", "candidate_id": "a", "score": 0.5}
    write_jsonl(corpus / "b.jsonl", [{"image_id": "2", "candidate_id": "a", "score": 0.6}])
    assert run(["combine", str(corpus / "a.jsonl"), str(corpus / "b.jsonl")]) == 1


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("vifidel ")
