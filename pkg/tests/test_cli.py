import json

import pytest

from tamoe.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-synthetic", "--out", str(d / "data"), "--seed", "1",
                 "--set", "samples_per_topic=4"]) == EXIT_OK
    cfg = d / "cfg.yaml"
    cfg.write_text(
        f"dataset: {d / 'data'}\noutput: {d / 'run'}\nembed_dim: 32\nencoder_size: 8\n"
        "decoder_size: 16\nattention_size: 8\nexpert_dim: 8\ngate_hidden: 8\nnum_experts: 2\n"
        "max_epochs: 2\nbatch_size: 32\ndropout: 0.0\nmax_len: 12\n")
    return d


def test_usage_errors(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["fly"]) == EXIT_USAGE
    assert main(["decode", "--beam", "x", "--checkpoint", "c"]) == EXIT_USAGE
    assert main(["train", "--set", "nokey"]) == EXIT_USAGE


def test_build_vocab_and_topic_embed(dataset, capsys):
    voc = dataset / "vocab.txt"
    assert main(["build-vocab", "--dataset", str(dataset / "data"), "--out", str(voc)]) == EXIT_OK
    out = dataset / "topics.json"
    capsys.readouterr()
    assert main(["topic-embed", "--topics", str(dataset / "data" / "topics.jsonl"),
                 "--vocab", str(voc), "--vectors", str(dataset / "data" / "embeddings.vec"),
                 "--top-k", "3", "--out", str(out)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 18 and all(len(x.split(": ")[1].split()) == 3 for x in lines)
    emb = json.loads(out.read_text())
    assert all(len(v) == 64 for v in emb.values())


def test_train_decode_eval(dataset, capsys):
    cfg = str(dataset / "cfg.yaml")
    assert main(["train", "--config", cfg]) == EXIT_OK
    ckpt = dataset / "run" / "best.ckpt"
    assert ckpt.exists()
    dec = dataset / "dec.jsonl"
    assert main(["decode", "--config", cfg, "--checkpoint", str(ckpt), "--beam", "2",
                 "--max-len", "6", "--out", str(dec)]) == EXIT_OK
    recs = [json.loads(x) for x in dec.read_text().splitlines()]
    assert recs and all(len(r["caption"].split()) <= 6 for r in recs)
    capsys.readouterr()
    assert main(["eval", "--dataset", str(dataset / "data"), "--decodes", str(dec),
                 "--out", str(dataset / "score.json")]) == EXIT_OK
    scores = json.loads(capsys.readouterr().out)
    assert abs(scores["cider"] - sum(scores["cider_n"]) / 4) < 1e-9


def test_checkpoint_vocab_mismatch_is_data_error(dataset):
    cfg = str(dataset / "cfg.yaml")
    main(["train", "--config", cfg])
    assert main(["decode", "--config", cfg, "--set", "min_count=2", "--checkpoint",
                 str(dataset / "run" / "best.ckpt")]) == EXIT_DATA


def test_run_and_compare(dataset, capsys):
    cfg = str(dataset / "cfg.yaml")
    assert main(["run", "--config", cfg, "--set", "max_epochs=1"]) == EXIT_OK
    assert "unseen-test: CIDEr-D" in capsys.readouterr().out
    assert main(["run", "--config", cfg, "--set", "max_epochs=1", "--families", "base,topic",
                 "--seeds", "0,1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "base: unseen CIDEr-D" in out and "+-" in out


def test_data_errors(tmp_path):
    assert main(["build-vocab", "--dataset", str(tmp_path), "--out", str(tmp_path / "v")]) == EXIT_DATA
    (tmp_path / "bad.yaml").write_text("nope: 1\n")
    assert main(["run", "--config", str(tmp_path / "bad.yaml")]) == EXIT_DATA


def test_gradcheck_exit_codes(monkeypatch):
    from tamoe.harness import gradcheck
    from tamoe.numerics import GradCheckReport

    def fake(family, **kw):
        return GradCheckReport(errors={"w": 1e-2 if family == "base" else 1e-6}, tolerance=1e-4)

    monkeypatch.setattr(gradcheck, "check_model_gradients", fake)
    assert main(["gradcheck", "--family", "tamoe"]) == EXIT_OK
    assert main(["gradcheck", "--family", "base"]) == EXIT_NUMERIC


def test_console_script_entry_point():
    from importlib.metadata import entry_points
    eps = [e for e in entry_points(group="console_scripts") if e.name == "tamoe"]
    assert eps and eps[0].value == "tamoe.cli:main"
