import json
import math
from pathlib import Path

import pytest

import smallbench as sb

ROOT = Path(__file__).resolve().parents[2]
CORPUS = ROOT / "data" / "toy_corpus.txt"
GLUE = ROOT / "data" / "glue_mini"


def test_metrics():
    assert sb.matthews_corrcoef([1, 1, 1, 0, 0, 0, 0], [1, 1, 0, 0, 0, 0, 1]) == pytest.approx(5 / 12)
    assert sb.accuracy([0, 1, 2, 2], [0, 1, 1, 2]) == 0.75
    assert sb.spearman([1, 2, 2, 3], [1, 3, 2, 4]) == pytest.approx(4.5 / math.sqrt(4.5 * 5))


def test_published_average():
    scores = [57.50, 90.40, 88.22, 86.74, 90.44, 81.78, 88.10, 69.09]
    assert sb.format_score(sb.average_score(scores)) == "81.53"
    assert sb.task_names() == ["CoLA", "SST", "MRPC", "STS", "QQP", "MNLI", "QNLI", "RTE"]


def test_parameter_counts():
    assert 13_500_000 <= sb.parameter_count("electra-deberta") <= 16_500_000
    assert 12_500_000 <= sb.parameter_count("bert") <= 15_500_000
    assert sb.parameter_count("bert", toy=True, vocab_size=2000) < 1_000_000
    with pytest.raises(sb.ConfigError):
        sb.parameter_count("xlnet")


def test_tokenizer_round_trip():
    vocab = sb.build_vocab_from_text("the cat sat on the mat . the dog sat too .", 60)
    assert vocab.tokens[:5] == ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    ids = sb.tokenize("The cat sat.", vocab)
    assert sb.decode(ids, vocab) == "the cat sat ."
    enc = sb.encode("the cat", "the dog", vocab, max_len=12)
    assert len(enc["ids"]) == 12
    assert enc["ids"][0] == 2
    assert 1 in enc["segment_ids"]


def test_pretrain_finetune_and_report(tmp_path):
    vocab = sb.build_vocab(CORPUS, 500)
    ckpt, log = sb.pretrain(CORPUS, vocab, toy=True, settings={"steps": 4, "warmup-steps": 1, "vocab-size": 500})
    assert [e["step"] for e in log] == [1, 2, 3, 4]
    assert all(math.isfinite(e["loss"]) for e in log)
    assert ckpt.step == 4
    assert ckpt.vocab() == vocab
    assert any(n.startswith("generator.") for n in ckpt.tensor_names)

    path = tmp_path / "toy.ckpt"
    ckpt.save(path)
    assert sb.Checkpoint.load(path) == ckpt

    score, tuned = sb.finetune(ckpt, "RTE", GLUE, lr=1e-3, batch_size=16, epochs=1, max_len=64)
    assert 0.0 <= score <= 1.0
    assert sb.evaluate(tuned, "RTE", GLUE) == score

    code, out, err = sb.run_cli(["report", str(tmp_path / "missing.json")])
    assert code == 1
    assert err.startswith("smallbench: error[io]: ")


def test_render_leaderboard():
    report = {
        "schema_version": 1,
        "model": "demo",
        "variant": "bert",
        "parameters": 10,
        "seed": 0,
        "runs_per_task": 1,
        "tasks": [],
        "average": None,
        "complete": False,
        "error": "",
        "metadata": {},
    }
    rows = json.loads(sb.render_leaderboard([json.dumps(report)], "json"))
    assert rows == [{"model": "demo", "params": 10, **{t: None for t in sb.task_names()}, "AVG": None}]
    assert "| demo | 10 |" in sb.render_leaderboard([json.dumps(report)])
    with pytest.raises(ValueError):
        sb.render_leaderboard([json.dumps({**report, "schema_version": 99})])


def test_corrupt_checkpoint_is_reported(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(sb.CheckpointError):
        sb.Checkpoint.load(bad)
