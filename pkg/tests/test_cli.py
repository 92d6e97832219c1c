from __future__ import annotations

import json
from pathlib import Path

import pytest

from finmlm.cli.main import main
from finmlm.toydata import toy_classification, write_toy_files


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cliworld")
    paths = write_toy_files(tmp, n_docs=30, doc_words=20, seed=7)
    lex_path = tmp / "lex.json"
    rc = main(
        [
            "build-lexicon",
            "--dict", str(paths["lexicon_terms"]),
            "--vocab", str(paths["vocab"]),
            "--out", str(lex_path),
        ]
    )
    assert rc == 0
    return {**paths, "lexicon": lex_path, "dir": tmp}


def _mask_args(world, out, seed="3", extra=()):
    return [
        "mask",
        "--corpus", str(world["corpus"]),
        "--lexicon", str(world["lexicon"]),
        "--vocab", str(world["vocab"]),
        "--stage", "word+phrase",
        "--seed", seed,
        "--out", str(out),
        *extra,
    ]


def test_mask_outputs_and_determinism(world):
    out1 = world["dir"] / "m1"
    out2 = world["dir"] / "m2"
    assert main(_mask_args(world, out1)) == 0
    assert main(_mask_args(world, out2)) == 0
    assert (out1 / "masked.jsonl").read_bytes() == (out2 / "masked.jsonl").read_bytes()
    assert (out1 / "stats.json").read_bytes() == (out2 / "stats.json").read_bytes()
    stats = json.loads((out1 / "stats.json").read_text())
    assert stats["examples"] == 30
    assert stats["mask_rate"] > 0


def test_mask_different_seed_changes_output(world):
    out1 = world["dir"] / "m1"
    out3 = world["dir"] / "m3"
    assert main(_mask_args(world, out3, seed="4")) == 0
    assert (out1 / "masked.jsonl").read_bytes() != (out3 / "masked.jsonl").read_bytes()


def test_mask_tokens_format_with_error_entries(world):
    tokens_file = world["dir"] / "tokens.jsonl"
    rows = [
        {"tokens": [2, 6, 7, 8, 9, 10, 11, 12, 13, 3]},
        {"tokens": [2, 6, 999999, 3]},
        {"tokens": [2, 10, 11, 12, 13, 14, 15, 16, 17, 3]},
    ]
    tokens_file.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    out = world["dir"] / "mtok"
    rc = main(
        [
            "mask",
            "--corpus", str(tokens_file),
            "--lexicon", str(world["lexicon"]),
            "--vocab", str(world["vocab"]),
            "--stage", "word+phrase",
            "--seed", "3",
            "--format", "tokens",
            "--out", str(out),
        ]
    )
    assert rc == 0
    lines = (out / "masked.jsonl").read_text().splitlines()
    assert len(lines) == 3
    err = json.loads(lines[1])
    assert "error" in err and err["index"] == 1
    assert "input_ids" in json.loads(lines[0])


def test_usage_error_exit_code(world, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["mask", "--corpus", str(world["corpus"])])
    assert exc.value.code == 2


def test_empty_args_shows_usage(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_io_error_exit_code(world):
    rc = main(_mask_args(world, world["dir"] / "x", extra=())[:1] + [
        "--corpus", "/nonexistent/file.txt",
        "--lexicon", str(world["lexicon"]),
        "--vocab", str(world["vocab"]),
        "--out", str(world["dir"] / "x"),
    ])
    assert rc == 3


def test_pretrain_eval_finetune_round_trip(world):
    ckpt = world["dir"] / "model.ckpt"
    report = world["dir"] / "train.json"
    rc = main(
        [
            "pretrain",
            "--corpus", str(world["corpus"]),
            "--lexicon", str(world["lexicon"]),
            "--vocab", str(world["vocab"]),
            "--epochs", "2",
            "--word-only-epochs", "1",
            "--seed", "5",
            "--config", str(_write_config(world["dir"])),
            "--out", str(ckpt),
            "--report", str(report),
        ]
    )
    assert rc == 0
    rep = json.loads(report.read_text())
    assert rep["baseline_ppl"] > 0
    assert len(rep["epoch_ppl"]) == 2
    assert rep["phrase_collapses"][0] == 0  # word-only first epoch

    rc = main(
        [
            "eval-ppl",
            "--ckpt", str(ckpt),
            "--corpus", str(world["corpus"]),
            "--lexicon", str(world["lexicon"]),
            "--vocab", str(world["vocab"]),
            "--seed", "5",
            "--out", str(world["dir"] / "ppl.json"),
        ]
    )
    assert rc == 0
    ppl = json.loads((world["dir"] / "ppl.json").read_text())
    assert ppl["token_level_ppl"] > 0 and ppl["masked_tokens"] > 0

    task = world["dir"] / "task.jsonl"
    task.write_text(
        "\n".join(json.dumps({"text": t, "label": y}) for t, y in toy_classification(8, seed=1))
        + "\n"
    )
    rc = main(
        [
            "finetune",
            "--ckpt", str(ckpt),
            "--vocab", str(world["vocab"]),
            "--task-file", str(task),
            "--lambda", "0.9",
            "--epochs", "3",
            "--seed", "2",
            "--out", str(world["dir"] / "ft.json"),
        ]
    )
    assert rc == 0
    ft = json.loads((world["dir"] / "ft.json").read_text())
    assert set(ft) >= {"accuracy", "per_class_f1", "macro_f1"}


def _write_config(tmp: Path) -> Path:
    cfg = {
        "version": 1,
        "encoder": {"d_model": 16, "n_heads": 2, "n_layers": 1, "ffn_dim": 24, "max_len": 32},
        "weights": {"lambda1": 1.0, "lambda2": 50.0},
        "train": {"lr": 0.001},
    }
    path = tmp / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_pretrain_checkpoint_deterministic(world):
    args = lambda out: [
        "pretrain",
        "--corpus", str(world["corpus"]),
        "--lexicon", str(world["lexicon"]),
        "--vocab", str(world["vocab"]),
        "--epochs", "1",
        "--word-only-epochs", "1",
        "--seed", "5",
        "--config", str(_write_config(world["dir"])),
        "--out", str(out),
    ]
    a = world["dir"] / "det_a.ckpt"
    b = world["dir"] / "det_b.ckpt"
    assert main(args(a)) == 0
    assert main(args(b)) == 0
    assert a.read_bytes() == b.read_bytes()


def test_score_cls_and_rank(world, capsys):
    pred = world["dir"] / "pred.jsonl"
    gold = world["dir"] / "gold.jsonl"
    pred.write_text(
        '{"id":"a","pred":1}\n{"id":"b","pred":0}\n{"id":"c","pred":1}\n{"id":"d","pred":1}\n'
    )
    gold.write_text(
        '{"id":"a","label":1}\n{"id":"b","label":0}\n{"id":"c","label":0}\n{"id":"d","label":1}\n'
    )
    assert main(["score", "--task", "cls", "--pred", str(pred), "--gold", str(gold)]) == 0
    out = json.loads(capsys.readouterr().out.strip())
    assert out["accuracy"] == 0.75

    pred.write_text('{"id":"q1","ranking":["d2","d0","d1"]}\n')
    gold.write_text('{"id":"q1","relevance":{"d0":0,"d1":1,"d2":2}}\n')
    assert main(["score", "--task", "rank", "--pred", str(pred), "--gold", str(gold), "--k", "3"]) == 0
    out = json.loads(capsys.readouterr().out.strip())
    assert out["mrr"] == 1.0
    assert 0 < out["ndcg@3"] < 1

    gold.write_text('{"id":"q1","relevance":{"d0":0}}\n{"id":"q2","relevance":{"d0":1}}\n')
    rc = main(["score", "--task", "rank", "--pred", str(pred), "--gold", str(gold)])
    assert rc == 2  # missing prediction for q2


def test_score_reg(world, capsys):
    pred = world["dir"] / "rp.jsonl"
    gold = world["dir"] / "rg.jsonl"
    pred.write_text('{"id":1,"pred":1.5}\n{"id":2,"pred":2.5}\n')
    gold.write_text('{"id":1,"label":1.0}\n{"id":2,"label":3.0}\n')
    assert main(["score", "--task", "reg", "--pred", str(pred), "--gold", str(gold)]) == 0
    out = json.loads(capsys.readouterr().out.strip())
    assert out["mse"] == pytest.approx(0.25)


def test_selftest_passes_and_fault_injection_fails(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert main(["selftest", "--inject-fault"]) == 1


def test_sweep_micro(world):
    out = world["dir"] / "sweep_micro"
    rc = main(
        [
            "sweep",
            "--axis", "fin-share",
            "--corpus", str(world["corpus"]),
            "--lexicon", str(world["lexicon"]),
            "--vocab", str(world["vocab"]),
            "--config", str(_write_config(world["dir"])),
            "--values", "0.2,0.3",
            "--seeds", "1",
            "--seed", "0",
            "--epochs", "1",
            "--out", str(out),
        ]
    )
    assert rc == 0
    report = json.loads((out / "sweep.json").read_text())
    assert [c["value"] for c in report["cells"]] == ["0.2", "0.3"]
    assert all(len(c["per_seed_ppl"]) == 1 for c in report["cells"])
    assert (out / "sweep.txt").exists()
