"""Single entry point for every workflow.

Subcommands: build-lexicon, mask, pretrain, eval-ppl, finetune, score,
sweep, selftest. Exit codes: 0 success, 1 check/training failure, 2 usage
or configuration error, 3 I/O error. All commands are deterministic given
--seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .. import __version__
from ..errors import ConfigError, ContractViolation, DivergenceError, InputError
from ..lexicon import load_lexicon
from ..masking import MaskedExample, MaskingPolicy, Stage, mask_example, masking_stats
from ..metrics import RankedList, accuracy, f1_scores, mrr, mse_r2, ndcg, precision_at_k
from ..rng import substream
from ..tinymodel import (
    finetune_classifier,
    load_checkpoint,
    perplexity,
    phrase_probe,
    pretrain,
    save_checkpoint,
)
from ..tokenizer import Tokenizer
from . import io as cli_io
from .selftest import print_report, run_selftest
from .sweep import SweepSpec, default_spec, format_table, run_sweep


def _policy_from_args(args) -> MaskingPolicy:
    policy = MaskingPolicy.load(args.policy) if args.policy else MaskingPolicy()
    updates = {}
    if getattr(args, "stage", None):
        updates["stage"] = Stage(args.stage)
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "spans", None) is not None:
        updates["use_spans"] = args.spans
    if getattr(args, "fin_share", None) is not None:
        updates["fin_share"] = args.fin_share
    return dataclasses.replace(policy, **updates) if updates else policy


def cmd_build_lexicon(args) -> int:
    tok = Tokenizer.load(args.vocab)
    lex = load_lexicon(args.dict, tok)
    lex.save(args.out)
    n_phrases = len(lex.phrase_terms)
    print(
        f"wrote {args.out}: {len(lex.terms)} terms "
        f"({n_phrases} phrases), digest {lex.source_digest[:16]}"
    )
    return 0


def cmd_mask(args) -> int:
    tok, lex, av, special = cli_io.load_world(args.vocab, args.lexicon)
    policy = _policy_from_args(args)
    fmt, docs = cli_io.read_corpus(args.corpus, args.format)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    examples: list[MaskedExample] = []
    lines: list[str] = []
    for idx, doc in enumerate(docs):
        if fmt == "tokens":
            bad = [t for t in doc if not 0 <= t < av.total_size]
            if bad:
                lines.append(
                    cli_io.dumps_canonical(
                        {"error": f"token id {bad[0]} outside vocabulary of {av.total_size}", "index": idx}
                    )
                )
                continue
            ids = doc
        else:
            ids = tok.encode(doc)
        rng = substream(policy.seed, "mask", idx)
        ex = mask_example(ids, lex, av, policy, rng, special)
        examples.append(ex)
        lines.append(cli_io.dumps_canonical(ex.to_record()))
    (out_dir / "masked.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    stats = masking_stats(examples) if examples else {"examples": 0}
    cli_io.write_json(out_dir / "stats.json", stats)
    print(f"masked {len(examples)} of {len(docs)} sequences -> {out_dir / 'masked.jsonl'}")
    return 0


def _load_tokenized(path, fmt, tok, max_len):
    read_fmt, docs = cli_io.read_corpus(path, fmt)
    if read_fmt == "tokens":
        return docs
    return cli_io.tokenize_corpus(docs, tok, max_len)


def cmd_pretrain(args) -> int:
    tok, lex, av, special = cli_io.load_world(args.vocab, args.lexicon)
    run_cfg = cli_io.load_run_config(args.config)
    weights = run_cfg.weights
    if args.lambda1 is not None:
        weights = dataclasses.replace(weights, lambda1=args.lambda1)
    if args.lambda2 is not None:
        weights = dataclasses.replace(weights, lambda2=args.lambda2)
    policy = _policy_from_args(args)
    if args.spans is None and args.policy is None:
        # span masking accompanies the span-boundary objective by default
        policy = dataclasses.replace(policy, use_spans=weights.lambda1 > 0)
    config = run_cfg.encoder_config(av.total_size)
    corpus = _load_tokenized(args.corpus, "auto", tok, config.max_len)
    val = _load_tokenized(args.val, "auto", tok, config.max_len) if args.val else corpus

    try:
        result = pretrain(
            corpus,
            val,
            lex,
            av,
            special,
            policy,
            config,
            weights,
            epochs=args.epochs,
            word_only_epochs=args.word_only_epochs,
            seed=args.seed,
            lr=args.lr if args.lr is not None else run_cfg.lr,
        )
    except DivergenceError as err:
        if getattr(err, "state", None) is not None and args.out:
            save_checkpoint(args.out, err.state)
            print(f"diverged ({err}); last finite checkpoint saved to {args.out}", file=sys.stderr)
        else:
            print(f"diverged: {err}", file=sys.stderr)
        return 1

    save_checkpoint(args.out, result.state)
    report = {
        "baseline_ppl": result.baseline_ppl,
        "epoch_ppl": result.epoch_ppl,
        "epoch_loss": [
            {"l_mlm": r.l_mlm, "l_sbo": r.l_sbo, "l_disc": r.l_disc, "total": r.total}
            for r in result.epoch_loss
        ],
        "phrase_collapses": result.phrase_collapses,
        "epochs": args.epochs,
        "word_only_epochs": args.word_only_epochs,
        "seed": args.seed,
    }
    if args.report:
        cli_io.write_json(args.report, report)
    print(
        f"pretrained {args.epochs} epochs on {len(corpus)} sequences; "
        f"ppl {result.baseline_ppl:.3f} -> {result.epoch_ppl[-1]:.3f}; checkpoint {args.out}"
    )
    return 0


def cmd_eval_ppl(args) -> int:
    tok, lex, av, special = cli_io.load_world(args.vocab, args.lexicon)
    state = load_checkpoint(args.ckpt)
    if state.config.vocab_size != av.total_size:
        raise ConfigError(
            f"checkpoint vocab {state.config.vocab_size} != lexicon-augmented vocab {av.total_size}"
        )
    policy = _policy_from_args(args)
    val = _load_tokenized(args.corpus, "auto", tok, state.config.max_len)
    report = perplexity(
        val, state, lex, av, special, policy, seed=args.seed, dump_path=args.dump_logits
    )
    payload = {
        "token_level_ppl": report.token_level,
        "sentence_level_ppl": report.sentence_level,
        "masked_tokens": report.masked_tokens,
        "sequences": report.sequences,
    }
    if args.probe_phrases:
        prob, sites = phrase_probe(val, state, lex, av, special, policy, seed=args.seed)
        payload["phrase_probe_prob"] = prob
        payload["phrase_probe_sites"] = sites
    if args.out:
        cli_io.write_json(args.out, payload)
    print(cli_io.dumps_canonical(payload))
    return 0


def cmd_finetune(args) -> int:
    tok = Tokenizer.load(args.vocab)
    state = load_checkpoint(args.ckpt)
    weights = dataclasses.replace(state.weights, lambda_cls=args.lambda_cls)

    def read_task(path):
        data = []
        for i, ln in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
            if not ln.strip():
                continue
            try:
                obj = json.loads(ln)
                data.append((obj["text"], int(obj["label"])))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise InputError(f'line {i + 1} needs "text" and "label" ({exc})', str(path)) from exc
        if not data:
            raise ConfigError(f"task file is empty: {path}")
        return data

    train_rows = read_task(args.task_file)
    eval_rows = read_task(args.eval_file) if args.eval_file else None
    classes = sorted({lab for _, lab in train_rows} | {lab for _, lab in (eval_rows or [])})
    num_classes = args.classes or (max(classes) + 1)
    encode = lambda rows: [
        (cli_io.tokenize_corpus([text], tok, state.config.max_len)[0], lab) for text, lab in rows
    ]
    report = finetune_classifier(
        encode(train_rows),
        state,
        weights,
        epochs=args.epochs,
        num_classes=num_classes,
        seed=args.seed,
        lr=args.lr if args.lr is not None else 1e-3,
        batch_size=args.batch_size,
        eval_data=encode(eval_rows) if eval_rows else None,
    )
    payload = {
        "accuracy": report["accuracy"],
        "per_class_f1": {str(k): v for k, v in report["per_class_f1"].items()},
        "macro_f1": report["macro_f1"],
        "epoch_loss": report["epoch_loss"],
        "lambda_cls": args.lambda_cls,
        "num_eval": report["num_eval"],
    }
    if args.out:
        cli_io.write_json(args.out, payload)
    print(cli_io.dumps_canonical(payload))
    return 0


def _read_jsonl(path) -> list[dict]:
    rows = []
    for i, ln in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not ln.strip():
            continue
        try:
            rows.append(json.loads(ln))
        except json.JSONDecodeError as exc:
            raise InputError(f"line {i + 1} is not valid JSON ({exc})", str(path)) from exc
    return rows


def cmd_score(args) -> int:
    preds = {r["id"]: r for r in _read_jsonl(args.pred)}
    golds = {r["id"]: r for r in _read_jsonl(args.gold)}
    missing = sorted(set(golds) - set(preds))
    if missing:
        raise ConfigError(f"predictions missing for ids: {missing[:5]}")
    ids = sorted(golds)
    if args.task == "cls":
        p = [preds[i]["pred"] for i in ids]
        y = [golds[i]["label"] for i in ids]
        classes = sorted(set(y) | set(p))
        f1 = f1_scores(p, y, classes=classes)
        payload = {
            "accuracy": accuracy(p, y),
            "macro_f1": f1["macro"],
            "per_class_f1": {str(k): v for k, v in f1["per_class"].items()},
        }
    elif args.task == "reg":
        p = [float(preds[i]["pred"]) for i in ids]
        y = [float(golds[i]["label"]) for i in ids]
        mse, r2 = mse_r2(p, y)
        payload = {"mse": mse, "r2": r2}
    else:
        lists = []
        for i in ids:
            lists.append(
                RankedList(
                    query_id=str(i),
                    ranking=tuple(preds[i]["ranking"]),
                    relevance={str(k): float(v) for k, v in golds[i]["relevance"].items()},
                )
            )
        k = args.k
        payload = {
            "k": k,
            f"ndcg@{k}": sum(ndcg(rl, k) for rl in lists) / len(lists),
            "ndcg_untruncated": sum(ndcg(rl, max(len(rl.ranking), 1)) for rl in lists) / len(lists),
            "mrr": mrr(lists),
            f"precision@{k}": sum(precision_at_k(rl, k) for rl in lists) / len(lists),
        }
    if args.out:
        cli_io.write_json(args.out, payload)
    print(cli_io.dumps_canonical(payload))
    return 0


def cmd_sweep(args) -> int:
    tok, lex, av, special = cli_io.load_world(args.vocab, args.lexicon)
    run_cfg = cli_io.load_run_config(args.config)
    policy = _policy_from_args(args)
    config = run_cfg.encoder_config(av.total_size)
    corpus = _load_tokenized(args.corpus, "auto", tok, config.max_len)
    val = _load_tokenized(args.val, "auto", tok, config.max_len) if args.val else corpus

    if args.values:
        spec = SweepSpec(
            axis=args.axis,
            values=tuple(args.values.split(",")),
            seeds=tuple(args.seed + i for i in range(args.seeds)),
            epochs=args.epochs,
        )
    else:
        spec = default_spec(args.axis, args.seed, args.seeds, args.epochs)

    report = run_sweep(
        spec,
        corpus,
        val,
        lex,
        av,
        special,
        policy,
        config,
        run_cfg.weights,
        lr=run_cfg.lr,
        workers=args.workers,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cli_io.write_json(out_dir / "sweep.json", report)
    table = format_table(report)
    (out_dir / "sweep.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_selftest(args) -> int:
    rows, all_ok = run_selftest(inject_fault=args.inject_fault)
    print_report(rows)
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="finmlm",
        description="Financial-domain MLM pretraining toolkit",
    )
    parser.add_argument("--version", action="version", version=f"finmlm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-lexicon", help="normalize and index term dictionaries")
    p.add_argument("--dict", nargs="+", required=True, help="term list files")
    p.add_argument("--vocab", required=True, help="base tokenizer vocab file")
    p.add_argument("--out", required=True, help="output lexicon JSON")
    p.set_defaults(func=cmd_build_lexicon)

    p = sub.add_parser("mask", help="materialize a masked dataset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--policy", default=None, help="policy JSON (defaults otherwise)")
    p.add_argument("--stage", choices=[s.value for s in Stage], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--spans", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--format", choices=["auto", "text", "jsonl", "tokens"], default="auto")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("pretrain", help="generator/discriminator pretraining")
    p.add_argument("--corpus", required=True)
    p.add_argument("--val", default=None)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--policy", default=None)
    p.add_argument("--config", default=None, help="run config JSON")
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--word-only-epochs", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--spans", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--stage", default=None, help=argparse.SUPPRESS)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report", default=None, help="write the training report JSON here")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("eval-ppl", help="masked-token perplexity of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--policy", default=None)
    p.add_argument("--stage", choices=[s.value for s in Stage], default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spans", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--dump-logits", default=None, help="write per-position log-probs JSONL")
    p.add_argument("--probe-phrases", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval_ppl)

    p = sub.add_parser("finetune", help="classifier fine-tuning with CE+SCL")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--task-file", required=True, help='JSONL with "text" and "label"')
    p.add_argument("--eval-file", default=None)
    p.add_argument("--lambda", dest="lambda_cls", type=float, default=0.9)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("score", help="score predictions against gold files")
    p.add_argument("--task", choices=["cls", "reg", "rank"], required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="fin-share / stage-split ablation sweeps")
    p.add_argument("--axis", choices=["fin-share", "stage-split"], required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--val", default=None)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--policy", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--values", default=None, help="comma-separated axis values")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="gradient, masking, and metric checks")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
