"""Shared file I/O for the CLI: corpora, configs, canonical JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError, InputError
from ..lexicon import Lexicon, augment_vocab
from ..objectives import LossWeights
from ..tinymodel import EncoderConfig
from ..tokenizer import Tokenizer

CONFIG_FORMAT_VERSION = 1


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(dumps_canonical(obj) + "\n", encoding="utf-8")


def _read_lines(path: str | Path) -> list[str]:
    p = Path(path)
    try:
        return p.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError("cannot read file", str(p)) from exc


def read_corpus(path: str | Path, fmt: str = "auto") -> tuple[str, list]:
    """Load a corpus file.

    Formats: "text" (one document per line), "jsonl" (objects with a "text"
    field), "tokens" (objects with a "tokens" field of token ids). "auto"
    sniffs the first non-empty line. Returns ("text", list[str]) or
    ("tokens", list[list[int]]).
    """
    lines = [ln for ln in _read_lines(path) if ln.strip()]
    if not lines:
        raise ConfigError(f"corpus file is empty: {path}")
    if fmt == "auto":
        try:
            first = json.loads(lines[0])
            if isinstance(first, dict) and "tokens" in first:
                fmt = "tokens"
            elif isinstance(first, dict) and "text" in first:
                fmt = "jsonl"
            else:
                fmt = "text"
        except json.JSONDecodeError:
            fmt = "text"
    if fmt == "text":
        return "text", lines
    docs = []
    for i, ln in enumerate(lines):
        try:
            obj = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {i + 1} is not valid JSON ({exc})", str(path)) from exc
        if fmt == "jsonl":
            if "text" not in obj:
                raise InputError(f'line {i + 1} has no "text" field', str(path))
            docs.append(obj["text"])
        else:
            if "tokens" not in obj:
                raise InputError(f'line {i + 1} has no "tokens" field', str(path))
            docs.append([int(t) for t in obj["tokens"]])
    return ("jsonl" if fmt == "jsonl" else "tokens"), docs


def tokenize_corpus(texts: list[str], tok: Tokenizer, max_len: int) -> list[list[int]]:
    """Encode with [CLS]/[SEP] framing, truncating the middle to fit max_len."""
    out = []
    for text in texts:
        ids = tok.encode(text)
        if len(ids) > max_len:
            ids = ids[: max_len - 1] + [tok.sep_id]
        out.append(ids)
    return out


@dataclass
class RunConfig:
    encoder: dict
    weights: LossWeights
    lr: float = 1e-3
    batch_size: int = 8

    def encoder_config(self, vocab_size: int, max_span: int | None = None) -> EncoderConfig:
        kwargs = dict(self.encoder)
        kwargs["vocab_size"] = vocab_size
        return EncoderConfig(**kwargs)


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig(encoder={}, weights=LossWeights())
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError("cannot read config file", str(p)) from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config file is not valid JSON ({exc})", str(p)) from exc
    if data.get("version") != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"unsupported config version: {data.get('version')!r}")
    weights = LossWeights(**data.get("weights", {}))
    train = data.get("train", {})
    return RunConfig(
        encoder=data.get("encoder", {}),
        weights=weights,
        lr=float(train.get("lr", 1e-3)),
        batch_size=int(train.get("batch_size", 8)),
    )


def load_world(vocab_path: str | Path, lexicon_path: str | Path):
    """(tokenizer, lexicon, augmented vocab, special tokens) from files."""
    tok = Tokenizer.load(vocab_path)
    lex = Lexicon.open(lexicon_path)
    av = augment_vocab(tok.vocab_size, lex)
    return tok, lex, av, tok.special()
