"""Synthetic corpora with planted financial vocabulary.

Used by the test suite and the sweep harness: documents mix filler words,
single financial words, and multi-word financial phrases; each planted
phrase is preceded by a fixed marker token so phrase prediction has a
learnable signal.
"""

from __future__ import annotations

from pathlib import Path

from .rng import substream
from .tokenizer import Tokenizer, build_word_vocab

FILLERS = [f"w{i:02d}" for i in range(40)]
FIN_WORDS = [
    "asset", "bond", "credit", "debt", "equity",
    "futures", "hedge", "margin", "option", "yield",
]
FIN_PHRASES = [
    "margin call",
    "break even",
    "hedge fund",
    "interest rate",
    "credit default swap",
]
MARKER = "mkr"


def toy_lexicon_lines() -> list[str]:
    lines = ["# toy financial term list"]
    lines.extend(FIN_WORDS)
    lines.extend(FIN_PHRASES)
    return lines


def toy_corpus(
    n_docs: int,
    doc_words: int,
    seed: int,
    fin_frac: float = 0.2,
    phrase_frac: float = 0.08,
    planted_phrases: list[str] | None = None,
) -> list[str]:
    """Documents of exactly ``doc_words`` whitespace tokens each.

    Positions are filled left to right: with phrase_frac a marker plus a
    planted phrase (drawn from planted_phrases, default all), with fin_frac
    a single financial word, otherwise filler.
    """
    rng = substream(seed, "toycorpus")
    phrases = FIN_PHRASES if planted_phrases is None else planted_phrases
    docs: list[str] = []
    for _ in range(n_docs):
        words: list[str] = []
        while len(words) < doc_words:
            u = rng.random()
            if u < phrase_frac:
                phrase = phrases[int(rng.integers(0, len(phrases)))]
                planted = [MARKER] + phrase.split()
                if len(words) + len(planted) <= doc_words:
                    words.extend(planted)
                    continue
            if u < phrase_frac + fin_frac:
                words.append(FIN_WORDS[int(rng.integers(0, len(FIN_WORDS)))])
            else:
                words.append(FILLERS[int(rng.integers(0, len(FILLERS)))])
        docs.append(" ".join(words[:doc_words]))
    return docs


def toy_tokenizer(corpus: list[str]) -> Tokenizer:
    """Word-level tokenizer covering the corpus plus every lexicon word."""
    extra = [MARKER] + FIN_WORDS + [w for p in FIN_PHRASES for w in p.split()] + FILLERS
    return build_word_vocab(corpus, extra_tokens=extra)


def toy_classification(n_per_class: int, seed: int, doc_words: int = 12) -> list[tuple[str, int]]:
    """Linearly separable 2-class texts: class tokens dominate each document."""
    rng = substream(seed, "toycls")
    class_tokens = (["asset", "equity", "yield"], ["debt", "margin", "hedge"])
    data: list[tuple[str, int]] = []
    for label in (0, 1):
        for _ in range(n_per_class):
            words = [
                class_tokens[label][int(rng.integers(0, 3))]
                if rng.random() < 0.7
                else FILLERS[int(rng.integers(0, len(FILLERS)))]
                for _ in range(doc_words)
            ]
            data.append((" ".join(words), label))
    return data


def write_toy_files(
    out_dir: str | Path,
    n_docs: int = 60,
    doc_words: int = 30,
    seed: int = 7,
    fin_frac: float = 0.2,
    phrase_frac: float = 0.08,
) -> dict[str, Path]:
    """Materialize corpus/vocab/lexicon files for CLI runs; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = toy_corpus(n_docs, doc_words, seed, fin_frac, phrase_frac)
    tok = toy_tokenizer(corpus)
    paths = {
        "corpus": out / "corpus.txt",
        "vocab": out / "vocab.txt",
        "lexicon_terms": out / "terms.txt",
    }
    paths["corpus"].write_text("\n".join(corpus) + "\n", encoding="utf-8")
    tok.save(paths["vocab"])
    paths["lexicon_terms"].write_text("\n".join(toy_lexicon_lines()) + "\n", encoding="utf-8")
    return paths
