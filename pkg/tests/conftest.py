from __future__ import annotations

import pytest

from finmlm.lexicon import augment_vocab, load_lexicon
from finmlm.toydata import toy_corpus, toy_lexicon_lines, toy_tokenizer


@pytest.fixture(scope="session")
def toy_world(tmp_path_factory):
    """Shared tokenizer/lexicon/vocab built from the toy term list."""
    tmp = tmp_path_factory.mktemp("world")
    terms = tmp / "terms.txt"
    terms.write_text("\n".join(toy_lexicon_lines()) + "\n", encoding="utf-8")
    corpus = toy_corpus(20, 30, seed=1)
    tok = toy_tokenizer(corpus)
    lex = load_lexicon([terms], tok)
    av = augment_vocab(tok.vocab_size, lex)
    return {
        "tok": tok,
        "lex": lex,
        "vocab": av,
        "special": tok.special(),
        "terms_path": terms,
    }
