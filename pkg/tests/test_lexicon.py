from __future__ import annotations

import numpy as np
import pytest

from finmlm.errors import ConfigError, InputError
from finmlm.lexicon import (
    Lexicon,
    Term,
    augment_vocab,
    find_occurrences,
    load_lexicon,
    normalize,
)
from finmlm.tokenizer import build_word_vocab


def brute_force_occurrences(tokens, lexicon):
    """O(n*m) reference matcher: every term at every position, then
    leftmost-longest resolution (ties to the lowest term id)."""
    n = len(tokens)
    out = []
    pos = 0
    while pos < n:
        best = None
        for term in lexicon.terms:
            L = len(term.token_ids)
            if pos + L <= n and tuple(tokens[pos : pos + L]) == term.token_ids:
                if best is None or L > len(best.token_ids):
                    best = term
        if best is None:
            pos += 1
        else:
            out.append((pos, pos + len(best.token_ids), best.term_id))
            pos += len(best.token_ids)
    return out


def test_normalize_rules():
    assert normalize("  Margin   Call ") == "margin call"
    assert normalize("BREAK-EVEN") == "break-even"
    assert normalize("") == ""


def test_load_from_spec_phrases(tmp_path):
    vocab = build_word_vocab(["margin call break-even analysis"])
    f = tmp_path / "d.txt"
    f.write_text("margin call\nbreak-even analysis\n", encoding="utf-8")
    lex = load_lexicon([f], vocab)
    assert len(lex.terms) == 2
    assert all(t.is_phrase for t in lex.terms)


def test_load_collapses_normalized_duplicates(tmp_path):
    vocab = build_word_vocab(["margin call"])
    f = tmp_path / "d.txt"
    f.write_text("Margin  Call\nmargin call\n", encoding="utf-8")
    lex = load_lexicon([f], vocab)
    assert len(lex.terms) == 1
    assert lex.terms[0].surface == "margin call"


def test_load_empty_after_comments_is_config_error(tmp_path):
    vocab = build_word_vocab(["x"])
    f = tmp_path / "d.txt"
    f.write_text("# just a comment\n\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_lexicon([f], vocab)


def test_load_missing_file_is_input_error(tmp_path):
    vocab = build_word_vocab(["x"])
    with pytest.raises(InputError) as err:
        load_lexicon([tmp_path / "nope.txt"], vocab)
    assert "nope.txt" in str(err.value)


def test_unknown_token_terms_excluded_with_warning(tmp_path):
    vocab = build_word_vocab(["margin call"])
    f = tmp_path / "d.txt"
    f.write_text("margin call\nzzz-unknown-term\n", encoding="utf-8")
    with pytest.warns(UserWarning, match="excluded 1"):
        lex = load_lexicon([f], vocab)
    assert [t.surface for t in lex.terms] == ["margin call"]


def test_term_ids_follow_sorted_surfaces(tmp_path):
    vocab = build_word_vocab(["zeta alpha margin call"])
    f = tmp_path / "d.txt"
    f.write_text("zeta\nalpha\nmargin call\n", encoding="utf-8")
    lex = load_lexicon([f], vocab)
    assert [t.surface for t in lex.terms] == ["alpha", "margin call", "zeta"]
    assert [t.term_id for t in lex.terms] == [0, 1, 2]


def test_load_deterministic_digest_and_order(tmp_path, toy_world):
    lex1 = load_lexicon([toy_world["terms_path"]], toy_world["tok"])
    lex2 = load_lexicon([toy_world["terms_path"]], toy_world["tok"])
    assert lex1.source_digest == lex2.source_digest
    assert [t.surface for t in lex1.terms] == [t.surface for t in lex2.terms]


def test_find_occurrences_spec_examples(toy_world):
    tok, lex = toy_world["tok"], toy_world["lex"]
    ids = tok.tokenize("w00 margin call w01")
    occ = find_occurrences(ids, lex)
    assert [(o.start, o.end) for o in occ] == [(1, 3)]
    assert lex.term(occ[0].term_id).surface == "margin call"

    assert find_occurrences(tok.tokenize("w00 w01 w02"), lex) == []

    ids = tok.tokenize("break even w03 margin call")
    occ = find_occurrences(ids, lex)
    assert [(o.start, o.end) for o in occ] == [(0, 2), (3, 5)]


def test_occurrence_tokens_match_their_term(toy_world):
    tok, lex = toy_world["tok"], toy_world["lex"]
    ids = tok.tokenize("hedge fund margin call credit default swap margin")
    for occ in find_occurrences(ids, lex):
        assert tuple(ids[occ.start : occ.end]) == lex.term(occ.term_id).token_ids


def test_leftmost_longest_prefers_phrase_over_word(toy_world):
    tok, lex = toy_world["tok"], toy_world["lex"]
    # "margin" alone is a term, but "margin call" must win at its start
    ids = tok.tokenize("margin call")
    occ = find_occurrences(ids, lex)
    assert len(occ) == 1 and occ[0].length == 2


def test_find_occurrences_equals_brute_force_randomized(toy_world):
    lex = toy_world["lex"]
    rng = np.random.default_rng(42)
    # ids drawn over the full base vocab so phrase fragments appear
    hi = toy_world["tok"].vocab_size
    for _ in range(300):
        n = int(rng.integers(1, 512))
        tokens = rng.integers(5, hi, size=n).tolist()
        got = [(o.start, o.end, o.term_id) for o in find_occurrences(tokens, lex)]
        assert got == brute_force_occurrences(tokens, lex)


def test_occurrences_non_overlapping_property(toy_world):
    lex = toy_world["lex"]
    rng = np.random.default_rng(7)
    hi = toy_world["tok"].vocab_size
    for _ in range(100):
        tokens = rng.integers(5, hi, size=int(rng.integers(1, 128))).tolist()
        occ = find_occurrences(tokens, lex)
        for a, b in zip(occ, occ[1:]):
            assert a.end <= b.start


def test_augment_vocab_counting(toy_world):
    lex = toy_world["lex"]
    av = augment_vocab(100, lex)
    n_phrases = len(lex.phrase_terms)
    assert av.total_size == 100 + n_phrases
    ids = sorted(av.phrase_id_of.values())
    assert ids == list(range(100, 100 + n_phrases))
    # bijection onto the contiguous range
    assert len(set(av.phrase_id_of.values())) == n_phrases


def test_augment_vocab_no_phrases(tmp_path):
    vocab = build_word_vocab(["margin"])
    f = tmp_path / "d.txt"
    f.write_text("margin\n", encoding="utf-8")
    lex = load_lexicon([f], vocab)
    av = augment_vocab(50, lex)
    assert av.total_size == 50


def test_augment_vocab_counts_phrases_in_large_dictionary(tmp_path):
    """Generated dictionary of mixed words/phrases: total = base + #phrases."""
    rng = np.random.default_rng(6)
    words = [f"tok{i}" for i in range(400)]
    vocab = build_word_vocab([" ".join(words)])
    terms = []
    n_phrases = 0
    for i in range(0, 360, 2):
        if rng.random() < 0.4:
            terms.append(f"{words[i]} {words[i + 1]}")
            n_phrases += 1
        else:
            terms.append(words[i])
    f = tmp_path / "big.txt"
    f.write_text("\n".join(terms) + "\n", encoding="utf-8")
    lex = load_lexicon([f], vocab)
    assert len(lex.terms) == len(terms)
    av = augment_vocab(vocab.vocab_size, lex)
    assert len(lex.phrase_terms) == n_phrases
    assert av.total_size == vocab.vocab_size + n_phrases


def test_lexicon_round_trip(tmp_path, toy_world):
    lex = toy_world["lex"]
    path = tmp_path / "lex.json"
    lex.save(path)
    lex2 = Lexicon.open(path)
    assert lex2.source_digest == lex.source_digest
    assert lex2.terms == lex.terms
    lex2.save(tmp_path / "lex2.json")
    assert (tmp_path / "lex.json").read_bytes() == (tmp_path / "lex2.json").read_bytes()


def test_lexicon_open_rejects_garbage(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("not json", encoding="utf-8")
    with pytest.raises(InputError):
        Lexicon.open(p)
    p.write_text('{"version": 99, "terms": [], "source_digest": ""}', encoding="utf-8")
    with pytest.raises(InputError):
        Lexicon.open(p)


def test_duplicate_surfaces_rejected():
    terms = [
        Term(term_id=0, surface="margin", token_ids=(7,)),
        Term(term_id=1, surface="margin", token_ids=(8,)),
    ]
    with pytest.raises(ConfigError):
        Lexicon(terms, source_digest="x")
