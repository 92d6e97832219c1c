"""Domain term dictionary: loading, phrase matching, vocabulary augmentation.

A lexicon is built from plain-text term lists (one term per line, ``#``
starting a comment line), normalized, tokenized with the base tokenizer, and
indexed two ways: single-token terms by their token id, multi-token terms in
an Aho-Corasick automaton over token-id sequences.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, ContractViolation, InputError
from .tokenizer import Tokenizer

log = logging.getLogger(__name__)

LEXICON_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Term:
    """One dictionary entry: a normalized surface and its base tokenization."""

    term_id: int
    surface: str
    token_ids: tuple[int, ...]

    @property
    def is_phrase(self) -> bool:
        return len(self.token_ids) >= 2


@dataclass(frozen=True)
class PhraseOccurrence:
    """A matched term covering tokens[start:end]."""

    start: int
    end: int
    term_id: int

    @property
    def length(self) -> int:
        return self.end - self.start


def normalize(surface: str) -> str:
    """Canonical term form: lowercase, trimmed, single-space-separated."""
    return " ".join(surface.lower().split())


class _AhoCorasick:
    """Multi-pattern matcher over integer sequences.

    Nodes are dicts keyed by token id; failure links are built breadth-first.
    Emits every (end_position, pattern) match during a single left-to-right
    scan.
    """

    def __init__(self, patterns: dict[int, tuple[int, ...]]):
        # goto[node][token] -> node; output[node] -> list of (pattern_len, key)
        self.goto: list[dict[int, int]] = [{}]
        self.fail: list[int] = [0]
        self.output: list[list[tuple[int, int]]] = [[]]
        for key, pattern in patterns.items():
            self._insert(key, pattern)
        self._build_failures()

    def _insert(self, key: int, pattern: tuple[int, ...]) -> None:
        node = 0
        for tok in pattern:
            nxt = self.goto[node].get(tok)
            if nxt is None:
                nxt = len(self.goto)
                self.goto.append({})
                self.fail.append(0)
                self.output.append([])
                self.goto[node][tok] = nxt
            node = nxt
        self.output[node].append((len(pattern), key))

    def _build_failures(self) -> None:
        queue: deque[int] = deque()
        for child in self.goto[0].values():
            self.fail[child] = 0
            queue.append(child)
        while queue:
            node = queue.popleft()
            for tok, child in self.goto[node].items():
                queue.append(child)
                f = self.fail[node]
                while f and tok not in self.goto[f]:
                    f = self.fail[f]
                self.fail[child] = self.goto[f].get(tok, 0)
                self.output[child] = self.output[child] + self.output[self.fail[child]]

    def scan(self, tokens) -> list[tuple[int, int, int]]:
        """All raw matches as (start, end, key), unresolved for overlap."""
        hits: list[tuple[int, int, int]] = []
        node = 0
        for pos, tok in enumerate(tokens):
            tok = int(tok)
            while node and tok not in self.goto[node]:
                node = self.fail[node]
            node = self.goto[node].get(tok, 0)
            for length, key in self.output[node]:
                hits.append((pos + 1 - length, pos + 1, key))
        return hits


class Lexicon:
    """Immutable indexed term dictionary."""

    def __init__(self, terms: list[Term], source_digest: str):
        self.terms = tuple(terms)
        self.source_digest = source_digest
        self.word_index: dict[int, int] = {}
        patterns: dict[int, tuple[int, ...]] = {}
        surfaces = set()
        for term in self.terms:
            if term.surface in surfaces:
                raise ConfigError(f"duplicate normalized surface: {term.surface!r}")
            surfaces.add(term.surface)
            if term.is_phrase:
                patterns[term.term_id] = term.token_ids
            else:
                self.word_index[term.token_ids[0]] = term.term_id
        self._automaton = _AhoCorasick(patterns)
        self._by_id = {t.term_id: t for t in self.terms}

    def term(self, term_id: int) -> Term:
        return self._by_id[term_id]

    @property
    def phrase_terms(self) -> list[Term]:
        return [t for t in self.terms if t.is_phrase]

    def scan_phrases(self, tokens) -> list[tuple[int, int, int]]:
        return self._automaton.scan(tokens)

    def save(self, path: str | Path) -> None:
        payload = {
            "version": LEXICON_FORMAT_VERSION,
            "source_digest": self.source_digest,
            "terms": [
                {"term_id": t.term_id, "surface": t.surface, "token_ids": list(t.token_ids)}
                for t in self.terms
            ],
        }
        Path(path).write_text(
            json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def open(cls, path: str | Path) -> "Lexicon":
        p = Path(path)
        try:
            payload = json.loads(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise InputError("cannot read lexicon file", str(p)) from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"lexicon file is not valid JSON ({exc})", str(p)) from exc
        if not isinstance(payload, dict) or payload.get("version") != LEXICON_FORMAT_VERSION:
            raise InputError(
                f"unsupported lexicon format version {payload.get('version')!r}"
                if isinstance(payload, dict)
                else "lexicon file has no top-level object",
                str(p),
            )
        terms = [
            Term(term_id=int(t["term_id"]), surface=t["surface"], token_ids=tuple(int(i) for i in t["token_ids"]))
            for t in payload["terms"]
        ]
        return cls(terms, source_digest=payload["source_digest"])


def _digest_files(paths: list[Path]) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(p.read_bytes())
        h.update(b"\x00")
    return h.hexdigest()


def load_lexicon(dictionary_files: list[str | Path], tokenizer: Tokenizer) -> Lexicon:
    """Build a Lexicon from term-list files.

    Lines are normalized, deduplicated across all files, sorted, and assigned
    term ids in sorted-surface order. Terms whose tokenization hits [UNK] are
    excluded with a warning: they could never serve as prediction labels.
    """
    paths = [Path(p) for p in dictionary_files]
    for p in paths:
        if not p.is_file():
            raise InputError("dictionary file not readable", str(p))
    digest = _digest_files(paths)

    surfaces: set[str] = set()
    for p in paths:
        for raw in p.read_text(encoding="utf-8").splitlines():
            if raw.lstrip().startswith("#"):
                continue
            surface = normalize(raw)
            if surface:
                surfaces.add(surface)
    if not surfaces:
        raise ConfigError("dictionaries contain no terms after comment stripping")

    terms: list[Term] = []
    skipped: list[str] = []
    term_id = 0
    for surface in sorted(surfaces):
        token_ids = tuple(tokenizer.tokenize(surface))
        if not token_ids or tokenizer.unk_id in token_ids:
            skipped.append(surface)
            continue
        terms.append(Term(term_id=term_id, surface=surface, token_ids=token_ids))
        term_id += 1
    if skipped:
        warnings.warn(
            f"excluded {len(skipped)} term(s) that tokenize to [UNK]: "
            + ", ".join(repr(s) for s in skipped[:5])
            + ("..." if len(skipped) > 5 else ""),
            stacklevel=2,
        )
    if not terms:
        raise ConfigError("no term survived tokenization; check the vocab file")
    return Lexicon(terms, source_digest=digest)


def find_occurrences(tokens, lexicon: Lexicon) -> list[PhraseOccurrence]:
    """All term matches in ``tokens`` under leftmost-longest resolution.

    Single-word terms are reported as length-1 occurrences. The result is
    sorted by start and pairwise non-overlapping: at each position the
    longest match starting there wins, and the scan resumes past its end.
    """
    if len(tokens) == 0:
        raise ContractViolation("find_occurrences requires a non-empty token sequence")
    candidates: dict[int, tuple[int, int, int]] = {}

    def offer(start: int, end: int, term_id: int) -> None:
        # Longest match per start; equal lengths break toward lowest term_id.
        best = candidates.get(start)
        if best is None or (end - start, -term_id) > (best[1] - best[0], -best[2]):
            candidates[start] = (start, end, term_id)

    for start, end, term_id in lexicon.scan_phrases(tokens):
        offer(start, end, term_id)
    for pos, tok in enumerate(tokens):
        term_id = lexicon.word_index.get(int(tok))
        if term_id is not None:
            offer(pos, pos + 1, term_id)

    out: list[PhraseOccurrence] = []
    pos = 0
    n = len(tokens)
    while pos < n:
        best = candidates.get(pos)
        if best is None:
            pos += 1
            continue
        out.append(PhraseOccurrence(start=best[0], end=best[1], term_id=best[2]))
        pos = best[1]
    return out


@dataclass(frozen=True)
class AugmentedVocab:
    """Base vocabulary extended with one new id per lexicon phrase."""

    base_size: int
    phrase_id_of: dict[int, int]

    @property
    def total_size(self) -> int:
        return self.base_size + len(self.phrase_id_of)

    def term_of_phrase_id(self, vocab_id: int) -> int:
        for term_id, vid in self.phrase_id_of.items():
            if vid == vocab_id:
                return term_id
        raise KeyError(vocab_id)


def augment_vocab(base_size: int, lexicon: Lexicon) -> AugmentedVocab:
    """Assign contiguous new ids ≥ base_size to phrase terms, in term order."""
    if base_size <= 0:
        raise ContractViolation("base_size must be positive")
    phrase_id_of = {
        term.term_id: base_size + k for k, term in enumerate(lexicon.phrase_terms)
    }
    return AugmentedVocab(base_size=base_size, phrase_id_of=phrase_id_of)
