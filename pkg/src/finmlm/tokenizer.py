"""Fixed whitespace+wordpiece tokenizer backed by a plain vocab file.

The toolkit never trains a tokenizer; it consumes a vocabulary file with one
token per line (continuation pieces prefixed ``##``, BERT-style). Special
tokens are looked up by their conventional surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, InputError

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
_SPECIAL_SURFACES = (PAD, UNK, CLS, SEP, MASK)


@dataclass(frozen=True)
class SpecialTokens:
    """Token ids the masking pipeline must know about."""

    mask_id: int
    unk_id: int
    special_ids: frozenset[int]


class Tokenizer:
    """Whitespace pre-split plus greedy longest-match wordpiece."""

    def __init__(self, tokens: list[str]):
        if len(tokens) != len(set(tokens)):
            raise ConfigError("vocab file contains duplicate tokens")
        self.tokens = list(tokens)
        self.ids = {t: i for i, t in enumerate(tokens)}
        missing = [s for s in _SPECIAL_SURFACES if s not in self.ids]
        if missing:
            raise ConfigError(f"vocab is missing special tokens: {missing}")
        self.pad_id = self.ids[PAD]
        self.unk_id = self.ids[UNK]
        self.cls_id = self.ids[CLS]
        self.sep_id = self.ids[SEP]
        self.mask_id = self.ids[MASK]

    @classmethod
    def load(cls, path: str | Path) -> "Tokenizer":
        p = Path(path)
        try:
            lines = p.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise InputError("cannot read vocab file", str(p)) from exc
        tokens = [ln.rstrip("\n") for ln in lines if ln.strip()]
        if not tokens:
            raise ConfigError(f"vocab file is empty: {p}")
        return cls(tokens)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @property
    def vocab_size(self) -> int:
        return len(self.tokens)

    def special(self) -> SpecialTokens:
        return SpecialTokens(
            mask_id=self.mask_id,
            unk_id=self.unk_id,
            special_ids=frozenset(
                {self.pad_id, self.unk_id, self.cls_id, self.sep_id, self.mask_id}
            ),
        )

    def _wordpiece(self, word: str) -> list[int]:
        # Greedy longest-match-first; a word with no covering is one [UNK].
        pieces: list[int] = []
        start = 0
        while start < len(word):
            end = len(word)
            piece_id = None
            while end > start:
                sub = word[start:end]
                if start > 0:
                    sub = "##" + sub
                if sub in self.ids:
                    piece_id = self.ids[sub]
                    break
                end -= 1
            if piece_id is None:
                return [self.unk_id]
            pieces.append(piece_id)
            start = end
        return pieces

    def tokenize(self, text: str) -> list[int]:
        """Token ids for ``text``, without [CLS]/[SEP] framing."""
        out: list[int] = []
        for word in text.split():
            out.extend(self._wordpiece(word))
        return out

    def encode(self, text: str) -> list[int]:
        """Token ids with [CLS] ... [SEP] framing."""
        return [self.cls_id] + self.tokenize(text) + [self.sep_id]

    def decode(self, ids: list[int]) -> str:
        parts = []
        for i in ids:
            tok = self.tokens[i] if 0 <= i < len(self.tokens) else UNK
            if tok.startswith("##") and parts:
                parts[-1] += tok[2:]
            else:
                parts.append(tok)
        return " ".join(parts)


def build_word_vocab(lines: list[str], extra_tokens: list[str] | None = None) -> Tokenizer:
    """Word-level vocab from raw text lines (toy corpora and tests only).

    Collects whitespace-separated words in first-seen order after the special
    tokens. This is vocabulary *enumeration*, not tokenizer training.
    """
    tokens = list(_SPECIAL_SURFACES)
    seen = set(tokens)
    for line in lines:
        for word in line.split():
            if word not in seen:
                seen.add(word)
                tokens.append(word)
    for tok in extra_tokens or []:
        if tok not in seen:
            seen.add(tok)
            tokens.append(tok)
    return Tokenizer(tokens)
