"""Span and masked-example records plus their JSON-lines wire format."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from ..errors import ContractViolation

IGNORE_LABEL = -100


class SpanKind(enum.IntEnum):
    FINANCIAL_WORD = 1
    FINANCIAL_PHRASE = 2
    GEOMETRIC_SPAN = 3
    WORD = 4


@dataclass(frozen=True)
class SpanRecord:
    """A contiguous masked region [start, end).

    Selection-time records use original-sequence coordinates; the records on
    a MaskedExample use post-collapse coordinates. ``orig_length`` keeps the
    pre-collapse token count (equal to end-start except for collapsed
    phrases), and ``term_id`` identifies the lexicon entry for phrase spans.
    """

    start: int
    end: int
    kind: SpanKind
    target_ids: tuple[int, ...]
    orig_length: int = -1
    term_id: int | None = None

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ContractViolation(f"bad span bounds [{self.start},{self.end})")
        if self.end - self.start != len(self.target_ids):
            raise ContractViolation(
                f"span [{self.start},{self.end}) has {len(self.target_ids)} targets"
            )
        if self.orig_length == -1:
            object.__setattr__(self, "orig_length", self.end - self.start)

    @property
    def left_boundary(self) -> int:
        return self.start - 1

    @property
    def right_boundary(self) -> int:
        return self.end

    @property
    def length(self) -> int:
        return self.end - self.start

    def to_record(self) -> dict:
        return {
            "end": self.end,
            "kind": int(self.kind),
            "orig_length": self.orig_length,
            "start": self.start,
            "target_ids": list(self.target_ids),
            "term_id": -1 if self.term_id is None else self.term_id,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SpanRecord":
        term_id = rec["term_id"]
        return cls(
            start=rec["start"],
            end=rec["end"],
            kind=SpanKind(rec["kind"]),
            target_ids=tuple(rec["target_ids"]),
            orig_length=rec["orig_length"],
            term_id=None if term_id == -1 else term_id,
        )


@dataclass(frozen=True)
class MaskedExample:
    """One corrupted sequence with prediction labels and span bookkeeping.

    labels[i] is IGNORE_LABEL wherever position i was left untouched; at a
    phrase-collapse position it carries the phrase's augmented-vocabulary id.
    replaced_flags marks positions whose input became [MASK], i.e. the
    positions a generator may later substitute.
    """

    input_ids: tuple[int, ...]
    labels: tuple[int, ...]
    spans: tuple[SpanRecord, ...]
    replaced_flags: tuple[bool, ...]

    def __post_init__(self):
        if not (len(self.input_ids) == len(self.labels) == len(self.replaced_flags)):
            raise ContractViolation("input_ids, labels, replaced_flags length mismatch")

    @property
    def masked_positions(self) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab != IGNORE_LABEL]

    def original_length(self) -> int:
        """Length of the sequence before phrase collapse."""
        shrink = sum(
            s.orig_length - s.length
            for s in self.spans
            if s.kind == SpanKind.FINANCIAL_PHRASE
        )
        return len(self.input_ids) + shrink

    def to_record(self) -> dict:
        return {
            "input_ids": list(self.input_ids),
            "labels": list(self.labels),
            "replaced_flags": [int(f) for f in self.replaced_flags],
            "spans": [s.to_record() for s in self.spans],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "MaskedExample":
        return cls(
            input_ids=tuple(rec["input_ids"]),
            labels=tuple(rec["labels"]),
            spans=tuple(SpanRecord.from_record(s) for s in rec["spans"]),
            replaced_flags=tuple(bool(f) for f in rec["replaced_flags"]),
        )
