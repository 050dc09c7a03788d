"""Rigid-format specifications and the symbol streams derived from them.

Three per-position symbol streams accompany every token sequence:

* kind      -- what the position holds: a general word, a punctuation
               character, or a rhyme slot;
* line_pos  -- position within the line, counted DOWN so the line-final
               token sits at 0 (the countdown tells the model how close the
               line end is; an ascending variant exists for ablation);
* segment   -- the index of the line the token belongs to.

Streams are built in "display form": one element per token, a separator
element after every line, and a final end-of-sequence element. All streams
share one layout for the four structural ids (pad/bos/sep/eos at 0-3) with
content symbols offset above them.

A small DSL describes formats: one text line per format line, slots
separated by spaces; `_` is a free slot, `_:A` a rhyme slot in group A, a
bare punctuation character a punctuation slot, and any other bare word a
fixed token that must appear verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import (BOS_ID, DEFAULT_PUNCT, EOS, EOS_ID, PAD_ID, RESERVED,
                     SEP, SEP_ID, Sample, Vocab)

# Structural ids shared by all three symbol streams.
SYM_PAD, SYM_BOS, SYM_SEP, SYM_EOS = 0, 1, 2, 3
SYM_OFFSET = 4  # first content symbol

# kind-stream content symbols
KIND_WORD = SYM_OFFSET + 0
KIND_PUNCT = SYM_OFFSET + 1
KIND_RHYME = SYM_OFFSET + 2
KIND_VOCAB = SYM_OFFSET + 3

# Embedding-table caps: lines longer than MAX_LINE_LEN or samples with more
# than MAX_LINES lines are rejected at data load.
MAX_LINE_LEN = 64
MAX_LINES = 64
LINE_POS_VOCAB = SYM_OFFSET + MAX_LINE_LEN
SEG_VOCAB = SYM_OFFSET + MAX_LINES


class FormatError(Exception):
    """Format DSL or symbol-derivation failure, with position when known."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


GENERAL, PUNCT, RHYME, FIXED = "general", "punct", "rhyme", "fixed"


@dataclass(frozen=True)
class Slot:
    kind: str
    value: str | None = None  # punct char, rhyme group id, or fixed token


@dataclass(frozen=True)
class FormatSpec:
    """A parsed rigid format: lines of slots."""

    lines: tuple[tuple[Slot, ...], ...]

    def __post_init__(self):
        if not self.lines or any(not ln for ln in self.lines):
            raise FormatError("format must have >= 1 line, each with >= 1 slot")

    def line_lengths(self) -> list[int]:
        return [len(ln) for ln in self.lines]

    def display_length(self) -> int:
        """Stream length: slots + one separator per line + end marker."""
        return sum(self.line_lengths()) + len(self.lines) + 1

    def global_index(self, line: int, idx: int) -> int:
        """Flat display-form index of slot (line, idx), counting separators."""
        return sum(len(ln) + 1 for ln in self.lines[:line]) + idx

    def rhyme_slots(self) -> dict[tuple[int, int], str]:
        out = {}
        for i, ln in enumerate(self.lines):
            for j, slot in enumerate(ln):
                if slot.kind == RHYME:
                    out[(i, j)] = slot.value
        return out

    def rhyme_groups(self) -> dict[str, list[tuple[int, int]]]:
        groups: dict[str, list[tuple[int, int]]] = {}
        for (i, j), g in sorted(self.rhyme_slots().items()):
            groups.setdefault(g, []).append((i, j))
        return groups

    def degenerate_groups(self) -> list[str]:
        """Rhyme groups used by fewer than two slots."""
        return sorted(g for g, slots in self.rhyme_groups().items() if len(slots) < 2)


def parse_format(dsl: str, punct: frozenset[str] = DEFAULT_PUNCT) -> FormatSpec:
    """Parse the format DSL; errors carry 1-based line/column positions."""
    lines: list[tuple[Slot, ...]] = []
    physical = dsl.splitlines()
    for lineno, raw in enumerate(physical, start=1):
        if not raw.strip():
            continue
        slots: list[Slot] = []
        col = 1
        for piece in raw.split(" "):
            if piece == "":
                col += 1
                continue
            if piece == "_":
                slots.append(Slot(GENERAL))
            elif piece.startswith("_:"):
                group = piece[2:]
                if not group or not group.isalnum():
                    raise FormatError(f"bad rhyme slot {piece!r}", lineno, col)
                slots.append(Slot(RHYME, group))
            elif piece.startswith("_"):
                raise FormatError(f"unknown slot syntax {piece!r}", lineno, col)
            elif len(piece) == 1 and piece in punct:
                slots.append(Slot(PUNCT, piece))
            elif piece in RESERVED:
                raise FormatError(
                    f"reserved marker {piece!r} cannot be a fixed token", lineno, col
                )
            else:
                slots.append(Slot(FIXED, piece))
            col += len(piece) + 1
        if slots:
            lines.append(tuple(slots))
    if not lines:
        raise FormatError("empty format", 1, 1)
    return FormatSpec(tuple(lines))


def render_format(spec: FormatSpec) -> str:
    """Inverse of parse_format (canonical single-space separation)."""
    out = []
    for ln in spec.lines:
        pieces = []
        for slot in ln:
            if slot.kind == GENERAL:
                pieces.append("_")
            elif slot.kind == RHYME:
                pieces.append(f"_:{slot.value}")
            else:
                pieces.append(slot.value)
        out.append(" ".join(pieces))
    return "\n".join(out)


@dataclass
class SymbolSequence:
    """Display-form aligned streams: tokens plus kind/line_pos/segment
    symbols and global positions, all the same length, a separator element
    after each line and an end marker last."""

    token_ids: np.ndarray
    kinds: np.ndarray
    line_pos: np.ndarray
    segments: np.ndarray
    positions: np.ndarray
    tokens: list[str] = field(default_factory=list)
    revealed: np.ndarray | None = None  # token id per position, -1 = hidden

    def __len__(self) -> int:
        return int(self.token_ids.shape[0])

    def streams(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.kinds, self.line_pos, self.segments


def _line_pos_values(n: int, ascending: bool) -> list[int]:
    seq = list(range(n)) if ascending else list(range(n - 1, -1, -1))
    return [SYM_OFFSET + v for v in seq]


def derive_symbols(sample: Sample,
                   rhyme_slots: set[tuple[int, int]],
                   vocab: Vocab,
                   punct: frozenset[str] = DEFAULT_PUNCT,
                   ascending: bool = False) -> SymbolSequence:
    """Build the display-form streams for a sample.

    Every token gets a kind (word/punct/rhyme), a within-line countdown
    position (line-final token at 0; ascending=True flips the direction),
    and its line index; a separator element follows each line and an end
    marker closes the sequence.
    """
    sample.validate()
    if len(sample.lines) > MAX_LINES:
        raise FormatError(f"sample has {len(sample.lines)} lines; cap is {MAX_LINES}")
    for i, line in enumerate(sample.lines):
        if len(line) > MAX_LINE_LEN:
            raise FormatError(f"line {i} has {len(line)} tokens; cap is {MAX_LINE_LEN}")
    for (i, j) in rhyme_slots:
        if i >= len(sample.lines) or j >= len(sample.lines[i]):
            raise FormatError(f"rhyme slot ({i}, {j}) out of range")

    toks: list[str] = []
    ids: list[int] = []
    kinds: list[int] = []
    lpos: list[int] = []
    segs: list[int] = []
    for i, line in enumerate(sample.lines):
        pvals = _line_pos_values(len(line), ascending)
        for j, tok in enumerate(line):
            toks.append(tok)
            ids.append(vocab.id_of(tok))
            if (i, j) in rhyme_slots:
                kinds.append(KIND_RHYME)
            elif tok in punct:
                kinds.append(KIND_PUNCT)
            else:
                kinds.append(KIND_WORD)
            lpos.append(pvals[j])
            segs.append(SYM_OFFSET + i)
        toks.append(SEP)
        ids.append(SEP_ID)
        kinds.append(SYM_SEP)
        lpos.append(SYM_SEP)
        segs.append(SYM_SEP)
    toks.append(EOS)
    ids.append(EOS_ID)
    kinds.append(SYM_EOS)
    lpos.append(SYM_EOS)
    segs.append(SYM_EOS)

    n = len(ids)
    return SymbolSequence(
        token_ids=np.asarray(ids, dtype=np.int64),
        kinds=np.asarray(kinds, dtype=np.int64),
        line_pos=np.asarray(lpos, dtype=np.int64),
        segments=np.asarray(segs, dtype=np.int64),
        positions=np.arange(n, dtype=np.int64),
        tokens=toks,
    )


@dataclass
class FormatStreams:
    """Symbol streams obtained from a FormatSpec alone (no tokens yet)."""

    kinds: np.ndarray
    line_pos: np.ndarray
    segments: np.ndarray
    positions: np.ndarray


class ConstraintError(Exception):
    """A fixed token in the format is not in the vocabulary."""

    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        super().__init__(f"fixed tokens not in vocab: {', '.join(tokens)}")


def spec_to_symbols(spec: FormatSpec, vocab: Vocab,
                    ascending: bool = False) -> tuple[FormatStreams, dict[int, int]]:
    """Derive the kind/line_pos/segment streams a format implies, plus the
    fixed-token constraints as {display index -> token id}."""
    kinds: list[int] = []
    lpos: list[int] = []
    segs: list[int] = []
    fixed: dict[int, int] = {}
    missing: list[str] = []
    pos = 0
    for i, line in enumerate(spec.lines):
        pvals = _line_pos_values(len(line), ascending)
        for j, slot in enumerate(line):
            if slot.kind == RHYME:
                kinds.append(KIND_RHYME)
            elif slot.kind == PUNCT:
                kinds.append(KIND_PUNCT)
            else:
                kinds.append(KIND_WORD)
            if slot.kind == FIXED:
                if slot.value not in vocab:
                    missing.append(slot.value)
                else:
                    fixed[pos] = vocab.id_of(slot.value)
            lpos.append(pvals[j])
            segs.append(SYM_OFFSET + i)
            pos += 1
        kinds.append(SYM_SEP)
        lpos.append(SYM_SEP)
        segs.append(SYM_SEP)
        pos += 1
    kinds.append(SYM_EOS)
    lpos.append(SYM_EOS)
    segs.append(SYM_EOS)
    if missing:
        raise ConstraintError(missing)
    n = len(kinds)
    streams = FormatStreams(
        kinds=np.asarray(kinds, dtype=np.int64),
        line_pos=np.asarray(lpos, dtype=np.int64),
        segments=np.asarray(segs, dtype=np.int64),
        positions=np.arange(n, dtype=np.int64),
    )
    return streams, fixed


def mask_for_pretraining(seq: SymbolSequence, reveal_rate: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Draw the pretraining reveal channel: each general/rhyme position
    independently carries its real token id with probability reveal_rate,
    -1 otherwise. Punctuation and structural elements are never revealed.

    One uniform is drawn per eligible position regardless of outcome, so
    raising reveal_rate under the same seed only ever adds reveals.
    """
    if not 0 <= reveal_rate <= 1:
        raise ValueError("reveal_rate must be in [0, 1]")
    revealed = np.full(len(seq), -1, dtype=np.int64)
    eligible = (seq.kinds == KIND_WORD) | (seq.kinds == KIND_RHYME)
    draws = rng.random(int(eligible.sum()))
    idx = np.flatnonzero(eligible)
    hit = idx[draws < reveal_rate]
    revealed[hit] = seq.token_ids[hit]
    return revealed


def rebuild_format(tokens: list[str], lock: set[int],
                   rhyme: dict[tuple[int, int], str] | None = None,
                   punct: frozenset[str] = DEFAULT_PUNCT) -> FormatSpec:
    """Turn generated output back into a format: locked positions become
    fixed tokens, punctuation becomes punctuation slots, previously rhymed
    positions keep their rhyme group, everything else is free.

    `tokens` is the flat display-form sequence (separator tokens included,
    trailing end marker optional); `lock` holds flat indices.
    """
    toks = list(tokens)
    if toks and toks[-1] == EOS:
        toks = toks[:-1]
    rhyme = rhyme or {}
    for i in lock:
        if i < 0 or i >= len(toks):
            raise FormatError(f"lock index {i} out of range")
        if toks[i] in (SEP, EOS):
            raise FormatError(f"lock index {i} is a separator")
        if toks[i] in RESERVED:
            raise FormatError(f"lock index {i} is a reserved marker")
    lines: list[tuple[Slot, ...]] = []
    current: list[Slot] = []
    line_no = 0
    idx_in_line = 0
    for flat, tok in enumerate(toks):
        if tok == SEP:
            if current:
                lines.append(tuple(current))
            current = []
            line_no += 1
            idx_in_line = 0
            continue
        if flat in lock:
            current.append(Slot(FIXED, tok))
        elif tok in punct:
            current.append(Slot(PUNCT, tok))
        elif (line_no, idx_in_line) in rhyme:
            current.append(Slot(RHYME, rhyme[(line_no, idx_in_line)]))
        else:
            current.append(Slot(GENERAL))
        idx_in_line += 1
    if current:
        lines.append(tuple(current))
    if not lines:
        raise FormatError("no content to rebuild a format from")
    return FormatSpec(tuple(lines))


def sample_to_spec(sample: Sample,
                   rhyme_slots: set[tuple[int, int]] | None = None,
                   group: str = "A",
                   punct: frozenset[str] = DEFAULT_PUNCT) -> FormatSpec:
    """Derive the format a ground-truth sample follows (free slots with
    punctuation pinned; optional rhyme slots all in one group)."""
    rhyme_slots = rhyme_slots or set()
    lines = []
    for i, line in enumerate(sample.lines):
        slots = []
        for j, tok in enumerate(line):
            if (i, j) in rhyme_slots:
                slots.append(Slot(RHYME, group))
            elif tok in punct:
                slots.append(Slot(PUNCT, tok))
            else:
                slots.append(Slot(GENERAL))
        lines.append(tuple(slots))
    return FormatSpec(tuple(lines))
