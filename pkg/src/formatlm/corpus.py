"""Corpus loading, tokenization, and vocabulary construction.

Corpora are UTF-8 plain text: one clause per physical line, blank line
between samples. Vocabularies are frequency-ordered with five reserved
entries pinned to ids 0-4. No subword segmentation anywhere; char mode
splits every non-whitespace character (CJK), word mode splits on whitespace
with punctuation peeled into standalone tokens.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

PAD, BOS, SEP, EOS, UNK = "<pad>", "<bos>", "</s>", "<eos>", "<unk>"
RESERVED = (PAD, BOS, SEP, EOS, UNK)
PAD_ID, BOS_ID, SEP_ID, EOS_ID, UNK_ID = range(5)

# One shared punctuation class: symbol derivation, decoding constraints and
# format scoring all need the same definition.
DEFAULT_PUNCT = frozenset(",.;:!?") | frozenset("，。；：！？、")


class CorpusError(Exception):
    pass


def tokenize(text: str, mode: str = "word",
             punct: frozenset[str] = DEFAULT_PUNCT) -> list[str]:
    """Split text into tokens. mode='char' takes every non-whitespace
    character; mode='word' splits on whitespace and peels punctuation
    characters into standalone tokens (apostrophes stay word-internal)."""
    if mode == "char":
        return [ch for ch in text if not ch.isspace()]
    if mode != "word":
        raise ValueError(f"unknown tokenize mode: {mode!r}")
    tokens: list[str] = []
    for chunk in text.split():
        buf = ""
        for ch in chunk:
            if ch in punct:
                if buf:
                    tokens.append(buf)
                    buf = ""
                tokens.append(ch)
            else:
                buf += ch
        if buf:
            tokens.append(buf)
    return tokens


def detokenize(tokens: list[str], mode: str = "word") -> str:
    return ("" if mode == "char" else " ").join(tokens)


@dataclass
class Sample:
    """One text sample: a list of clause/sentence token lists, terminal
    punctuation kept as its own token."""

    lines: list[list[str]]

    def validate(self) -> None:
        if not self.lines:
            raise CorpusError("sample has no lines")
        for line in self.lines:
            if not line:
                raise CorpusError("sample contains an empty line")
            for tok in line:
                if tok in RESERVED:
                    raise CorpusError(f"reserved marker {tok!r} in sample")

    def all_tokens(self) -> list[str]:
        return [tok for line in self.lines for tok in line]


def load_corpus(path: str | Path, mode: str = "word",
                punct: frozenset[str] = DEFAULT_PUNCT) -> tuple[list[Sample], int]:
    """Read blank-line-separated samples. Returns (samples, skipped) where
    skipped counts empty blocks. Raises CorpusError on unreadable files or
    reserved markers in the data."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    samples: list[Sample] = []
    skipped = 0
    if not text.strip():
        return samples, skipped
    # leading/trailing blank lines are ignored; interior empty blocks count
    # as skipped zero-line samples
    for block in text.strip("\n").split("\n\n"):
        lines = [tokenize(ln, mode, punct) for ln in block.splitlines() if ln.strip()]
        lines = [ln for ln in lines if ln]
        if not lines:
            skipped += 1
            continue
        sample = Sample(lines)
        sample.validate()
        samples.append(sample)
    return samples, skipped


def save_corpus(path: str | Path, samples: list[Sample], mode: str = "word") -> None:
    blocks = ["\n".join(detokenize(line, mode) for line in s.lines) for s in samples]
    Path(path).write_text("\n\n".join(blocks) + "\n", encoding="utf-8")


@dataclass
class Vocab:
    """Token <-> id bijection with ids 0-4 pinned to the reserved markers."""

    tokens: list[str]
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:5]) != RESERVED:
            raise CorpusError("vocab must start with the 5 reserved tokens")
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise CorpusError("vocab contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    def encode(self, tokens: list[str]) -> list[int]:
        return [self._index.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return Vocab([ln for ln in lines if ln != ""])


def build_vocab(samples: list[Sample], min_freq: int = 1) -> Vocab:
    """Frequency-ordered vocab (desc, ties lexicographic) over all tokens
    with frequency >= min_freq, after the reserved block."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter()
    for sample in samples:
        counts.update(sample.all_tokens())
    kept = [t for t, c in counts.items() if c >= min_freq and t not in RESERVED]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocab(list(RESERVED) + kept)


def line_final_rhyme_slots(sample: Sample,
                           punct: frozenset[str] = DEFAULT_PUNCT) -> set[tuple[int, int]]:
    """Mark the last non-punctuation token of every line as a rhyme slot.
    Lines made only of punctuation contribute nothing."""
    slots: set[tuple[int, int]] = set()
    for i, line in enumerate(sample.lines):
        for j in range(len(line) - 1, -1, -1):
            if line[j] not in punct:
                slots.add((i, j))
                break
    return slots
