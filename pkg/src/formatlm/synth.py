"""Synthetic templated corpora for desk-scale experiments.

Samples follow fixed line-length patterns; every line is filler words, one
word from the sample's rhyme family, and terminal punctuation. Rhyme
families are built as onset x rime products ("bay/day/fay...", "bin/din/
fin...") with a matching CMU-format lexicon, so rhyme evaluation has full
coverage by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Sample

ONSETS = [("b", "B"), ("d", "D"), ("f", "F"), ("g", "G"), ("k", "K"),
          ("l", "L"), ("m", "M"), ("n", "N"), ("p", "P"), ("t", "T")]

RIMES = [("ay", ["EY1"]), ("ee", ["IY1"]), ("oh", ["OW1"]),
         ("oo", ["UW1"]), ("in", ["IH1", "N"]), ("ar", ["AA1", "R"]),
         ("ill", ["IH1", "L"]), ("ake", ["EY1", "K"]), ("ite", ["AY1", "T"]),
         ("ore", ["AO1", "R"]), ("une", ["UW1", "N"]), ("ame", ["EY1", "M"])]

FILLERS = [
    ("the", ["DH", "AH0"]), ("a", ["AH0"]), ("cold", ["K", "OW1", "L", "D"]),
    ("warm", ["W", "AO1", "R", "M"]), ("wind", ["W", "IH1", "N", "D"]),
    ("river", ["R", "IH1", "V", "ER0"]), ("moon", ["M", "UW1", "N"]),
    ("stone", ["S", "T", "OW1", "N"]), ("light", ["L", "AY1", "T"]),
    ("shadow", ["SH", "AE1", "D", "OW0"]), ("bird", ["B", "ER1", "D"]),
    ("cloud", ["K", "L", "AW1", "D"]), ("rain", ["R", "EY1", "N"]),
    ("leaf", ["L", "IY1", "F"]), ("song", ["S", "AO1", "NG"]),
    ("dream", ["D", "R", "IY1", "M"]), ("night", ["N", "AY1", "T"]),
    ("morning", ["M", "AO1", "R", "N", "IH0", "NG"]),
    ("silver", ["S", "IH1", "L", "V", "ER0"]), ("green", ["G", "R", "IY1", "N"]),
    ("stream", ["S", "T", "R", "IY1", "M"]), ("valley", ["V", "AE1", "L", "IY0"]),
    ("winter", ["W", "IH1", "N", "T", "ER0"]), ("summer", ["S", "AH1", "M", "ER0"]),
    ("garden", ["G", "AA1", "R", "D", "AH0", "N"]), ("meadow", ["M", "EH1", "D", "OW0"]),
    ("ember", ["EH1", "M", "B", "ER0"]), ("frost", ["F", "R", "AO1", "S", "T"]),
    ("dawn", ["D", "AO1", "N"]), ("dusk", ["D", "AH1", "S", "K"]),
    ("mist", ["M", "IH1", "S", "T"]), ("amber", ["AE1", "M", "B", "ER0"]),
    ("willow", ["W", "IH1", "L", "OW0"]), ("cedar", ["S", "IY1", "D", "ER0"]),
    ("harbor", ["HH", "AA1", "R", "B", "ER0"]), ("lantern", ["L", "AE1", "N", "T", "ER0", "N"]),
    ("velvet", ["V", "EH1", "L", "V", "AH0", "T"]), ("thunder", ["TH", "AH1", "N", "D", "ER0"]),
    ("breeze", ["B", "R", "IY1", "Z"]), ("petal", ["P", "EH1", "T", "AH0", "L"]),
]

DEFAULT_PATTERNS = ((5, 7), (6, 6), (4, 6, 6), (5, 5, 7))


def family_words(n_families: int = len(RIMES),
                 n_onsets: int = len(ONSETS)) -> list[list[str]]:
    return [[onset + rime for onset, _ in ONSETS[:n_onsets]]
            for rime, _ in RIMES[:n_families]]


def lexicon_text(n_families: int = len(RIMES)) -> str:
    """CMU-format pronunciations for every synthetic word."""
    lines = [";;; synthetic lexicon"]
    for rime, tail in RIMES[:n_families]:
        for onset, phone in ONSETS:
            lines.append(f"{(onset + rime).upper()}  {' '.join([phone] + tail)}")
    for word, phones in FILLERS:
        lines.append(f"{word.upper()}  {' '.join(phones)}")
    return "\n".join(lines) + "\n"


@dataclass
class SynthCorpus:
    train: list[Sample]
    dev: list[Sample]
    test: list[Sample]
    patterns: tuple[tuple[int, ...], ...]
    n_families: int

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        from .corpus import save_corpus

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {}
        for split in ("train", "dev", "test"):
            p = out_dir / f"{split}.txt"
            save_corpus(p, getattr(self, split))
            paths[split] = p
        lex = out_dir / "lexicon.txt"
        lex.write_text(lexicon_text(self.n_families), encoding="utf-8")
        paths["lexicon"] = lex
        return paths


def _make_sample(rng: np.random.Generator, pattern: tuple[int, ...],
                 families: list[list[str]], fam_idx: int,
                 fillers: list[str], rhyme_noise: float) -> Sample:
    lines = []
    family = families[fam_idx]
    for li, m in enumerate(pattern):
        assert m >= 3, "pattern lines need filler + rhyme word + punctuation"
        words = [fillers[rng.integers(len(fillers))] for _ in range(m - 2)]
        pool = family
        if li > 0 and rng.random() < rhyme_noise:
            # occasional off-rhyme, like real corpora; keeps the learned
            # rhyme distribution from collapsing to the family alone
            other = (fam_idx + 1 + int(rng.integers(len(families) - 1))) \
                % len(families)
            pool = families[other]
        words.append(pool[rng.integers(len(pool))])
        words.append("." if li == len(pattern) - 1 else ",")
        lines.append(words)
    return Sample(lines)


def build_corpus(n_train: int = 200, n_dev: int = 30, n_test: int = 30,
                 patterns: tuple[tuple[int, ...], ...] = DEFAULT_PATTERNS,
                 n_families: int = len(RIMES),
                 n_onsets: int = len(ONSETS),
                 rhyme_noise: float = 0.0, seed: int = 0) -> SynthCorpus:
    """Deterministic synthetic corpus; dev/test samples reuse the training
    patterns (held-out texts, seen formats)."""
    families = family_words(n_families, n_onsets)
    fillers = [w for w, _ in FILLERS]

    def make(n, salt):
        local = np.random.default_rng([seed, salt])
        out = []
        for i in range(n):
            pattern = patterns[i % len(patterns)]
            fam = int(local.integers(len(families)))
            out.append(_make_sample(local, pattern, families, fam, fillers,
                                    rhyme_noise))
        return out

    return SynthCorpus(
        train=make(n_train, 1),
        dev=make(n_dev, 2),
        test=make(n_test, 3),
        patterns=patterns,
        n_families=n_families,
    )
