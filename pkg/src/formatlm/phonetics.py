"""Pronunciation lookups for rhyme checking.

English comes from a CMU-dictionary-format file ("WORD  PH1 PH2 ...", with
"WORD(2)" variants and ";;;" comments); the rhyme unit is the phoneme
suffix from the last primary/secondary-stressed vowel to the end (falling
back to the last vowel of any stress). Chinese comes from a tab-separated
"char<TAB>pinyin" table; the rhyme unit is the syllable final with the tone
stripped and u-umlaut folded into u. Missing entries report None, never a
fabricated unit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class PronLexicon:
    """word -> pronunciation variants. kind 'en' stores phoneme lists,
    kind 'zh' stores pinyin syllables. English lookups are
    case-insensitive."""

    kind: str
    entries: dict[str, list] = field(default_factory=dict)
    skipped: int = 0

    def lookup(self, word: str) -> list | None:
        key = word.upper() if self.kind == "en" else word
        return self.entries.get(key)

    def __contains__(self, word: str) -> bool:
        return self.lookup(word) is not None

    def __len__(self) -> int:
        return len(self.entries)


_VARIANT = re.compile(r"^(.*)\((\d+)\)$")


def load_cmudict(path: str | Path) -> PronLexicon:
    """Parse a CMU-format pronouncing dictionary; variants are retained,
    malformed lines are skipped and counted."""
    lex = PronLexicon(kind="en")
    for raw in Path(path).read_text(encoding="utf-8", errors="replace").splitlines():
        line = raw.strip()
        if not line or line.startswith(";;;"):
            continue
        parts = line.split()
        if len(parts) < 2:
            lex.skipped += 1
            continue
        word = parts[0]
        m = _VARIANT.match(word)
        if m:
            word = m.group(1)
        word = word.upper()
        lex.entries.setdefault(word, []).append(parts[1:])
    return lex


def load_pinyin_table(path: str | Path) -> PronLexicon:
    """Parse a "char<TAB>pinyin" table (tone digits optional; multiple
    readings on extra lines or comma-separated)."""
    lex = PronLexicon(kind="zh")
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or len(parts[0]) != 1:
            lex.skipped += 1
            continue
        char, prons = parts
        for p in prons.split(","):
            p = p.strip()
            if p:
                lex.entries.setdefault(char, []).append(p)
    return lex


def _is_vowel(phone: str) -> bool:
    return phone[:1] in "AEIOU"


def _en_unit(phones: list[str]) -> tuple[str, ...] | None:
    stressed = [i for i, p in enumerate(phones) if p[-1:] in "12"]
    if stressed:
        return tuple(phones[stressed[-1]:])
    vowels = [i for i, p in enumerate(phones) if _is_vowel(p)]
    if vowels:
        return tuple(phones[vowels[-1]:])
    return None


def rhyme_units_en(word: str, lex: PronLexicon) -> set[tuple[str, ...]]:
    """Units across all pronunciation variants (empty set when out of
    lexicon)."""
    prons = lex.lookup(word)
    if prons is None:
        return set()
    units = {_en_unit(p) for p in prons}
    units.discard(None)
    return units


def rhyme_unit_en(word: str, lex: PronLexicon) -> tuple[str, ...] | None:
    """First-variant rhyme unit: phonemes from the last stressed vowel to
    the end. None for out-of-lexicon words."""
    prons = lex.lookup(word)
    if not prons:
        return None
    return _en_unit(prons[0])


_INITIALS = ("zh", "ch", "sh", "b", "p", "m", "f", "d", "t", "n", "l",
             "g", "k", "h", "j", "q", "x", "r", "z", "c", "s", "y", "w")


def pinyin_final(syllable: str) -> str | None:
    """Strip the tone digit and the initial (y/w included); fold u-umlaut
    into u so e.g. yu groups with zhu/du/gu."""
    s = syllable.strip().lower()
    s = re.sub(r"[0-5]$", "", s)
    s = s.replace("ü", "v").replace("u:", "v")
    for ini in _INITIALS:
        if s.startswith(ini) and len(s) > len(ini):
            s = s[len(ini):]
            break
    s = s.replace("v", "u")
    return s or None


def rhyme_units_zh(char: str, lex: PronLexicon) -> set[str]:
    prons = lex.lookup(char)
    if prons is None:
        return set()
    units = {pinyin_final(p) for p in prons}
    units.discard(None)
    return units


def rhyme_unit_zh(char: str, lex: PronLexicon) -> str | None:
    """Tone-stripped syllable final of the first reading; None when the
    character is not in the table."""
    prons = lex.lookup(char)
    if not prons:
        return None
    return pinyin_final(prons[0])


def rhyme_units(word: str, lex: PronLexicon) -> set:
    return rhyme_units_en(word, lex) if lex.kind == "en" else rhyme_units_zh(word, lex)


def rhymes(a: str, b: str, lex: PronLexicon) -> bool:
    """True when any pronunciation variant of a shares a rhyme unit with
    any variant of b. Reflexive for in-lexicon words, symmetric always."""
    return bool(rhyme_units(a, lex) & rhyme_units(b, lex))


def phoneme_overlap(a: str, b: str, lex: PronLexicon) -> int:
    """Diagnostic: longest common stress-stripped phoneme suffix between
    the first pronunciations (0 when either word is missing)."""
    pa, pb = lex.lookup(a), lex.lookup(b)
    if not pa or not pb:
        return 0

    def strip(phones):
        return [re.sub(r"\d$", "", p) for p in phones]

    xa, xb = strip(pa[0]), strip(pb[0])
    n = 0
    while n < min(len(xa), len(xb)) and xa[-1 - n] == xb[-1 - n]:
        n += 1
    return n
