#!/usr/bin/env python3
"""Rhyme units from pronunciation lexicons.

English: the phoneme suffix from the last stressed vowel of a CMU-format
entry. Chinese: the pinyin syllable final with the tone stripped. Two words
rhyme when any pronunciation variants share a unit.
"""

import tempfile
from pathlib import Path

from formatlm.phonetics import (load_cmudict, load_pinyin_table,
                                phoneme_overlap, rhyme_unit_en,
                                rhyme_unit_zh, rhymes)

CMU = """\
ASLEEP  AH0 S L IY1 P
STEEP  S T IY1 P
MINDS  M AY1 N D Z
FINDS  F AY1 N D Z
REMOVE  R IH0 M UW1 V
LOVE  L AH1 V
READ  R IY1 D
READ(2)  R EH1 D
RED  R EH1 D
"""

PINYIN = "竹\tzhu2\n鱼\tyu2\n独\tdu2\n谷\tgu3\n马\tma3\n"

with tempfile.TemporaryDirectory() as tmp:
    cmu_path = Path(tmp) / "cmu.txt"
    cmu_path.write_text(CMU, encoding="utf-8")
    en = load_cmudict(cmu_path)
    pin_path = Path(tmp) / "pinyin.tsv"
    pin_path.write_text(PINYIN, encoding="utf-8")
    zh = load_pinyin_table(pin_path)

print("English rhyme units (suffix from last stressed vowel):")
for w in ("asleep", "steep", "minds", "finds", "remove", "love"):
    print(f"  {w:>8} -> {rhyme_unit_en(w, en)}")
print("  asleep/steep rhyme:", rhymes("asleep", "steep", en))
print("  minds/finds rhyme: ", rhymes("minds", "finds", en))
print("  love/remove rhyme: ", rhymes("love", "remove", en),
      f"(raw suffix overlap {phoneme_overlap('love', 'remove', en)} phoneme)")
print("  read/red rhyme (via variant):", rhymes("read", "red", en))

print("\nChinese finals (tone stripped):")
for c in "竹鱼独谷马":
    print(f"  {c} -> {rhyme_unit_zh(c, zh)}")
print("  竹/独/谷 mutually rhyme:",
      rhymes("竹", "独", zh) and rhymes("独", "谷", zh))
