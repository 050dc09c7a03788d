#!/usr/bin/env python3
"""Walk through the symbol streams a sample induces.

Every token of a rigid-format text gets three extra symbols: what kind of
slot it fills (word / punctuation / rhyme), how far it is from the end of
its line (a countdown, so the model can feel the line closing), and which
line it belongs to. This script prints the aligned streams for a two-line
example and shows the ascending-position variant used for ablation.
"""

from formatlm.corpus import Sample, build_vocab
from formatlm.formats import derive_symbols

sample = Sample([
    ["love", "is", "not", "love", ","],
    ["bends", "with", "the", "remover", "to", "remove", "."],
])
vocab = build_vocab([sample])
rhyme_slots = {(0, 3), (1, 5)}  # the two line-final words rhyme

seq = derive_symbols(sample, rhyme_slots, vocab)

KIND_NAMES = {0: "pad", 1: "bos", 2: "sep", 3: "eos",
              4: "word", 5: "punct", 6: "rhyme"}

print(f"{'position':>8}  {'token':>10}  {'kind':>6}  {'countdown':>9}  {'line':>4}")
for i in range(len(seq)):
    kind = KIND_NAMES[int(seq.kinds[i])]
    lp = seq.line_pos[i] - 4 if seq.line_pos[i] >= 4 else "-"
    sg = seq.segments[i] - 4 if seq.segments[i] >= 4 else "-"
    print(f"{i:>8}  {seq.tokens[i]:>10}  {kind:>6}  {str(lp):>9}  {str(sg):>4}")

print("\nNote how the countdown hits 0 exactly at each line-final token")
print("(the punctuation), and 1 at the rhyme word right before it.")

asc = derive_symbols(sample, rhyme_slots, vocab, ascending=True)
print("\nAscending variant (ablation): first line countdown becomes",
      [int(v) - 4 for v in asc.line_pos[:5]])
