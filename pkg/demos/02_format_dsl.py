#!/usr/bin/env python3
"""The format DSL: free slots, rhyme groups, punctuation, fixed words.

A format is text: one line per output line, `_` for a free slot, `_:A` for
a slot in rhyme group A, a bare punctuation mark for a pinned punctuation
slot, and any other word for a token that must appear verbatim. Formats can
also be rebuilt from generated output with chosen tokens locked, which is
how iterative polishing works.
"""

from formatlm.formats import parse_format, rebuild_format, render_format, spec_to_symbols
from formatlm.corpus import Sample, build_vocab

dsl = """\
_ _ _ _:A ,
_ _ _ _ _ _:A ."""

spec = parse_format(dsl)
print("parsed lines:", spec.line_lengths())
print("rhyme slots:", spec.rhyme_slots())
print("round trip:\n" + render_format(spec))

# a format with pre-defined content (the polishing input)
partial = parse_format("_ _ _ love ,\nbends _ _ _ _ remove .")
vocab = build_vocab([Sample([["love", "bends", "remove", ",", "."]])])
streams, fixed = spec_to_symbols(partial, vocab)
print("\npartial format fixed-token constraints (flat index -> token id):")
print(" ", {k: vocab.token_of(v) for k, v in fixed.items()})

# rebuilding a format from generated text, locking one word
output = ["love", "is", "not", "love", ",", "</s>"]
locked = rebuild_format(output, {3})
print("\nrebuilt format with position 3 locked:")
print(" ", render_format(locked))
