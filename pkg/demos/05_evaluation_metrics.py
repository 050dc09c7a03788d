#!/usr/bin/env python3
"""The metric suite on a trained model: PPL, Distinct, format F1, rhyme F1
and sentence integrity, assembled into one report.

The integrity scorer is a second model trained with all symbol channels
ablated (a plain causal LM over the same corpus)."""

import tempfile
from pathlib import Path

from formatlm.corpus import build_vocab, line_final_rhyme_slots
from formatlm.decoding import DecodeConfig
from formatlm.evaluate import evaluate_model
from formatlm.formats import derive_symbols
from formatlm.metrics import ModelScorer
from formatlm.model import ModelConfig, load_checkpoint
from formatlm.phonetics import load_cmudict
from formatlm.synth import build_corpus, lexicon_text
from formatlm.training import TrainConfig, fit

corpus = build_corpus(n_train=120, n_dev=15, n_test=15, seed=2)
vocab = build_vocab(corpus.train + corpus.dev + corpus.test)

def seqs(samples, causal=False):
    return [derive_symbols(s, line_final_rhyme_slots(s), vocab)
            for s in samples]

def train(causal, steps, seed):
    cfg = ModelConfig(vocab_size=len(vocab), layers=2, d_model=64, heads=2,
                      d_ff=256, max_len=64, dropout=0.0,
                      use_kinds=not causal, use_line_pos=not causal,
                      use_segments=not causal)
    with tempfile.TemporaryDirectory() as tmp:
        result = fit(seqs(corpus.train), [], cfg,
                     TrainConfig(max_steps=steps, warmup_steps=200,
                                 batch_size=16, seed=seed,
                                 checkpoint_every=0), tmp)
        _, params, _, _ = load_checkpoint(result.final_path)
    return params, cfg

print("training the format-aware model...")
params, cfg = train(causal=False, steps=700, seed=0)
print("training the causal-LM integrity scorer...")
s_params, s_cfg = train(causal=True, steps=700, seed=9)

with tempfile.TemporaryDirectory() as tmp:
    lex_path = Path(tmp) / "lexicon.txt"
    lex_path.write_text(lexicon_text(), encoding="utf-8")
    lex = load_cmudict(lex_path)

report, outputs = evaluate_model(
    params, cfg, vocab, corpus.test, DecodeConfig(k=32, seed=0), lex,
    scorer=ModelScorer(s_params, s_cfg, vocab))

print("\nheld-out report:")
print(report.as_text())
