"""Corpus-level evaluation: derive formats from held-out samples, generate
against them, and assemble the full metric report."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .corpus import DEFAULT_PUNCT, Sample, Vocab, line_final_rhyme_slots
from .decoding import DecodeConfig, generate
from .formats import FormatSpec, derive_symbols, sample_to_spec
from .metrics import (EvalReport, SequenceScorer, distinct, format_f1,
                      integrity, ppl, rhyme_f1, RhymeScore)
from .model import ModelConfig
from .phonetics import PronLexicon


def eval_specs(samples: list[Sample],
               punct: frozenset[str] = DEFAULT_PUNCT,
               rhyme_policy: str = "line-final") -> list[FormatSpec]:
    """The formats ground-truth samples follow; rhyme_policy 'line-final'
    puts every line-final word in one rhyme group, 'none' defines no
    rhyme slots."""
    specs = []
    for s in samples:
        slots = line_final_rhyme_slots(s, punct) if rhyme_policy == "line-final" else set()
        specs.append(sample_to_spec(s, slots, punct=punct))
    return specs


def generate_outputs(params, cfg: ModelConfig, vocab: Vocab,
                     specs: list[FormatSpec],
                     dcfg: DecodeConfig) -> list[list[str]]:
    """One generation per format; per-format seeds derive from the config
    seed so outputs are independent draws yet reproducible."""
    outputs = []
    for i, spec in enumerate(specs):
        d = replace(dcfg, seed=int(np.random.default_rng([dcfg.seed, i]).integers(2**31)))
        ids = generate(params, cfg, vocab, spec, d)
        outputs.append(vocab.decode(ids))
    return outputs


def evaluate_model(params, cfg: ModelConfig, vocab: Vocab,
                   samples: list[Sample], dcfg: DecodeConfig,
                   lex: PronLexicon | None = None,
                   scorer: SequenceScorer | None = None,
                   delta: int = 0, check_punct: bool = True,
                   rhyme_policy: str = "line-final",
                   punct: frozenset[str] = DEFAULT_PUNCT,
                   ) -> tuple[EvalReport, list[list[str]]]:
    """Full report on a held-out corpus: PPL on the ground truth, then all
    generation metrics on outputs for the corpus' own formats."""
    seqs = [
        derive_symbols(s, line_final_rhyme_slots(s, punct) if rhyme_policy == "line-final" else set(),
                       vocab, punct, cfg.ascending_line_pos)
        for s in samples
    ]
    model_ppl = ppl(params, cfg, seqs)
    specs = eval_specs(samples, punct, rhyme_policy)
    outputs = generate_outputs(params, cfg, vocab, specs, dcfg)
    fmt = format_f1(specs, outputs, delta, check_punct, punct)
    rhy = rhyme_f1(specs, outputs, lex) if lex is not None else RhymeScore(0.0, 0.0)
    d = distinct(outputs)
    if scorer is not None:
        imean, istd = integrity(scorer, outputs, punct)
    else:
        imean, istd = float("nan"), float("nan")
    report = EvalReport(
        ppl=model_ppl,
        ma_d1=d.ma_d1, mi_d1=d.mi_d1, ma_d2=d.ma_d2, mi_d2=d.mi_d2,
        format=fmt, rhyme=rhy,
        integrity_mean=imean, integrity_std=istd,
    )
    return report, outputs
