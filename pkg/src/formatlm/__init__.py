"""Format- and rhyme-constrained text generation.

A character/word-level autoregressive transformer whose inputs carry
per-position format symbols (slot kind, within-line countdown, line index)
and whose layers attend both causally over the tokens and globally over a
fixed summary of the format, so generation can satisfy arbitrary rigid
formats, rhyme schemes, and partial pre-defined content (polishing).
"""

from .corpus import (Sample, Vocab, build_vocab, load_corpus, save_corpus,
                     tokenize, detokenize, line_final_rhyme_slots)
from .decoding import (DecodeConfig, beam_search, generate, polish,
                       top_k_sample)
from .evaluate import evaluate_model
from .formats import (FormatSpec, SymbolSequence, derive_symbols,
                      mask_for_pretraining, parse_format, rebuild_format,
                      render_format, sample_to_spec, spec_to_symbols)
from .metrics import (EvalReport, distinct, format_f1, integrity, ppl,
                      rhyme_f1, ModelScorer)
from .model import (ModelConfig, forward, init_params, load_checkpoint,
                    nll, save_checkpoint)
from .phonetics import (PronLexicon, load_cmudict, load_pinyin_table,
                        rhyme_unit_en, rhyme_unit_zh, rhymes)
from .training import TrainConfig, fit, noam_lr, train_step

__version__ = "0.1.0"
