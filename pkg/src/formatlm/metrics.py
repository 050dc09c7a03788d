"""Automatic evaluation: perplexity, Distinct, format F1, rhyme F1, and
sentence integrity.

Outputs are flat display-form token lists (separator tokens included).
Format and rhyme scores align the generated sentences with the format's
sentences from the beginning; Macro variants average per-sample scores,
Micro variants pool counts over the corpus.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .corpus import DEFAULT_PUNCT, EOS, RESERVED, SEP, Vocab
from .formats import FormatSpec, SymbolSequence
from .model import ModelConfig, causal_next_probs, corpus_mean_nll
from .phonetics import PronLexicon, rhyme_units


def split_sentences(tokens: list[str]) -> list[list[str]]:
    """Split a flat output at separator tokens; the end marker and empty
    sentences are dropped."""
    sents: list[list[str]] = []
    cur: list[str] = []
    for tok in tokens:
        if tok == SEP:
            if cur:
                sents.append(cur)
            cur = []
        elif tok == EOS:
            break
        else:
            cur.append(tok)
    if cur:
        sents.append(cur)
    return sents


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass
class FormatScore:
    ma_f1: float
    mi_f1: float
    precision: float
    recall: float


def format_f1(specs: list[FormatSpec], outputs: list[list[str]],
              delta: int = 0, check_punct: bool = True,
              punct: frozenset[str] = DEFAULT_PUNCT) -> FormatScore:
    """A generated sentence matches its format sentence when their lengths
    differ by at most delta and (optionally) their punctuation characters
    coincide, aligning from the beginning. Precision is over generated
    sentences, recall over format sentences."""
    per_f1 = []
    tot_ok = tot_n = tot_m = 0
    for spec, out in zip(specs, outputs):
        want = [list(line) for line in spec.lines]
        got = split_sentences(out)
        ok = 0
        for w, g in zip(want, got):
            if abs(len(w) - len(g)) > delta:
                continue
            if check_punct:
                wp = [s.value for s in w if s.kind == "punct"]
                gp = [t for t in g if t in punct]
                if wp != gp:
                    continue
            ok += 1
        n, m = len(got), len(want)
        p = ok / n if n else 0.0
        r = ok / m if m else 0.0
        per_f1.append(_f1(p, r))
        tot_ok += ok
        tot_n += n
        tot_m += m
    mp = tot_ok / tot_n if tot_n else 0.0
    mr = tot_ok / tot_m if tot_m else 0.0
    ma = float(np.mean(per_f1)) if per_f1 else 0.0
    return FormatScore(ma_f1=ma, mi_f1=_f1(mp, mr), precision=mp, recall=mr)


@dataclass
class RhymeScore:
    ma_f1: float
    mi_f1: float


def _group_counts(slots, sents, lex) -> tuple[int, int, int]:
    """(correct, produced, expected) for one rhyme group: the modal rhyme
    unit among the produced words is the reference; out-of-lexicon words
    can never match it."""
    produced: list[set] = []
    n_produced = 0
    for (line, idx) in slots:
        if line < len(sents) and idx < len(sents[line]):
            n_produced += 1
            produced.append(rhyme_units(sents[line][idx], lex))
    votes: Counter = Counter()
    for units in produced:
        votes.update(units)
    if not votes:
        return 0, n_produced, len(slots)
    modal = sorted(votes.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
    correct = sum(1 for units in produced if modal in units)
    return correct, n_produced, len(slots)


def rhyme_f1(specs: list[FormatSpec], outputs: list[list[str]],
             lex: PronLexicon) -> RhymeScore:
    """Group-by-group rhyme agreement over the rhyme slots the formats
    define. Precision is over produced rhyme slots, recall over expected
    slots (missing and out-of-lexicon words count as missed)."""
    per_f1 = []
    tot_c = tot_p = tot_e = 0
    for spec, out in zip(specs, outputs):
        sents = split_sentences(out)
        c = p = e = 0
        for slots in spec.rhyme_groups().values():
            gc, gp, ge = _group_counts(slots, sents, lex)
            c, p, e = c + gc, p + gp, e + ge
        if e == 0:
            continue  # format defines no rhyme; nothing to score
        prec = c / p if p else 0.0
        rec = c / e
        per_f1.append(_f1(prec, rec))
        tot_c, tot_p, tot_e = tot_c + c, tot_p + p, tot_e + e
    mp = tot_c / tot_p if tot_p else 0.0
    mr = tot_c / tot_e if tot_e else 0.0
    ma = float(np.mean(per_f1)) if per_f1 else 0.0
    return RhymeScore(ma_f1=ma, mi_f1=_f1(mp, mr))


@dataclass
class DistinctScore:
    ma_d1: float
    mi_d1: float
    ma_d2: float
    mi_d2: float


def _ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def distinct(outputs: list[list[str]]) -> DistinctScore:
    """distinct-n = unique n-grams / total n-grams. Macro averages the
    per-sample ratio (samples too short for an n-gram are excluded); Micro
    pools n-grams over the whole corpus. Reserved markers are not text and
    are dropped first."""
    scores = {}
    for n in (1, 2):
        per = []
        pool: set = set()
        total = 0
        for out in outputs:
            toks = [t for t in out if t not in RESERVED]
            grams = _ngrams(toks, n)
            if grams:
                per.append(len(set(grams)) / len(grams))
                pool.update(grams)
                total += len(grams)
        scores[f"ma_d{n}"] = float(np.mean(per)) if per else 0.0
        scores[f"mi_d{n}"] = len(pool) / total if total else 0.0
    return DistinctScore(**scores)


def ppl(params, cfg: ModelConfig, seqs: list[SymbolSequence],
        batch_size: int = 16) -> float:
    """exp(mean token NLL) over an encoded corpus, padding excluded."""
    return float(np.exp(corpus_mean_nll(params, cfg, seqs, batch_size)))


class SequenceScorer(Protocol):
    """Any causal LM exposing next-token probability for a prefix."""

    def token_prob(self, prefix: list[str], token: str) -> float: ...


class ModelScorer:
    """Integrity scorer backed by a checkpoint of this package's own
    causal-LM ablation."""

    def __init__(self, params, cfg: ModelConfig, vocab: Vocab):
        self.params = params
        self.cfg = cfg
        self.vocab = vocab

    def token_prob(self, prefix: list[str], token: str) -> float:
        probs = causal_next_probs(self.params, self.cfg,
                                  self.vocab.encode(prefix))
        return float(probs[self.vocab.id_of(token)])


def integrity(scorer: SequenceScorer, outputs: list[list[str]],
              punct: frozenset[str] = DEFAULT_PUNCT) -> tuple[float, float]:
    """Sentence-closure quality: 2 to the negative mean base-2 log
    probability of each sentence-final punctuation token given its prefix
    (lower is better; 1 is perfect). A sentence without final punctuation
    contributes the probability of its actual final token. Returns
    (mean, std) over samples."""
    values = []
    for out in outputs:
        sents = split_sentences(out)
        if not sents:
            continue
        logs = []
        prefix: list[str] = []
        for sent in sents:
            # the punctuation position: last token, whatever it is
            upto = prefix + sent[:-1]
            p = scorer.token_prob(upto, sent[-1])
            logs.append(math.log2(p) if p > 0 else -math.inf)
            prefix = prefix + sent + [SEP]
        values.append(2.0 ** (-float(np.mean(logs))))
    if not values:
        raise ValueError("no sentences to score")
    return float(np.mean(values)), float(np.std(values))


@dataclass
class EvalReport:
    """Per-corpus metric bundle."""

    ppl: float
    ma_d1: float
    mi_d1: float
    ma_d2: float
    mi_d2: float
    format: FormatScore
    rhyme: RhymeScore
    integrity_mean: float
    integrity_std: float

    def as_flat(self) -> dict[str, float]:
        return {
            "ppl": self.ppl,
            "ma_d1": self.ma_d1, "mi_d1": self.mi_d1,
            "ma_d2": self.ma_d2, "mi_d2": self.mi_d2,
            "format_ma_f1": self.format.ma_f1,
            "format_mi_f1": self.format.mi_f1,
            "format_precision": self.format.precision,
            "format_recall": self.format.recall,
            "rhyme_ma_f1": self.rhyme.ma_f1,
            "rhyme_mi_f1": self.rhyme.mi_f1,
            "integrity_mean": self.integrity_mean,
            "integrity_std": self.integrity_std,
        }

    def as_text(self) -> str:
        return "\n".join(f"{k} {v:.6f}" for k, v in self.as_flat().items()) + "\n"

    def as_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(self.as_text(), encoding="utf-8")
        path.with_suffix(path.suffix + ".json").write_text(self.as_json(),
                                                           encoding="utf-8")
