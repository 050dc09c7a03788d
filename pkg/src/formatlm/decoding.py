"""Format-conditioned generation.

Both decoders walk the format's display positions left to right. Fixed
tokens are always emitted verbatim (forced, never sampled). With hard
constraints on, punctuation slots, separators and the end marker are forced
too and reserved markers are barred from free slots, so the output matches
the format by construction; without them only fixed slots are forced and
format compliance is whatever the model learned. When the symbol streams
run out the sequence is closed with the end marker; an early end marker in
soft mode stops generation.

The decoding cores take a `next_logits(prefix_ids, position)` callback, so
tests can drive them from hand-built probability tables as well as from the
model.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .corpus import (BOS_ID, DEFAULT_PUNCT, EOS_ID, PAD_ID, SEP_ID, UNK_ID,
                     Vocab)
from .formats import (FIXED, PUNCT, RHYME, SYM_BOS, ConstraintError,
                      FormatSpec, FormatStreams, rebuild_format,
                      spec_to_symbols)
from .model import Batch, ModelConfig, embed_format, forward

NextLogits = Callable[[tuple[int, ...], int], np.ndarray]

RESERVED_IDS = (PAD_ID, BOS_ID, SEP_ID, EOS_ID, UNK_ID)


@dataclass
class DecodeConfig:
    strategy: str = "topk"  # or "beam"
    k: int = 32
    temperature: float = 1.0
    beam_width: int = 5
    max_len: int = 256
    hard_constrain: bool = False
    seed: int = 0
    length_alpha: float = 1.0  # beam scores divide by len**alpha

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.strategy not in ("topk", "beam"):
            raise ValueError(f"unknown strategy {self.strategy!r}")


def top_k_sample(logits: np.ndarray, k: int, temperature: float,
                 rng: np.random.Generator) -> int:
    """Sample from the renormalized softmax over the k highest logits.
    Ties at the cutoff resolve toward lower token ids. Anything outside the
    top k has probability exactly zero.

    Draws one uniform and inverts the top-k CDF (probability-ordered), so
    sweeps over k under a shared seed stay maximally correlated."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > logits.shape[0]:
        raise ValueError(f"k={k} exceeds vocabulary size {logits.shape[0]}")
    scaled = np.asarray(logits, dtype=np.float64) / temperature
    order = np.argsort(-scaled, kind="stable")[:k]
    top = scaled[order]
    top = top - top.max()
    probs = np.exp(top)
    probs /= probs.sum()
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return int(order[min(idx, k - 1)])


@dataclass(frozen=True)
class SlotPlan:
    """Per display position: a forced token id, or a set of barred ids."""

    force: int | None = None
    bar: tuple[int, ...] = ()


def build_plan(spec: FormatSpec, vocab: Vocab, hard: bool,
               punct: frozenset[str] = DEFAULT_PUNCT) -> list[SlotPlan]:
    plans: list[SlotPlan] = []
    missing: list[str] = []
    # hard mode must match the format by construction: free slots bar the
    # reserved markers AND stray punctuation (rule: punctuation identical)
    hard_bar = tuple(RESERVED_IDS) + tuple(
        sorted(vocab.id_of(ch) for ch in punct if ch in vocab))
    for line in spec.lines:
        for slot in line:
            if slot.kind == FIXED:
                if slot.value not in vocab:
                    missing.append(slot.value)
                    plans.append(SlotPlan())
                else:
                    plans.append(SlotPlan(force=vocab.id_of(slot.value)))
            elif slot.kind == PUNCT and hard:
                if slot.value not in vocab:
                    missing.append(slot.value)
                    plans.append(SlotPlan())
                else:
                    plans.append(SlotPlan(force=vocab.id_of(slot.value)))
            elif hard:
                plans.append(SlotPlan(bar=hard_bar))
            else:
                plans.append(SlotPlan())
        plans.append(SlotPlan(force=SEP_ID) if hard else SlotPlan())
    plans.append(SlotPlan(force=EOS_ID))  # stream exhaustion closes output
    if missing:
        raise ConstraintError(missing)
    return plans


def decode_walk(plan: list[SlotPlan], next_logits: NextLogits,
                cfg: DecodeConfig, rng: np.random.Generator,
                vocab_size: int) -> list[int]:
    """Sampling walk over the plan (truncated top-k at free slots)."""
    k = min(cfg.k, vocab_size)
    out: list[int] = []
    for j, slot in enumerate(plan):
        if len(out) >= cfg.max_len:
            break
        if slot.force is not None:
            tid = slot.force
        else:
            row = np.asarray(next_logits(tuple(out), j), dtype=np.float64).copy()
            for b in slot.bar:
                row[b] = -np.inf
            tid = top_k_sample(row, k, cfg.temperature, rng)
        out.append(tid)
        if tid == EOS_ID:
            break
    return out


def _log_softmax(row: np.ndarray) -> np.ndarray:
    m = row.max()
    return row - (m + np.log(np.exp(row - m).sum()))


def beam_decode(plan: list[SlotPlan], next_logits: NextLogits,
                cfg: DecodeConfig) -> list[int]:
    """Beam search over the plan. Returns the completed hypothesis with the
    highest length-normalized log-probability; ties resolve to the
    lexicographically smallest id sequence, then earliest completion."""
    live: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    completed: list[tuple[tuple[int, ...], float]] = []
    for j, slot in enumerate(plan):
        if not live:
            break
        last = j == len(plan) - 1
        cands: list[tuple[tuple[int, ...], float]] = []
        for ids, lp in live:
            row = np.asarray(next_logits(ids, j), dtype=np.float64) / cfg.temperature
            logprobs = _log_softmax(row)
            if slot.force is not None:
                choices = [slot.force]
            else:
                r = logprobs.copy()
                for b in slot.bar:
                    r[b] = -np.inf
                order = np.argsort(-r, kind="stable")[: cfg.beam_width]
                choices = [int(i) for i in order if np.isfinite(r[i])]
            for c in choices:
                nids = ids + (c,)
                nlp = lp + float(logprobs[c])
                if c == EOS_ID or last or len(nids) >= cfg.max_len:
                    completed.append((nids, nlp))
                else:
                    cands.append((nids, nlp))
        cands.sort(key=lambda h: (-h[1], h[0]))
        live = cands[: cfg.beam_width]
    pool = completed if completed else live

    def rank(h):
        ids, lp = h
        return (-(lp / (len(ids) ** cfg.length_alpha)), ids, len(ids))

    return list(min(pool, key=rank)[0])


def _shift(stream: np.ndarray, first: int) -> np.ndarray:
    out = np.empty_like(stream)
    out[0] = first
    out[1:] = stream[:-1]
    return out


def model_stepper(params, cfg: ModelConfig, streams: FormatStreams,
                  fixed: dict[int, int]) -> NextLogits:
    """next_logits callback over the model: the format summary is built
    once for the full format (fixed tokens pinned into it), while the
    causal stack runs over the growing prefix."""
    T = len(streams.kinds)
    revealed = np.full(T, -1, dtype=np.int64)
    for j, tid in fixed.items():
        revealed[j] = tid
    kind_in = _shift(streams.kinds, SYM_BOS)
    line_in = _shift(streams.line_pos, SYM_BOS)
    seg_in = _shift(streams.segments, SYM_BOS)
    revealed_in = _shift(revealed, -1)
    zeros = np.zeros((1, T), dtype=np.int64)
    full = Batch(
        tok_in=zeros, kind_in=kind_in[None], line_in=line_in[None],
        seg_in=seg_in[None], revealed_in=revealed_in[None],
        targets=zeros, lengths=np.array([T], dtype=np.int64),
    )
    f0 = embed_format(params, cfg, full)

    def next_logits(prefix: tuple[int, ...], j: int) -> np.ndarray:
        t = j + 1
        batch = Batch(
            tok_in=np.array([[BOS_ID, *prefix]], dtype=np.int64),
            kind_in=full.kind_in[:, :t],
            line_in=full.line_in[:, :t],
            seg_in=full.seg_in[:, :t],
            revealed_in=full.revealed_in[:, :t],
            targets=np.zeros((1, t), dtype=np.int64),
            lengths=np.array([t], dtype=np.int64),
        )
        logits = forward(params, cfg, batch, f0=f0)
        return logits.data[0, -1].astype(np.float64)

    return next_logits


def generate(params, cfg: ModelConfig, vocab: Vocab, spec: FormatSpec,
             dcfg: DecodeConfig) -> list[int]:
    """Generate token ids satisfying the format (see module docstring for
    the constraint modes). Deterministic given the seed."""
    streams, fixed = spec_to_symbols(spec, vocab, cfg.ascending_line_pos)
    if len(streams.kinds) > cfg.max_len:
        raise ValueError(
            f"format needs {len(streams.kinds)} positions; max_len is {cfg.max_len}"
        )
    plan = build_plan(spec, vocab, dcfg.hard_constrain)
    stepper = model_stepper(params, cfg, streams, fixed)
    if dcfg.strategy == "beam":
        return beam_decode(plan, stepper, dcfg)
    rng = np.random.default_rng(dcfg.seed)
    return decode_walk(plan, stepper, dcfg, rng, len(vocab))


def beam_search(params, cfg: ModelConfig, vocab: Vocab, spec: FormatSpec,
                dcfg: DecodeConfig) -> list[int]:
    return generate(params, cfg, vocab, spec, replace(dcfg, strategy="beam"))


def polish(params, cfg: ModelConfig, vocab: Vocab, prev_tokens: list[str],
           lock: set[int], dcfg: DecodeConfig,
           rhyme: dict[tuple[int, int], str] | None = None) -> list[int]:
    """Regenerate a previous output with the locked positions pinned: the
    output is rebuilt into a format whose locked slots are fixed tokens,
    then generated again."""
    spec = rebuild_format(prev_tokens, lock, rhyme)
    return generate(params, cfg, vocab, spec, dcfg)
