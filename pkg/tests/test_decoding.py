import numpy as np
import pytest

from formatlm.corpus import EOS, EOS_ID, SEP, SEP_ID, Sample, build_vocab
from formatlm.decoding import (DecodeConfig, SlotPlan, beam_decode,
                               beam_search, build_plan, decode_walk,
                               generate, polish, top_k_sample)
from formatlm.formats import parse_format, sample_to_spec
from formatlm.metrics import split_sentences
from formatlm.model import ModelConfig, init_params


@pytest.fixture(scope="module")
def toy_model():
    sample = Sample([["love", "is", "not", "love", ","],
                     ["bends", "with", "the", "remover", "to", "remove", "."]])
    vocab = build_vocab([sample])
    cfg = ModelConfig(vocab_size=len(vocab), layers=1, d_model=16, heads=2,
                      d_ff=32, max_len=64, dropout=0.0)
    params = init_params(cfg, seed=5)
    return params, cfg, vocab


def test_top_k_one_is_greedy():
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert top_k_sample(np.array([2.0, 1.0, 0.0]), 1, 1.0, rng) == 0


def test_top_k_symmetric_two_way():
    rng = np.random.default_rng(1)
    draws = [top_k_sample(np.array([0.0, 0.0]), 2, 1.0, rng)
             for _ in range(10_000)]
    freq = np.bincount(draws, minlength=2) / len(draws)
    assert abs(freq[0] - 0.5) < 0.02 and abs(freq[1] - 0.5) < 0.02


def test_top_k_zero_probability_outside_top_k():
    rng = np.random.default_rng(2)
    draws = {top_k_sample(np.array([3.0, 2.0, 1.0, 0.0]), 2, 1.0, rng)
             for _ in range(5000)}
    assert draws <= {0, 1}


def test_top_k_frequency_matches_renormalized_distribution():
    # 3-sigma multinomial bounds against the truncated softmax
    logits = np.array([2.0, 1.0, 0.5, 0.2, -1.0])
    k, n = 3, 10_000
    top = np.sort(logits)[::-1][:k]
    p = np.exp(top - top.max())
    p /= p.sum()
    rng = np.random.default_rng(3)
    draws = [top_k_sample(logits, k, 1.0, rng) for _ in range(n)]
    freq = np.bincount(draws, minlength=5) / n
    for i in range(k):
        sigma = np.sqrt(p[i] * (1 - p[i]) / n)
        assert abs(freq[i] - p[i]) < 3 * sigma
    assert freq[3] == 0 and freq[4] == 0


def test_top_k_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        top_k_sample(np.zeros(3), 0, 1.0, rng)
    with pytest.raises(ValueError):
        top_k_sample(np.zeros(3), 4, 1.0, rng)


def test_temperature_applies_before_truncation():
    # low temperature concentrates inside the same top-k set
    logits = np.array([1.0, 0.9, -5.0])
    rng = np.random.default_rng(4)
    cold = [top_k_sample(logits, 2, 0.01, rng) for _ in range(500)]
    assert np.mean(np.array(cold) == 0) > 0.95


def test_generate_forces_fixed_tokens(toy_model):
    params, cfg, vocab = toy_model
    spec = parse_format("_ _ _ love ,\nbends _ _ _ _ remove .")
    ids = generate(params, cfg, vocab, spec,
                   DecodeConfig(k=8, seed=0, hard_constrain=True))
    toks = vocab.decode(ids)
    lines = split_sentences(toks)
    assert lines[0][3] == "love"
    assert lines[1][0] == "bends" and lines[1][5] == "remove"


def test_generate_hard_constraints_match_format_exactly(toy_model):
    # format Micro-F1 = 1 by construction: lengths, punctuation positions,
    # and no stray punctuation or reserved markers at free slots
    from formatlm.metrics import format_f1

    params, cfg, vocab = toy_model
    spec = parse_format("_ _ _ _:A ,\n_ _ _ _ _ _:A .")
    for seed in range(5):
        ids = generate(params, cfg, vocab, spec,
                       DecodeConfig(k=8, seed=seed, hard_constrain=True))
        toks = vocab.decode(ids)
        lines = split_sentences(toks)
        assert [len(l) for l in lines] == [5, 7]
        assert lines[0][-1] == "," and lines[1][-1] == "."
        assert toks[-1] == EOS
        bad = {"<pad>", "<bos>", "<unk>", SEP, EOS, ",", "."}
        for line in lines:
            assert not set(line[:-1]) & bad
        assert format_f1([spec], [toks], 0, True).mi_f1 == 1.0


def test_generate_deterministic_given_seed(toy_model):
    params, cfg, vocab = toy_model
    spec = parse_format("_ _ _ _:A ,\n_ _ _ _ _ _:A .")
    d = DecodeConfig(k=8, seed=42)
    assert generate(params, cfg, vocab, spec, d) == \
        generate(params, cfg, vocab, spec, d)
    other = generate(params, cfg, vocab, spec, DecodeConfig(k=8, seed=43))
    assert other != generate(params, cfg, vocab, spec, d)


def test_generate_soft_mode_closes_with_end_marker(toy_model):
    params, cfg, vocab = toy_model
    spec = parse_format("_ _ ,")
    ids = generate(params, cfg, vocab, spec, DecodeConfig(k=4, seed=0))
    assert ids[-1] == EOS_ID
    assert len(ids) <= 5  # 3 slots + separator + end marker


def test_generate_halts_at_decode_max_len(toy_model):
    params, cfg, vocab = toy_model
    spec = parse_format("_ _ _ _ _ _ .")
    d = DecodeConfig(k=4, seed=0, max_len=3)
    assert len(generate(params, cfg, vocab, spec, d)) <= 3


def _table_fn(table, vocab_size=2):
    """next_logits from {prefix tuple: logits list}."""

    def fn(prefix, j):
        return np.array(table[tuple(prefix)], dtype=np.float64)

    return fn


def test_beam_width_one_is_greedy_argmax_chain():
    table = {
        (): [0.3, 0.1, 0.0],
        (0,): [0.0, 2.0, 1.0],
        (0, 1): [0.5, 0.1, 3.0],
    }
    plan = [SlotPlan(), SlotPlan(), SlotPlan()]
    cfg = DecodeConfig(beam_width=1, strategy="beam")
    out = beam_decode(plan, _table_fn(table), cfg)
    assert out == [0, 1, 2]  # argmax at every step


def test_beam_finds_brute_force_optimum_where_greedy_fails():
    # hand-built table: the greedy first step (token 0) leads to a flat
    # continuation while token 1 opens a near-deterministic path
    def logp(p):
        return float(np.log(p))

    table = {
        (): [logp(0.51), logp(0.49)],
        (0,): [logp(0.5), logp(0.5)],
        (1,): [logp(0.99), logp(0.01)],
        (0, 0): [logp(0.5), logp(0.5)],
        (0, 1): [logp(0.5), logp(0.5)],
        (1, 0): [logp(0.9), logp(0.1)],
        (1, 1): [logp(0.5), logp(0.5)],
    }
    fn = _table_fn(table)
    plan = [SlotPlan(), SlotPlan(), SlotPlan()]

    # brute-force enumeration of all 3-token sequences
    def seq_logp(seq):
        total, prefix = 0.0, ()
        for t in seq:
            row = np.array(table[prefix])
            row = row - (row.max() + np.log(np.exp(row - row.max()).sum()))
            total += row[t]
            prefix = prefix + (t,)
        return total

    best = max(((a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)),
               key=seq_logp)
    assert best == (1, 0, 0)

    greedy = beam_decode(plan, fn, DecodeConfig(beam_width=1, strategy="beam"))
    assert tuple(greedy) != best  # greedy is suboptimal here
    out = beam_decode(plan, fn, DecodeConfig(beam_width=2, strategy="beam"))
    assert tuple(out) == best


def test_beam_uniform_model_tie_breaks_lexicographically():
    table = {p: [0.0, 0.0, 0.0] for p in
             [()] + [(a,) for a in range(3)] +
             [(a, b) for a in range(3) for b in range(3)]}
    plan = [SlotPlan(), SlotPlan(), SlotPlan()]
    out = beam_decode(plan, _table_fn(table), DecodeConfig(beam_width=3,
                                                           strategy="beam"))
    assert out == [0, 0, 0]


def test_beam_search_on_model_respects_forcing(toy_model):
    params, cfg, vocab = toy_model
    spec = parse_format("_ _ _ love ,\n_ _ _ _ _ remove .")
    ids = beam_search(params, cfg, vocab, spec,
                      DecodeConfig(beam_width=3, hard_constrain=True))
    lines = split_sentences(vocab.decode(ids))
    assert lines[0][3] == "love" and lines[1][5] == "remove"
    assert [len(l) for l in lines] == [5, 7]


def test_plan_forcing_soundness_both_strategies(toy_model):
    params, cfg, vocab = toy_model
    spec = parse_format("the _ not love ,")
    for hard in (False, True):
        for strategy in ("topk", "beam"):
            d = DecodeConfig(strategy=strategy, k=4, beam_width=2, seed=7,
                             hard_constrain=hard)
            toks = vocab.decode(generate(params, cfg, vocab, spec, d))
            assert toks[0] == "the" and toks[3] == "love"


def test_polish_lock_everything_is_fixed_point(toy_model):
    # every content slot locked; structural slots pinned by hard mode
    # (soft-mode separator emission is learned, not guaranteed)
    params, cfg, vocab = toy_model
    prev = ["love", "is", "not", "love", ",", SEP,
            "bends", "with", "the", "remover", "to", "remove", ".", SEP, EOS]
    lock = {i for i, t in enumerate(prev) if t not in (SEP, EOS)}
    out = polish(params, cfg, vocab, prev, lock,
                 DecodeConfig(k=4, seed=0, hard_constrain=True))
    assert vocab.decode(out) == prev


def test_polish_no_locks_keeps_skeleton(toy_model):
    params, cfg, vocab = toy_model
    prev = ["love", "is", "not", "love", ",", SEP, EOS]
    out = polish(params, cfg, vocab, prev, set(),
                 DecodeConfig(k=8, seed=3, hard_constrain=True))
    lines = split_sentences(vocab.decode(out))
    assert [len(l) for l in lines] == [5]
    assert lines[0][-1] == ","


def test_polish_preserves_locked_rhyme_words(toy_model):
    params, cfg, vocab = toy_model
    prev = ["love", "is", "not", "love", ",", SEP,
            "bends", "with", "the", "remover", "to", "remove", ".", SEP]
    out = polish(params, cfg, vocab, prev, {3, 11},
                 DecodeConfig(k=8, seed=9, hard_constrain=True))
    lines = split_sentences(vocab.decode(out))
    assert lines[0][3] == "love" and lines[1][5] == "remove"


def test_build_plan_soft_only_forces_fixed_and_end(toy_model):
    _, _, vocab = toy_model
    spec = parse_format("the _ ,")
    plan = build_plan(spec, vocab, hard=False)
    assert plan[0].force == vocab.id_of("the")
    assert plan[1].force is None and plan[1].bar == ()
    assert plan[2].force is None  # punctuation sampled in soft mode
    assert plan[3].force is None  # separator sampled in soft mode
    assert plan[4].force == EOS_ID


def test_build_plan_hard_forces_structure(toy_model):
    _, _, vocab = toy_model
    spec = parse_format("the _ ,")
    plan = build_plan(spec, vocab, hard=True)
    assert plan[2].force == vocab.id_of(",")
    assert plan[3].force == SEP_ID
    assert plan[1].bar != ()
