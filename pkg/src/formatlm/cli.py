"""Command-line entry points: pretrain, finetune, generate, polish,
evaluate, serve.

Options come from a flat key=value config file plus flag overrides (flags
win); the full effective configuration is echoed at startup and logged next
to every output artifact. Exit codes: 0 success, 1 usage, 2 data problem,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .autodiff import NumericsError
from .corpus import (CorpusError, SEP, Sample, Vocab, build_vocab,
                     line_final_rhyme_slots, load_corpus, save_corpus)
from .decoding import DecodeConfig, generate, polish
from .evaluate import evaluate_model
from .formats import ConstraintError, FormatError, derive_symbols, parse_format
from .metrics import ModelScorer, split_sentences
from .model import CheckpointError, ModelConfig, load_checkpoint
from .phonetics import load_cmudict, load_pinyin_table
from .training import TrainConfig, TrainingError, fit


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_model_flags(p: _Parser):
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--d-model", type=int, default=128)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=512)
    p.add_argument("--max-len", type=int, default=256)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--ablate", default="",
                   help="comma list of symbol channels to remove: c,p,s")
    p.add_argument("--inverse-p", action="store_true",
                   help="ascending within-line positions")


def _add_train_flags(p: _Parser):
    p.add_argument("--corpus", required=True, help="training corpus file")
    p.add_argument("--dev", help="dev corpus file")
    p.add_argument("--out", default="run", help="output directory")
    p.add_argument("--mode", choices=("char", "word"), default="word")
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--vocab", help="reuse an existing vocab file")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--warmup", type=int, default=400)
    p.add_argument("--lr-factor", type=float, default=1.0)
    p.add_argument("--clip-norm", type=float, default=1.0)
    p.add_argument("--checkpoint-every", type=int, default=500)
    p.add_argument("--eval-every", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rhyme", choices=("line-final", "none"),
                   default="line-final",
                   help="rhyme-slot annotation policy for training data")
    _add_model_flags(p)


def _add_decode_flags(p: _Parser):
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", help="vocab file (default: next to the ckpt)")
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--beam", type=int, default=0,
                   help="beam width; 0 = top-k sampling")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hard-constrain", action="store_true")


def build_parser() -> _Parser:
    p = _Parser(prog="formatlm")
    p.add_argument("--config", help="flat key=value config file")
    sub = p.add_subparsers(dest="cmd", required=True)

    pre = sub.add_parser("pretrain", description="masked-format pretraining")
    _add_train_flags(pre)
    pre.add_argument("--reveal-rate", type=float, default=0.2)

    ft = sub.add_parser("finetune", description="fine-tune on a target corpus")
    _add_train_flags(ft)
    ft.add_argument("--init-ckpt", help="start from a pretrained checkpoint")

    gen = sub.add_parser("generate", description="generate text for a format")
    _add_decode_flags(gen)
    gen.add_argument("--format", required=True, help="format DSL file")
    gen.add_argument("--out", default="generated.txt")

    pol = sub.add_parser("polish", description="regenerate with locked tokens")
    _add_decode_flags(pol)
    pol.add_argument("--input", required=True,
                     help="corpus-format file holding the text to polish")
    pol.add_argument("--lock", default="",
                     help="comma list of positions to keep: flat index or line:idx")
    pol.add_argument("--out", default="polished.txt")

    ev = sub.add_parser("evaluate", description="run the metric suite")
    _add_decode_flags(ev)
    ev.add_argument("--corpus", required=True)
    ev.add_argument("--lang", choices=("en", "zh"), default="en")
    ev.add_argument("--lexicon", help="cmudict file (en) or pinyin table (zh)")
    ev.add_argument("--scorer-ckpt", help="causal-LM checkpoint for integrity")
    ev.add_argument("--out", default="report.txt")

    srv = sub.add_parser("serve", description="HTTP generation service")
    _add_decode_flags(srv)
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    return p


COMMANDS = ("pretrain", "finetune", "generate", "polish", "evaluate", "serve")


def _apply_config_file(argv: list[str]) -> list[str]:
    """Expand a config file into flags placed right after the subcommand,
    before the explicit flags, so the command line wins."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config needs a file path")
    path = Path(argv[i + 1])
    if not path.exists():
        raise CorpusError(f"config file not found: {path}")
    extra: list[str] = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        flag = "--" + key.strip().replace("_", "-")
        val = val.strip()
        if val.lower() in ("true", "false"):
            if val.lower() == "true":
                extra.append(flag)
        else:
            extra.extend([flag, val])
    rest = argv[:i] + argv[i + 2 :]
    for j, tok in enumerate(rest):
        if tok in COMMANDS:
            return rest[: j + 1] + extra + rest[j + 1 :]
    raise UsageError("no subcommand given")


def _echo_config(args: argparse.Namespace) -> str:
    items = {k: v for k, v in sorted(vars(args).items()) if k != "config"}
    text = "\n".join(f"{k}={v}" for k, v in items.items())
    print("# effective config\n" + "\n".join("# " + ln for ln in text.splitlines()))
    return text + "\n"


def _model_config(args, vocab_size: int) -> ModelConfig:
    ablate = {a.strip() for a in args.ablate.split(",") if a.strip()}
    bad = ablate - {"c", "p", "s"}
    if bad:
        raise UsageError(f"--ablate accepts c,p,s; got {','.join(sorted(bad))}")
    return ModelConfig(
        vocab_size=vocab_size,
        layers=args.layers, d_model=args.d_model, heads=args.heads,
        d_ff=args.d_ff, max_len=args.max_len, dropout=args.dropout,
        use_kinds="c" not in ablate,
        use_line_pos="p" not in ablate,
        use_segments="s" not in ablate,
        ascending_line_pos=args.inverse_p,
    )


def _train(args, phase: str) -> int:
    samples, skipped = load_corpus(args.corpus, args.mode)
    if skipped:
        print(f"warning: skipped {skipped} empty block(s)", file=sys.stderr)
    dev_samples = load_corpus(args.dev, args.mode)[0] if args.dev else []
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.vocab:
        vocab = Vocab.load(args.vocab)
    else:
        vocab = build_vocab(samples, args.min_freq)
    vocab.save(out_dir / "vocab.txt")
    cfg = _model_config(args, len(vocab))

    def to_seqs(ss):
        rhyme = args.rhyme if phase == "finetune" else "none"
        out = []
        for s in ss:
            slots = line_final_rhyme_slots(s) if rhyme == "line-final" else set()
            out.append(derive_symbols(s, slots, vocab,
                                      ascending=cfg.ascending_line_pos))
        return out

    tcfg = TrainConfig(
        phase=phase,
        reveal_rate=getattr(args, "reveal_rate", 0.2),
        batch_size=args.batch_size, max_steps=args.steps,
        warmup_steps=args.warmup, lr_factor=args.lr_factor,
        seed=args.seed, checkpoint_every=args.checkpoint_every,
        eval_every=args.eval_every, clip_norm=args.clip_norm,
    )
    (out_dir / "config.txt").write_text(_echo_config(args), encoding="utf-8")
    result = fit(to_seqs(samples), to_seqs(dev_samples), cfg, tcfg, out_dir,
                 init_from=getattr(args, "init_ckpt", None), quiet=False)
    print(f"final checkpoint: {result.final_path}")
    print(f"best checkpoint:  {result.best_path}")
    return 0


def _load_model(args):
    cfg, params, _, _ = load_checkpoint(args.ckpt)
    vocab_path = Path(args.vocab) if args.vocab else Path(args.ckpt).parent / "vocab.txt"
    if not vocab_path.exists():
        raise CorpusError(f"vocab file not found: {vocab_path}")
    vocab = Vocab.load(vocab_path)
    if len(vocab) != cfg.vocab_size:
        raise CorpusError(
            f"vocab size {len(vocab)} does not match checkpoint ({cfg.vocab_size})"
        )
    return cfg, params, vocab


def _decode_config(args) -> DecodeConfig:
    return DecodeConfig(
        strategy="beam" if args.beam else "topk",
        k=args.k, temperature=args.temperature,
        beam_width=args.beam or 5, seed=args.seed,
        hard_constrain=args.hard_constrain,
        max_len=4096,
    )


def _write_result(path: str, tokens: list[str], config_text: str) -> None:
    lines = split_sentences(tokens)
    sample = Sample([ln for ln in lines if ln])
    save_corpus(path, [sample])
    Path(path + ".config").write_text(config_text, encoding="utf-8")


def _generate(args) -> int:
    cfg, params, vocab = _load_model(args)
    spec = parse_format(Path(args.format).read_text(encoding="utf-8"))
    dcfg = _decode_config(args)
    dcfg.max_len = cfg.max_len
    config_text = _echo_config(args)
    ids = generate(params, cfg, vocab, spec, dcfg)
    tokens = vocab.decode(ids)
    print(" / ".join(" ".join(ln) for ln in split_sentences(tokens)))
    _write_result(args.out, tokens, config_text)
    return 0


def _parse_locks(raw: str, lines: list[list[str]]) -> set[int]:
    locks: set[int] = set()
    for piece in raw.split(","):
        piece = piece.strip()
        if not piece:
            continue
        if ":" in piece:
            li, idx = (int(x) for x in piece.split(":"))
            if li >= len(lines) or idx >= len(lines[li]):
                raise FormatError(f"lock {piece} out of range")
            locks.add(sum(len(ln) + 1 for ln in lines[:li]) + idx)
        else:
            locks.add(int(piece))
    return locks


def _polish(args) -> int:
    cfg, params, vocab = _load_model(args)
    samples, _ = load_corpus(args.input, "word")
    if not samples:
        raise CorpusError(f"no sample in {args.input}")
    lines = samples[0].lines
    flat: list[str] = []
    for ln in lines:
        flat.extend(ln)
        flat.append(SEP)
    locks = _parse_locks(args.lock, lines)
    dcfg = _decode_config(args)
    dcfg.max_len = cfg.max_len
    config_text = _echo_config(args)
    ids = polish(params, cfg, vocab, flat, locks, dcfg)
    tokens = vocab.decode(ids)
    print(" / ".join(" ".join(ln) for ln in split_sentences(tokens)))
    _write_result(args.out, tokens, config_text)
    return 0


def _evaluate(args) -> int:
    cfg, params, vocab = _load_model(args)
    mode = "char" if args.lang == "zh" else "word"
    samples, _ = load_corpus(args.corpus, mode)
    lex = None
    if args.lexicon:
        lex = (load_pinyin_table(args.lexicon) if args.lang == "zh"
               else load_cmudict(args.lexicon))
    scorer = None
    if args.scorer_ckpt:
        s_cfg, s_params, _, _ = load_checkpoint(args.scorer_ckpt)
        scorer = ModelScorer(s_params, s_cfg, vocab)
    dcfg = _decode_config(args)
    dcfg.max_len = cfg.max_len
    config_text = _echo_config(args)
    delta, check_punct = (0, True) if args.lang == "zh" else (1, False)
    report, _ = evaluate_model(params, cfg, vocab, samples, dcfg, lex,
                               scorer, delta, check_punct)
    print(report.as_text(), end="")
    report.write(args.out)
    Path(args.out + ".config").write_text(config_text, encoding="utf-8")
    return 0


def _serve(args) -> int:
    import uvicorn

    from .service import build_app

    cfg, params, vocab = _load_model(args)
    _echo_config(args)
    app = build_app(params, cfg, vocab, default_k=args.k)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def run(argv: list[str]) -> int:
    try:
        argv = _apply_config_file(list(argv))
        args = build_parser().parse_args(argv)
        if args.cmd == "pretrain":
            return _train(args, "pretrain")
        if args.cmd == "finetune":
            return _train(args, "finetune")
        if args.cmd == "generate":
            return _generate(args)
        if args.cmd == "polish":
            return _polish(args)
        if args.cmd == "evaluate":
            return _evaluate(args)
        if args.cmd == "serve":
            return _serve(args)
        raise UsageError(f"unknown command {args.cmd!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        build_parser().print_usage(sys.stderr)
        return 1
    except (CorpusError, FormatError, ConstraintError, CheckpointError,
            FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericsError, TrainingError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
