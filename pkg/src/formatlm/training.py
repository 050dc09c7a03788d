"""Training loops: masked-format pretraining and fine-tuning.

Adam (beta 0.9/0.98, eps 1e-9) under the inverse-square-root warmup
schedule. Everything is reproducible from (seed, step): batch order, reveal
masks and dropout all derive their RNG from per-step child seeds, which also
makes resuming from a checkpoint bit-exact without serializing RNG state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape, Tensor
from .formats import SymbolSequence, mask_for_pretraining
from .model import (ModelConfig, corpus_mean_nll, forward, init_params,
                    make_batch, nll, save_checkpoint, load_checkpoint)


class TrainingError(Exception):
    pass


@dataclass
class TrainConfig:
    phase: str = "finetune"  # "pretrain" draws reveal masks per batch
    reveal_rate: float = 0.2
    batch_size: int = 16
    max_steps: int = 1000
    warmup_steps: int = 400
    lr_factor: float = 1.0
    schedule_d_model: int | None = None  # defaults to the model width
    seed: int = 0
    checkpoint_every: int = 500
    eval_every: int = 200
    clip_norm: float = 1.0

    def __post_init__(self):
        if self.warmup_steps < 1:
            raise ValueError("warmup_steps must be >= 1")
        if not 0 <= self.reveal_rate <= 1:
            raise ValueError("reveal_rate must be in [0, 1]")
        if self.phase not in ("pretrain", "finetune"):
            raise ValueError(f"unknown phase {self.phase!r}")


def noam_lr(step: int, d_model: int, warmup: int, factor: float = 1.0) -> float:
    """factor * d^-0.5 * min(step^-0.5, step * warmup^-1.5); peaks at
    step == warmup."""
    if step < 1:
        raise ValueError("step must be >= 1")
    return factor * d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.98, 1e-9


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @staticmethod
    def init(params: dict[str, Tensor]) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(t.data) for k, t in params.items()},
            v={k: np.zeros_like(t.data) for k, t in params.items()},
        )

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {f"m.{k}": v for k, v in self.m.items()}
        out.update({f"v.{k}": v for k, v in self.v.items()})
        return out

    @staticmethod
    def from_arrays(arrays: dict[str, np.ndarray], step: int) -> "AdamState":
        m = {k[2:]: v for k, v in arrays.items() if k.startswith("m.")}
        v = {k[2:]: v for k, v in arrays.items() if k.startswith("v.")}
        return AdamState(m=m, v=v, step=step)


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> float:
    """Scale gradients in place so the global norm is <= clip_norm.
    Returns the pre-clip norm."""
    total = float(sum(float((g * g).sum()) for g in grads.values()))
    norm = float(np.sqrt(total))
    if clip_norm > 0 and norm > clip_norm:
        factor = clip_norm / (norm + 1e-12)
        for g in grads.values():
            g *= factor
    return norm


def adam_update(params: dict[str, Tensor], grads: dict[str, np.ndarray],
                opt: AdamState, lr: float) -> None:
    opt.step += 1
    b1t = 1.0 - ADAM_BETA1 ** opt.step
    b2t = 1.0 - ADAM_BETA2 ** opt.step
    for name, tensor in params.items():
        g = grads[name]
        m = opt.m[name]
        v = opt.v[name]
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * g * g
        mhat = m / b1t
        vhat = v / b2t
        # eps inside the root: updates stay proportional to clipped
        # gradients instead of going scale-invariant near zero
        tensor.data -= (lr * mhat / np.sqrt(vhat + ADAM_EPS)).astype(
            tensor.data.dtype
        )


def train_step(params: dict[str, Tensor], cfg: ModelConfig, opt: AdamState,
               seqs: list[SymbolSequence], tcfg: TrainConfig,
               step: int) -> tuple[float, float]:
    """One optimization step on a batch of sequences. Pretraining draws a
    fresh reveal mask per sequence; reveal and dropout use separate child
    RNG streams so a zero reveal rate is bit-identical to fine-tuning.
    Returns (loss, pre-clip gradient norm)."""
    rng_reveal = np.random.default_rng([tcfg.seed, step, 0])
    rng_drop = np.random.default_rng([tcfg.seed, step, 1])
    revealed = None
    if tcfg.phase == "pretrain":
        revealed = [
            mask_for_pretraining(s, tcfg.reveal_rate, rng_reveal) for s in seqs
        ]
    batch = make_batch(seqs, revealed)
    with Tape() as tape:
        logits = forward(params, cfg, batch, training=True, rng=rng_drop)
        loss = nll(logits, batch.targets)
        if not np.isfinite(loss.data):
            raise TrainingError(
                f"non-finite loss at step {step} (lr schedule step {opt.step + 1})"
            )
        tape.backward(loss)
    grads = {k: t.grad_or_zero() for k, t in params.items()}
    for t in params.values():
        t.zero_grad()
    norm = clip_gradients(grads, tcfg.clip_norm)
    d_sched = tcfg.schedule_d_model or cfg.d_model
    lr = noam_lr(opt.step + 1, d_sched, tcfg.warmup_steps, tcfg.lr_factor)
    adam_update(params, grads, opt, lr)
    return loss.item(), norm


def _batches(n: int, batch_size: int, lengths: list[int]):
    """Length-bucketed batch index lists (sorted by length, chunked)."""
    order = sorted(range(n), key=lambda i: (lengths[i], i))
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def _batch_for_step(batches: list[list[int]], seed: int, step: int) -> list[int]:
    """Pure function of (seed, step): per-epoch shuffled batch order."""
    nb = len(batches)
    epoch, slot = divmod(step, nb)
    perm = np.random.default_rng([seed, 7, epoch]).permutation(nb)
    return batches[int(perm[slot])]


@dataclass
class FitResult:
    final_path: Path
    best_path: Path
    log_path: Path
    best_dev_ppl: float
    history: list[tuple[int, float]] = field(default_factory=list)


def fit(train_seqs: list[SymbolSequence],
        dev_seqs: list[SymbolSequence],
        cfg: ModelConfig,
        tcfg: TrainConfig,
        out_dir: str | Path,
        init_from: str | Path | None = None,
        resume_from: str | Path | None = None,
        quiet: bool = True) -> FitResult:
    """Run the training loop; writes checkpoints and an append-only metric
    log ("step N loss X lr R [dev_ppl P]") under out_dir and retains the
    best-dev checkpoint."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train.log"
    final_path = out_dir / "final.ckpt"
    best_path = out_dir / "best.ckpt"

    start_step = 0
    if resume_from is not None:
        ck_cfg, params, opt_arrays, meta = load_checkpoint(resume_from)
        cfg = ck_cfg
        start_step = int(meta.get("step", "0"))
        opt = AdamState.from_arrays(opt_arrays, start_step)
    elif init_from is not None:
        ck_cfg, params, _, _ = load_checkpoint(init_from)
        if ck_cfg.vocab_size != cfg.vocab_size or ck_cfg.d_model != cfg.d_model:
            raise TrainingError(
                "init checkpoint shapes do not match the model config"
            )
        cfg = ck_cfg
        opt = AdamState.init(params)
    else:
        params = init_params(cfg, seed=tcfg.seed)
        opt = AdamState.init(params)

    if not train_seqs:
        raise TrainingError("empty training corpus")
    batches = _batches(len(train_seqs), tcfg.batch_size,
                       [len(s) for s in train_seqs])

    best_dev = float("inf")
    history: list[tuple[int, float]] = []
    log = open(log_path, "a", encoding="utf-8")
    started = time.time()
    try:
        for step in range(start_step, tcfg.max_steps):
            idx = _batch_for_step(batches, tcfg.seed, step)
            seqs = [train_seqs[i] for i in idx]
            loss, norm = train_step(params, cfg, opt, seqs, tcfg, step)
            history.append((step, loss))
            line = f"step {step + 1} loss {loss:.6f} lr " \
                   f"{noam_lr(opt.step, tcfg.schedule_d_model or cfg.d_model, tcfg.warmup_steps, tcfg.lr_factor):.6g}"
            done = step + 1
            if dev_seqs and (done % tcfg.eval_every == 0 or done == tcfg.max_steps):
                dev_ppl = float(np.exp(corpus_mean_nll(params, cfg, dev_seqs,
                                                       tcfg.batch_size)))
                line += f" dev_ppl {dev_ppl:.4f}"
                if dev_ppl < best_dev:
                    best_dev = dev_ppl
                    save_checkpoint(best_path, cfg, params, opt.to_arrays(),
                                    {"step": str(done), "dev_ppl": f"{dev_ppl:.6f}"})
            log.write(line + "\n")
            log.flush()
            if not quiet:
                print(line)
            if tcfg.checkpoint_every and done % tcfg.checkpoint_every == 0:
                save_checkpoint(out_dir / f"step{done}.ckpt", cfg, params,
                                opt.to_arrays(), {"step": str(done)})
    finally:
        log.close()
    save_checkpoint(final_path, cfg, params, opt.to_arrays(),
                    {"step": str(tcfg.max_steps),
                     "wall_seconds": f"{time.time() - started:.1f}"})
    if not best_path.exists():
        save_checkpoint(best_path, cfg, params, opt.to_arrays(),
                        {"step": str(tcfg.max_steps)})
    return FitResult(final_path, best_path, log_path, best_dev, history)
