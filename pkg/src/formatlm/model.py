"""The format-aware autoregressive transformer.

Each position's input state sums five embeddings: its token, its three
format symbols (kind, line countdown, segment) and its global position. A
separate "format summary" sums only the symbol embeddings (plus the word
embedding at revealed positions) and stays fixed across layers. Every layer
runs two blocks: masked multi-head self-attention over the token states,
then unmasked multi-head attention from those states onto the format
summary, so every position can read the full future format. Both blocks are
post-norm residual with their own feed-forward sublayer.

Sequences enter in display form (see formats.SymbolSequence); the model
shifts all streams right by one internally, placing a begin marker (with
dedicated symbol ids) in the first input row, so row t predicts display
element t.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import BOS_ID, PAD_ID
from .formats import (KIND_VOCAB, LINE_POS_VOCAB, SEG_VOCAB, SYM_BOS,
                      SYM_PAD, FormatStreams, SymbolSequence)

NEG_INF = -1e9  # additive mask value; underflows to exactly 0 after softmax


@dataclass
class ModelConfig:
    vocab_size: int
    layers: int = 4
    d_model: int = 128
    heads: int = 4
    d_ff: int = 512
    kind_vocab: int = KIND_VOCAB
    line_pos_vocab: int = LINE_POS_VOCAB
    seg_vocab: int = SEG_VOCAB
    max_len: int = 256
    dropout: float = 0.1
    use_kinds: bool = True
    use_line_pos: bool = True
    use_segments: bool = True
    ascending_line_pos: bool = False

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")

    def to_dict(self) -> dict[str, str]:
        return {f.name: str(getattr(self, f.name)) for f in fields(self)}

    @staticmethod
    def from_dict(d: dict[str, str]) -> "ModelConfig":
        kwargs = {}
        for f in fields(ModelConfig):
            if f.name not in d:
                continue
            raw = d[f.name]
            if f.type == "bool":
                kwargs[f.name] = raw == "True"
            elif f.type == "int":
                kwargs[f.name] = int(raw)
            elif f.type == "float":
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        return ModelConfig(**kwargs)


BLOCKS = ("self", "glob")


def init_params(cfg: ModelConfig, seed: int = 0,
                dtype=np.float32) -> dict[str, Tensor]:
    """All weights N(0, 0.02^2); layer norms at identity; output head tied
    to the token embedding table."""
    rng = np.random.default_rng(seed)

    def normal(*shape):
        return rng.normal(0.0, 0.02, size=shape).astype(dtype)

    p: dict[str, Tensor] = {}

    def leaf(name, arr):
        p[name] = Tensor(arr, requires_grad=True, name=name)

    d = cfg.d_model
    leaf("tok_emb", normal(cfg.vocab_size, d))
    leaf("kind_emb", normal(cfg.kind_vocab, d))
    leaf("line_emb", normal(cfg.line_pos_vocab, d))
    leaf("seg_emb", normal(cfg.seg_vocab, d))
    leaf("pos_emb", normal(cfg.max_len, d))
    for l in range(cfg.layers):
        for blk in BLOCKS:
            pre = f"l{l}.{blk}."
            for w in ("wq", "wk", "wv", "wo"):
                leaf(pre + w, normal(d, d))
            leaf(pre + "ffn_w1", normal(d, cfg.d_ff))
            leaf(pre + "ffn_b1", np.zeros(cfg.d_ff, dtype=dtype))
            leaf(pre + "ffn_w2", normal(cfg.d_ff, d))
            leaf(pre + "ffn_b2", np.zeros(d, dtype=dtype))
            for ln in ("ln1", "ln2"):
                leaf(pre + ln + "_g", np.ones(d, dtype=dtype))
                leaf(pre + ln + "_b", np.zeros(d, dtype=dtype))
    return p


@dataclass
class Batch:
    """Input-form arrays (begin marker first, final end element dropped),
    plus display-form targets. All (B, T) with right padding."""

    tok_in: np.ndarray
    kind_in: np.ndarray
    line_in: np.ndarray
    seg_in: np.ndarray
    revealed_in: np.ndarray
    targets: np.ndarray
    lengths: np.ndarray

    @property
    def size(self) -> tuple[int, int]:
        return self.tok_in.shape


def _shift(stream: np.ndarray, first: int) -> np.ndarray:
    out = np.empty_like(stream)
    out[0] = first
    out[1:] = stream[:-1]
    return out


def input_arrays(seq: SymbolSequence,
                 revealed: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Shift all display-form streams right by one; the begin marker takes
    row 0 with dedicated symbol ids in every stream."""
    if revealed is None:
        revealed = seq.revealed
    if revealed is None:
        revealed = np.full(len(seq), -1, dtype=np.int64)
    return {
        "tok_in": _shift(seq.token_ids, BOS_ID),
        "kind_in": _shift(seq.kinds, SYM_BOS),
        "line_in": _shift(seq.line_pos, SYM_BOS),
        "seg_in": _shift(seq.segments, SYM_BOS),
        "revealed_in": _shift(revealed, -1),
        "targets": seq.token_ids.copy(),
    }


def make_batch(seqs: list[SymbolSequence],
               revealed: list[np.ndarray | None] | None = None) -> Batch:
    if revealed is None:
        revealed = [None] * len(seqs)
    rows = [input_arrays(s, r) for s, r in zip(seqs, revealed)]
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    T = int(lengths.max())

    def padded(key, fill):
        out = np.full((len(rows), T), fill, dtype=np.int64)
        for i, r in enumerate(rows):
            out[i, : lengths[i]] = r[key]
        return out

    return Batch(
        tok_in=padded("tok_in", PAD_ID),
        kind_in=padded("kind_in", SYM_PAD),
        line_in=padded("line_in", SYM_PAD),
        seg_in=padded("seg_in", SYM_PAD),
        revealed_in=padded("revealed_in", -1),
        targets=padded("targets", PAD_ID),
        lengths=lengths,
    )


def embed_inputs(params: dict[str, Tensor], cfg: ModelConfig, batch: Batch,
                 training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    """Five-way embedding sum per position; ablated channels contribute
    zero."""
    B, T = batch.size
    if T > cfg.max_len:
        raise ValueError(f"sequence length {T} exceeds max_len {cfg.max_len}")
    h = ad.embed(params["tok_emb"], batch.tok_in)
    if cfg.use_kinds:
        h = ad.add(h, ad.embed(params["kind_emb"], batch.kind_in))
    if cfg.use_line_pos:
        h = ad.add(h, ad.embed(params["line_emb"], batch.line_in))
    if cfg.use_segments:
        h = ad.add(h, ad.embed(params["seg_emb"], batch.seg_in))
    pos = np.broadcast_to(np.arange(T, dtype=np.int64), (B, T))
    h = ad.add(h, ad.embed(params["pos_emb"], pos))
    if training and cfg.dropout > 0:
        h = ad.dropout(h, cfg.dropout, rng)
    return h


def embed_format(params: dict[str, Tensor], cfg: ModelConfig,
                 batch: Batch) -> Tensor:
    """Symbol-only embedding sum (the format summary). Revealed positions
    additionally carry the word embedding of their pinned token; the
    summary never contains generated-token information elsewhere."""
    B, T = batch.size
    f: Tensor | None = None

    def acc(cur, term):
        return term if cur is None else ad.add(cur, term)

    if cfg.use_kinds:
        f = acc(f, ad.embed(params["kind_emb"], batch.kind_in))
    if cfg.use_line_pos:
        f = acc(f, ad.embed(params["line_emb"], batch.line_in))
    if cfg.use_segments:
        f = acc(f, ad.embed(params["seg_emb"], batch.seg_in))
    if (batch.revealed_in >= 0).any():
        mask = (batch.revealed_in >= 0).astype(params["tok_emb"].dtype)
        safe = np.where(batch.revealed_in >= 0, batch.revealed_in, 0)
        rev = ad.mul(ad.embed(params["tok_emb"], safe), mask[:, :, None])
        f = acc(f, rev)
    if f is None:
        f = Tensor(np.zeros((B, T, cfg.d_model),
                            dtype=params["tok_emb"].dtype))
    return f


def causal_mask(T: int, dtype=np.float32) -> np.ndarray:
    """(1, 1, T, T) additive mask: NEG_INF strictly above the diagonal."""
    m = np.triu(np.full((T, T), NEG_INF, dtype=dtype), k=1)
    return m[None, None]


def key_padding_mask(lengths: np.ndarray, T: int,
                     dtype=np.float32) -> np.ndarray | None:
    """(B, 1, 1, T) additive mask hiding padded key columns; None when no
    row is padded."""
    if (lengths == T).all():
        return None
    cols = np.arange(T)[None, :] >= lengths[:, None]
    m = np.where(cols, NEG_INF, 0.0).astype(dtype)
    return m[:, None, None, :]


def _attention(params, pre: str, x_q: Tensor, x_kv: Tensor, heads: int,
               mask: np.ndarray | None, drop: float,
               rng: np.random.Generator | None) -> Tensor:
    B, Tq, d = x_q.shape
    Tk = x_kv.shape[1]
    hd = d // heads

    def split(t: Tensor, T: int) -> Tensor:
        return ad.transpose(ad.reshape(t, (B, T, heads, hd)), (0, 2, 1, 3))

    q = split(ad.matmul(x_q, params[pre + "wq"]), Tq)
    k = split(ad.matmul(x_kv, params[pre + "wk"]), Tk)
    v = split(ad.matmul(x_kv, params[pre + "wv"]), Tk)
    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                      1.0 / np.sqrt(hd))
    if mask is not None:
        scores = ad.add(scores, mask)
    att = ad.softmax(scores, axis=-1)
    if drop > 0:
        att = ad.dropout(att, drop, rng)
    out = ad.matmul(att, v)
    out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (B, Tq, d))
    return ad.matmul(out, params[pre + "wo"])


def _block(params, pre: str, x_q: Tensor, x_kv: Tensor, heads: int,
           mask: np.ndarray | None, drop: float,
           rng: np.random.Generator | None) -> Tensor:
    a = _attention(params, pre, x_q, x_kv, heads, mask, drop, rng)
    h = ad.layer_norm(ad.add(a, x_q), params[pre + "ln1_g"],
                      params[pre + "ln1_b"])
    inner = ad.relu(ad.add(ad.matmul(h, params[pre + "ffn_w1"]),
                           params[pre + "ffn_b1"]))
    if drop > 0:
        inner = ad.dropout(inner, drop, rng)
    f = ad.add(ad.matmul(inner, params[pre + "ffn_w2"]),
               params[pre + "ffn_b2"])
    return ad.layer_norm(ad.add(f, h), params[pre + "ln2_g"],
                         params[pre + "ln2_b"])


def layer_forward(params: dict[str, Tensor], cfg: ModelConfig, layer: int,
                  h: Tensor, f0: Tensor, mask: np.ndarray,
                  key_mask: np.ndarray | None = None,
                  training: bool = False,
                  rng: np.random.Generator | None = None) -> Tensor:
    """One layer: strictly causal self-attention block, then the unmasked
    global block reading the fixed format summary."""
    drop = cfg.dropout if training else 0.0
    c = _block(params, f"l{layer}.self.", h, h, cfg.heads, mask, drop, rng)
    return _block(params, f"l{layer}.glob.", c, f0, cfg.heads, key_mask,
                  drop, rng)


def forward(params: dict[str, Tensor], cfg: ModelConfig, batch: Batch,
            training: bool = False,
            rng: np.random.Generator | None = None,
            f0: Tensor | None = None) -> Tensor:
    """Full forward pass to logits (B, T, vocab). The format summary may be
    precomputed (decoding reuses it across steps); it is read-only here."""
    B, T = batch.size
    h = embed_inputs(params, cfg, batch, training, rng)
    if f0 is None:
        f0 = embed_format(params, cfg, batch)
        kmask = key_padding_mask(batch.lengths, T, dtype=h.dtype)
    else:
        kmask = None  # precomputed summary: every row is a real key
    mask = causal_mask(T, dtype=h.dtype)
    f0.data.flags.writeable = False
    for l in range(cfg.layers):
        h = layer_forward(params, cfg, l, h, f0, mask, kmask, training, rng)
    return ad.matmul(h, ad.transpose(params["tok_emb"], (1, 0)))


def nll(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean token negative log-likelihood, padding excluded."""
    return ad.cross_entropy(logits, targets, ignore_id=PAD_ID)


def corpus_mean_nll(params: dict[str, Tensor], cfg: ModelConfig,
                    seqs: list[SymbolSequence], batch_size: int = 16) -> float:
    """Token-weighted mean NLL over a corpus (batch-grouping invariant)."""
    if not seqs:
        raise ValueError("empty corpus")
    total, count = 0.0, 0
    order = sorted(range(len(seqs)), key=lambda i: len(seqs[i]))
    for start in range(0, len(order), batch_size):
        chunk = [seqs[i] for i in order[start : start + batch_size]]
        batch = make_batch(chunk)
        logits = forward(params, cfg, batch)
        n = int((batch.targets != PAD_ID).sum())
        total += nll(logits, batch.targets).item() * n
        count += n
    return total / count


def causal_next_probs(params: dict[str, Tensor], cfg: ModelConfig,
                      prefix_ids: list[int]) -> np.ndarray:
    """Next-token distribution of this model run as a plain causal LM
    (symbol channels supplied but typically ablated). Used by the
    integrity scorer."""
    ids = list(prefix_ids)[-(cfg.max_len - 1):]
    T = len(ids) + 1
    tok_in = np.array([BOS_ID] + ids, dtype=np.int64)[None]
    sym = np.full((1, T), SYM_BOS, dtype=np.int64)
    batch = Batch(
        tok_in=tok_in, kind_in=sym, line_in=sym, seg_in=sym,
        revealed_in=np.full((1, T), -1, dtype=np.int64),
        targets=np.zeros((1, T), dtype=np.int64),
        lengths=np.array([T], dtype=np.int64),
    )
    logits = forward(params, cfg, batch)
    row = logits.data[0, -1]
    row = row - row.max()
    e = np.exp(row)
    return e / e.sum()


# ---------------------------------------------------------------------------
# Checkpoints: text header (magic, config, meta) + named raw little-endian
# tensors. Round trips are bit-exact; writes go through a temp file + rename.

MAGIC = b"FCLM0001\n"


def save_checkpoint(path: str | Path, cfg: ModelConfig,
                    params: dict[str, Tensor],
                    opt: dict[str, np.ndarray] | None = None,
                    meta: dict[str, str] | None = None) -> None:
    path = Path(path)
    entries: list[tuple[str, np.ndarray]] = [
        (name, t.data) for name, t in params.items()
    ]
    for name, arr in (opt or {}).items():
        entries.append((f"opt:{name}", arr))
    buf = io.BytesIO()
    buf.write(MAGIC)
    cfg_items = cfg.to_dict()
    buf.write(f"config {len(cfg_items)}\n".encode())
    for k, v in cfg_items.items():
        buf.write(f"{k} {v}\n".encode())
    meta = meta or {}
    buf.write(f"meta {len(meta)}\n".encode())
    for k, v in meta.items():
        buf.write(f"{k} {v}\n".encode())
    buf.write(f"tensors {len(entries)}\n".encode())
    for name, arr in entries:
        dt = "f8" if arr.dtype == np.float64 else "f4"
        shape = ",".join(str(s) for s in arr.shape)
        buf.write(f"{name} {dt} {shape}\n".encode())
        buf.write(np.ascontiguousarray(arr).astype(f"<{dt}", copy=False).tobytes())
        buf.write(b"\n")
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)


class CheckpointError(Exception):
    pass


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, dict[str, Tensor],
                                               dict[str, np.ndarray],
                                               dict[str, str]]:
    data = Path(path).read_bytes()
    f = io.BytesIO(data)
    if f.readline() != MAGIC:
        raise CheckpointError(f"{path}: bad magic")

    def read_kv(section):
        line = f.readline().decode()
        tag, n = line.split()
        if tag != section:
            raise CheckpointError(f"{path}: expected {section} section")
        out = {}
        for _ in range(int(n)):
            k, v = f.readline().decode().rstrip("\n").split(" ", 1)
            out[k] = v
        return out

    cfg = ModelConfig.from_dict(read_kv("config"))
    meta = read_kv("meta")
    tag, n = f.readline().decode().split()
    if tag != "tensors":
        raise CheckpointError(f"{path}: expected tensors section")
    params: dict[str, Tensor] = {}
    opt: dict[str, np.ndarray] = {}
    for _ in range(int(n)):
        name, dt, shape = f.readline().decode().rstrip("\n").split(" ")
        dims = tuple(int(s) for s in shape.split(",") if s)
        nbytes = int(np.prod(dims)) * (8 if dt == "f8" else 4)
        arr = np.frombuffer(f.read(nbytes), dtype=f"<{dt}").reshape(dims).copy()
        f.read(1)  # trailing newline
        if name.startswith("opt:"):
            opt[name[4:]] = arr
        else:
            params[name] = Tensor(arr, requires_grad=True, name=name)
    return cfg, params, opt, meta
