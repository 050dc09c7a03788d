"""Minimal HTTP facade over generation and polishing.

JSON over HTTP/1.1: POST /generate takes a format DSL, POST /polish takes
previous output lines plus (line, index) locks, GET /health reports
liveness. Requests never mutate server state; the model snapshot is loaded
once, and a monotone request counter tags responses for client-side
history."""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .corpus import SEP, Vocab
from .decoding import DecodeConfig, generate
from .formats import (ConstraintError, FormatError, parse_format,
                      rebuild_format)
from .metrics import split_sentences
from .model import ModelConfig


class GenerateRequest(BaseModel):
    format_dsl: str
    k: int = 32
    temperature: float = 1.0
    seed: int = 0
    hard_constrain: bool = False


class PolishRequest(BaseModel):
    tokens: list[list[str]]
    locks: list[tuple[int, int]] = []
    k: int = 32
    temperature: float = 1.0
    seed: int = 0
    hard_constrain: bool = False


def build_app(params, cfg: ModelConfig, vocab: Vocab,
              default_k: int = 32) -> FastAPI:
    app = FastAPI(title="formatlm")
    counter = {"n": 0}
    lock = threading.Lock()

    def next_id() -> int:
        with lock:
            counter["n"] += 1
            return counter["n"]

    def decode_config(k: int, temperature: float, seed: int,
                      hard: bool) -> DecodeConfig:
        try:
            return DecodeConfig(k=k or default_k, temperature=temperature,
                                seed=seed, hard_constrain=hard,
                                max_len=cfg.max_len)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    def respond(spec, ids):
        tokens = vocab.decode(ids)
        return {
            "tokens": split_sentences(tokens),
            "rhyme_slots": [
                {"line": li, "index": idx, "group": group}
                for (li, idx), group in sorted(spec.rhyme_slots().items())
            ],
            "request_id": next_id(),
        }

    @app.get("/health")
    def health():
        return {"status": "ok", "vocab_size": len(vocab)}

    @app.post("/generate")
    def generate_endpoint(req: GenerateRequest):
        try:
            spec = parse_format(req.format_dsl)
        except FormatError as exc:
            raise HTTPException(
                status_code=400,
                detail={"message": str(exc), "line": exc.line, "col": exc.col},
            )
        dcfg = decode_config(req.k, req.temperature, req.seed,
                             req.hard_constrain)
        try:
            ids = generate(params, cfg, vocab, spec, dcfg)
        except ConstraintError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return respond(spec, ids)

    @app.post("/polish")
    def polish_endpoint(req: PolishRequest):
        flat: list[str] = []
        for line in req.tokens:
            flat.extend(line)
            flat.append(SEP)
        locks: set[int] = set()
        for (li, idx) in req.locks:
            if li < 0 or li >= len(req.tokens) or idx < 0 or idx >= len(req.tokens[li]):
                raise HTTPException(status_code=400,
                                    detail=f"invalid lock ({li}, {idx})")
            locks.add(sum(len(ln) + 1 for ln in req.tokens[:li]) + idx)
        dcfg = decode_config(req.k, req.temperature, req.seed,
                             req.hard_constrain)
        try:
            spec = rebuild_format(flat, locks)
            ids = generate(params, cfg, vocab, spec, dcfg)
        except FormatError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except ConstraintError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return respond(spec, ids)

    return app
