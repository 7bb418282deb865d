"""Sequence models over planar point sets: pointer network and the two
fixed-dictionary baselines.

Token space: targets are integers 0..n, where token 0 is the stop symbol
and token t in 1..n means input position t.  The stop symbol is scored as
pointer position 0, backed by a learned sentinel vector prepended to the
encoder states.  The start-of-decoding trigger is never an output class:
the pointer model feeds a learned start vector as the first decoder
input, the baselines feed a reserved start token (class n+1) through
their token embedding.

Architectures:

ptrnet        attention logits over the n+1 encoder positions are the
              output distribution itself; works for any n with one set
              of weights.
seq2seq       encoder-decoder with a fixed output dictionary of n+2
              classes (stop, n positions, start); only accepts the n it
              was built for.
seq2seq_attn  seq2seq plus attention: the decoder state is blended with
              encoder states, predictions come from [blend; state], and
              that vector is fed back as part of the next decoder input.

All forward passes run on the define-by-run tape from ptrgeo.tensor, so
the same code serves training (backward) and decoding (tape discarded).
Batched passes flatten time-major: row j*B + b holds step j of example b,
keeping each step's slice contiguous.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .data import Example
from .tensor import (
    Parameter,
    Tape,
    Tensor,
    concat_cols,
    concat_rows,
    cross_entropy_rows,
    gather_rows,
    matmul,
    repeat_rows,
    reshape,
    sigmoid,
    slice_cols,
    slice_rows,
    stable_softmax,
    tanh,
    transpose,
)

__all__ = [
    "ARCHS",
    "UnsupportedLengthError",
    "LstmState",
    "LstmWeights",
    "Model",
    "make_ptrnet",
    "make_seq2seq",
    "make_seq2seq_attn",
    "model_from_params",
    "lstm_step",
    "encode",
    "pointer_logits",
    "attention_blend",
    "forward_nll",
    "nll_batch",
    "DecodeContext",
    "DecodeState",
    "decode_start",
    "decode_step",
    "target_tokens",
]

ARCHS = ("ptrnet", "seq2seq", "seq2seq_attn")
INIT_RANGE = 0.08


class UnsupportedLengthError(ValueError):
    """A fixed-dictionary baseline saw an input length it was not built for."""


class LstmState(NamedTuple):
    h: Tensor  # output-gated hidden, (B, hidden)
    c: Tensor  # cell, (B, hidden)


class LstmWeights(NamedTuple):
    w_x: Tensor  # (in, 4h)
    w_h: Tensor  # (h, 4h)
    b: Tensor    # (1, 4h)


class Model:
    """A named-parameter bundle plus the metadata needed to run it.

    `n` is None for the pointer network (length-generic) and the trained
    input length for the baselines.
    """

    def __init__(self, arch: str, hidden: int, params: dict[str, Parameter],
                 n: int | None = None):
        if arch not in ARCHS:
            raise ValueError(f"unknown architecture {arch!r}")
        self.arch = arch
        self.hidden = hidden
        self.params = params
        self.n = n

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def bind(self, tape: Tape) -> dict[str, Tensor]:
        return {name: p.bind(tape) for name, p in self.params.items()}


def _init(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)


def _lstm_params(rng, prefix: str, in_dim: int, hidden: int) -> dict[str, Parameter]:
    return {
        f"{prefix}.w_x": Parameter(f"{prefix}.w_x", _init(rng, (in_dim, 4 * hidden))),
        f"{prefix}.w_h": Parameter(f"{prefix}.w_h", _init(rng, (hidden, 4 * hidden))),
        f"{prefix}.b": Parameter(f"{prefix}.b", _init(rng, (1, 4 * hidden))),
    }


def _attn_params(rng, hidden: int) -> dict[str, Parameter]:
    return {
        "attn.w1": Parameter("attn.w1", _init(rng, (hidden, hidden))),
        "attn.w2": Parameter("attn.w2", _init(rng, (hidden, hidden))),
        "attn.v": Parameter("attn.v", _init(rng, (hidden, 1))),
    }


def make_ptrnet(hidden: int, seed: int = 0) -> Model:
    """Pointer network; one model handles every input length."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    params: dict[str, Parameter] = {
        "embed.w": Parameter("embed.w", _init(rng, (2, hidden))),
        "embed.b": Parameter("embed.b", _init(rng, (1, hidden))),
    }
    params.update(_lstm_params(rng, "encoder", hidden, hidden))
    params.update(_lstm_params(rng, "decoder", hidden, hidden))
    params.update(_attn_params(rng, hidden))
    params["start"] = Parameter("start", _init(rng, (1, hidden)))
    params["sentinel"] = Parameter("sentinel", _init(rng, (1, hidden)))
    return Model("ptrnet", hidden, params)


def make_seq2seq(hidden: int, n: int, seed: int = 0) -> Model:
    """Plain encoder-decoder; output dictionary fixed at n + 2 classes."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    params: dict[str, Parameter] = {
        "embed.w": Parameter("embed.w", _init(rng, (2, hidden))),
        "embed.b": Parameter("embed.b", _init(rng, (1, hidden))),
    }
    params.update(_lstm_params(rng, "encoder", hidden, hidden))
    params.update(_lstm_params(rng, "decoder", hidden, hidden))
    params["tokens.emb"] = Parameter("tokens.emb", _init(rng, (n + 2, hidden)))
    params["proj.w"] = Parameter("proj.w", _init(rng, (hidden, n + 2)))
    params["proj.b"] = Parameter("proj.b", _init(rng, (1, n + 2)))
    return Model("seq2seq", hidden, params, n=n)


def make_seq2seq_attn(hidden: int, n: int, seed: int = 0) -> Model:
    """Encoder-decoder with attention blending; dictionary fixed at n + 2.

    The decoder input is [token embedding; previous attention vector], so
    its LSTM consumes 3h features.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    params: dict[str, Parameter] = {
        "embed.w": Parameter("embed.w", _init(rng, (2, hidden))),
        "embed.b": Parameter("embed.b", _init(rng, (1, hidden))),
    }
    params.update(_lstm_params(rng, "encoder", hidden, hidden))
    params.update(_lstm_params(rng, "decoder", 3 * hidden, hidden))
    params.update(_attn_params(rng, hidden))
    params["tokens.emb"] = Parameter("tokens.emb", _init(rng, (n + 2, hidden)))
    params["proj.w"] = Parameter("proj.w", _init(rng, (2 * hidden, n + 2)))
    params["proj.b"] = Parameter("proj.b", _init(rng, (1, n + 2)))
    return Model("seq2seq_attn", hidden, params, n=n)


def model_from_params(hidden: int, params: dict[str, Parameter]) -> Model:
    """Rebuild a model from named parameters (checkpoint loading)."""
    if "sentinel" in params:
        return Model("ptrnet", hidden, params)
    if "tokens.emb" not in params:
        raise ValueError("parameter set matches no known architecture")
    n = params["tokens.emb"].value.shape[0] - 2
    arch = "seq2seq_attn" if "attn.w1" in params else "seq2seq"
    return Model(arch, hidden, params, n=n)


# ---------------------------------------------------------------------------
# forward building blocks


def lstm_step(w: LstmWeights, x: Tensor, state: LstmState) -> LstmState:
    """One cell update: gates in column blocks ordered input, forget,
    output, candidate."""
    h = state.h.shape[1]
    z = matmul(x, w.w_x) + matmul(state.h, w.w_h) + w.b
    i = sigmoid(slice_cols(z, 0, h))
    f = sigmoid(slice_cols(z, h, 2 * h))
    o = sigmoid(slice_cols(z, 2 * h, 3 * h))
    g = tanh(slice_cols(z, 3 * h, 4 * h))
    c = f * state.c + i * g
    return LstmState(o * tanh(c), c)


def _zero_state(batch: int, hidden: int) -> LstmState:
    z = Tensor._const(np.zeros((batch, hidden)))
    return LstmState(z, Tensor._const(np.zeros((batch, hidden))))


def _embed_point_rows(bound, xy: np.ndarray) -> Tensor:
    return matmul(Tensor._const(xy), bound["embed.w"]) + bound["embed.b"]


def _run_encoder(bound, hidden: int, points: np.ndarray) -> tuple[list[Tensor], LstmState]:
    """Per-step embeddings are consumed lazily; returns hidden states per
    position and the final state.  points has shape (B, n, 2)."""
    batch, n = points.shape[0], points.shape[1]
    enc = LstmWeights(bound["encoder.w_x"], bound["encoder.w_h"], bound["encoder.b"])
    state = _zero_state(batch, hidden)
    states = []
    for j in range(n):
        x = _embed_point_rows(bound, points[:, j, :])
        state = lstm_step(enc, x, state)
        states.append(state.h)
    return states, state


def encode(model: Model, points, tape: Tape | None = None) -> Tensor:
    """Encoder pass for one point set; rows are e_0..e_n with the sentinel
    stop position first."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise ValueError(f"expected a non-empty (n, 2) point set, got shape {pts.shape}")
    if model.arch != "ptrnet":
        raise ValueError("encode with a sentinel row is a pointer-model operation")
    bound = model.bind(tape if tape is not None else Tape())
    states, _ = _run_encoder(bound, model.hidden, pts[None, :, :])
    return concat_rows([bound["sentinel"]] + states)


def _tape_of(*tensors: Tensor) -> Tape:
    for t in tensors:
        if t.tape is not None:
            return t.tape
    return Tape()


def _attn_bound(model: Model, tape: Tape) -> tuple[Tensor, Tensor, Tensor]:
    return (model.params["attn.w1"].bind(tape),
            model.params["attn.w2"].bind(tape),
            model.params["attn.v"].bind(tape))


def pointer_logits(model: Model, e: Tensor, d: Tensor) -> Tensor:
    """Attention scores against every encoder position, shape (1, n+1);
    column 0 scores the stop sentinel."""
    w1, w2, v = _attn_bound(model, _tape_of(e, d))
    u = matmul(tanh(matmul(e, w1) + repeat_rows(matmul(d, w2), e.shape[0])), v)
    return transpose(u)


def attention_blend(model: Model, e: Tensor, d: Tensor) -> Tensor:
    """Baseline attention: softmax-weighted average of the real encoder
    states (sentinel row excluded), concatenated with the decoder state.
    Returns a (1, 2h) vector."""
    w1, w2, v = _attn_bound(model, _tape_of(e, d))
    real = slice_rows(e, 1, e.shape[0])
    u = matmul(tanh(matmul(real, w1) + repeat_rows(matmul(d, w2), real.shape[0])), v)
    weights = stable_softmax(transpose(u))
    blended = matmul(weights, real)
    return concat_cols([blended, d])


# ---------------------------------------------------------------------------
# likelihood


def target_tokens(example: Example) -> list[int]:
    """Decoder targets: the label indices then the stop token."""
    n = example.n
    for t in example.output:
        if not 1 <= t <= n:
            raise ValueError(f"target index {t} out of range 1..{n}")
    return list(example.output) + [0]


def _stack_blocks(blocks: list[Tensor]) -> Tensor:
    return blocks[0] if len(blocks) == 1 else concat_rows(blocks)


def _target_arrays(group: list[Example]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Time-major targets, 0/1 weights, and previous-token indices, each
    of shape (M, B); steps past an example's end carry weight zero and a
    dummy previous token."""
    tokens = [target_tokens(ex) for ex in group]
    m = max(len(t) for t in tokens)
    b = len(group)
    targets = np.zeros((m, b), dtype=int)
    weights = np.zeros((m, b))
    prev = np.ones((m, b), dtype=int)
    for k, seq in enumerate(tokens):
        targets[:len(seq), k] = seq
        weights[:len(seq), k] = 1.0
        prev[1:len(seq), k] = seq[:-1]
    return targets, weights, prev


def _group_nll_ptrnet(model: Model, bound, group: list[Example]) -> Tensor:
    hidden = model.hidden
    b = len(group)
    n = group[0].n
    pts = np.asarray([ex.points for ex in group], dtype=float)
    enc_states, final = _run_encoder(bound, hidden, pts)

    # row j*B + k is encoder position j of example k; position 0 = stop
    e_flat = _stack_blocks([repeat_rows(bound["sentinel"], b)] + enc_states)
    w1e = matmul(e_flat, bound["attn.w1"])
    emb_flat = _stack_blocks(
        [_embed_point_rows(bound, pts[:, j, :]) for j in range(n)])

    targets, weights, prev = _target_arrays(group)
    dec = LstmWeights(bound["decoder.w_x"], bound["decoder.w_h"], bound["decoder.b"])
    state = LstmState(final.h, final.c)
    offsets = np.arange(b)
    total = None
    for i in range(targets.shape[0]):
        if i == 0:
            x = repeat_rows(bound["start"], b)
        else:
            x = gather_rows(emb_flat, (prev[i] - 1) * b + offsets)
        state = lstm_step(dec, x, state)
        d2 = repeat_rows(matmul(state.h, bound["attn.w2"]), n + 1)
        u = matmul(tanh(w1e + d2), bound["attn.v"])
        logits = transpose(reshape(u, (n + 1, b)))
        step = cross_entropy_rows(logits, targets[i], weights[i])
        total = step if total is None else total + step
    return total


def _group_nll_baseline(model: Model, bound, group: list[Example]) -> Tensor:
    hidden = model.hidden
    b = len(group)
    n = group[0].n
    if n != model.n:
        raise UnsupportedLengthError(
            f"model was trained for n = {model.n}, got an example with n = {n}")
    pts = np.asarray([ex.points for ex in group], dtype=float)
    enc_states, final = _run_encoder(bound, hidden, pts)

    attentive = model.arch == "seq2seq_attn"
    if attentive:
        e_real = _stack_blocks(enc_states)
        w1e = matmul(e_real, bound["attn.w1"])

    targets, weights, prev = _target_arrays(group)
    prev[0, :] = n + 1  # start-of-decoding token
    dec = LstmWeights(bound["decoder.w_x"], bound["decoder.w_h"], bound["decoder.b"])
    state = LstmState(final.h, final.c)
    attn_vec = Tensor._const(np.zeros((b, 2 * hidden)))
    total = None
    for i in range(targets.shape[0]):
        tok = gather_rows(bound["tokens.emb"], prev[i])
        x = concat_cols([tok, attn_vec]) if attentive else tok
        state = lstm_step(dec, x, state)
        if attentive:
            d2 = repeat_rows(matmul(state.h, bound["attn.w2"]), n)
            u = matmul(tanh(w1e + d2), bound["attn.v"])
            weights_attn = stable_softmax(transpose(reshape(u, (n, b))))
            blended = None
            for j in range(n):
                term = slice_cols(weights_attn, j, j + 1) * enc_states[j]
                blended = term if blended is None else blended + term
            attn_vec = concat_cols([blended, state.h])
            logits = matmul(attn_vec, bound["proj.w"]) + bound["proj.b"]
        else:
            logits = matmul(state.h, bound["proj.w"]) + bound["proj.b"]
        step = cross_entropy_rows(logits, targets[i], weights[i])
        total = step if total is None else total + step
    return total


def nll_batch(model: Model, examples: Sequence[Example]) -> tuple[Tensor, int]:
    """Summed teacher-forced negative log likelihood over the batch and
    the number of contributing target tokens (terminal steps included).

    Examples are grouped by point count so each group runs as one padded
    time-major pass; the returned scalar lives on a fresh tape ready for
    backward().
    """
    examples = list(examples)
    if not examples:
        raise ValueError("empty batch")
    tape = Tape()
    bound = model.bind(tape)
    groups: dict[int, list[Example]] = {}
    for ex in examples:
        groups.setdefault(ex.n, []).append(ex)
    total = None
    tokens = 0
    for n in sorted(groups):
        group = groups[n]
        if model.arch == "ptrnet":
            part = _group_nll_ptrnet(model, bound, group)
        else:
            part = _group_nll_baseline(model, bound, group)
        total = part if total is None else total + part
        tokens += sum(len(ex.output) + 1 for ex in group)
    return total, tokens


def forward_nll(model: Model, example: Example) -> float:
    """Summed NLL of one example's target sequence under teacher forcing."""
    loss, _ = nll_batch(model, [example])
    return loss.item()


# ---------------------------------------------------------------------------
# stepwise decoding interface


class DecodeState(NamedTuple):
    state: LstmState
    attn_vec: Tensor | None  # baselines with attention only
    first: bool


class DecodeContext(NamedTuple):
    """Per-input artefacts shared by every hypothesis during decoding."""
    model: Model
    n: int
    points: np.ndarray
    e_flat: Tensor | None    # ptrnet: (n+1, h) with sentinel row
    w1e: Tensor | None
    enc_states: list[Tensor] | None  # baselines with attention
    init: DecodeState


def decode_start(model: Model, points) -> DecodeContext:
    """Run the encoder once, returning the context plus the initial
    decoder state (before any token is consumed)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise ValueError(f"expected a non-empty (n, 2) point set, got shape {pts.shape}")
    n = len(pts)
    tape = Tape()
    bound = model.bind(tape)
    enc_states, final = _run_encoder(bound, model.hidden, pts[None, :, :])
    state = DecodeState(LstmState(final.h, final.c), None, True)
    if model.arch == "ptrnet":
        e_flat = _stack_blocks([bound["sentinel"]] + enc_states)
        w1e = matmul(e_flat, bound["attn.w1"])
        return DecodeContext(model, n, pts, e_flat, w1e, None, state)
    if n != model.n:
        raise UnsupportedLengthError(
            f"model was trained for n = {model.n}, got an example with n = {n}")
    if model.arch == "seq2seq_attn":
        e_real = _stack_blocks(enc_states)
        w1e = matmul(e_real, bound["attn.w1"])
        state = DecodeState(state.state,
                            Tensor._const(np.zeros((1, 2 * model.hidden))), True)
        return DecodeContext(model, n, pts, None, w1e, enc_states, state)
    return DecodeContext(model, n, pts, None, None, None, state)


def decode_step(ctx: DecodeContext, st: DecodeState,
                prev_token: int | None) -> tuple[np.ndarray, DecodeState]:
    """Consume the previously emitted token (None at the first step) and
    return log probabilities over tokens 0..n plus the successor state."""
    model = ctx.model
    tape = ctx.init.state.h.tape
    bound = None

    def p(name: str) -> Tensor:
        nonlocal bound
        if bound is None:
            bound = model.bind(tape)
        return bound[name]

    if not st.first and (prev_token is None or not 1 <= prev_token <= ctx.n):
        raise ValueError(f"previous token {prev_token} out of range 1..{ctx.n}")
    dec = LstmWeights(p("decoder.w_x"), p("decoder.w_h"), p("decoder.b"))
    if model.arch == "ptrnet":
        if st.first:
            x = p("start")
        else:
            x = _embed_point_rows(
                {"embed.w": p("embed.w"), "embed.b": p("embed.b")},
                ctx.points[prev_token - 1][None, :])
        state = lstm_step(dec, x, st.state)
        d2 = repeat_rows(matmul(state.h, p("attn.w2")), ctx.n + 1)
        u = matmul(tanh(ctx.w1e + d2), p("attn.v")).data.ravel()
        return _log_softmax(u), DecodeState(state, None, False)

    tok_index = model.n + 1 if st.first else prev_token
    tok = gather_rows(p("tokens.emb"), np.array([tok_index]))
    if model.arch == "seq2seq_attn":
        x = concat_cols([tok, st.attn_vec])
        state = lstm_step(dec, x, st.state)
        d2 = repeat_rows(matmul(state.h, p("attn.w2")), ctx.n)
        u = matmul(tanh(ctx.w1e + d2), p("attn.v"))
        weights_attn = stable_softmax(transpose(u))
        blended = matmul(weights_attn, _stack_blocks(ctx.enc_states))
        attn_vec = concat_cols([blended, state.h])
        logits = (matmul(attn_vec, p("proj.w")) + p("proj.b")).data.ravel()
        nxt = DecodeState(state, attn_vec, False)
    else:
        state = lstm_step(dec, tok, st.state)
        logits = (matmul(state.h, p("proj.w")) + p("proj.b")).data.ravel()
        nxt = DecodeState(state, None, False)
    # the start class is never a legal output; mask it before normalizing
    masked = logits[:model.n + 1].copy()
    return _log_softmax(masked), nxt


def _log_softmax(u: np.ndarray) -> np.ndarray:
    shifted = u - u.max()
    return shifted - np.log(np.exp(shifted).sum())
