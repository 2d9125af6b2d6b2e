"""Tiny autoregressive sequence scorer with exact hand-derived gradients.

Architecture: the encoder is the mean of the input token embeddings; each
decode step concatenates that encoding with the previous output token's
embedding, runs one tanh hidden layer, and projects to output-vocabulary
logits. There is no recurrent state, so every (example, step) pair is an
independent row and both the forward pass and the exact gradient vectorize
into a handful of matrix products.

Output grammar: a valid output sequence is zero or more trace tokens,
exactly one label token, then end-of-sequence, with total length bounded
by ``max_out_len``. Greedy decoding and beam search are constrained to
this grammar, which makes greedy decoding identical to width-1 beam
search and exhaustive-width beam search identical to enumerating all
valid sequences.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from relgrade import tokens as tok
from relgrade.errors import Diverged, MalformedOutput, NonFinite
from relgrade.schema import Label

Seq = tuple[int, ...]


@dataclass(frozen=True)
class Tokenizer:
    """Input and output vocabularies with dense, stable indices."""

    input_tokens: tuple[str, ...]
    output_tokens: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.input_tokens)) != len(self.input_tokens):
            raise ValueError("duplicate input tokens")
        if len(set(self.output_tokens)) != len(self.output_tokens):
            raise ValueError("duplicate output tokens")
        missing = [t for t in tok.LABEL_TOKENS if t not in self.output_tokens]
        if missing:
            raise ValueError(f"output vocabulary lacks label tokens: {missing}")
        if tok.EOS not in self.output_tokens:
            raise ValueError("output vocabulary lacks end-of-sequence token")

    @cached_property
    def input_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.input_tokens)}

    @cached_property
    def output_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.output_tokens)}

    @cached_property
    def unk_id(self) -> int:
        return self.input_index[tok.UNK]

    @cached_property
    def sep_id(self) -> int:
        return self.input_index[tok.SEP]

    @cached_property
    def eos_id(self) -> int:
        return self.output_index[tok.EOS]

    @cached_property
    def label_ids(self) -> tuple[int, ...]:
        """Output indices of the five label tokens, descending rank order."""
        return tuple(self.output_index[t] for t in tok.LABEL_TOKENS)

    @cached_property
    def _label_by_id(self) -> dict[int, Label]:
        return {self.output_index[l.value]: l for l in Label}

    def is_label_id(self, idx: int) -> bool:
        return idx in self._label_by_id

    def label_for_id(self, idx: int) -> Label:
        return self._label_by_id[idx]

    def id_for_label(self, label: Label) -> int:
        return self.output_index[label.value]

    def encode_text(self, text: str) -> list[int]:
        """Lowercase, split on whitespace/punctuation, map unknowns to UNK."""
        import re

        parts = re.findall(r"[a-z0-9]+", text.lower())
        index = self.input_index
        unk = self.unk_id
        return [index.get(p, unk) for p in parts]


@dataclass(frozen=True)
class Dims:
    """Architecture configuration; fully determines the parameter layout."""

    embed_dim: int
    hidden_dim: int
    input_vocab: int
    output_vocab: int
    max_out_len: int

    @property
    def param_count(self) -> int:
        d, h = self.embed_dim, self.hidden_dim
        # input embeddings, previous-token embeddings (+1 start-of-sequence
        # row), hidden layer, bias-free output projection; without an
        # output bias, label priors have to flow through the feature
        # weights, which keeps small fine-tuning sets from instantly
        # re-basing the head on their own label mix
        return (
            self.input_vocab * d
            + (self.output_vocab + 1) * d
            + h * 2 * d
            + h
            + self.output_vocab * h
        )

    def to_json(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "input_vocab": self.input_vocab,
            "output_vocab": self.output_vocab,
            "max_out_len": self.max_out_len,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Dims":
        return cls(**obj)


class _Views(NamedTuple):
    emb_in: np.ndarray  # (V_in, d)
    emb_prev: np.ndarray  # (V_out + 1, d); last row feeds the first step
    w_hidden: np.ndarray  # (h, 2d)
    b_hidden: np.ndarray  # (h,)
    w_out: np.ndarray  # (V_out, h)


def _views(params: np.ndarray, dims: Dims) -> _Views:
    d, h = dims.embed_dim, dims.hidden_dim
    vi, vo = dims.input_vocab, dims.output_vocab
    sizes = [vi * d, (vo + 1) * d, h * 2 * d, h, vo * h]
    shapes = [(vi, d), (vo + 1, d), (h, 2 * d), (h,), (vo, h)]
    out = []
    off = 0
    for size, shape in zip(sizes, shapes):
        out.append(params[off : off + size].reshape(shape))
        off += size
    return _Views(*out)


@dataclass
class Checkpoint:
    """Immutable parameter snapshot plus everything needed to run it."""

    params: np.ndarray
    dims: Dims
    tokenizer: Tokenizer
    stage_tag: str = "init"
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.dims.param_count,):
            raise ValueError(
                f"params length {self.params.shape} does not match dims "
                f"({self.dims.param_count},)"
            )
        if not np.all(np.isfinite(self.params)):
            raise NonFinite("checkpoint parameters contain non-finite values")
        if len(self.tokenizer.input_tokens) != self.dims.input_vocab:
            raise ValueError("tokenizer input vocabulary does not match dims")
        if len(self.tokenizer.output_tokens) != self.dims.output_vocab:
            raise ValueError("tokenizer output vocabulary does not match dims")


def init_checkpoint(
    dims: Dims,
    tokenizer: Tokenizer,
    seed: int,
    stage_tag: str = "init",
    scale: float = 0.5,
    config_hash: str = "",
) -> Checkpoint:
    """Seeded random initialization; biases start at zero."""
    rng = np.random.default_rng(seed)
    params = rng.normal(0.0, scale, size=dims.param_count)
    v = _views(params, dims)
    v.b_hidden[:] = 0.0
    return Checkpoint(
        params=params,
        dims=dims,
        tokenizer=tokenizer,
        stage_tag=stage_tag,
        seed=seed,
        config_hash=config_hash,
    )


def _logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True)))[..., 0]


def _encode_inputs(v: _Views, inputs: Sequence[Sequence[int]]) -> np.ndarray:
    """Mean input embedding per example, shape (B, d).

    Inputs are ragged; grouping by length keeps the lookup vectorized.
    """
    n = len(inputs)
    lens = np.fromiter((len(ids) for ids in inputs), dtype=np.intp, count=n)
    out = np.empty((n, v.emb_in.shape[1]))
    for length in np.unique(lens):
        rows = np.flatnonzero(lens == length)
        mat = np.asarray([inputs[int(i)] for i in rows], dtype=np.intp)
        out[rows] = v.emb_in[mat].mean(axis=1)
    return out


def _step_logits(v: _Views, enc_rows: np.ndarray, prev_ids: np.ndarray) -> np.ndarray:
    z = np.concatenate([enc_rows, v.emb_prev[prev_ids]], axis=1)
    hid = np.tanh(z @ v.w_hidden.T + v.b_hidden)
    return hid @ v.w_out.T


def forward_logprobs(
    c: Checkpoint, input_ids: Sequence[int], prefix: Sequence[int] = ()
) -> np.ndarray:
    """Log-probabilities over the output vocabulary for the next step.

    Raises:
        ValueError: on an empty input or a prefix at the length limit.
        NonFinite: if any logit is non-finite.
    """
    if len(input_ids) == 0:
        raise ValueError("input must be non-empty")
    if len(prefix) >= c.dims.max_out_len:
        raise ValueError("prefix has no room left for another token")
    v = _views(c.params, c.dims)
    enc = v.emb_in[np.asarray(input_ids, dtype=np.intp)].mean(axis=0)
    prev = v.emb_prev[prefix[-1]] if len(prefix) else v.emb_prev[-1]
    z = np.concatenate([enc, prev])
    hid = np.tanh(v.w_hidden @ z + v.b_hidden)
    logits = v.w_out @ hid
    if not np.all(np.isfinite(logits)):
        raise NonFinite("non-finite logits")
    m = logits.max()
    return logits - (m + np.log(np.exp(logits - m).sum()))


def validate_output_seq(tokenizer: Tokenizer, dims: Dims, seq: Sequence[int]) -> Seq:
    """Check the output grammar; returns the sequence as a tuple.

    Raises MalformedOutput when the sequence is not trace tokens, one
    label, then end-of-sequence, within the length limit.
    """
    seq = tuple(int(t) for t in seq)
    eos = tokenizer.eos_id
    if len(seq) < 2:
        raise MalformedOutput(f"sequence too short: {seq}")
    if len(seq) > dims.max_out_len:
        raise MalformedOutput(f"sequence longer than {dims.max_out_len}: {seq}")
    if seq[-1] != eos:
        raise MalformedOutput("sequence does not end with end-of-sequence")
    if any(t == eos for t in seq[:-1]):
        raise MalformedOutput("end-of-sequence before the final position")
    labels = [i for i, t in enumerate(seq) if tokenizer.is_label_id(t)]
    if len(labels) != 1 or labels[0] != len(seq) - 2:
        raise MalformedOutput(
            "sequence must contain exactly one label token, immediately "
            "before end-of-sequence"
        )
    if any(not (0 <= t < dims.output_vocab) for t in seq):
        raise MalformedOutput("token index outside the output vocabulary")
    return seq


def sequence_logprob(
    c: Checkpoint, input_ids: Sequence[int], seq: Sequence[int]
) -> float:
    """Total log-likelihood of a valid output sequence; always <= 0."""
    seq = validate_output_seq(c.tokenizer, c.dims, seq)
    total = 0.0
    prefix: tuple[int, ...] = ()
    for t in seq:
        total += float(forward_logprobs(c, input_ids, prefix)[t])
        prefix = prefix + (t,)
    return total


def loss_lm(c: Checkpoint, input_ids: Sequence[int], target: Sequence[int]) -> float:
    """Negative log-likelihood of the target sequence; always >= 0."""
    return -sequence_logprob(c, input_ids, target)


# ---------------------------------------------------------------------------
# Exact gradients

WeightedItem = tuple[Sequence[int], Sequence[int], float]


def _weighted_nll_and_grad(
    params: np.ndarray,
    dims: Dims,
    items: Sequence[WeightedItem],
    want_grad: bool = True,
) -> tuple[float, np.ndarray | None]:
    """Sum of weight_i * NLL(seq_i) and its exact parameter gradient.

    Each (example, step) pair becomes one row; the whole batch is four
    matrix products forward and five backward. Negative weights are fine,
    which is what the preference loss needs.
    """
    v = _views(params, dims)
    d = dims.embed_dim
    bos = dims.output_vocab  # start-of-sequence row in emb_prev

    enc = _encode_inputs(v, [ids for ids, _, _ in items])

    row_ex: list[int] = []
    prev: list[int] = []
    tgt: list[int] = []
    w_row: list[float] = []
    for i, (_, seq, weight) in enumerate(items):
        p = bos
        for t in seq:
            row_ex.append(i)
            prev.append(p)
            tgt.append(int(t))
            w_row.append(weight)
            p = int(t)
    row_ex_a = np.asarray(row_ex, dtype=np.intp)
    prev_a = np.asarray(prev, dtype=np.intp)
    tgt_a = np.asarray(tgt, dtype=np.intp)
    w_a = np.asarray(w_row, dtype=np.float64)
    n_rows = len(row_ex)

    z = np.concatenate([enc[row_ex_a], v.emb_prev[prev_a]], axis=1)
    hid = np.tanh(z @ v.w_hidden.T + v.b_hidden)
    logits = hid @ v.w_out.T
    if not np.all(np.isfinite(logits)):
        raise NonFinite("non-finite logits")
    logprobs = logits - _logsumexp_rows(logits)[:, None]
    nll = float(-(w_a * logprobs[np.arange(n_rows), tgt_a]).sum())
    if not want_grad:
        return nll, None

    grad = np.zeros_like(params)
    g = _views(grad, dims)

    probs = np.exp(logprobs)
    dlogits = probs * w_a[:, None]
    dlogits[np.arange(n_rows), tgt_a] -= w_a

    g.w_out[:] = dlogits.T @ hid
    dhid = dlogits @ v.w_out
    da = dhid * (1.0 - hid * hid)
    g.w_hidden[:] = da.T @ z
    g.b_hidden[:] = da.sum(axis=0)
    dz = da @ v.w_hidden
    np.add.at(g.emb_prev, prev_a, dz[:, d:])

    denc = np.zeros_like(enc)
    np.add.at(denc, row_ex_a, dz[:, :d])
    tok_flat: list[int] = []
    ex_of_tok: list[int] = []
    inv_len: list[float] = []
    for i, (ids, _, _) in enumerate(items):
        n = len(ids)
        tok_flat.extend(int(t) for t in ids)
        ex_of_tok.extend([i] * n)
        inv_len.extend([1.0 / n] * n)
    contrib = denc[np.asarray(ex_of_tok, dtype=np.intp)] * np.asarray(inv_len)[:, None]
    np.add.at(g.emb_in, np.asarray(tok_flat, dtype=np.intp), contrib)
    return nll, grad


def grad_lm(
    c: Checkpoint, batch: Sequence[tuple[Sequence[int], Sequence[int]]]
) -> np.ndarray:
    """Exact gradient of the mean sequence NLL over ``batch``."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    w = 1.0 / len(batch)
    items = [(ids, seq, w) for ids, seq in batch]
    _, grad = _weighted_nll_and_grad(c.params, c.dims, items)
    assert grad is not None
    return grad


def mean_loss_lm(
    c: Checkpoint, batch: Sequence[tuple[Sequence[int], Sequence[int]]]
) -> float:
    """Mean sequence NLL over ``batch`` (forward only)."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    w = 1.0 / len(batch)
    items = [(ids, seq, w) for ids, seq in batch]
    nll, _ = _weighted_nll_and_grad(c.params, c.dims, items, want_grad=False)
    return nll


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    epochs: int = 8
    batch_size: int = 32
    seed: int = 0


def train(
    c: Checkpoint,
    pairs: Sequence[tuple[Sequence[int], Sequence[int]]],
    cfg: TrainConfig,
    stage_tag: str | None = None,
) -> Checkpoint:
    """Plain SGD on the mean sequence NLL with seeded shuffling.

    Deterministic for a fixed seed; epochs=0 returns the parameters
    unchanged (modulo the new stage tag).

    Raises:
        Diverged: if the loss or parameters become non-finite.
        ValueError: on an empty training set.
    """
    if len(pairs) == 0:
        raise ValueError("training set must be non-empty")
    params = c.params.copy()
    rng = np.random.default_rng(cfg.seed)
    n = len(pairs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            w = 1.0 / len(idx)
            items = [(pairs[i][0], pairs[i][1], w) for i in idx]
            try:
                nll, grad = _weighted_nll_and_grad(params, c.dims, items)
            except NonFinite as exc:
                raise Diverged(f"epoch {epoch}: {exc}") from exc
            if not np.isfinite(nll):
                raise Diverged(f"epoch {epoch}: loss became non-finite")
            params -= cfg.lr * grad
        if not np.all(np.isfinite(params)):
            raise Diverged(f"epoch {epoch}: parameters became non-finite")
    return replace(
        c, params=params, stage_tag=stage_tag if stage_tag is not None else c.stage_tag
    )


# ---------------------------------------------------------------------------
# Decoding


def _allowed_mask(
    tokenizer: Tokenizer, dims: Dims, pos: int, last_is_label: bool
) -> np.ndarray:
    """Boolean mask of grammar-allowed next tokens at output position pos."""
    vo = dims.output_vocab
    mask = np.zeros(vo, dtype=bool)
    if last_is_label:
        mask[tokenizer.eos_id] = True
        return mask
    if pos == dims.max_out_len - 2:
        mask[list(tokenizer.label_ids)] = True
        return mask
    mask[:] = True
    mask[tokenizer.eos_id] = False
    return mask


def greedy_decode(c: Checkpoint, input_ids: Sequence[int]) -> Seq:
    """Grammar-constrained greedy decode; always yields a valid sequence.

    Raises MalformedOutput if the length limit cannot fit a label and
    end-of-sequence at all (max_out_len < 2).
    """
    if c.dims.max_out_len < 2:
        raise MalformedOutput("max_out_len < 2 cannot fit a label and EOS")
    seq: tuple[int, ...] = ()
    last_is_label = False
    for pos in range(c.dims.max_out_len):
        lp = forward_logprobs(c, input_ids, seq)
        mask = _allowed_mask(c.tokenizer, c.dims, pos, last_is_label)
        masked = np.where(mask, lp, -np.inf)
        nxt = int(np.argmax(masked))
        seq = seq + (nxt,)
        if nxt == c.tokenizer.eos_id:
            return seq
        last_is_label = c.tokenizer.is_label_id(nxt)
    raise MalformedOutput(f"decode exceeded max length without finishing: {seq}")


def predict(c: Checkpoint, input_ids: Sequence[int]) -> Label:
    """Deterministic greedy prediction: the label token of the decode."""
    seq = greedy_decode(c, input_ids)
    return c.tokenizer.label_for_id(seq[-2])


def batch_greedy_decode(
    c: Checkpoint, inputs: Sequence[Sequence[int]]
) -> list[Seq]:
    """Greedy decode for many inputs in lockstep; same grammar as above."""
    if len(inputs) == 0:
        return []
    if c.dims.max_out_len < 2:
        raise MalformedOutput("max_out_len < 2 cannot fit a label and EOS")
    v = _views(c.params, c.dims)
    enc = _encode_inputs(v, inputs)
    n = len(inputs)
    bos = c.dims.output_vocab
    prev = np.full(n, bos, dtype=np.intp)
    seqs: list[list[int]] = [[] for _ in range(n)]
    done = np.zeros(n, dtype=bool)
    label_emitted = np.zeros(n, dtype=bool)
    label_ids = np.asarray(c.tokenizer.label_ids, dtype=np.intp)
    eos = c.tokenizer.eos_id
    for pos in range(c.dims.max_out_len):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        logits = _step_logits(v, enc[active], prev[active])
        if not np.all(np.isfinite(logits)):
            raise NonFinite("non-finite logits")
        lp = logits - _logsumexp_rows(logits)[:, None]
        scores = np.full_like(lp, -np.inf)
        lab_rows = label_emitted[active]
        # rows whose label is already out may only close with EOS
        scores[lab_rows, eos] = lp[lab_rows, eos]
        open_rows = ~lab_rows
        if pos == c.dims.max_out_len - 2:
            scores[np.ix_(open_rows, label_ids)] = lp[np.ix_(open_rows, label_ids)]
        else:
            content = np.ones(c.dims.output_vocab, dtype=bool)
            content[eos] = False
            scores[np.ix_(open_rows, content)] = lp[np.ix_(open_rows, content)]
        choice = np.argmax(scores, axis=1)
        for row, ch in zip(active, choice):
            ch = int(ch)
            seqs[row].append(ch)
            if ch == eos:
                done[row] = True
            else:
                label_emitted[row] = c.tokenizer.is_label_id(ch)
                prev[row] = ch
    if not done.all():
        raise MalformedOutput("decode exceeded max length without finishing")
    return [tuple(s) for s in seqs]


def batch_predict(c: Checkpoint, inputs: Sequence[Sequence[int]]) -> list[Label]:
    return [c.tokenizer.label_for_id(s[-2]) for s in batch_greedy_decode(c, inputs)]


def beam_search(
    c: Checkpoint, input_ids: Sequence[int], width: int
) -> list[tuple[Seq, float]]:
    """Width-limited best-first search over valid output sequences.

    Returns up to ``width`` finished sequences as (sequence, total
    log-probability), sorted by score descending with lexicographic
    tie-breaking. Finished sequences compete with open partials for beam
    slots, so at exhaustive width the result enumerates every valid
    sequence in score order.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    if c.dims.max_out_len < 2:
        raise MalformedOutput("max_out_len < 2 cannot fit a label and EOS")
    tokenizer = c.tokenizer
    # (seq, score, finished)
    beam: list[tuple[Seq, float, bool]] = [((), 0.0, False)]
    for pos in range(c.dims.max_out_len):
        candidates: list[tuple[Seq, float, bool]] = []
        expanded = False
        for seq, score, finished in beam:
            if finished:
                candidates.append((seq, score, True))
                continue
            expanded = True
            lp = forward_logprobs(c, input_ids, seq)
            last_is_label = bool(seq) and tokenizer.is_label_id(seq[-1])
            mask = _allowed_mask(tokenizer, c.dims, pos, last_is_label)
            for t in np.flatnonzero(mask):
                t = int(t)
                candidates.append(
                    (seq + (t,), score + float(lp[t]), t == tokenizer.eos_id)
                )
        if not expanded:
            break
        candidates.sort(key=lambda item: (-item[1], item[0]))
        beam = candidates[:width]
    finished = [(seq, score) for seq, score, fin in beam if fin]
    finished.sort(key=lambda item: (-item[1], item[0]))
    return finished


# ---------------------------------------------------------------------------
# Input serialization


def encode_pair(
    tokenizer: Tokenizer,
    query: str,
    title: str,
    form: str = "plain",
    wrong: Label | None = None,
) -> Seq:
    """Serialize a (query, title) pair into an input token sequence.

    ``form`` selects the role marker: "plain" (also the analysis-trace
    form), "ra" prefixes the rule marker, "dr" prefixes the reflection
    marker plus the wrongly decided label word.
    """
    ids = tokenizer.encode_text(query) + [tokenizer.sep_id] + tokenizer.encode_text(title)
    if form == "plain":
        pass
    elif form == "ra":
        ids = [tokenizer.input_index[tok.RA_MARK]] + ids
    elif form == "dr":
        if wrong is None:
            raise ValueError("dr form requires the wrong decision")
        wrong_id = tokenizer.input_index.get(wrong.value.lower(), tokenizer.unk_id)
        ids = [tokenizer.input_index[tok.DR_MARK], wrong_id] + ids
    else:
        raise ValueError(f"unknown input form {form!r}")
    return tuple(ids)


def label_target(tokenizer: Tokenizer, label: Label) -> Seq:
    """Target sequence for plain label training: label token then EOS."""
    return (tokenizer.id_for_label(label), tokenizer.eos_id)


# ---------------------------------------------------------------------------
# Checkpoint files

_CKPT_FORMAT = "relgrade-ckpt-v1"


def write_checkpoint(c: Checkpoint, path) -> None:
    """Three-line file: JSON header, JSON vocabularies, base64 parameters.

    Parameters are little-endian float64, so write then read is bit-exact
    across platforms.
    """
    path = Path(path)
    header = {
        "format": _CKPT_FORMAT,
        "stage_tag": c.stage_tag,
        "seed": c.seed,
        "config_hash": c.config_hash,
        "dims": c.dims.to_json(),
    }
    vocab = {
        "input_tokens": list(c.tokenizer.input_tokens),
        "output_tokens": list(c.tokenizer.output_tokens),
    }
    blob = base64.b64encode(c.params.astype("<f8").tobytes()).decode("ascii")
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        fh.write(json.dumps(vocab) + "\n")
        fh.write(blob + "\n")


def read_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        vocab = json.loads(fh.readline())
        blob = fh.readline().strip()
    if header.get("format") != _CKPT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    dims = Dims.from_json(header["dims"])
    tokenizer = Tokenizer(
        input_tokens=tuple(vocab["input_tokens"]),
        output_tokens=tuple(vocab["output_tokens"]),
    )
    params = np.frombuffer(base64.b64decode(blob), dtype="<f8").astype(np.float64)
    return Checkpoint(
        params=params,
        dims=dims,
        tokenizer=tokenizer,
        stage_tag=header["stage_tag"],
        seed=int(header.get("seed", 0)),
        config_hash=header.get("config_hash", ""),
    )
