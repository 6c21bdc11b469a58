"""Attention-based global associator.

A single self-attention encoder layer turns the pooled history embeddings
into a memory ``H``; a single cross-attention decoder layer (no
self-attention) reads the current-frame queries against ``H``. Association
logits are ``Decoder(Q, H) @ H.T``. Each past frame gets its own softmax
with an extra empty slot whose logit is one learnable scalar.

Everything is float64 numpy with a hand-written backward pass. The
gradient is checked against central finite differences in the test suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import LabelError, ShapeError, TrainingDiverged

CHECKPOINT_MAGIC = "texttrack-assoc-checkpoint"
CHECKPOINT_VERSION = 1

BLOCK_PARAMS = ("wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2")
PARAM_NAMES = tuple(f"{p}.{n}" for p in ("enc", "dec") for n in BLOCK_PARAMS) + ("empty",)

_GELU_K = math.sqrt(2.0 / math.pi)


def _gelu(x):
    t = np.tanh(_GELU_K * (x + 0.044715 * x ** 3))
    return 0.5 * x * (1.0 + t), t


def _gelu_grad(x, t):
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_K * (1.0 + 3 * 0.044715 * x * x)


@dataclass
class AssocModel:
    """Weights of the encoder/decoder pair plus the empty-slot logit.

    ``params`` maps names from :data:`PARAM_NAMES` to float64 arrays;
    ``params["empty"]`` is a 0-d array.
    """

    width: int
    heads: int
    ffn: int
    params: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        if self.width % self.heads:
            raise ShapeError(f"width {self.width} is not divisible by heads {self.heads}")
        d, f = self.width, self.ffn
        expected = {"wq": (d, d), "wk": (d, d), "wv": (d, d), "wo": (d, d),
                    "w1": (d, f), "b1": (f,), "w2": (f, d), "b2": (d,)}
        for name in PARAM_NAMES:
            if name not in self.params:
                raise ShapeError(f"missing parameter {name}")
            arr = np.asarray(self.params[name], dtype=np.float64)
            shape = () if name == "empty" else expected[name.split(".")[1]]
            if arr.shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ShapeError(f"{name} has non-finite values")
            self.params[name] = arr

    @classmethod
    def init(cls, width: int = 64, heads: int = 4, ffn_mult: int = 2, seed: int = 0) -> "AssocModel":
        """Uniform ``[-1/sqrt(d), 1/sqrt(d)]`` weights, zero biases and empty logit."""
        rng = np.random.default_rng(seed)
        d, f = width, ffn_mult * width
        bound = 1.0 / math.sqrt(d)
        params: dict[str, np.ndarray] = {}
        for prefix in ("enc", "dec"):
            for name, shape in (("wq", (d, d)), ("wk", (d, d)), ("wv", (d, d)), ("wo", (d, d)),
                                ("w1", (d, f)), ("w2", (f, d))):
                params[f"{prefix}.{name}"] = rng.uniform(-bound, bound, size=shape)
            params[f"{prefix}.b1"] = np.zeros(f)
            params[f"{prefix}.b2"] = np.zeros(d)
        params["empty"] = np.array(0.0)
        return cls(width, heads, f, params)

    @classmethod
    def identity(cls, width: int, heads: int = 1, ffn_mult: int = 2,
                 feed_forward: bool = False, seed: int = 0) -> "AssocModel":
        """Model whose attention branches add nothing to the residual stream.

        Query/key/value projections are the identity and the output
        projection is zero. With ``feed_forward=False`` the feed-forward
        weights are zero too, so each layer returns its input unchanged.
        """
        model = cls.init(width, heads, ffn_mult, seed)
        eye = np.eye(width)
        for prefix in ("enc", "dec"):
            model.params[f"{prefix}.wq"] = eye.copy()
            model.params[f"{prefix}.wk"] = eye.copy()
            model.params[f"{prefix}.wv"] = eye.copy()
            model.params[f"{prefix}.wo"] = np.zeros((width, width))
            if not feed_forward:
                for name in ("w1", "b1", "w2", "b2"):
                    model.params[f"{prefix}.{name}"] = np.zeros_like(model.params[f"{prefix}.{name}"])
        return model

    @property
    def empty_logit(self) -> float:
        return float(self.params["empty"])

    def copy(self) -> "AssocModel":
        return AssocModel(self.width, self.heads, self.ffn, {k: v.copy() for k, v in self.params.items()})

    def save(self, path) -> None:
        save_checkpoint(self, path)

    @classmethod
    def load(cls, path) -> "AssocModel":
        return load_checkpoint(path)


# ---------------------------------------------------------------------------
# attention layer
# ---------------------------------------------------------------------------

def _split(x, heads):
    n, d = x.shape
    return x.reshape(n, heads, d // heads).transpose(1, 0, 2)


def _attend(params, prefix, xq, xkv, heads):
    p = lambda n: params[f"{prefix}.{n}"]  # noqa: E731
    n, d = xq.shape
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    qh = _split(xq @ p("wq"), heads)
    kh = _split(xkv @ p("wk"), heads)
    vh = _split(xkv @ p("wv"), heads)
    s = (qh @ kh.transpose(0, 2, 1)) * scale
    s -= s.max(axis=-1, keepdims=True)
    a = np.exp(s)
    a /= a.sum(axis=-1, keepdims=True)
    o = (a @ vh).transpose(1, 0, 2).reshape(n, d)
    y1 = xq + o @ p("wo")
    u = y1 @ p("w1") + p("b1")
    g, t = _gelu(u)
    y = y1 + g @ p("w2") + p("b2")
    cache = (xq, xkv, qh, kh, vh, a, o, y1, u, g, t, scale)
    return y, cache


def _attend_backward(params, prefix, cache, dy, grads, heads):
    """Accumulate parameter gradients; return ``(d xq, d xkv)``."""
    p = lambda n: params[f"{prefix}.{n}"]  # noqa: E731
    xq, xkv, qh, kh, vh, a, o, y1, u, g, t, scale = cache
    n, d = xq.shape
    grads[f"{prefix}.w2"] += g.T @ dy
    grads[f"{prefix}.b2"] += dy.sum(axis=0)
    du = (dy @ p("w2").T) * _gelu_grad(u, t)
    grads[f"{prefix}.w1"] += y1.T @ du
    grads[f"{prefix}.b1"] += du.sum(axis=0)
    dy1 = dy + du @ p("w1").T

    grads[f"{prefix}.wo"] += o.T @ dy1
    do = _split(dy1 @ p("wo").T, heads)
    da = do @ vh.transpose(0, 2, 1)
    dvh = a.transpose(0, 2, 1) @ do
    ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) * scale
    dqh = ds @ kh
    dkh = ds.transpose(0, 2, 1) @ qh
    merge = lambda z: z.transpose(1, 0, 2).reshape(z.shape[1], d)  # noqa: E731
    dq, dk, dv = merge(dqh), merge(dkh), merge(dvh)
    grads[f"{prefix}.wq"] += xq.T @ dq
    grads[f"{prefix}.wk"] += xkv.T @ dk
    grads[f"{prefix}.wv"] += xkv.T @ dv
    dxq = dy1 + dq @ p("wq").T
    dxkv = dk @ p("wk").T + dv @ p("wv").T
    return dxq, dxkv


def _as_matrix(x, width: int, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ShapeError(f"{what}: expected (*, {width}) embeddings, got {arr.shape}")
    return arr


def encode_pool(model: AssocModel, pool_embeddings) -> np.ndarray:
    """Encoded memory ``H`` for an ``M x d`` block of pooled embeddings."""
    g = _as_matrix(pool_embeddings, model.width, "pool")
    if g.shape[0] == 0:
        raise ShapeError("cannot encode an empty pool")
    h, _ = _attend(model.params, "enc", g, g, model.heads)
    return h


# ---------------------------------------------------------------------------
# association matrix
# ---------------------------------------------------------------------------

def frame_softmax(logits_row, empty_logit: float) -> np.ndarray:
    """Softmax over ``[empty, det_1, ..., det_n]`` for one past frame.

    Index 0 of the result is the empty-association probability.
    """
    z = np.concatenate(([float(empty_logit)], np.asarray(logits_row, dtype=np.float64).ravel()))
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _block_log_softmax(logits: np.ndarray, empty_logit: float, frame_sizes: Sequence[int]):
    """Per-frame log-probabilities; returns ``(log_probs N x M, log_empty N x F)``."""
    n, m = logits.shape
    log_probs = np.empty_like(logits)
    log_empty = np.empty((n, len(frame_sizes)))
    start = 0
    for f, size in enumerate(frame_sizes):
        block = logits[:, start:start + size]
        top = np.full(n, empty_logit)
        if size:
            top = np.maximum(block.max(axis=1), top)
        lse = top + np.log(np.exp(empty_logit - top) + np.exp(block - top[:, None]).sum(axis=1))
        log_probs[:, start:start + size] = block - lse[:, None]
        log_empty[:, f] = empty_logit - lse
        start += size
    return log_probs, log_empty


@dataclass
class AssocMatrix:
    """Association logits with per-frame probabilities.

    ``probs[:, block_f].sum(1) + empty[:, f] == 1`` for every retained
    frame ``f``; ``frame_sizes`` gives the column count of each block in
    order (a frame with no detections has size 0).
    """

    logits: np.ndarray
    empty_logit: float
    frame_sizes: tuple[int, ...]
    log_probs: np.ndarray = field(init=False, repr=False)
    log_empty: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.frame_sizes = tuple(int(s) for s in self.frame_sizes)
        if sum(self.frame_sizes) != self.logits.shape[1]:
            raise ShapeError(
                f"frame sizes sum to {sum(self.frame_sizes)} but logits have {self.logits.shape[1]} columns"
            )
        self.log_probs, self.log_empty = _block_log_softmax(self.logits, float(self.empty_logit), self.frame_sizes)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def empty(self) -> np.ndarray:
        return np.exp(self.log_empty)

    @property
    def frame_starts(self) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.frame_sizes)[:-1])).astype(int)

    def block(self, f: int) -> slice:
        start = int(sum(self.frame_sizes[:f]))
        return slice(start, start + self.frame_sizes[f])


def _default_sizes(frame_sizes, m):
    return (m,) if frame_sizes is None else tuple(frame_sizes)


def decode_associations(model: AssocModel, queries, memory, frame_sizes=None) -> AssocMatrix:
    """Logits ``Decoder(Q, H) @ H.T`` and their per-frame softmax.

    ``frame_sizes`` partitions the memory rows into past frames; by default
    all rows form one frame.
    """
    q = _as_matrix(queries, model.width, "queries")
    h = _as_matrix(memory, model.width, "memory")
    if h.shape[0] == 0:
        raise ShapeError("memory is empty")
    y, _ = _attend(model.params, "dec", q, h, model.heads)
    return AssocMatrix(y @ h.T, model.empty_logit, _default_sizes(frame_sizes, h.shape[0]))


def associate(model: AssocModel, queries, pool_embeddings, frame_sizes=None) -> AssocMatrix:
    """Encode the pool and decode the queries against it."""
    return decode_associations(model, queries, encode_pool(model, pool_embeddings), frame_sizes)


def cosine_associations(queries, pool_embeddings, frame_sizes=None,
                        temperature: float = 0.1, empty_similarity: float = 0.5) -> AssocMatrix:
    """Untrained fallback scorer: cosine similarity over ``temperature``.

    The empty slot behaves like a candidate with cosine ``empty_similarity``.
    Zero vectors have similarity 0 to everything.
    """
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    g = np.atleast_2d(np.asarray(pool_embeddings, dtype=np.float64))
    if q.shape[1] != g.shape[1]:
        raise ShapeError(f"query width {q.shape[1]} != pool width {g.shape[1]}")
    qn = np.linalg.norm(q, axis=1, keepdims=True)
    gn = np.linalg.norm(g, axis=1, keepdims=True)
    qu = np.divide(q, qn, out=np.zeros_like(q), where=qn > 0)
    gu = np.divide(g, gn, out=np.zeros_like(g), where=gn > 0)
    return AssocMatrix((qu @ gu.T) / temperature, empty_similarity / temperature,
                       _default_sizes(frame_sizes, g.shape[0]))


# ---------------------------------------------------------------------------
# loss and training
# ---------------------------------------------------------------------------

def _canonical_labels(labels, m: int) -> np.ndarray:
    lab = np.asarray(labels)
    if lab.shape != (m,):
        raise LabelError(f"expected {m} labels, got shape {lab.shape}")
    lab = lab.astype(np.int64).copy()
    # unlabeled (false-positive) embeddings each form their own tracklet
    neg = np.flatnonzero(lab < 0)
    if neg.size:
        base = lab.max(initial=0) + 1
        lab[neg] = base + np.arange(neg.size)
    return lab


def _targets(assoc: AssocMatrix, query_labels: np.ndarray, memory_labels: np.ndarray):
    """For each query and frame: column offset + 1 of its partner, 0 for empty."""
    n = len(query_labels)
    out = np.zeros((n, len(assoc.frame_sizes)), dtype=np.int64)
    start = 0
    for f, size in enumerate(assoc.frame_sizes):
        block = memory_labels[start:start + size]
        hit = query_labels[:, None] == block[None, :]
        if np.any(hit.sum(axis=1) > 1):
            raise LabelError(f"frame {f} holds two embeddings of one tracklet")
        if size:
            has = hit.any(axis=1)
            out[has, f] = hit[has].argmax(axis=1) + 1
        start += size
    return out


def _loss_terms(assoc: AssocMatrix, targets: np.ndarray) -> np.ndarray:
    terms = -assoc.log_empty.copy()
    starts = assoc.frame_starts
    rows = np.arange(targets.shape[0])
    for f in range(len(assoc.frame_sizes)):
        t = targets[:, f]
        hit = t > 0
        terms[hit, f] = -assoc.log_probs[rows[hit], starts[f] + t[hit] - 1]
    return terms


def tracklet_loss(assoc: AssocMatrix, tracklet_labels, memory_labels=None, reduction: str = "sum") -> float:
    """Negative log-likelihood of the correct partner in every frame block.

    Queries are scored against each frame: the target is the embedding of
    the same tracklet when the frame holds one, else the empty slot.
    ``memory_labels`` defaults to ``tracklet_labels`` (self-association,
    queries equal the pool). Negative labels mark unlabeled embeddings.
    """
    loss, _, _ = _loss_and_grad(assoc, tracklet_labels, memory_labels, reduction)
    return loss


def _loss_and_grad(assoc, tracklet_labels, memory_labels=None, reduction="sum"):
    n, m = assoc.logits.shape
    if memory_labels is None:
        if n != m:
            raise LabelError("self-association requires as many queries as pool embeddings")
        qlab = mlab = _canonical_labels(tracklet_labels, m)
    else:
        mlab = _canonical_labels(memory_labels, m)
        qlab = np.asarray(tracklet_labels, dtype=np.int64)
        if qlab.shape != (n,):
            raise LabelError(f"expected {n} query labels, got shape {qlab.shape}")
    if reduction not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {reduction!r}")
    targets = _targets(assoc, qlab, mlab)
    terms = _loss_terms(assoc, targets)
    norm = 1.0 if reduction == "sum" else float(terms.size)
    loss = float(terms.sum()) / norm

    # d(-log softmax) = p - onehot, per block
    dlogits = assoc.probs.copy()
    dempty_mat = assoc.empty.copy()
    starts = assoc.frame_starts
    rows = np.arange(n)
    for f in range(len(assoc.frame_sizes)):
        t = targets[:, f]
        hit = t > 0
        dlogits[rows[hit], starts[f] + t[hit] - 1] -= 1.0
        dempty_mat[~hit, f] -= 1.0
    return loss, dlogits / norm, float(dempty_mat.sum()) / norm


def _forward_self(model: AssocModel, pool: np.ndarray, frame_sizes):
    h, enc_cache = _attend(model.params, "enc", pool, pool, model.heads)
    y, dec_cache = _attend(model.params, "dec", pool, h, model.heads)
    assoc = AssocMatrix(y @ h.T, model.empty_logit, frame_sizes)
    return assoc, (h, y, enc_cache, dec_cache)


def loss_and_gradients(model: AssocModel, embeddings, frame_sizes, labels,
                       reduction: str = "sum") -> tuple[float, dict[str, np.ndarray]]:
    """Self-association loss (queries = pool) and its gradient per parameter."""
    pool = _as_matrix(embeddings, model.width, "embeddings")
    assoc, (h, y, enc_cache, dec_cache) = _forward_self(model, pool, frame_sizes)
    loss, dlogits, dempty = _loss_and_grad(assoc, labels, None, reduction)
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    grads["empty"] = np.array(dempty)
    dy = dlogits @ h
    dh = dlogits.T @ y
    _, dh_dec = _attend_backward(model.params, "dec", dec_cache, dy, grads, model.heads)
    dh += dh_dec
    _attend_backward(model.params, "enc", enc_cache, dh, grads, model.heads)
    return loss, grads


def self_loss(model: AssocModel, embeddings, frame_sizes, labels, reduction: str = "sum") -> float:
    pool = _as_matrix(embeddings, model.width, "embeddings")
    assoc, _ = _forward_self(model, pool, frame_sizes)
    return tracklet_loss(assoc, labels, reduction=reduction)


@dataclass
class TrainingBatch:
    """Pool-ordered embeddings of a clip with frame sizes and tracklet labels."""

    embeddings: np.ndarray
    frame_sizes: tuple[int, ...]
    labels: np.ndarray

    @classmethod
    def from_clip(cls, clip) -> "TrainingBatch":
        rows, sizes, labels = [], [], []
        for frame, frame_labels in zip(clip.frames, clip.labels):
            sizes.append(len(frame.detections))
            for det, lab in zip(frame.detections, frame_labels):
                rows.append(np.asarray(det.embedding, dtype=np.float64))
                labels.append(lab)
        width = rows[0].shape[0] if rows else 0
        emb = np.vstack(rows) if rows else np.zeros((0, width))
        return cls(emb, tuple(sizes), np.asarray(labels, dtype=np.int64))


def train_toy(model: AssocModel, clip, steps: int = 200, lr: float = 1e-3,
              reduction: str = "sum") -> tuple[AssocModel, list[float]]:
    """Full-batch gradient descent on the self-association loss of a clip.

    Returns a trained copy and the loss trace; entry ``k`` is the loss
    before update ``k`` and the last entry the final loss, so the trace has
    ``steps + 1`` values.
    """
    batch = clip if isinstance(clip, TrainingBatch) else TrainingBatch.from_clip(clip)
    if len(batch.frame_sizes) < 4:
        raise ShapeError("training clip needs at least 4 frames")
    if len(set(int(x) for x in batch.labels if x >= 0)) < 2:
        raise LabelError("training clip needs at least 2 labelled tracklets")
    model = model.copy()
    trace = []
    # overflow shows up as a non-finite loss, reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            loss, grads = loss_and_gradients(model, batch.embeddings, batch.frame_sizes, batch.labels, reduction)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} after {len(trace)} steps")
            trace.append(loss)
            for name, g in grads.items():
                model.params[name] = model.params[name] - lr * g
        final = self_loss(model, batch.embeddings, batch.frame_sizes, batch.labels, reduction)
    if not math.isfinite(final):
        raise TrainingDiverged(f"loss became {final} after {steps} steps")
    trace.append(final)
    return model, trace


def identity_accuracy(model: AssocModel | None, batch: TrainingBatch, **fallback) -> float:
    """Fraction of labelled queries whose best tracklet is their own.

    Each frame in turn is the query set and every other frame forms the
    pool; tracklet scores are mean probabilities over the pool.
    """
    starts = np.concatenate(([0], np.cumsum(batch.frame_sizes))).astype(int)
    correct = total = 0
    for f, size in enumerate(batch.frame_sizes):
        if size == 0:
            continue
        qsl = slice(starts[f], starts[f + 1])
        keep = np.ones(len(batch.labels), dtype=bool)
        keep[qsl] = False
        pool = batch.embeddings[keep]
        pool_labels = batch.labels[keep]
        sizes = tuple(s for g, s in enumerate(batch.frame_sizes) if g != f)
        if model is None:
            assoc = cosine_associations(batch.embeddings[qsl], pool, sizes, **fallback)
        else:
            assoc = associate(model, batch.embeddings[qsl], pool, sizes)
        probs = assoc.probs
        ids = np.unique(pool_labels[pool_labels >= 0])
        scores = np.stack([probs[:, pool_labels == k].mean(axis=1) for k in ids], axis=1)
        for lab, row in zip(batch.labels[qsl], scores):
            if lab < 0 or lab not in ids:
                continue
            total += 1
            correct += int(ids[int(np.argmax(row))] == lab)
    return correct / total if total else float("nan")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: AssocModel, path) -> None:
    """Write a text checkpoint.

    Line 1 is ``texttrack-assoc-checkpoint version=1 width=D heads=H ffn=F``.
    Each parameter follows as a ``param NAME ROWS COLS`` line and ROWS lines
    of space-separated ``repr`` floats (row-major, 1-D arrays as one row,
    scalars as 1x1). The file ends with ``end``.
    """
    lines = [f"{CHECKPOINT_MAGIC} version={CHECKPOINT_VERSION} width={model.width} "
             f"heads={model.heads} ffn={model.ffn}"]
    for name in PARAM_NAMES:
        arr = np.atleast_2d(model.params[name])
        lines.append(f"param {name} {arr.shape[0]} {arr.shape[1]}")
        lines.extend(" ".join(repr(float(x)) for x in row) for row in arr)
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> AssocModel:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a texttrack checkpoint")
    header = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
    if int(header.get("version", -1)) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    width, heads, ffn = int(header["width"]), int(header["heads"]), int(header["ffn"])
    params = {}
    i = 1
    while i < len(lines) and lines[i] != "end":
        tag, name, rows, cols = lines[i].split()
        if tag != "param":
            raise ValueError(f"{path}:{i + 1}: expected a param line")
        rows, cols = int(rows), int(cols)
        data = [[float(x) for x in lines[i + 1 + r].split()] for r in range(rows)]
        arr = np.array(data, dtype=np.float64).reshape(rows, cols)
        if name == "empty":
            arr = arr.reshape(())
        elif name.split(".")[1] in ("b1", "b2"):
            arr = arr.reshape(-1)
        params[name] = arr
        i += 1 + rows
    return AssocModel(width, heads, ffn, params)
