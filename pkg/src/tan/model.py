"""Topic-attention network and its two ablations.

Shapes used throughout: B batch, N padded length, E embedding dim, h GRU
hidden size, d = 2h encoder dim, k topics, c categories, p1/p2 squash dims.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numerics as nx
from .config import TrainConfig
from .corpus import PAD, CategoryInventory, EmbeddingTable, Sentence, preprocess
from .numerics import Tensor

GRU_GATES = ("r", "z", "n")


@dataclass
class Batch:
    token_ids: np.ndarray  # (B, N), padded with the PAD id
    mask: np.ndarray  # (B, N) bool, True at real tokens

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1)


def make_batch(sequences: Sequence[Sentence | Sequence[int] | np.ndarray], pad_id: int = 0) -> Batch:
    ids = [np.asarray(s.token_ids if isinstance(s, Sentence) else s, dtype=np.int64) for s in sequences]
    if not ids:
        raise ValueError("empty batch")
    n = max(len(x) for x in ids)
    token_ids = np.full((len(ids), n), pad_id, dtype=np.int64)
    mask = np.zeros((len(ids), n), dtype=bool)
    for i, x in enumerate(ids):
        token_ids[i, : len(x)] = x
        mask[i, : len(x)] = True
    return Batch(token_ids, mask)


@dataclass
class ForwardOutput:
    probabilities: Tensor  # (B, c)
    attention: np.ndarray  # (B, k, N)
    topic_vectors: np.ndarray  # (B, k, d)
    category_vectors: np.ndarray | None = None  # (B, c, p2), TAN only


@dataclass
class TanModel:
    config: TrainConfig
    inventory: CategoryInventory
    vocab: list[str]
    params: dict[str, Tensor]
    threshold: float = 0.5
    stopwords: frozenset[str] | None = None
    stoi: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.stoi = {w: i for i, w in enumerate(self.vocab)}

    @property
    def variant(self) -> str:
        return self.config.variant

    @property
    def pad_id(self) -> int:
        return self.stoi.get(PAD, 0)

    def trainable(self) -> dict[str, Tensor]:
        if self.config.fine_tune_embeddings:
            return dict(self.params)
        return {k: v for k, v in self.params.items() if k != "embedding"}

    def encode_text(self, text: str, stopwords=None) -> tuple[list[str], np.ndarray]:
        tokens = preprocess(text, self.stopwords if stopwords is None else stopwords)
        unk = self.stoi.get("<unk>", 0)
        return tokens, np.array([self.stoi.get(t, unk) for t in tokens], dtype=np.int64)

    def copy(self) -> "TanModel":
        params = {k: nx.Tensor(v.data.copy(), name=k) for k, v in self.params.items()}
        return TanModel(self.config, self.inventory, list(self.vocab), params, self.threshold, self.stopwords)


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_params(
    config: TrainConfig,
    inventory: CategoryInventory,
    embeddings: EmbeddingTable,
    seed: int | None = None,
) -> TanModel:
    """Glorot-uniform weights, zero biases, seeded PCG64 draws in a fixed order."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    dtype = np.dtype(config.dtype)
    if embeddings.dim != config.embed_dim:
        raise ValueError(f"embedding dim {embeddings.dim} != config.embed_dim {config.embed_dim}")
    E, h, d = config.embed_dim, config.hidden, config.encoder_dim
    k, c, p1, p2 = config.num_topics, len(inventory), config.p1, config.p2
    p: dict[str, np.ndarray] = {"embedding": np.array(embeddings.matrix)}

    for direction in ("fwd", "bwd"):
        for g in GRU_GATES:
            p[f"{direction}.W_i{g}"] = _glorot(rng, (E, h), E, h)
        for g in GRU_GATES:
            p[f"{direction}.W_h{g}"] = _glorot(rng, (h, h), h, h)
        for g in GRU_GATES:
            p[f"{direction}.b_i{g}"] = np.zeros(h)
            p[f"{direction}.b_h{g}"] = np.zeros(h)

    T = _glorot(rng, (k, d), d, k)
    for i in range(k):
        while np.linalg.norm(T[i]) < 1e-6:
            T[i] = _glorot(rng, (d,), d, k)
    p["T"] = T

    if config.variant == "va":
        p["hidden.W"] = _glorot(rng, (d, config.va_hidden), d, config.va_hidden)
        p["hidden.b"] = np.zeros(config.va_hidden)
        p["out.W"] = _glorot(rng, (config.va_hidden, c), config.va_hidden, c)
        p["out.b"] = np.zeros(c)
    else:
        if config.shared_topic_heads:
            p["topic.W"] = _glorot(rng, (d, p1), d, p1)
            p["topic.b"] = np.zeros(p1)
        else:
            p["topic.W"] = _glorot(rng, (k, d, p1), d, p1)
            p["topic.b"] = np.zeros((k, p1))
        if config.variant == "tan":
            p["cat.W"] = _glorot(rng, (c, k * p1, p2), k * p1, p2)
            p["cat.b"] = np.zeros((c, p2))
        else:
            p["out.W"] = _glorot(rng, (k * p1, c), k * p1, c)
            p["out.b"] = np.zeros(c)

    params = {name: nx.Tensor(arr.astype(dtype), name=name) for name, arr in p.items()}
    return TanModel(config, inventory, list(embeddings.itos), params, threshold=config.threshold)


# ---------------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------------


def _gru_step(xr: Tensor, xz: Tensor, xn: Tensor, h_prev: Tensor, p: dict, prefix: str, literal_eq3: bool) -> Tensor:
    """One GRU update given precomputed input projections ``x W_i* + b_i*``."""
    hz = nx.add(nx.matmul(h_prev, p[f"{prefix}.W_hz"]), p[f"{prefix}.b_hz"])
    z = nx.sigmoid(nx.add(xz, hz))
    if literal_eq3:
        # candidate reuses the update-gate pre-activation verbatim
        n = nx.tanh(nx.add(xz, hz))
    else:
        hr = nx.add(nx.matmul(h_prev, p[f"{prefix}.W_hr"]), p[f"{prefix}.b_hr"])
        r = nx.sigmoid(nx.add(xr, hr))
        hn = nx.add(nx.matmul(h_prev, p[f"{prefix}.W_hn"]), p[f"{prefix}.b_hn"])
        n = nx.tanh(nx.add(xn, nx.mul(r, hn)))
    return nx.add(nx.mul(nx.one_minus(z), n), nx.mul(z, h_prev))


def gru_cell(x_t: Tensor, h_prev: Tensor, params: dict, prefix: str = "fwd", literal_eq3: bool = False) -> Tensor:
    proj = [nx.add(nx.matmul(x_t, params[f"{prefix}.W_i{g}"]), params[f"{prefix}.b_i{g}"]) for g in GRU_GATES]
    return _gru_step(*proj, h_prev, params, prefix, literal_eq3)


def _run_direction(x: Tensor, params: dict, prefix: str, literal_eq3: bool) -> Tensor:
    B, N, _ = x.shape
    h = params[f"{prefix}.W_hr"].shape[0]
    proj = [nx.add(nx.matmul(x, params[f"{prefix}.W_i{g}"]), params[f"{prefix}.b_i{g}"]) for g in GRU_GATES]
    state = nx.constant(np.zeros((B, h), dtype=x.dtype))
    states = []
    for t in range(N):
        state = _gru_step(*(nx.take(pj, t, 1) for pj in proj), state, params, prefix, literal_eq3)
        states.append(state)
    return nx.stack(states, axis=1)


def reverse_index(mask: np.ndarray) -> np.ndarray:
    """Per-row index reversing the real tokens and leaving padding in place."""
    B, N = mask.shape
    lengths = mask.sum(axis=1)
    t = np.arange(N)[None, :]
    L = lengths[:, None]
    return np.where(t < L, L - 1 - t, t)


def bigru_encode(emb: Tensor, mask: np.ndarray, params: dict, literal_eq3: bool = False) -> Tensor:
    """(B, N, E) embeddings -> (B, N, 2h): forward state then backward state per token.

    The backward pass runs over each row reversed within its own length, so
    it starts at the last real token whatever the padding.
    """
    mask = np.asarray(mask, dtype=bool)
    fwd = _run_direction(emb, params, "fwd", literal_eq3)
    rev = reverse_index(mask)
    bwd = _run_direction(nx.gather_time(emb, rev), params, "bwd", literal_eq3)
    bwd = nx.gather_time(bwd, rev)
    return nx.concat([fwd, bwd], axis=-1)


def topic_attention(H: Tensor, T: Tensor, mask: np.ndarray) -> tuple[Tensor, Tensor]:
    """Dot-product scores per topic, masked softmax over tokens, weighted sum.

    Returns ``(topic_vectors (B, k, d), attention (B, k, N))``.
    """
    if H.shape[-1] != T.shape[-1]:
        raise ValueError(f"encoder dim {H.shape[-1]} != topic dim {T.shape[-1]}")
    scores = nx.einsum("bnd,kd->bkn", H, T)
    alpha = nx.masked_softmax(scores, np.asarray(mask, dtype=bool)[:, None, :])
    return nx.einsum("bkn,bnd->bkd", alpha, H), alpha


def _encode(model: TanModel, batch: Batch, training: bool, rng) -> tuple[Tensor, Tensor]:
    p = model.params
    emb = nx.gather_rows(p["embedding"], batch.token_ids)
    emb = nx.dropout(emb, model.config.dropout, rng, training)
    H = bigru_encode(emb, batch.mask, p, model.config.literal_eq3)
    return topic_attention(H, p["T"], batch.mask)


def _topic_heads(model: TanModel, V: Tensor) -> Tensor:
    p = model.params
    if model.config.shared_topic_heads:
        return nx.add(nx.matmul(V, p["topic.W"]), p["topic.b"])
    return nx.add(nx.einsum("bkd,kdp->bkp", V, p["topic.W"]), p["topic.b"])


# ---------------------------------------------------------------------------
# variants
# ---------------------------------------------------------------------------


def tan_forward(model: TanModel, batch: Batch, training: bool = False, rng=None) -> ForwardOutput:
    """Per-topic projection + squash, concatenation, per-category projection + squash.

    Each category's probability is the length of its squashed vector.
    """
    if model.variant != "tan":
        raise ValueError(f"tan_forward called on a {model.variant} model")
    p = model.params
    V, alpha = _encode(model, batch, training, rng)
    S = nx.squash(_topic_heads(model, V))
    B, k, p1 = S.shape
    S = nx.dropout(nx.reshape(S, (B, k * p1)), model.config.dropout, rng, training)
    Z = nx.squash(nx.add(nx.einsum("bq,cqp->bcp", S, p["cat.W"]), p["cat.b"]))
    return ForwardOutput(nx.l2_norm(Z), alpha.data, V.data, Z.data)


def taws_forward(model: TanModel, batch: Batch, training: bool = False, rng=None) -> ForwardOutput:
    """Same topic attention, ReLU heads instead of squash, sigmoid output."""
    if model.variant != "taws":
        raise ValueError(f"taws_forward called on a {model.variant} model")
    p = model.params
    V, alpha = _encode(model, batch, training, rng)
    U = nx.relu(_topic_heads(model, V))
    B, k, p1 = U.shape
    U = nx.dropout(nx.reshape(U, (B, k * p1)), model.config.dropout, rng, training)
    probs = nx.sigmoid(nx.add(nx.matmul(U, p["out.W"]), p["out.b"]))
    return ForwardOutput(probs, alpha.data, V.data)


def va_forward(model: TanModel, batch: Batch, training: bool = False, rng=None) -> ForwardOutput:
    """Single attention vector, dense+ReLU hidden layer, sigmoid output."""
    if model.variant != "va":
        raise ValueError(f"va_forward called on a {model.variant} model")
    p = model.params
    V, alpha = _encode(model, batch, training, rng)
    B, _, d = V.shape
    rep = nx.dropout(nx.reshape(V, (B, d)), model.config.dropout, rng, training)
    hid = nx.relu(nx.add(nx.matmul(rep, p["hidden.W"]), p["hidden.b"]))
    probs = nx.sigmoid(nx.add(nx.matmul(hid, p["out.W"]), p["out.b"]))
    return ForwardOutput(probs, alpha.data, V.data)


_FORWARD = {"tan": tan_forward, "taws": taws_forward, "va": va_forward}


def forward(model: TanModel, batch: Batch, training: bool = False, rng=None) -> ForwardOutput:
    return _FORWARD[model.variant](model, batch, training, rng)


def predict_proba(model: TanModel, sentences: Sequence, batch_size: int = 256) -> np.ndarray:
    """Inference probabilities (dropout off), (len(sentences), c)."""
    out = []
    for i in range(0, len(sentences), batch_size):
        batch = make_batch(sentences[i : i + batch_size], model.pad_id)
        out.append(forward(model, batch).probabilities.data)
    if not out:
        return np.zeros((0, len(model.inventory)))
    return np.concatenate(out, axis=0)
