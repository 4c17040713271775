"""Objective, Adam, the epoch loop with early stopping, and checkpoint files."""

from __future__ import annotations

import json
import logging
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import numerics as nx
from .config import TrainConfig
from .corpus import CategoryInventory, Sentence
from .evaluation import micro_prf, assign_categories, sweep_threshold
from .model import Batch, TanModel, forward, make_batch

log = logging.getLogger(__name__)

MAGIC = b"TAN1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class IntegrityError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------


def total_loss(probabilities: nx.Tensor, labels, model: TanModel, reg_weight: float | None = None) -> nx.Tensor:
    """MSE over every (sentence, category) pair plus the weighted topic penalty."""
    labels = np.asarray(labels, dtype=probabilities.dtype)
    if labels.size == 0:
        raise ValueError("total_loss on an empty batch")
    loss = nx.mse_loss(probabilities, labels)
    weight = model.config.reg_weight if reg_weight is None else reg_weight
    if model.variant != "va" and weight != 0:
        loss = nx.add(loss, nx.scale(nx.orthogonality_penalty(model.params["T"]), weight))
    return loss


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState, lr: float
) -> dict[str, np.ndarray]:
    """Bias-corrected Adam.  Returns new arrays; ``state`` is advanced in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / c1
        v_hat = v / c2
        out[name] = (p - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype, copy=False)
    return out


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm <= max_norm:
        return grads
    s = max_norm / norm
    return {k: g * s for k, g in grads.items()}


# ---------------------------------------------------------------------------
# early stopping
# ---------------------------------------------------------------------------


class EarlyStopping:
    """Tracks the best (F1, then lower loss) epoch; stops after ``patience`` misses."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_f1 = -np.inf
        self.best_loss = np.inf
        self.best_epoch = 0
        self.misses = 0

    def update(self, epoch: int, f1: float, loss: float = 0.0) -> bool:
        better = f1 > self.best_f1 or (f1 == self.best_f1 and loss < self.best_loss)
        if better:
            self.best_f1, self.best_loss, self.best_epoch = f1, loss, epoch
            self.misses = 0
        else:
            self.misses += 1
        return better

    @property
    def should_stop(self) -> bool:
        return self.misses >= self.patience


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    model: TanModel
    history: list[dict]
    best_epoch: int
    best_f1: float
    best_val_loss: float


def _labels(sentences: Sequence[Sentence], dtype) -> np.ndarray:
    return np.stack([s.label_vector for s in sentences]).astype(dtype)


def validation_scores(model: TanModel, sentences: Sequence[Sentence], threshold: float, batch_size: int = 256):
    """(loss, micro-F1, probabilities) with dropout off; loss includes the penalty."""
    probs, mse_sum, n = [], 0.0, 0
    for i in range(0, len(sentences), batch_size):
        chunk = sentences[i : i + batch_size]
        out = forward(model, make_batch(chunk, model.pad_id))
        y = _labels(chunk, out.probabilities.dtype)
        diff = out.probabilities.data - y
        mse_sum += float(np.sum(diff * diff))
        n += diff.size
        probs.append(out.probabilities.data)
    probs = np.concatenate(probs)
    loss = mse_sum / n
    if model.variant != "va" and model.config.reg_weight:
        loss += model.config.reg_weight * float(nx.orthogonality_penalty(model.params["T"]).data)
    labels = _labels(sentences, probs.dtype)
    gold = [set(np.flatnonzero(r).tolist()) for r in labels]
    pred = [assign_categories(r, threshold, model.config.argmax_fallback) for r in probs]
    return loss, micro_prf(gold, pred)[2], probs


def train_step(model: TanModel, sentences: Sequence[Sentence], state: AdamState, rng: np.random.Generator) -> float:
    cfg = model.config
    trainable = model.trainable()
    out = forward(model, make_batch(sentences, model.pad_id), training=True, rng=rng)
    loss = total_loss(out.probabilities, _labels(sentences, out.probabilities.dtype), model)
    names = list(trainable)
    grads = dict(zip(names, nx.backprop(loss, [trainable[n] for n in names])))
    if cfg.clip_norm is not None:
        grads = clip_by_global_norm(grads, cfg.clip_norm)
    new = adam_step({n: trainable[n].data for n in names}, grads, state, cfg.learning_rate)
    for n in names:
        model.params[n] = nx.Tensor(new[n], name=n)
    return float(loss.data)


def fit(
    model: TanModel,
    train: Sequence[Sentence],
    validation: Sequence[Sentence],
    config: TrainConfig | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> FitResult:
    """Minibatch Adam with per-epoch validation and early stopping.

    Returns the best model seen (by validation micro-F1, ties to lower
    validation loss), not the last one.
    """
    cfg = config or model.config
    if config is not None:
        model.config = cfg
    if not train:
        raise ValueError("empty training set")
    if not validation:
        log.warning("empty validation set; monitoring the training set instead")
        validation = train
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    stopper = EarlyStopping(cfg.patience)
    best = model.copy()
    history: list[dict] = []
    train = list(train)
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train))
        losses, weights = [], []
        for i in range(0, len(train), cfg.batch_size):
            chunk = [train[j] for j in order[i : i + cfg.batch_size]]
            losses.append(train_step(model, chunk, state, rng))
            weights.append(len(chunk))
        train_loss = float(np.average(losses, weights=weights))
        val_loss, val_f1, _ = validation_scores(model, validation, cfg.threshold)
        record = {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_f1": val_f1,
            "val_loss": val_loss,
            "seconds": time.perf_counter() - t0,
        }
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        log.info("epoch %d train_loss %.5f val_f1 %.4f val_loss %.5f", epoch, train_loss, val_f1, val_loss)
        if stopper.update(epoch, val_f1, val_loss):
            best = model.copy()
        if stopper.should_stop:
            log.info("early stop at epoch %d (best %d)", epoch, stopper.best_epoch)
            break
    best.threshold = cfg.threshold
    if cfg.tune_threshold:
        _, _, probs = validation_scores(best, validation, cfg.threshold)
        best.threshold, _ = sweep_threshold(probs, _labels(validation, probs.dtype))
    return FitResult(best, history, stopper.best_epoch, float(stopper.best_f1), float(stopper.best_loss))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def checkpoint_bytes(model: TanModel, best_metric: float | None = None, epoch: int | None = None, version: int = FORMAT_VERSION) -> bytes:
    directory, chunks, offset = [], [], 0
    for name, t in model.params.items():
        arr = np.ascontiguousarray(t.data, dtype="<f4")
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "version": version,
        "config": model.config.to_dict(),
        "inventory": list(model.inventory.names),
        "vocabulary": list(model.vocab),
        "threshold": model.threshold,
        "stopwords": sorted(model.stopwords) if model.stopwords is not None else None,
        "best_metric": best_metric,
        "epoch": epoch,
        "tensors": directory,
    }
    hbytes = json.dumps(header).encode("utf-8")
    body = MAGIC + struct.pack("<I", len(hbytes)) + hbytes + b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(model: TanModel, path: str | Path, best_metric: float | None = None, epoch: int | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, best_metric, epoch))


def read_checkpoint(blob: bytes) -> tuple[TanModel, dict]:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise IntegrityError("not a TAN checkpoint (bad magic or truncated)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise IntegrityError("checkpoint checksum mismatch (corrupt or truncated file)")
    (hlen,) = struct.unpack("<I", body[4:8])
    try:
        header = json.loads(body[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"unreadable checkpoint header: {exc}") from None
    if header.get("version") != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"checkpoint format version {header.get('version')!r} is not supported (expected {FORMAT_VERSION})"
        )
    payload = body[8 + hlen :]
    config = TrainConfig.from_dict(header["config"])
    dtype = np.dtype(config.dtype)
    params = {}
    for entry in header["tensors"]:
        arr = np.frombuffer(payload, dtype="<f4", count=entry["count"], offset=entry["offset"])
        params[entry["name"]] = nx.Tensor(arr.reshape(entry["shape"]).astype(dtype), name=entry["name"])
    stop = header.get("stopwords")
    model = TanModel(
        config,
        CategoryInventory(tuple(header["inventory"])),
        header["vocabulary"],
        params,
        header["threshold"],
        frozenset(stop) if stop is not None else None,
    )
    return model, header


def load_checkpoint(path: str | Path) -> TanModel:
    return read_checkpoint(Path(path).read_bytes())[0]
