"""Backprop vs central differences on a tiny seeded model (64-bit)."""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .config import TrainConfig
from .corpus import CategoryInventory, RESERVED, build_embedding_table
from .model import forward, init_params, make_batch
from .training import total_loss

TOLERANCE = 1e-4


def tiny_model(variant: str = "tan", seed: int = 0, literal_eq3: bool = False, **overrides):
    cfg = TrainConfig(
        variant=variant,
        embed_dim=6,
        hidden=8,
        topics=3,
        p1=4,
        p2=4,
        va_hidden=6,
        dropout=0.3,
        literal_eq3=literal_eq3,
        fine_tune_embeddings=True,
        dtype="float64",
        seed=seed,
        **overrides,
    )
    words = [f"w{i}" for i in range(8)]
    table = build_embedding_table(words, dim=cfg.embed_dim, seed=seed)
    inventory = CategoryInventory(("A", "B", "C", "D"))
    model = init_params(cfg, inventory, table, seed)
    # random biases so the check does not sit at a special point
    rng = np.random.default_rng(seed + 1)
    for name, t in model.params.items():
        if ".b" in name or name.endswith(".b"):
            t.data[...] = rng.uniform(-0.5, 0.5, t.shape)
    return model


def tiny_batch(model, seed: int = 0):
    """A 5-token sentence and a padded 3-token one, with random labels."""
    rng = np.random.default_rng(seed + 2)
    n_reserved = len(RESERVED)
    vocab = len(model.vocab)
    seqs = [rng.integers(n_reserved, vocab, 5), rng.integers(n_reserved, vocab, 3)]
    labels = rng.integers(0, 2, (2, len(model.inventory))).astype(np.float64)
    return make_batch(seqs, model.pad_id), labels


def loss_fn(model, batch, labels, dropout_seed: int = 123):
    def f():
        rng = np.random.default_rng(dropout_seed)
        out = forward(model, batch, training=True, rng=rng)
        return total_loss(out.probabilities, labels, model)

    return f


def gradcheck_report(
    variant: str = "tan", seed: int = 0, literal_eq3: bool = False, corrupt: bool = False, eps: float = 1e-5
) -> dict[str, float]:
    """Max relative error per parameter tensor."""
    model = tiny_model(variant, seed, literal_eq3)
    batch, labels = tiny_batch(model, seed)
    f = loss_fn(model, batch, labels)
    names = list(model.params)
    params = [model.params[n] for n in names]
    analytic = nx.backprop(f(), params)
    report = {}
    for name, p, a in zip(names, params, analytic):
        if corrupt:
            a = a * 1.01 + 1e-3
        num = nx.numeric_gradient(f, p, eps)
        report[name] = float(nx.relative_error(a, num).max())
    return report
