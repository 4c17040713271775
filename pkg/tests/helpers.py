"""Small shared utilities for the test modules."""

import numpy as np

from tan.config import TrainConfig
from tan.corpus import CategoryInventory, build_embedding_table
from tan.model import TanModel, init_params


def permute_topics(model: TanModel, perm) -> TanModel:
    """Reorder topics: rows of T, per-topic heads and the matching blocks of the concatenation."""
    perm = np.asarray(perm)
    out = model.copy()
    p = {k: v.data for k, v in out.params.items()}
    k = len(perm)
    p["T"][...] = p["T"][perm]
    if not out.config.shared_topic_heads:
        p["topic.W"][...] = p["topic.W"][perm]
        p["topic.b"][...] = p["topic.b"][perm]
    p1 = out.config.p1
    if out.variant == "tan":
        c, _, p2 = p["cat.W"].shape
        blocks = p["cat.W"].reshape(c, k, p1, p2)
        p["cat.W"][...] = blocks[:, perm].reshape(c, k * p1, p2)
    elif out.variant == "taws":
        c = p["out.W"].shape[1]
        blocks = p["out.W"].reshape(k, p1, c)
        p["out.W"][...] = blocks[perm].reshape(k * p1, c)
    return out


def synthetic_sets(n=32, seed=42, embed_dim=16, val_ratio=0.25):
    """(train, validation, inventory, table) built from the planted-keyword corpus."""
    from tan import corpus, synth

    records = synth.generate(n, seed)
    raw = [corpus.RawSentence(r["id"], r["text"], frozenset(r["categories"])) for r in records]
    inventory = corpus.CategoryInventory.from_sentences(raw)
    train_raw, val_raw = corpus.stratified_split(raw, val_ratio, seed)
    tokens = [t for s in train_raw for t in corpus.preprocess(s.text)]
    table = corpus.build_embedding_table(tokens, dim=embed_dim, seed=seed)
    return (
        corpus.encode_sentences(train_raw, inventory, table),
        corpus.encode_sentences(val_raw, inventory, table),
        inventory,
        table,
    )


def small_model(variant, seed=0, **kw):
    kw.setdefault("dropout", 0.0)
    cfg = TrainConfig(variant=variant, embed_dim=6, hidden=4, topics=3, p1=3, p2=4, va_hidden=5, dtype="float64", seed=seed, **kw)
    table = build_embedding_table([f"w{i}" for i in range(10)], dim=6, seed=seed)
    model = init_params(cfg, CategoryInventory(("A", "B", "C", "D")), table)
    rng = np.random.default_rng(seed + 100)
    for name, t in model.params.items():
        if ".b" in name:
            t.data[...] = rng.uniform(-0.5, 0.5, t.shape)
    return model
