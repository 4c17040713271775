"""Synthetic restaurant corpus with planted per-category keywords.

Every category owns a disjoint keyword set; a sentence mentions one keyword
for each of its categories, padded with neutral filler words.  Nothing but
the keywords carries label information, so a working model must learn to
attend to them.
"""

from __future__ import annotations

import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

KEYWORDS = {
    "AMBIENCE": ["decor", "music", "lighting", "atmosphere"],
    "FOOD": ["pizza", "sushi", "pasta", "dessert"],
    "PRICE": ["expensive", "cheap", "overpriced", "bill"],
    "SERVICE": ["waiter", "staff", "waitress", "hostess"],
}

FILLERS = [
    "place", "night", "went", "friends", "table", "evening", "ordered", "came",
    "back", "today", "tried", "visit", "downtown", "weekend", "family", "corner",
    "street", "lunch", "dinner", "saturday", "sunday", "birthday", "group", "date",
]


def generate(n: int = 64, seed: int = 42, multi_label_rate: float = 0.35, fillers: tuple[int, int] = (8, 14)) -> list[dict]:
    """``n`` sentence records ``{"id", "text", "categories", "keywords"}``."""
    rng = np.random.default_rng(seed)
    cats = sorted(KEYWORDS)
    out = []
    for i in range(n):
        # cycle the first category so every class is well represented
        chosen = [cats[i % len(cats)]]
        if rng.random() < multi_label_rate:
            other = [c for c in cats if c != chosen[0]]
            chosen.append(other[int(rng.integers(len(other)))])
        words = [KEYWORDS[c][int(rng.integers(len(KEYWORDS[c])))] for c in chosen]
        kws = list(words)
        # long filler runs make a uniform average over tokens a poor summary
        n_fill = int(rng.integers(*fillers))
        words += [FILLERS[int(j)] for j in rng.choice(len(FILLERS), n_fill, replace=False)]
        words = [words[int(j)] for j in rng.permutation(len(words))]
        text = " ".join(words).capitalize() + "."
        out.append({"id": f"s{i:03d}", "text": text, "categories": sorted(chosen), "keywords": kws})
    return out


def to_semeval2014_xml(records: list[dict]) -> str:
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', "<sentences>"]
    for r in records:
        lines.append(f'  <sentence id="{escape(r["id"])}">')
        lines.append(f"    <text>{escape(r['text'])}</text>")
        if r["categories"]:
            lines.append("    <aspectCategories>")
            for c in r["categories"]:
                lines.append(f'      <aspectCategory category="{c.lower()}" polarity="neutral"/>')
            lines.append("    </aspectCategories>")
        lines.append("  </sentence>")
    lines.append("</sentences>")
    return "\n".join(lines) + "\n"


ACCEPTANCE_CONFIG = {
    "format": "semeval2014",
    "train_path": "synthetic_train.xml",
    "embedding_fallback": "random",
    "variant": "tan",
    "embed_dim": 300,
    "hidden": 32,
    "topics": 4,
    "p1": 8,
    "p2": 8,
    "dropout": 0.3,
    "fine_tune_embeddings": True,
    "learning_rate": 0.01,
    "batch_size": 16,
    "max_epochs": 300,
    "patience": 100,
    "seed": 42,
}


def write_synthetic(out_dir: str | Path, n: int = 64, seed: int = 42) -> dict[str, Path]:
    """Write the XML corpus, its keyword map and a ready-to-train run config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = generate(n, seed)
    paths = {
        "xml": out_dir / "synthetic_train.xml",
        "keywords": out_dir / "keywords.json",
        "config": out_dir / "synthetic_config.json",
    }
    paths["xml"].write_text(to_semeval2014_xml(records), encoding="utf-8")
    paths["keywords"].write_text(json.dumps(KEYWORDS, indent=2), encoding="utf-8")
    cfg = dict(ACCEPTANCE_CONFIG, seed=seed, out_dir="run")
    paths["config"].write_text(json.dumps(cfg, indent=2), encoding="utf-8")
    return paths
