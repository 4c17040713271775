"""SemEval restaurant XML ingestion, preprocessing, vocabulary and splits."""

from __future__ import annotations

import json
import logging
import unicodedata
import warnings
import xml.etree.ElementTree as ET
import zlib
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
EMPTY = "<empty>"
RESERVED = (PAD, UNK, EMPTY)

FORMATS = ("semeval2014", "semeval2016")


class CorpusError(ValueError):
    """Base class for data problems (bad files, bad schema)."""


class CorpusFormatError(CorpusError):
    pass


class SchemaError(CorpusError):
    pass


@dataclass(frozen=True)
class RawSentence:
    id: str
    text: str
    categories: frozenset[str] = frozenset()


@dataclass
class Sentence:
    id: str
    tokens: list[str]
    token_ids: np.ndarray
    label_vector: np.ndarray

    def __post_init__(self):
        if len(self.tokens) == 0 or len(self.tokens) != len(self.token_ids):
            raise ValueError(f"sentence {self.id}: tokens and ids must be nonempty and aligned")


@dataclass(frozen=True)
class CategoryInventory:
    names: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("category names must be unique")

    @classmethod
    def from_sentences(cls, sentences: Iterable[RawSentence]) -> "CategoryInventory":
        found: set[str] = set()
        for s in sentences:
            found.update(s.categories)
        return cls(tuple(sorted(found)))

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def encode(self, categories: Iterable[str]) -> np.ndarray:
        vec = np.zeros(len(self.names), dtype=np.int8)
        for c in categories:
            try:
                vec[self.names.index(c)] = 1
            except ValueError:
                raise CorpusError(f"category {c!r} not in inventory {self.names}") from None
        return vec

    def decode(self, vector) -> frozenset[str]:
        return frozenset(n for n, v in zip(self.names, vector) if v)


# ---------------------------------------------------------------------------
# XML parsing
# ---------------------------------------------------------------------------


def normalize_category(name: str) -> str:
    return name.strip().upper()


def _parse_xml(xml_bytes: bytes | str) -> ET.Element:
    try:
        return ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        line, col = exc.position
        raise CorpusFormatError(f"malformed XML at line {line}, column {col}: {exc}") from None


def _sentence_text(elem: ET.Element) -> str:
    text_el = elem.find("text")
    if text_el is None:
        raise SchemaError(f"sentence {elem.get('id')!r} has no <text> element")
    return text_el.text or ""


def _check_ids(sentences: list[RawSentence]) -> list[RawSentence]:
    seen: set[str] = set()
    for s in sentences:
        if not s.id:
            raise SchemaError("sentence without an id")
        if s.id in seen:
            raise SchemaError(f"duplicate sentence id {s.id!r}")
        seen.add(s.id)
    return sentences


def parse_semeval2014(xml_bytes: bytes | str) -> list[RawSentence]:
    """Task-4 restaurant schema: ``sentences/sentence/aspectCategories/aspectCategory``."""
    root = _parse_xml(xml_bytes)
    if root.tag != "sentences":
        raise SchemaError(f"expected <sentences> root for semeval2014, found <{root.tag}>")
    out = []
    for el in root.iter("sentence"):
        cats = frozenset(
            normalize_category(c.get("category", ""))
            for c in el.iterfind("aspectCategories/aspectCategory")
            if c.get("category")
        )
        out.append(RawSentence(el.get("id", ""), _sentence_text(el), cats))
    return _check_ids(out)


def parse_semeval2016(xml_bytes: bytes | str) -> list[RawSentence]:
    """Task-5 restaurant schema: ``Reviews/Review/sentences/sentence/Opinions/Opinion``."""
    root = _parse_xml(xml_bytes)
    if root.tag != "Reviews":
        raise SchemaError(f"expected <Reviews> root for semeval2016, found <{root.tag}>")
    out = []
    for el in root.iterfind("Review/sentences/sentence"):
        cats = frozenset(
            normalize_category(op.get("category", ""))
            for op in el.iterfind("Opinions/Opinion")
            if op.get("category")
        )
        out.append(RawSentence(el.get("id", ""), _sentence_text(el), cats))
    return _check_ids(out)


def parse_semeval(xml_bytes: bytes | str, fmt: str) -> list[RawSentence]:
    if fmt == "semeval2014":
        return parse_semeval2014(xml_bytes)
    if fmt == "semeval2016":
        return parse_semeval2016(xml_bytes)
    raise SchemaError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")


def read_semeval(path: str | Path, fmt: str) -> list[RawSentence]:
    return parse_semeval(Path(path).read_bytes(), fmt)


def filter_unlabeled(sentences: Sequence[RawSentence]) -> list[RawSentence]:
    kept = [s for s in sentences if s.categories]
    if sentences and not kept:
        warnings.warn("every sentence is unlabeled; filtered corpus is empty", stacklevel=2)
    return kept


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """One token per line; ``#`` lines are comments.  Defaults to the bundled list."""
    if path is None:
        text = resources.files("tan.assets").joinpath("stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(
        line.strip().lower() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def _strip_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def preprocess(text: str, stopwords: frozenset[str] | None = None) -> list[str]:
    """Lowercase, whitespace split, trim punctuation, drop stopwords.

    Never returns an empty list: a sentence with nothing left becomes
    ``[EMPTY]`` so it stays aligned with its gold labels.
    """
    if stopwords is None:
        stopwords = _default_stopwords()
    tokens = []
    for raw in text.lower().split():
        tok = _strip_punct(raw)
        if tok and tok not in stopwords:
            tokens.append(tok)
    return tokens or [EMPTY]


_STOPWORDS: frozenset[str] | None = None


def _default_stopwords() -> frozenset[str]:
    global _STOPWORDS
    if _STOPWORDS is None:
        _STOPWORDS = load_stopwords()
    return _STOPWORDS


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------


def word_vector(word: str, seed: int, dim: int) -> np.ndarray:
    """Deterministic uniform(-0.1, 0.1) vector keyed on (seed, crc32(word))."""
    rng = np.random.default_rng([seed, zlib.crc32(word.encode("utf-8"))])
    return rng.uniform(-0.1, 0.1, dim)


@dataclass
class EmbeddingTable:
    itos: list[str]
    matrix: np.ndarray
    oov_policy: str = "seeded-random"
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self):
        if self.matrix.shape[0] != len(self.itos):
            raise ValueError("embedding matrix rows must match vocabulary size")
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, word):
        return word in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, self.stoi.get(UNK, 0))

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.index(t) for t in tokens], dtype=np.int64)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Read the word2vec text format: ``<count> <dim>`` header, then ``word v1 .. vd``."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise CorpusFormatError(f"{path}:1: header must be '<vocab-size> <dimension>'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise CorpusFormatError(f"{path}:1: header must contain two integers") from None
        words: list[str] = []
        rows: list[np.ndarray] = []
        seen: set[str] = set()
        n_rows = 0
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            n_rows += 1
            if len(parts) != dim + 1:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected {dim} values after the word, found {len(parts) - 1}"
                )
            word = parts[0]
            if word in seen:
                warnings.warn(f"{path}:{lineno}: duplicate word {word!r}, keeping first", stacklevel=2)
                continue
            try:
                rows.append(np.array(parts[1:], dtype=np.float64))
            except ValueError:
                raise CorpusFormatError(f"{path}:{lineno}: non-numeric vector value") from None
            seen.add(word)
            words.append(word)
    if n_rows != count:
        raise CorpusFormatError(f"{path}: header declares {count} rows, file has {n_rows}")
    matrix = np.stack(rows) if rows else np.zeros((0, dim))
    return EmbeddingTable(words, matrix, oov_policy="pretrained")


def build_embedding_table(
    tokens: Iterable[str],
    dim: int = 300,
    seed: int = 0,
    pretrained: EmbeddingTable | None = None,
    oov_policy: str = "seeded-random",
) -> EmbeddingTable:
    """Vocabulary over ``tokens`` (plus reserved ids), rows from ``pretrained`` when known.

    Words missing from ``pretrained`` get a per-word seeded vector
    (``seeded-random``) or are dropped so they share the UNK row
    (``shared-unknown``).  The PAD row is zero.
    """
    if oov_policy not in ("seeded-random", "shared-unknown"):
        raise ValueError(f"unknown oov_policy {oov_policy!r}")
    if pretrained is not None and pretrained.dim != dim:
        raise CorpusError(f"pretrained embeddings have dim {pretrained.dim}, config expects {dim}")
    vocab = sorted(set(tokens) - set(RESERVED))
    if pretrained is not None and oov_policy == "shared-unknown":
        vocab = [w for w in vocab if w in pretrained]
    itos = list(RESERVED) + vocab
    matrix = np.zeros((len(itos), dim))
    for i, w in enumerate(itos):
        if w == PAD:
            continue
        if pretrained is not None and w in pretrained:
            matrix[i] = pretrained.matrix[pretrained.stoi[w]]
        else:
            matrix[i] = word_vector(w, seed, dim)
    return EmbeddingTable(itos, matrix, oov_policy=oov_policy)


# ---------------------------------------------------------------------------
# encoded sentences, corpus json
# ---------------------------------------------------------------------------


def encode_sentences(
    raw: Sequence[RawSentence],
    inventory: CategoryInventory,
    table: EmbeddingTable,
    stopwords: frozenset[str] | None = None,
    strict_labels: bool = True,
) -> list[Sentence]:
    """Tokenize and index.  With ``strict_labels=False`` unknown categories are dropped."""
    out = []
    for s in raw:
        cats = s.categories if strict_labels else [c for c in s.categories if c in inventory.names]
        toks = preprocess(s.text, stopwords)
        out.append(Sentence(s.id, toks, table.encode(toks), inventory.encode(cats)))
    return out


def corpus_to_json(
    raw: Sequence[RawSentence], inventory: CategoryInventory, stopwords: frozenset[str] | None = None
) -> dict:
    return {
        "inventory": list(inventory.names),
        "sentences": [
            {
                "id": s.id,
                "text": s.text,
                "tokens": preprocess(s.text, stopwords),
                "categories": sorted(s.categories),
            }
            for s in raw
        ],
    }


def corpus_from_json(doc: dict | str) -> tuple[CategoryInventory, list[RawSentence]]:
    if isinstance(doc, str):
        doc = json.loads(doc)
    inv = CategoryInventory(tuple(doc["inventory"]))
    sents = [RawSentence(d["id"], d.get("text", " ".join(d["tokens"])), frozenset(d["categories"])) for d in doc["sentences"]]
    return inv, sents


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


def stratified_split(
    sentences: Sequence[RawSentence], ratio: float = 0.1, seed: int = 0
) -> tuple[list[RawSentence], list[RawSentence]]:
    """Greedy iterative stratification into (train, validation).

    Labels are processed rarest first; each sentence carrying the current
    label goes to whichever side still wants the most of that label, then
    the side wanting the most sentences overall, then a seeded coin flip.
    Categories with fewer than two positives keep all of them in train.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    n = len(sentences)
    order = [int(i) for i in rng.permutation(n)]
    counts = Counter(c for s in sentences for c in s.categories)

    # side 0 = train, side 1 = validation
    want = {c: [(1 - ratio) * k, ratio * k] for c, k in counts.items()}
    want_total = [(1 - ratio) * n, ratio * n]
    side: dict[int, int] = {}

    def assign(i: int, to: int):
        side[i] = to
        want_total[to] -= 1
        for c in sentences[i].categories:
            want[c][to] -= 1

    rare = sorted(c for c, k in counts.items() if k < 2)
    for c in rare:
        warnings.warn(f"category {c!r} has {counts[c]} positive(s); keeping it in train", stacklevel=2)
    for i in order:
        if any(c in rare for c in sentences[i].categories):
            assign(i, 0)

    def pick(label: str | None) -> int:
        if label is not None:
            a, b = want[label]
            if a != b:
                return 0 if a > b else 1
        if want_total[0] != want_total[1]:
            return 0 if want_total[0] > want_total[1] else 1
        return int(rng.integers(2))

    while True:
        pending = Counter(c for i in order if i not in side for c in sentences[i].categories)
        if not pending:
            break
        label = min(pending, key=lambda c: (pending[c], c))
        for i in order:
            if i not in side and label in sentences[i].categories:
                assign(i, pick(label))
    for i in order:
        if i not in side:
            assign(i, pick(None))

    train = [s for i, s in enumerate(sentences) if side[i] == 0]
    val = [s for i, s in enumerate(sentences) if side[i] == 1]
    return train, val
