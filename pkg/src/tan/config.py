from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

VARIANTS = ("tan", "va", "taws")


@dataclass(frozen=True)
class TrainConfig:
    """Model shape plus optimisation settings for one run.

    Defaults are the SemEval-2016 optimum (k=11, 32/64 squash dims); use
    :meth:`for_dataset` for the SemEval-2014 values.
    """

    variant: str = "tan"
    # model
    embed_dim: int = 300
    hidden: int = 128
    topics: int = 11
    p1: int = 32
    p2: int = 64
    va_hidden: int = 256
    dropout: float = 0.6
    literal_eq3: bool = False
    shared_topic_heads: bool = False
    fine_tune_embeddings: bool = False
    dtype: str = "float32"
    # optimisation
    learning_rate: float = 0.001
    batch_size: int = 128
    max_epochs: int = 300
    patience: int = 20
    reg_weight: float = 1.0
    clip_norm: float | None = None
    threshold: float = 0.5
    tune_threshold: bool = False
    argmax_fallback: bool = False
    val_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("embed_dim", "hidden", "topics", "p1", "p2", "va_hidden", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if not 0.0 < self.val_ratio < 1.0:
            raise ValueError("val_ratio must lie in (0, 1)")
        if self.patience >= self.max_epochs:
            raise ValueError("patience must be smaller than max_epochs")
        if self.learning_rate <= 0 or self.reg_weight < 0:
            raise ValueError("learning_rate must be positive and reg_weight nonnegative")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive when set")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def encoder_dim(self) -> int:
        return 2 * self.hidden

    @property
    def num_topics(self) -> int:
        return 1 if self.variant == "va" else self.topics

    @classmethod
    def for_dataset(cls, fmt: str, **overrides) -> "TrainConfig":
        base = {"semeval2014": dict(topics=6, p1=16, p2=32), "semeval2016": dict(topics=11, p1=32, p2=64)}
        return cls(**{**base.get(fmt, {}), **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)
