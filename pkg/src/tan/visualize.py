"""Attention-weight exports: tokens as columns, topics as rows."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np


@dataclass
class AttentionExport:
    tokens: list[str]
    alpha: np.ndarray  # (k, N), each row sums to 1

    @property
    def topic_ids(self) -> list[str]:
        return [f"topic_{i + 1}" for i in range(self.alpha.shape[0])]


def _fmt(x: float) -> str:
    return repr(float(x))


def to_csv(export: AttentionExport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["topic"] + export.tokens)
    for tid, row in zip(export.topic_ids, export.alpha):
        w.writerow([tid] + [_fmt(x) for x in row])
    return buf.getvalue()


def read_csv(text: str) -> AttentionExport:
    rows = list(csv.reader(io.StringIO(text)))
    tokens = rows[0][1:]
    alpha = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return AttentionExport(tokens, alpha)


def to_svg(export: AttentionExport, cell: int = 48, label_w: int = 80, label_h: int = 90) -> str:
    k, n = export.alpha.shape
    width = label_w + n * cell + 10
    height = label_h + k * cell + 10
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
    ]
    for j, tok in enumerate(export.tokens):
        x = label_w + j * cell + cell / 2
        parts.append(
            f'<text x="{x}" y="{label_h - 6}" transform="rotate(-45 {x} {label_h - 6})">{escape(tok)}</text>'
        )
    for i, tid in enumerate(export.topic_ids):
        y = label_h + i * cell
        parts.append(f'<text x="4" y="{y + cell / 2 + 4}">{tid}</text>')
        for j, a in enumerate(export.alpha[i]):
            x = label_w + j * cell
            shade = int(round(255 * (1.0 - float(a))))
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},255)" stroke="#999" '
                f'data-topic="{i}" data-token="{j}" data-alpha="{_fmt(a)}"/>'
            )
            ink = "#fff" if a > 0.5 else "#000"
            parts.append(f'<text x="{x + 6}" y="{y + cell / 2 + 4}" fill="{ink}">{float(a):.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def read_svg_alpha(text: str) -> np.ndarray:
    """Recover the alpha matrix from the ``data-alpha`` attributes of an SVG export."""
    import xml.etree.ElementTree as ET

    root = ET.fromstring(text)
    cells = {}
    for el in root.iter("{http://www.w3.org/2000/svg}rect"):
        if "data-alpha" in el.attrib:
            cells[(int(el.get("data-topic")), int(el.get("data-token")))] = float(el.get("data-alpha"))
    k = max(i for i, _ in cells) + 1
    n = max(j for _, j in cells) + 1
    out = np.zeros((k, n))
    for (i, j), a in cells.items():
        out[i, j] = a
    return out


_SHADES = " .:-=+*#%@"


def to_terminal(export: AttentionExport) -> str:
    width = max([len(t) for t in export.tokens] + [6])
    lines = [" " * 9 + " ".join(t.rjust(width) for t in export.tokens)]
    for tid, row in zip(export.topic_ids, export.alpha):
        cells = []
        for a in row:
            glyph = _SHADES[min(int(a * len(_SHADES)), len(_SHADES) - 1)]
            cells.append(f"{glyph}{a:.2f}".rjust(width))
        lines.append(f"{tid:<9}" + " ".join(cells))
    return "\n".join(lines) + "\n"
