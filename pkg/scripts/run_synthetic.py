"""Generate the planted-keyword corpus, train on it and show attention for a few sentences.

    python scripts/run_synthetic.py --out-dir synthetic
"""

import argparse
import json
from pathlib import Path

import numpy as np

from tan import cli, corpus
from tan.model import forward, make_batch
from tan.training import load_checkpoint
from tan.visualize import AttentionExport, to_terminal


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="synthetic")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--show", type=int, default=3, help="sentences to print attention for")
    args = ap.parse_args()

    root = Path(args.out_dir)
    cli.main(["synth", "--out-dir", str(root), "--seed", str(args.seed), "--quiet"])
    code = cli.main(["train", "--config", str(root / "synthetic_config.json"), "--quiet"])
    if code:
        raise SystemExit(code)
    run = root / "run"
    summary = json.loads((run / "summary.json").read_text())
    print(f"best epoch {summary['best_epoch']} of {summary['epochs_run']}, train F1 {summary['train']['f1']:.4f}")

    model = load_checkpoint(run / "model.tan")
    raw = corpus.read_semeval(root / "synthetic_train.xml", "semeval2014")
    for s in raw[: args.show]:
        tokens, ids = model.encode_text(s.text)
        out = forward(model, make_batch([ids], model.pad_id))
        probs = dict(zip(model.inventory.names, np.round(out.probabilities.data[0].astype(float), 3).tolist()))
        print(f"\n{s.text}\n  gold {sorted(s.categories)}  probabilities {probs}")
        print(to_terminal(AttentionExport(tokens, out.attention[0].astype(np.float64))))


if __name__ == "__main__":
    main()
