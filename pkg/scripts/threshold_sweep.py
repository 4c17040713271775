"""Print micro P/R/F1 of a checkpoint across a threshold grid on a SemEval file.

Use it on validation data only; the chosen threshold is then fixed for test.

    python scripts/threshold_sweep.py --checkpoint run/model.tan --data val.xml --format semeval2014
"""

import argparse

import numpy as np

from tan import corpus
from tan.evaluation import report_from_probabilities, sweep_threshold
from tan.model import predict_proba
from tan.training import load_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--data", required=True)
    ap.add_argument("--format", required=True, choices=corpus.FORMATS)
    ap.add_argument("--step", type=float, default=0.05)
    args = ap.parse_args()

    model = load_checkpoint(args.checkpoint)
    raw = corpus.filter_unlabeled(corpus.read_semeval(args.data, args.format))
    ids = [model.encode_text(s.text)[1] for s in raw]
    labels = np.stack([model.inventory.encode(s.categories) for s in raw])
    probs = predict_proba(model, ids)
    print(f"{'t':>5} {'P':>7} {'R':>7} {'F1':>7}")
    for t in np.round(np.arange(args.step, 1.0 - 1e-9, args.step), 10):
        rep = report_from_probabilities(probs, labels, model.inventory, float(t))
        print(f"{t:5.2f} {rep.p:7.4f} {rep.r:7.4f} {rep.f1:7.4f}")
    best_t, best_f1 = sweep_threshold(probs, labels, args.step)
    print(f"best threshold {best_t:.2f} (F1 {best_f1:.4f})")


if __name__ == "__main__":
    main()
