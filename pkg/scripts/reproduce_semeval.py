"""Train TAN, VA and TAwS on the official restaurant files and tabulate test micro P/R/F1.

The files are licensed and not shipped; point --data-dir at a directory that
holds them.  Without the 300-dimensional review-domain embeddings the numbers
are not expected to match published ones; pass --embeddings to use your own.

    python scripts/reproduce_semeval.py --data-dir ~/semeval --out-dir runs
"""

import argparse
import json
import sys
from pathlib import Path

from tan import cli

FILES = {
    "semeval2014": ("Restaurants_Train_v2.xml", "Restaurants_Test_Gold.xml"),
    "semeval2016": ("ABSA16_Restaurants_Train_SB1_v2.xml", "EN_REST_SB1_TEST.xml.gold"),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", required=True)
    ap.add_argument("--out-dir", default="runs")
    ap.add_argument("--embeddings", default=None)
    ap.add_argument("--variants", nargs="+", default=["tan", "va", "taws"])
    ap.add_argument("--formats", nargs="+", default=list(FILES))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tune-threshold", action="store_true", help="pick the threshold on validation")
    args = ap.parse_args()

    data, out = Path(args.data_dir), Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for fmt in args.formats:
        train, test = (data / name for name in FILES[fmt])
        for variant in args.variants:
            run = out / f"{fmt}_{variant}"
            cfg = {"format": fmt, "train_path": str(train.resolve()), "test_path": str(test.resolve()),
                   "variant": variant, "seed": args.seed, "tune_threshold": args.tune_threshold,
                   "out_dir": str(run.resolve())}
            if args.embeddings:
                cfg["embeddings_path"] = str(Path(args.embeddings).resolve())
            cfg_path = out / f"{fmt}_{variant}.json"
            cfg_path.write_text(json.dumps(cfg, indent=2))
            code = cli.main(["train", "--config", str(cfg_path), "--quiet"])
            if code:
                print(f"{fmt} {variant}: train exited with {code}", file=sys.stderr)
                continue
            micro = json.loads((run / "test_metrics.json").read_text())["micro"]
            rows.append((fmt, variant, micro["p"], micro["r"], micro["f1"]))

    print(f"{'dataset':<12} {'model':<6} {'P':>7} {'R':>7} {'F1':>7}")
    for fmt, variant, p, r, f1 in rows:
        print(f"{fmt:<12} {variant:<6} {100 * p:7.2f} {100 * r:7.2f} {100 * f1:7.2f}")


if __name__ == "__main__":
    main()
