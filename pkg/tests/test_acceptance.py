"""Acceptance gate: one test per criterion, each recorded as a PASS/FAIL line.

The data tier (criterion 9) needs the official restaurant XML files in the
directory named by ``TAN_DATA_DIR`` and is skipped otherwise.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from tan import cli, corpus
from tan import numerics as nx
from tan.evaluation import assign_categories, micro_prf
from tan.gradcheck import TOLERANCE, gradcheck_report
from tan.model import forward, make_batch
from tan.training import (
    IntegrityError,
    UnsupportedVersionError,
    checkpoint_bytes,
    load_checkpoint,
    read_checkpoint,
)

from helpers import permute_topics, small_model


def test_criterion_1_gradient_oracle(criterion):
    with criterion(1, "backprop matches central differences for tan/va/taws") as detail:
        t0 = time.perf_counter()
        worst = {v: max(gradcheck_report(v, seed=0).values()) for v in ("tan", "va", "taws")}
        seconds = time.perf_counter() - t0
        detail.update({f"{v}_max_rel_err": f"{e:.2e}" for v, e in worst.items()})
        detail["seconds"] = f"{seconds:.1f}"
        assert all(e < TOLERANCE for e in worst.values()), worst
        assert seconds < 30


def _random_vectors(rng, n, max_dim=512):
    dims = rng.integers(1, max_dim + 1, n)
    v = rng.normal(size=(n, max_dim))
    v[np.arange(max_dim)[None, :] >= dims[:, None]] = 0.0
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    mags = 10.0 ** rng.uniform(-8, 4, n)
    return v * mags[:, None]


def test_criterion_2_squash_properties(criterion):
    with criterion(2, "squash bound, direction and monotonicity over 1e5 vectors") as detail:
        rng = np.random.default_rng(2024)
        worst_norm, worst_cos, chunks = 0.0, 0.0, 10
        for _ in range(chunks):
            v = _random_vectors(rng, 100_000 // chunks)
            s = nx.squash(nx.constant(v)).data
            ns = np.linalg.norm(s, axis=1)
            nv = np.linalg.norm(v, axis=1)
            assert np.all((ns >= 0) & (ns < 1))
            cos = np.einsum("nd,nd->n", v / nv[:, None], s / ns[:, None])
            assert np.all(np.abs(cos - 1) <= 1e-9)
            factor = rng.uniform(1.01, 10.0, len(v))
            longer = np.linalg.norm(nx.squash(nx.constant(v * factor[:, None])).data, axis=1)
            assert np.all(longer > ns)
            worst_norm = max(worst_norm, float(ns.max()))
            worst_cos = max(worst_cos, float(np.abs(cos - 1).max()))
        assert np.array_equal(nx.squash(nx.constant(np.zeros(3))).data, np.zeros(3))
        np.testing.assert_allclose(nx.squash(nx.constant(np.array([1.0, 0.0]))).data, [0.5, 0.0], rtol=0, atol=1e-9)
        np.testing.assert_allclose(nx.squash(nx.constant(np.array([3.0, 4.0]))).data, [15 / 26, 20 / 26], rtol=0, atol=1e-9)
        detail.update(max_norm=f"{worst_norm:.12f}", max_cos_dev=f"{worst_cos:.1e}")


def test_criterion_3_orthogonality_penalty(criterion):
    with criterion(3, "orthogonality penalty fixtures and scale invariance") as detail:
        pen = lambda T: float(nx.orthogonality_penalty(nx.constant(np.asarray(T, dtype=float))).data)
        assert abs(pen(np.eye(3))) <= 1e-9
        assert abs(pen([[1.0, 0.0], [1.0, 0.0]]) - np.sqrt(2)) <= 1e-9
        sixty = [[1.0, 0.0], [0.5, np.sqrt(3) / 2]]
        assert abs(pen(sixty) - np.sqrt(0.5)) <= 1e-9
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(200):
            T = rng.normal(size=(int(rng.integers(2, 12)), int(rng.integers(2, 40))))
            S = T * rng.uniform(1e-3, 1e3, (T.shape[0], 1))
            worst = max(worst, abs(pen(T) - pen(S)))
        assert worst <= 1e-9
        detail["max_scale_dev"] = f"{worst:.1e}"


def test_criterion_4_overfit_oracle(criterion, synthetic_run):
    with criterion(4, "synthetic corpus reaches train micro-F1 1.0") as detail:
        run = synthetic_run["run"]
        train = json.loads((run / "train_metrics.json").read_text())
        summary = json.loads((run / "summary.json").read_text())
        resolved = json.loads((run / "resolved_config.json").read_text())
        detail.update(train_f1=train["micro"]["f1"], best_epoch=summary["best_epoch"],
                      epochs_run=summary["epochs_run"], seconds=f"{synthetic_run['seconds']:.1f}")
        assert (resolved["topics"], resolved["hidden"], resolved["seed"]) == (4, 32, 42)
        assert train["micro"]["f1"] == 1.0
        assert summary["epochs_run"] <= 300 and summary["best_epoch"] <= 300
        assert synthetic_run["seconds"] < 120


def _synthetic_encoded(root, model):
    raw = corpus.read_semeval(root / "synthetic_train.xml", "semeval2014")
    return [model.encode_text(s.text) for s in raw]


def test_criterion_5_attention_sanity(criterion, synthetic_run):
    with criterion(5, "attention rows, padding, batching and planted keywords") as detail:
        root = synthetic_run["root"]
        model = load_checkpoint(synthetic_run["run"] / "model.tan")
        keywords = {w for words in json.loads((root / "keywords.json").read_text()).values() for w in words}
        encoded = _synthetic_encoded(root, model)
        batch = make_batch([ids for _, ids in encoded], model.pad_id)
        out = forward(model, batch)
        alpha = out.attention
        pad = ~np.broadcast_to(batch.mask[:, None, :], alpha.shape)
        row_dev = float(np.abs(alpha.sum(-1) - 1).max())
        assert row_dev <= 1e-6
        assert np.all(alpha >= 0) and np.all(alpha[pad] == 0)

        batch_dev, weakest, hits, total = 0.0, 1.0, 0, 0
        for i, (tokens, ids) in enumerate(encoded):
            single = forward(model, make_batch([ids], model.pad_id))
            batch_dev = max(batch_dev, float(np.abs(single.probabilities.data[0] - out.probabilities.data[i]).max()))
            for j, tok in enumerate(tokens):
                if tok in keywords:
                    best = float(single.attention[0, :, j].max())
                    weakest = min(weakest, best)
                    total += 1
                    hits += best > 0.5
        detail.update(row_sum_dev=f"{row_dev:.1e}", batch_dev=f"{batch_dev:.1e}",
                      keywords_over_half=f"{hits}/{total}", weakest=f"{weakest:.3f}")
        assert batch_dev <= 1e-6
        assert total > 0 and hits == total


def test_criterion_6_evaluation_oracle(criterion):
    with criterion(6, "micro P/R/F1 fixture and threshold monotonicity") as detail:
        assert micro_prf([{"A", "B"}, {"B"}], [{"A"}, {"B", "C"}]) == (2 / 3, 2 / 3, 2 / 3)
        rng = np.random.default_rng(6)
        for _ in range(1000):
            n, c = int(rng.integers(1, 20)), int(rng.integers(1, 8))
            probs = rng.random((n, c))
            gold = [set(np.flatnonzero(r)) for r in rng.random((n, c)) < 0.4]
            t_lo, t_hi = np.sort(rng.uniform(0.01, 0.99, 2))
            lo = [assign_categories(r, t_lo) for r in probs]
            hi = [assign_categories(r, t_hi) for r in probs]
            tp = lambda pred: sum(len(g & p) for g, p in zip(gold, pred))
            assert tp(hi) <= tp(lo)
            assert micro_prf(gold, hi)[1] <= micro_prf(gold, lo)[1]
            assert all(h <= l for h, l in zip(hi, lo))
        detail["random_sets"] = 1000


def test_criterion_7_topic_permutation_invariance(criterion):
    with criterion(7, "permuting topics leaves probabilities unchanged") as detail:
        worst = 0.0
        for seed in range(100):
            variant = ("tan", "taws")[seed % 2]
            m = small_model(variant, seed)
            rng = np.random.default_rng(seed)
            batch = make_batch([rng.integers(3, len(m.vocab), n) for n in (6, 3, 1)], m.pad_id)
            perm = rng.permutation(m.config.topics)
            a = forward(m, batch).probabilities.data
            b = forward(permute_topics(m, perm), batch).probabilities.data
            worst = max(worst, float(np.abs(a - b).max()))
        detail["max_dev"] = f"{worst:.1e}"
        assert worst <= 1e-9


def _epoch_log(run: Path):
    recs = [json.loads(l) for l in (run / "epochs.jsonl").read_text().splitlines()]
    return json.dumps([{k: v for k, v in r.items() if k != "seconds"} for r in recs])


def test_criterion_8_determinism_and_persistence(criterion, synthetic_run, tmp_path):
    with criterion(8, "seeded runs identical, checkpoint round trip exact, corruption rejected") as detail:
        root = synthetic_run["root"]
        again = tmp_path / "again"
        assert cli.main(["train", "--config", str(root / "synthetic_config.json"), "--out-dir", str(again), "--quiet"]) == 0
        assert _epoch_log(again) == _epoch_log(synthetic_run["run"])
        blob = (synthetic_run["run"] / "model.tan").read_bytes()
        assert (again / "model.tan").read_bytes() == blob

        model, header = read_checkpoint(blob)
        resaved = checkpoint_bytes(model, header["best_metric"], header["epoch"])
        assert resaved == blob
        reloaded, _ = read_checkpoint(resaved)
        encoded = _synthetic_encoded(root, model)
        batch = make_batch([ids for _, ids in encoded], model.pad_id)
        a, b = forward(model, batch), forward(reloaded, batch)
        assert a.probabilities.data.tobytes() == b.probabilities.data.tobytes()
        assert a.attention.tobytes() == b.attention.tobytes()

        flipped = bytearray(blob)
        flipped[len(blob) // 3] ^= 0x01
        for bad in (bytes(flipped), blob[:-17], blob[:10]):
            with pytest.raises(IntegrityError):
                read_checkpoint(bad)
        with pytest.raises(UnsupportedVersionError):
            read_checkpoint(checkpoint_bytes(model, version=FUTURE_VERSION))
        detail.update(best_epoch=header["epoch"], checkpoint_bytes=len(blob))


FUTURE_VERSION = 2

# official file names, with loose fallbacks for renamed copies
DATA_FILES = {
    ("semeval2014", "train"): ["Restaurants_Train_v2.xml", "Restaurants_Train.xml", "*2014*rain*.xml"],
    ("semeval2014", "test"): ["Restaurants_Test_Gold.xml", "Restaurants_Test_Data_phaseB.xml", "*2014*est*.xml"],
    ("semeval2016", "train"): ["ABSA16_Restaurants_Train_SB1_v2.xml", "ABSA16_Restaurants_Train_SB1.xml", "*2016*rain*.xml"],
    ("semeval2016", "test"): ["EN_REST_SB1_TEST.xml.gold", "EN_REST_SB1_TEST_gold.xml", "*2016*est*.xml"],
}
EXPECTED_COUNTS = {"semeval2014": (3041, 800), "semeval2016": (2000, 676)}


def _find(data_dir: Path, patterns):
    for pat in patterns:
        hits = sorted(data_dir.glob(pat))
        if hits:
            return hits[0]
    return None


@pytest.mark.data
@pytest.mark.slow
@pytest.mark.parametrize("fmt", ["semeval2014", "semeval2016"])
def test_criterion_9_official_data(criterion, fmt, tmp_path):
    with criterion(9, f"official {fmt} counts, filtering and a full training run") as detail:
        data_dir = os.environ.get("TAN_DATA_DIR")
        if not data_dir:
            pytest.skip("TAN_DATA_DIR not set")
        train_path = _find(Path(data_dir), DATA_FILES[(fmt, "train")])
        test_path = _find(Path(data_dir), DATA_FILES[(fmt, "test")])
        if train_path is None or test_path is None:
            pytest.skip(f"{fmt} files not found in {data_dir}")
        train_raw = corpus.read_semeval(train_path, fmt)
        test_raw = corpus.read_semeval(test_path, fmt)
        assert (len(train_raw), len(test_raw)) == EXPECTED_COUNTS[fmt]
        kept = corpus.filter_unlabeled(train_raw)
        dropped = [s for s in train_raw if s not in kept]
        assert all(not s.categories for s in dropped)
        assert len(kept) == sum(1 for s in train_raw if s.categories)
        detail.update(train=len(train_raw), test=len(test_raw), unlabeled_dropped=len(dropped))

        cfg = {"format": fmt, "train_path": str(train_path), "test_path": str(test_path),
               "out_dir": str(tmp_path / "run")}
        emb = os.environ.get("TAN_EMBEDDINGS")
        if emb:
            cfg["embeddings_path"] = emb
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert cli.main(["train", "--config", str(cfg_path), "--quiet"]) == 0
        metrics = json.loads((tmp_path / "run" / "test_metrics.json").read_text())
        assert set(metrics["micro"]) == {"p", "r", "f1"}
        detail.update({f"test_{k}": f"{v:.4f}" for k, v in metrics["micro"].items()})
