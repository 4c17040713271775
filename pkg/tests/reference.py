"""Scalar mpmath re-implementation of the three forward passes.

Written against plain nested lists so it shares no code path with the numpy
autodiff version.  Running this file regenerates
``fixtures/golden_forward.json``.
"""

import json
import sys
from pathlib import Path

import mpmath as mp

mp.mp.dps = 40


def vec(xs):
    return [mp.mpf(float(x)) for x in xs]


def mat(rows):
    return [vec(r) for r in rows]


def vm(v, M):
    """row vector times matrix"""
    return [mp.fsum(v[i] * M[i][j] for i in range(len(v))) for j in range(len(M[0]))]


def vadd(a, b):
    return [x + y for x, y in zip(a, b)]


def sig(x):
    return 1 / (1 + mp.exp(-x))


def gru_step(x, h, p, prefix, literal=False):
    g = lambda name: p[f"{prefix}.{name}"]
    z = [sig(v) for v in vadd(vadd(vm(x, g("W_iz")), g("b_iz")), vadd(vm(h, g("W_hz")), g("b_hz")))]
    if literal:
        n = [mp.tanh(v) for v in vadd(vadd(vm(x, g("W_iz")), g("b_iz")), vadd(vm(h, g("W_hz")), g("b_hz")))]
    else:
        r = [sig(v) for v in vadd(vadd(vm(x, g("W_ir")), g("b_ir")), vadd(vm(h, g("W_hr")), g("b_hr")))]
        hn = vadd(vm(h, g("W_hn")), g("b_hn"))
        n = [mp.tanh(a + ri * b) for a, ri, b in zip(vadd(vm(x, g("W_in")), g("b_in")), r, hn)]
    return [(1 - zi) * ni + zi * hi for zi, ni, hi in zip(z, n, h)]


def encode(ids, p, literal=False):
    xs = [p["embedding"][i] for i in ids]
    hsize = len(p["fwd.W_hr"])
    h = [mp.mpf(0)] * hsize
    fwd = []
    for x in xs:
        h = gru_step(x, h, p, "fwd", literal)
        fwd.append(h)
    h = [mp.mpf(0)] * hsize
    bwd = []
    for x in reversed(xs):
        h = gru_step(x, h, p, "bwd", literal)
        bwd.append(h)
    bwd.reverse()
    return [f + b for f, b in zip(fwd, bwd)]


def attend(H, T):
    vs, alphas = [], []
    for t in T:
        e = [mp.fsum(a * b for a, b in zip(h, t)) for h in H]
        m = max(e)
        ex = [mp.exp(v - m) for v in e]
        s = mp.fsum(ex)
        alpha = [v / s for v in ex]
        vs.append([mp.fsum(alpha[j] * H[j][c] for j in range(len(H))) for c in range(len(H[0]))])
        alphas.append(alpha)
    return vs, alphas


def squash(v):
    n2 = mp.fsum(x * x for x in v)
    if n2 == 0:
        return [mp.mpf(0)] * len(v)
    n = mp.sqrt(n2)
    return [n2 / (1 + n2) * x / n for x in v]


def norm(v):
    return mp.sqrt(mp.fsum(x * x for x in v))


def relu(v):
    return [x if x > 0 else mp.mpf(0) for x in v]


def forward(variant, ids, p, literal=False):
    H = encode(ids, p, literal)
    vs, alphas = attend(H, p["T"])
    if variant == "va":
        hid = relu(vadd(vm(vs[0], p["hidden.W"]), p["hidden.b"]))
        return [sig(x) for x in vadd(vm(hid, p["out.W"]), p["out.b"])], alphas
    heads = [vadd(vm(v, p["topic.W"][i]), p["topic.b"][i]) for i, v in enumerate(vs)]
    if variant == "taws":
        cat = [x for hd in heads for x in relu(hd)]
        return [sig(x) for x in vadd(vm(cat, p["out.W"]), p["out.b"])], alphas
    cat = [x for hd in heads for x in squash(hd)]
    probs = [norm(squash(vadd(vm(cat, p["cat.W"][c]), p["cat.b"][c]))) for c in range(len(p["cat.W"]))]
    return probs, alphas


def to_mp(params):
    """numpy param dict -> nested mpf lists (3-D weights become lists of matrices)."""
    out = {}
    for k, a in params.items():
        arr = a.tolist()
        if a.ndim == 1:
            out[k] = vec(arr)
        elif a.ndim == 2:
            out[k] = mat(arr)
        else:
            out[k] = [mat(m) for m in arr]
    return out


def build_golden():
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    import numpy as np

    from tan.config import TrainConfig
    from tan.corpus import CategoryInventory, build_embedding_table
    from tan.model import init_params

    cases = []
    for variant in ("tan", "va", "taws"):
        cfg = TrainConfig(variant=variant, embed_dim=3, hidden=2, topics=2, p1=2, p2=2, va_hidden=3,
                          dropout=0.0, dtype="float64", seed=11)
        table = build_embedding_table(["alpha", "beta", "gamma", "delta"], dim=3, seed=11)
        model = init_params(cfg, CategoryInventory(("X", "Y", "Z")), table)
        rng = np.random.default_rng(5)
        for name, t in model.params.items():
            if ".b" in name:
                t.data[...] = rng.uniform(-0.3, 0.3, t.shape)
        ids = [3, 5, 4]
        probs, alphas = forward(variant, ids, to_mp({k: v.data for k, v in model.params.items()}))
        cases.append({
            "variant": variant,
            "config": cfg.to_dict(),
            "vocab": list(table.itos),
            "token_ids": ids,
            "params": {k: v.data.tolist() for k, v in model.params.items()},
            "probabilities": [mp.nstr(x, 30) for x in probs],
            "attention": [[mp.nstr(x, 30) for x in row] for row in alphas],
        })
    return cases


if __name__ == "__main__":
    out = Path(__file__).parent / "fixtures" / "golden_forward.json"
    out.parent.mkdir(exist_ok=True)
    out.write_text(json.dumps(build_golden(), indent=1))
    print("wrote", out)
