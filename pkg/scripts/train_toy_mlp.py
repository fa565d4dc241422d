"""Train the bundled toy MLP and write the model and test sample.

Uses scikit-learn's 8x8 digits, upscaled to 28x28, and a plain numpy
trainer that uses the same polynomial activation as blind inference.
Run from the repository root::

    python scripts/train_toy_mlp.py
"""
import argparse
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

from cmpswhe.inference import FixedPointModel, fit_relu_poly, predict_fixed, predict_float, serialize_model

DATA = Path(__file__).resolve().parents[1] / "src" / "cmpswhe" / "data"


def to_28x28(images8):
    big = np.kron(images8, np.ones((3, 3)))  # 24x24
    big = np.pad(big, ((0, 0), (2, 2), (2, 2)))
    return np.clip(np.round(big * 255 / 16), 0, 255).astype(np.uint8)


def train(x, y, act, dims, epochs, lr, seed, l2=1e-4):
    rng = np.random.default_rng(seed)
    ws = [rng.normal(0, 1 / np.sqrt(i), (o, i)) for i, o in zip(dims, dims[1:])]
    coeffs = np.asarray(act.coeffs)
    dcoeffs = np.polyder(coeffs)
    m = [np.zeros_like(w) for w in ws]
    v = [np.zeros_like(w) for w in ws]
    step = 0
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), 64):
            idx = order[start:start + 64]
            h, zs = [x[idx].T], []
            for i, w in enumerate(ws):
                z = w @ h[-1]
                zs.append(z)
                h.append(np.polyval(coeffs, z) if i < len(ws) - 1 else z)
            logits = h[-1] - h[-1].max(axis=0)
            p = np.exp(logits) / np.exp(logits).sum(axis=0)
            p[y[idx], np.arange(len(idx))] -= 1
            g = p / len(idx)
            step += 1
            for i in reversed(range(len(ws))):
                grad = g @ h[i].T + l2 * ws[i]
                g = ws[i].T @ g
                if i > 0:
                    # keep pre-activations inside the fit interval
                    z = zs[i - 1]
                    g = g * np.polyval(dcoeffs, z) + 1e-3 * (np.abs(z) > act.hi) * np.sign(z)
                m[i] = 0.9 * m[i] + 0.1 * grad
                v[i] = 0.999 * v[i] + 0.001 * grad**2
                mh, vh = m[i] / (1 - 0.9**step), v[i] / (1 - 0.999**step)
                ws[i] -= lr * mh / (np.sqrt(vh) + 1e-8)
    return ws


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=60)
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--degree", type=int, default=2)
    ap.add_argument("--bound", type=float, default=4.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    digits = load_digits()
    images = to_28x28(digits.images)
    labels = digits.target.astype(np.int64)
    perm = np.random.default_rng(args.seed).permutation(len(images))
    test, train_idx = perm[:200], perm[200:]

    act = fit_relu_poly(args.degree, -args.bound, args.bound)
    x = images.reshape(len(images), -1) / 255.0
    ws = train(x[train_idx], labels[train_idx], act, (784, 16, 16, 10), args.epochs, 3e-3, args.seed)
    # six significant decimals are plenty for n <= 4
    ws = tuple(np.round(w, 6) for w in ws)
    model = FixedPointModel(ws, args.n, act)

    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "toy_mlp.txt").write_text(serialize_model(model))
    np.savez_compressed(DATA / "digits_test.npz", images=images[test], labels=labels[test])

    fl = np.array([predict_float(images[i], model) for i in test])
    fx = np.array([predict_fixed(images[i], model) for i in test])
    print(f"float accuracy {np.mean(fl == labels[test]):.3f}")
    print(f"fixed accuracy {np.mean(fx == labels[test]):.3f}")
    print(f"fixed/float agreement {np.mean(fl == fx):.3f}")


if __name__ == "__main__":
    main()
