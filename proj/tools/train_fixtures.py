"""Trains the small MLP fixtures shipped in data/.

Features are min-max scaled to [0, 1] on the training split, so every model's
input domain is the unit box. Test rows are clipped into that box. Run from
the repository root:

    python3 tools/train_fixtures.py
"""

import json
from pathlib import Path

import numpy as np
from sklearn.datasets import load_iris, load_wine
from sklearn.model_selection import train_test_split
from sklearn.neural_network import MLPClassifier
from sklearn.preprocessing import MinMaxScaler

DATA = Path(__file__).resolve().parent.parent / "data"

CONFIGS = [
    ("iris", load_iris, (6,), 10),
    ("wine", load_wine, (8, 4), 10),
]


def to_model(clf, n_inputs):
    layers = []
    for i, (w, b) in enumerate(zip(clf.coefs_, clf.intercepts_)):
        last = i == len(clf.coefs_) - 1
        layers.append({
            "weights": w.T.tolist(),
            "biases": b.tolist(),
            "activation": "identity" if last else "relu",
        })
    return {
        "input_dim": n_inputs,
        "input_domain": [[0.0, 1.0]] * n_inputs,
        "layers": layers,
    }


def forward(model, x):
    v = np.asarray(x, dtype=float)
    for layer in model["layers"]:
        v = np.asarray(layer["weights"]) @ v + np.asarray(layer["biases"])
        if layer["activation"] == "relu":
            v = np.maximum(v, 0.0)
    return v


def main():
    DATA.mkdir(exist_ok=True)
    for name, loader, hidden, count in CONFIGS:
        X, y = loader(return_X_y=True)
        X_tr, X_te, y_tr, y_te = train_test_split(X, y, test_size=0.3, random_state=0, stratify=y)
        scaler = MinMaxScaler().fit(X_tr)
        X_tr = scaler.transform(X_tr)
        X_te = np.clip(scaler.transform(X_te), 0.0, 1.0)
        clf = MLPClassifier(hidden_layer_sizes=hidden, max_iter=4000, random_state=0)
        clf.fit(X_tr, y_tr)
        model = to_model(clf, X.shape[1])
        (DATA / f"{name}.json").write_text(json.dumps(model, indent=1) + "\n")

        rows = []
        for x, label in zip(X_te, y_te):
            out = forward(model, x)
            if np.sum(out == out.max()) > 1:
                continue
            rows.append((x, label))
            if len(rows) == count:
                break
        header = ",".join(f"f{i}" for i in range(X.shape[1])) + ",label"
        lines = [header] + [",".join(repr(float(v)) for v in x) + f",{label}" for x, label in rows]
        (DATA / f"{name}_instances.csv").write_text("\n".join(lines) + "\n")
        print(f"{name}: test accuracy {clf.score(X_te, y_te):.3f}, {len(rows)} instances")


if __name__ == "__main__":
    main()
