"""Class-weighted linear SVM and a single dense layer trained with Adam.

Both classifiers standardize features with statistics from their own
training data and keep those statistics, so a model is applied to raw
feature rows.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Hashable, Sequence

import numba
import numpy as np

from .errors import TrainingError, ValidationError

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    adam: AdamConfig = field(default_factory=AdamConfig)
    svm_epochs: int = 1000
    svm_tol: float = 1e-6
    penalty_c: float = 1.0
    class_weighting: bool = True
    seed: int = 42

    def __post_init__(self):
        for name in ("epochs", "batch_size", "svm_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not (self.penalty_c > 0 and self.svm_tol > 0 and self.adam.lr > 0):
            raise ValueError("penalty_c, svm_tol and adam.lr must be positive")


def compute_class_weights(
    labels: Sequence[Hashable], classes: Sequence[Hashable] | None = None
) -> dict:
    """w_m = N / (k * n_m) for each of the k classes.

    ``classes`` fixes the class set; a listed class with no observation
    raises :class:`TrainingError`.
    """
    counts = Counter(labels)
    classes = sorted(counts) if classes is None else list(classes)
    empty = [c for c in classes if counts.get(c, 0) == 0]
    if empty:
        raise TrainingError(f"class(es) {empty} have no observations")
    n = sum(counts[c] for c in classes)
    k = len(classes)
    return {c: n / (k * counts[c]) for c in classes}


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale < 1e-12] = 1.0
        return cls(mean, scale)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale


# ------------------------------------------------------------------ SVM


@numba.njit(cache=True)
def _dual_cd(x, y, upper, max_epochs, tol, seed):
    """Dual coordinate descent for the hinge-loss SVM with box [0, upper_i].

    ``x`` carries a trailing constant column, so the last weight is the bias.
    Returns (w, epochs_run, converged).
    """
    np.random.seed(seed)
    n, d = x.shape
    w = np.zeros(d)
    alpha = np.zeros(n)
    qii = np.empty(n)
    for i in range(n):
        qii[i] = x[i] @ x[i]
    for ep in range(max_epochs):
        worst = 0.0
        for i in np.random.permutation(n):
            g = y[i] * (w @ x[i]) - 1.0
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= upper[i]:
                pg = max(g, 0.0)
            else:
                pg = g
            if abs(pg) > worst:
                worst = abs(pg)
            if pg != 0.0:
                old = alpha[i]
                alpha[i] = min(max(old - g / qii[i], 0.0), upper[i])
                step = (alpha[i] - old) * y[i]
                for k in range(d):
                    w[k] += step * x[i, k]
        if worst < tol:
            return w, ep + 1, True
    return w, max_epochs, False


@dataclass
class SvmModel:
    classes: list
    mode: str
    weights: np.ndarray  # (n_outputs, dim), standardized feature space
    biases: np.ndarray
    class_weights: dict
    scaler: Standardizer
    config: dict
    seed: int
    converged: bool = True

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = _check_dim(x, self.dim)
        return self.scaler.transform(x) @ self.weights.T + self.biases


def _binary_svm(z, y_pm, sample_w, cfg: TrainConfig, seed: int):
    upper = cfg.penalty_c * sample_w
    xa = np.hstack([z, np.ones((len(z), 1))])
    w, _, ok = _dual_cd(xa, y_pm.astype(np.float64), upper, cfg.svm_epochs, cfg.svm_tol, seed)
    return w[:-1], w[-1], ok


def _sample_weights(labels, weighting: bool, weights_override=None):
    if not weighting:
        return np.ones(len(labels)), {c: 1.0 for c in set(labels.tolist())}
    cw = weights_override or compute_class_weights(labels.tolist())
    sw = np.array([cw[v] for v in labels.tolist()], dtype=np.float64)
    # only relative weights matter: scaling every class weight leaves the model unchanged
    return sw * (len(sw) / sw.sum()), cw


def train_svm(
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    mode: str = "single_label",
    class_weights: dict | None = None,
) -> SvmModel:
    """One-vs-rest linear SVM, hinge loss, C = ``cfg.penalty_c``.

    Each sample's loss is scaled by the weight of its true class.
    Multi-label ``y`` is an indicator matrix and every label gets its own
    binary SVM with its own positive/negative balancing.
    """
    x = np.asarray(x, dtype=np.float64)
    scaler = Standardizer.fit(x)
    z = scaler.transform(x)
    seed = int(cfg.seed) % (2**32)
    weights, biases, all_ok = [], [], True
    if mode == "single_label":
        y = np.asarray(y)
        classes = sorted(set(y.tolist()))
        if len(classes) < 2:
            raise TrainingError("SVM training needs at least two classes")
        sw, cw = _sample_weights(y, cfg.class_weighting, class_weights)
        for c in classes:
            w, b, ok = _binary_svm(z, np.where(y == c, 1, -1), sw, cfg, seed)
            weights.append(w)
            biases.append(b)
            all_ok &= ok
        n_out = len(classes)
    elif mode == "multi_label":
        y = np.asarray(y)
        n_out = y.shape[1]
        classes = list(range(n_out))
        cw = {}
        for j in range(n_out):
            col = y[:, j]
            if col.min() == col.max():
                # label constant in training data: constant decision
                weights.append(np.zeros(z.shape[1]))
                biases.append(1.0 if col[0] == 1 else -1.0)
                continue
            sw, cwj = _sample_weights(col, cfg.class_weighting)
            cw[j] = cwj
            w, b, ok = _binary_svm(z, np.where(col == 1, 1, -1), sw, cfg, seed)
            weights.append(w)
            biases.append(b)
            all_ok &= ok
    else:
        raise ValueError(f"unknown mode {mode!r}")
    config = {
        "penalty_c": cfg.penalty_c,
        "kernel": "linear",
        # recorded for fidelity only; a linear kernel has no gamma
        "gamma": 1.0 / n_out,
        "class_weighting": cfg.class_weighting,
        "svm_epochs": cfg.svm_epochs,
        "svm_tol": cfg.svm_tol,
    }
    return SvmModel(
        classes=classes,
        mode=mode,
        weights=np.array(weights),
        biases=np.array(biases, dtype=np.float64),
        class_weights=cw,
        scaler=scaler,
        config=config,
        seed=cfg.seed,
        converged=bool(all_ok),
    )


# ------------------------------------------------------------------ NN


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


def categorical_crossentropy(y: np.ndarray, p: np.ndarray) -> float:
    """-sum_i sum_j y_ij log p_ij, summed over samples."""
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    mask = y != 0
    return float(-(y[mask] * np.log(p[mask])).sum())


def binary_crossentropy(y: np.ndarray, p: np.ndarray) -> float:
    """Mean over samples of -sum_l [y log p + (1 - y) log(1 - p)]."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    pos = y != 0
    neg = y != 1
    total = (y[pos] * np.log(p[pos])).sum() + ((1 - y[neg]) * np.log1p(-p[neg])).sum()
    return float(-total / y.shape[0])


def loss_and_grad(w: np.ndarray, b: np.ndarray, x: np.ndarray, y: np.ndarray, mode: str):
    """Loss of the dense layer and its gradients with respect to w and b.

    ``y`` is one-hot for ``softmax_categorical`` and an indicator matrix for
    ``sigmoid_binary``.
    """
    z = x @ w + b
    if mode == "softmax_categorical":
        logp = z - z.max(axis=1, keepdims=True)
        logp -= np.log(np.exp(logp).sum(axis=1, keepdims=True))
        loss = -(y * logp).sum()
        dz = np.exp(logp) - y
    elif mode == "sigmoid_binary":
        n = len(x)
        loss = (y * np.logaddexp(0.0, -z) + (1 - y) * np.logaddexp(0.0, z)).sum() / n
        dz = (sigmoid(z) - y) / n
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return float(loss), x.T @ dz, dz.sum(axis=0)


@dataclass
class AdamState:
    m_w: np.ndarray
    v_w: np.ndarray
    m_b: np.ndarray
    v_b: np.ndarray
    t: int = 0


@dataclass
class NnModel:
    classes: list
    mode: str  # softmax_categorical | sigmoid_binary
    weights: np.ndarray  # (dim, n_outputs)
    biases: np.ndarray
    scaler: Standardizer
    adam: AdamState
    config: dict
    seed: int
    history: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = _check_dim(x, self.dim)
        z = self.scaler.transform(x) @ self.weights + self.biases
        return softmax(z) if self.mode == "softmax_categorical" else sigmoid(z)


def train_nn(
    x: np.ndarray,
    y: np.ndarray,
    mode: str,
    cfg: TrainConfig = TrainConfig(),
    n_classes: int | None = None,
) -> NnModel:
    """Dense layer + softmax (categorical loss) or sigmoid (binary loss), Adam.

    Single-label ``y`` holds class indices 0..k-1 and is one-hot encoded
    here (k defaults to ``max(y) + 1``); multi-label ``y`` is an indicator
    matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    scaler = Standardizer.fit(x)
    z = scaler.transform(x)
    if mode == "softmax_categorical":
        y = np.asarray(y)
        classes = list(range(n_classes or int(y.max()) + 1))
        target = np.eye(len(classes))[y]
    elif mode == "sigmoid_binary":
        target = np.asarray(y, dtype=np.float64)
        classes = list(range(target.shape[1]))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    n, d = z.shape
    k = target.shape[1]
    rng = np.random.default_rng(cfg.seed)
    limit = np.sqrt(6.0 / (d + k))
    w = rng.uniform(-limit, limit, size=(d, k))
    b = np.zeros(k)
    st = AdamState(np.zeros_like(w), np.zeros_like(w), np.zeros_like(b), np.zeros_like(b))
    a = cfg.adam
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, gw, gb = loss_and_grad(w, b, z[idx], target[idx], mode)
            total += loss if mode == "softmax_categorical" else loss * len(idx)
            st.t += 1
            for p, g, m, v in ((w, gw, st.m_w, st.v_w), (b, gb, st.m_b, st.v_b)):
                m *= a.beta1
                m += (1 - a.beta1) * g
                v *= a.beta2
                v += (1 - a.beta2) * g * g
                mhat = m / (1 - a.beta1**st.t)
                vhat = v / (1 - a.beta2**st.t)
                p -= a.lr * mhat / (np.sqrt(vhat) + a.eps)
        if not np.isfinite(total) or not np.isfinite(w).all():
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        history.append(total / n)
    config = {
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "adam": asdict(cfg.adam),
    }
    return NnModel(classes, mode, w, b, scaler, st, config, cfg.seed, history)


# ------------------------------------------------------------------ predict


def _check_dim(x, dim) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != dim:
        raise ValidationError(f"model expects {dim} features, got {x.shape[1]}")
    return x


def argmax_lowest(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest column."""
    return np.argmax(scores, axis=1)


def predict(model, x: np.ndarray) -> np.ndarray:
    """Class indices (single-label) or a 0/1 indicator matrix (multi-label)."""
    if isinstance(model, SvmModel):
        scores = model.decision_function(x)
        if model.mode == "multi_label":
            return (scores >= 0.0).astype(np.int64)
        return np.asarray(model.classes)[argmax_lowest(scores)]
    probs = model.predict_proba(x)
    if model.mode == "sigmoid_binary":
        return (probs >= 0.5).astype(np.int64)
    return argmax_lowest(probs)


# ------------------------------------------------------------------ persistence


def _scaler_dict(s: Standardizer) -> dict:
    return {"mean": s.mean.tolist(), "scale": s.scale.tolist()}


def model_to_dict(model) -> dict:
    if isinstance(model, SvmModel):
        return {
            "format": "buddhaface-model",
            "version": MODEL_FORMAT_VERSION,
            "kind": "svm",
            "classes": model.classes,
            "mode": model.mode,
            "weights": model.weights.tolist(),
            "biases": model.biases.tolist(),
            "class_weights": [[k, v] for k, v in model.class_weights.items()],
            "standardization": _scaler_dict(model.scaler),
            "config": model.config,
            "seed": model.seed,
            "converged": model.converged,
        }
    return {
        "format": "buddhaface-model",
        "version": MODEL_FORMAT_VERSION,
        "kind": "nn",
        "classes": model.classes,
        "mode": model.mode,
        "weights": model.weights.tolist(),
        "biases": model.biases.tolist(),
        "standardization": _scaler_dict(model.scaler),
        "adam": {
            "t": model.adam.t,
            "m_w": model.adam.m_w.tolist(),
            "v_w": model.adam.v_w.tolist(),
            "m_b": model.adam.m_b.tolist(),
            "v_b": model.adam.v_b.tolist(),
        },
        "config": model.config,
        "seed": model.seed,
        "history": model.history,
    }


def model_from_dict(d: dict):
    if d.get("format") != "buddhaface-model" or d.get("version") != MODEL_FORMAT_VERSION:
        raise ValidationError("not a supported model file")
    scaler = Standardizer(
        np.array(d["standardization"]["mean"]), np.array(d["standardization"]["scale"])
    )
    if d["kind"] == "svm":
        return SvmModel(
            classes=d["classes"],
            mode=d["mode"],
            weights=np.array(d["weights"]),
            biases=np.array(d["biases"]),
            class_weights={
                (tuple(k) if isinstance(k, list) else k): v for k, v in d["class_weights"]
            },
            scaler=scaler,
            config=d["config"],
            seed=d["seed"],
            converged=d["converged"],
        )
    ad = d["adam"]
    adam = AdamState(
        np.array(ad["m_w"]), np.array(ad["v_w"]), np.array(ad["m_b"]), np.array(ad["v_b"]), ad["t"]
    )
    return NnModel(
        classes=d["classes"],
        mode=d["mode"],
        weights=np.array(d["weights"]),
        biases=np.array(d["biases"]),
        scaler=scaler,
        adam=adam,
        config=d["config"],
        seed=d["seed"],
        history=d["history"],
    )


def save_model(model, path: str | Path):
    Path(path).write_text(json.dumps(model_to_dict(model)) + "\n", encoding="utf-8")


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
