"""Fixed-topology MLP classifier with hand-written reverse mode.

Hidden layers are dense + ReLU.  The last hidden activation is the feature
vector ``f(x)``.  Two heads:

* ``standard``: ``s = W f + b``
* ``cosine``:   ``s_i = eta * <unit(w_i), unit(f)>`` with learnable ``eta``

Class probabilities are per-class sigmoids of the scores.  Everything is
float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DimensionMismatch
from .rng import Xoshiro256, hash64

EPS = 1e-12
STANDARD = "standard"
COSINE = "cosine"
ETA_INIT = 10.0


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def unit_rows(x):
    n = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    return x / (n + EPS), n


def unit_rows_backward(x, n, g):
    """Gradient through ``x / (||x|| + EPS)`` row-wise, given upstream ``g``."""
    denom = n + EPS
    dot = np.sum(x * g, axis=-1, keepdims=True)
    safe_n = np.where(n > 0, n, 1.0)
    corr = np.where(n > 0, x * dot / (safe_n * denom * denom), 0.0)
    return g / denom - corr


class ModelParams:
    """Named parameter arrays plus the architecture needed to interpret them."""

    def __init__(self, input_dim: int, hidden: tuple, head: str, arrays: dict, classes: list,
                 input_shift=None, input_scale=None):
        if head not in (STANDARD, COSINE):
            raise ValueError(f"unknown head {head!r}")
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.head = head
        self.arrays = arrays
        self.classes = list(classes)
        # fixed input standardization, not trained
        self.input_shift = np.zeros(self.input_dim) if input_shift is None else np.asarray(input_shift, float)
        self.input_scale = np.ones(self.input_dim) if input_scale is None else np.asarray(input_scale, float)

    @property
    def feature_dim(self) -> int:
        return self.hidden[-1] if self.hidden else self.input_dim

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def eta(self) -> float:
        return float(self.arrays["eta"][0])

    def copy(self) -> "ModelParams":
        return ModelParams(self.input_dim, self.hidden, self.head,
                           {k: v.copy() for k, v in self.arrays.items()}, self.classes,
                           self.input_shift.copy(), self.input_scale.copy())

    def set_input_stats(self, x):
        """Standardize inputs with the per-feature mean and std of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        self.input_shift = x.mean(axis=0)
        std = x.std(axis=0)
        self.input_scale = np.where(std > 0, std, 1.0)

    def keys(self):
        return list(self.arrays)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in self.keys()])

    def set_flat(self, vec: np.ndarray):
        i = 0
        for k in self.keys():
            a = self.arrays[k]
            a[...] = vec[i:i + a.size].reshape(a.shape)
            i += a.size

    def size(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def describe(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": list(self.hidden), "head": self.head,
                "classes": self.classes,
                "arrays": [{"name": k, "shape": list(v.shape)} for k, v in self.arrays.items()],
                "input_shift": [float(v) for v in self.input_shift],
                "input_scale": [float(v) for v in self.input_scale],
                "dtype": "<f8"}


def init_params(input_dim: int, hidden=(32,), head: str = STANDARD, seed: int = 0,
                eta: float = ETA_INIT) -> ModelParams:
    """He-normal hidden layers, zero biases, and an empty head."""
    arrays = {}
    fan_in = input_dim
    for i, width in enumerate(hidden):
        rng = Xoshiro256(hash64(seed, "init", i))
        arrays[f"W{i}"] = rng.normal(width * fan_in, np.sqrt(2.0 / fan_in)).reshape(width, fan_in)
        arrays[f"b{i}"] = np.zeros(width)
        fan_in = width
    arrays["head_W"] = np.zeros((0, fan_in))
    if head == STANDARD:
        arrays["head_b"] = np.zeros(0)
    else:
        arrays["eta"] = np.array([float(eta)])
    return ModelParams(input_dim, tuple(hidden), head, arrays, [])


def expand_head(params: ModelParams, new_classes, seed: int = 0, rows: Optional[dict] = None) -> ModelParams:
    """Append head rows for ``new_classes``; existing rows are left untouched.

    Standard rows start at zero, cosine rows at ``N(0, 1/feature_dim)`` from a
    seed derived per class.  ``rows`` may supply initial rows by class id.
    """
    new_classes = [c for c in new_classes if c not in params.classes]
    if not new_classes:
        return params
    h = params.feature_dim
    add = np.zeros((len(new_classes), h))
    for r, c in enumerate(new_classes):
        if rows is not None and c in rows:
            add[r] = rows[c][0]
        elif params.head == COSINE:
            add[r] = Xoshiro256(hash64(seed, "head", c)).normal(h, 1.0 / np.sqrt(h))
    arrays = dict(params.arrays)
    arrays["head_W"] = np.vstack([params.arrays["head_W"], add])
    if params.head == STANDARD:
        bias = np.array([rows[c][1] if rows is not None and c in rows else 0.0 for c in new_classes])
        arrays["head_b"] = np.concatenate([params.arrays["head_b"], bias])
    return ModelParams(params.input_dim, params.hidden, params.head, arrays,
                       params.classes + list(new_classes), params.input_shift, params.input_scale)


@dataclass
class ForwardTrace:
    inputs: list          # input of each hidden layer
    pre: list             # pre-activation of each hidden layer
    features: np.ndarray  # f(x)
    scores: np.ndarray
    # cosine head internals
    f_unit: Optional[np.ndarray] = None
    f_norm: Optional[np.ndarray] = None
    w_unit: Optional[np.ndarray] = None
    w_norm: Optional[np.ndarray] = None
    cos: Optional[np.ndarray] = None

    @property
    def probs(self) -> np.ndarray:
        return sigmoid(self.scores)


def forward(p: ModelParams, x) -> ForwardTrace:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.shape[1] != p.input_dim:
        raise DimensionMismatch(f"expected {p.input_dim} features, got {a.shape[1]}")
    a = (a - p.input_shift) / p.input_scale
    inputs, pre = [], []
    for i in range(len(p.hidden)):
        inputs.append(a)
        z = a @ p.arrays[f"W{i}"].T + p.arrays[f"b{i}"]
        pre.append(z)
        a = np.maximum(z, 0.0)
    W = p.arrays["head_W"]
    if p.head == STANDARD:
        return ForwardTrace(inputs, pre, a, a @ W.T + p.arrays["head_b"])
    fu, fn = unit_rows(a)
    wu, wn = unit_rows(W)
    cos = fu @ wu.T
    return ForwardTrace(inputs, pre, a, p.eta * cos, fu, fn, wu, wn, cos)


def features(p: ModelParams, x) -> np.ndarray:
    return forward(p, x).features


def predict_proba(p: ModelParams, x) -> np.ndarray:
    return forward(p, x).probs


def predict(p: ModelParams, x) -> np.ndarray:
    """Boolean ``(n, n_classes)`` matrix of classes whose probability is strictly above 0.5."""
    return predict_proba(p, x) > 0.5


def backward(p: ModelParams, trace: ForwardTrace, d_scores, d_features=None, d_cos=None) -> dict:
    """Parameter gradients given upstream gradients on scores, features and raw cosines."""
    g = {}
    W = p.arrays["head_W"]
    if p.head == STANDARD:
        g["head_W"] = d_scores.T @ trace.features
        g["head_b"] = d_scores.sum(axis=0)
        df = d_scores @ W
    else:
        g["eta"] = np.array([np.sum(d_scores * trace.cos)])
        dc = d_scores * p.eta
        if d_cos is not None:
            dc = dc + d_cos
        d_wu = dc.T @ trace.f_unit
        d_fu = dc @ trace.w_unit
        g["head_W"] = unit_rows_backward(W, trace.w_norm, d_wu)
        df = unit_rows_backward(trace.features, trace.f_norm, d_fu)
    if d_features is not None:
        df = df + d_features
    for i in reversed(range(len(p.hidden))):
        dz = df * (trace.pre[i] > 0)
        g[f"W{i}"] = dz.T @ trace.inputs[i]
        g[f"b{i}"] = dz.sum(axis=0)
        df = dz @ p.arrays[f"W{i}"]
    return {k: g[k] for k in p.keys()}


def bce_loss(scores, targets, n_observed: Optional[int] = None, weights=None):
    """Mean binary cross-entropy on logits, divided by the observed-class count.

    ``weights`` optionally scales each class column.  Returns
    ``(loss, d loss / d scores)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if scores.shape != targets.shape:
        raise DimensionMismatch(f"scores {scores.shape} vs targets {targets.shape}")
    b, c = scores.shape
    n_observed = c if n_observed is None else n_observed
    if b == 0 or n_observed == 0:
        return 0.0, np.zeros_like(scores)
    denom = n_observed * b
    per = np.logaddexp(0.0, scores) - targets * scores
    grad = (sigmoid(scores) - targets) / denom
    if weights is not None:
        per = per * weights
        grad = grad * weights
    return float(np.sum(per) / denom), grad


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------


@dataclass
class OptimizerState:
    """SGD with momentum, L2 weight decay, and divide-by-10 on plateau."""

    lr: float
    momentum: float = 0.9
    weight_decay: float = 1e-5
    patience: int = 5
    threshold: float = 1e-4
    factor: float = 10.0
    min_lr: Optional[float] = None
    velocity: dict = field(default_factory=dict)
    best: float = -np.inf
    bad_epochs: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.min_lr is None:
            self.min_lr = self.lr / 1000.0

    def step(self, params: ModelParams, grads: dict) -> ModelParams:
        for k, gk in grads.items():
            w = params.arrays[k]
            v = self.velocity.get(k)
            if v is None or v.shape != w.shape:
                v = np.zeros_like(w)
            v = self.momentum * v + gk + self.weight_decay * w
            self.velocity[k] = v
            w -= self.lr * v
        return params

    def plateau(self, metric: float) -> float:
        """Record one epoch's validation metric (higher is better); returns the lr in effect."""
        if metric > self.best + self.threshold:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr / self.factor, self.min_lr)
                self.bad_epochs = 0
        return self.lr


def sgd_step(opt: OptimizerState, params: ModelParams, grads: dict) -> ModelParams:
    return opt.step(params, grads)


# --------------------------------------------------------------------------
# checkpoints: flat little-endian float64 + JSON sidecar
# --------------------------------------------------------------------------


def save_checkpoint(params: ModelParams, path, class_names=None):
    path = Path(path)
    path.write_bytes(params.flat().astype("<f8").tobytes())
    meta = params.describe()
    if class_names is not None:
        meta["class_names"] = [class_names[c] for c in params.classes]
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=1), encoding="utf-8")


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    vec = np.frombuffer(path.read_bytes(), dtype="<f8").astype(np.float64)
    arrays, i = {}, 0
    for spec in meta["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        arrays[spec["name"]] = vec[i:i + n].reshape(shape).copy()
        i += n
    if i != vec.size:
        raise DimensionMismatch(f"checkpoint holds {vec.size} values, sidecar describes {i}")
    return ModelParams(meta["input_dim"], tuple(meta["hidden"]), meta["head"], arrays, meta["classes"],
                       meta.get("input_shift"), meta.get("input_scale"))
