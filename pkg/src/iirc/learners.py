"""Lifelong-learning baselines adapted to multi-label prediction.

All strategies share the BCE loss over observed classes and the sigmoid
> 0.5 decision rule; they differ in what data each step sees and in the
targets/extra loss terms:

=================  ==========================================================
finetune           current-task data, served labels
er                 current-task data + per-class replay buffer (random)
er_infinite        as ``er`` with an unbounded buffer
incremental_joint  all data observed so far, labels completed retroactively
joint              ``incremental_joint`` over a single task holding every class
agem               current-task data, gradient projected against a buffer batch
icarl_cnn          ``er`` + old-class soft targets from the previous model
icarl_norm         ``icarl_cnn`` with a cosine-normalized head
lucir              cosine head, feature distillation and margin ranking loss
=================  ==========================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels, metrics, nn
from .hierarchy import Hierarchy
from .rng import Xoshiro256, hash64
from .stream import CompleteView, IncompleteView, LabeledStore, TaskConfiguration


ALGORITHMS = ("finetune", "er", "er_infinite", "incremental_joint", "joint", "agem",
              "icarl_cnn", "icarl_norm", "lucir")
_COSINE = {"icarl_norm", "lucir"}
_HERDING = {"icarl_cnn", "icarl_norm", "lucir"}
_NO_BUFFER = {"finetune", "incremental_joint", "joint"}
_COMPLETE_INFO = {"incremental_joint", "joint"}
_DISTILL = {"icarl_cnn", "icarl_norm", "lucir"}


@dataclass
class LearnerConfig:
    algorithm: str = "er"
    epochs: int = 10
    batch_size: int = 128
    lr: Optional[float] = None
    buffer_per_class: Optional[int] = 20
    selection: Optional[str] = None
    agem_batch: int = 128
    lucir_margin: float = 0.5
    lucir_lambda_base: float = 5.0
    lucir_k: int = 2
    distill_weight: float = 1.0
    hidden: tuple = (32,)
    patience: int = 5
    eta_init: float = nn.ETA_INIT

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.algorithm == "er_infinite":
            self.buffer_per_class = None
        if self.algorithm in _NO_BUFFER:
            self.buffer_per_class = 0
        if self.selection is None:
            self.selection = "herding" if self.algorithm in _HERDING else "random"
        if self.selection not in ("random", "herding"):
            raise ValueError("selection must be 'random' or 'herding'")
        if self.lr is None:
            self.lr = 0.5 if self.head == nn.COSINE else 1.0
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and lr > 0 required")
        self.hidden = tuple(self.hidden)

    @property
    def head(self) -> str:
        return nn.COSINE if self.algorithm in _COSINE else nn.STANDARD

    def epochs_for(self, task: int) -> int:
        return 2 * self.epochs if task == 0 else self.epochs


class ReplayBuffer:
    """Per-class exemplars with the label set they were served with.

    A class is filled once, right after the task that introduced it, and
    never touched again.
    """

    def __init__(self, budget: Optional[int] = 20):
        self.budget = budget
        self.entries: dict[int, tuple[np.ndarray, np.ndarray, list]] = {}

    def __len__(self):
        return sum(len(ids) for ids, _, _ in self.entries.values())

    def add(self, cls: int, ids, feats, labels):
        if cls in self.entries:
            raise ValueError(f"class {cls} already buffered")
        ids = np.asarray(ids, dtype=np.int64)
        if self.budget is not None and len(ids) > self.budget:
            raise ValueError("buffer budget exceeded")
        self.entries[cls] = (ids, np.asarray(feats, dtype=np.float64), [frozenset(s) for s in labels])

    def arrays(self, n_classes: int):
        """``(features, label matrix over all classes, sample ids)``; empty arrays when the buffer is."""
        if not self.entries:
            return None
        ids = np.concatenate([e[0] for e in self.entries.values()])
        feats = np.concatenate([e[1] for e in self.entries.values()])
        labels = np.zeros((len(ids), n_classes), dtype=np.bool_)
        i = 0
        for _, _, sets in self.entries.values():
            for s in sets:
                labels[i, list(s)] = True
                i += 1
        return feats, labels, ids


@dataclass
class LearnerState:
    params: nn.ModelParams
    buffer: ReplayBuffer
    snapshot: Optional[nn.ModelParams] = None
    optimizer: Optional[nn.OptimizerState] = None
    introduced: dict = field(default_factory=dict)   # class -> task index
    task: int = -1

    @property
    def observed(self) -> list:
        return list(self.params.classes)


def agem_project(g: np.ndarray, g_ref: np.ndarray) -> np.ndarray:
    """A-GEM: drop the component of ``g`` that opposes ``g_ref``."""
    dot = float(g @ g_ref)
    if dot >= 0:
        return g
    ref_sq = float(g_ref @ g_ref)
    if ref_sq == 0.0:
        return g
    return g - (dot / ref_sq) * g_ref


def margin_ranking(cos_true: np.ndarray, cos_neg: np.ndarray, margin: float, k: int):
    """Sum over the ``k`` hardest negatives of ``max(0, margin - cos_true + cos_neg)``.

    ``cos_true`` is ``(n,)``, ``cos_neg`` is ``(n, m)``.  Returns per-row loss
    and the column indices of the chosen negatives.
    """
    k = min(k, cos_neg.shape[1])
    # stable descending order keeps ties deterministic
    top = np.argsort(-cos_neg, axis=1, kind="stable")[:, :k]
    chosen = np.take_along_axis(cos_neg, top, axis=1)
    hinge = np.maximum(0.0, margin - cos_true[:, None] + chosen)
    return hinge.sum(axis=1), top, hinge > 0


def make_targets(algorithm: str, labels: np.ndarray, state: LearnerState, new_cols: np.ndarray,
                 x: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-class targets in head-column order.

    ``labels`` is the boolean label matrix already restricted to head
    columns (served labels, or completed labels for the joint variants).
    iCaRL variants replace old-class columns with the previous model's
    sigmoid outputs on ``x``.
    """
    t = labels.astype(np.float64)
    if algorithm in ("icarl_cnn", "icarl_norm") and state.snapshot is not None:
        n_old = state.snapshot.n_classes
        t[:, :n_old] = nn.predict_proba(state.snapshot, x)
    return t


class Learner:
    """One baseline run: owns the model, optimizer, buffer and snapshot."""

    def __init__(self, cfg: LearnerConfig, hierarchy: Hierarchy, input_dim: int, seed: int,
                 warm: Optional[nn.ModelParams] = None, warm_names=None):
        self.cfg = cfg
        self.h = hierarchy
        self.seed = seed
        params = nn.init_params(input_dim, cfg.hidden, cfg.head, hash64(seed, "model"), cfg.eta_init)
        self._warm_rows = None
        if warm is not None:
            params, self._warm_rows = self._apply_warm(params, warm, warm_names)
        self.state = LearnerState(params, ReplayBuffer(cfg.buffer_per_class))

    def _apply_warm(self, params, warm, warm_names):
        if warm.head != params.head or warm.hidden != params.hidden or warm.input_dim != params.input_dim:
            raise ValueError("checkpoint architecture does not match the learner")
        for k, v in warm.arrays.items():
            if k not in ("head_W", "head_b"):
                params.arrays[k] = v.copy()
        params.input_shift, params.input_scale = warm.input_shift.copy(), warm.input_scale.copy()
        names = warm_names or [self.h.name(c) for c in warm.classes]
        rows = {}
        for r, name in enumerate(names):
            if name in self.h.names:
                b = warm.arrays["head_b"][r] if "head_b" in warm.arrays else 0.0
                rows[self.h.index(name)] = (warm.arrays["head_W"][r].copy(), b)
        return params, rows

    # -- per-task data ----------------------------------------------------

    def _head_cols(self, global_labels: np.ndarray) -> np.ndarray:
        return global_labels[:, self.state.params.classes]

    def _task_data(self, store: LabeledStore, config: TaskConfiguration, t: int):
        if self.cfg.algorithm in _COMPLETE_INFO:
            x, lab, ids = CompleteView(store, config, t).arrays()
            return x, lab, ids
        view = IncompleteView(store, config, t)
        lab = np.zeros((len(view), len(self.h)), dtype=np.bool_)
        lab[np.arange(len(view)), view.labels] = True
        return view.features, lab, view.sample_ids

    def _val_score(self, store: LabeledStore, config: TaskConfiguration, t: int) -> float:
        if store is None or len(store) == 0:
            return float("nan")
        params = self.state.params
        task_cols = [params.classes.index(c) for c in config.tasks[t]]
        if self.cfg.algorithm in _COMPLETE_INFO:
            x, lab, _ = CompleteView(store, config, t).arrays(task=t)
            if len(x) == 0:
                return float("nan")
            return metrics.pw_js(self._head_cols(lab), nn.predict(params, x))
        view = IncompleteView(store, config, t)
        if len(view) == 0:
            return float("nan")
        truth = np.zeros((len(view), len(task_cols)), dtype=np.bool_)
        col = {c: j for j, c in enumerate(config.tasks[t])}
        truth[np.arange(len(view)), [col[c] for c in view.labels]] = True
        pred = nn.predict(params, view.features)[:, task_cols]
        return metrics.pw_js(truth, pred)

    # -- training ---------------------------------------------------------

    def begin_task(self, t: int, classes):
        st = self.state
        if self.cfg.algorithm in _DISTILL and t > 0:
            st.snapshot = st.params.copy()
        new = [c for c in classes if c not in st.introduced]
        for c in new:
            st.introduced[c] = t
        st.params = nn.expand_head(st.params, new, hash64(self.seed, "head-init"), self._warm_rows)
        st.optimizer = nn.OptimizerState(self.cfg.lr, patience=self.cfg.patience)
        st.task = t

    def train_task(self, t: int, train: LabeledStore, val: Optional[LabeledStore],
                   config: TaskConfiguration) -> dict:
        cfg, st = self.cfg, self.state
        if st.task < 0 and self._warm_rows is None:
            st.params.set_input_stats(train.pool.features)
        self.begin_task(t, config.tasks[t])
        x_task, lab_task, ids_task = self._task_data(train, config, t)
        x, lab = x_task, lab_task
        from_buffer = np.zeros(len(x), dtype=np.bool_)
        mem = st.buffer.arrays(len(self.h))
        if mem is not None and cfg.algorithm not in ("agem",) and cfg.algorithm not in _NO_BUFFER:
            x = np.concatenate([x, mem[0]])
            lab = np.concatenate([lab, mem[1]])
            from_buffer = np.concatenate([from_buffer, np.ones(len(mem[0]), dtype=np.bool_)])
        lab = self._head_cols(lab)
        mem_head = None if mem is None else (mem[0], self._head_cols(mem[1]))
        new_cols = np.array([st.params.classes.index(c) for c in config.tasks[t]], dtype=np.int64)
        agem_rng = Xoshiro256(hash64(self.seed, "agem", t))

        lr_trace, val_trace, loss_trace = [], [], []
        for epoch in range(cfg.epochs_for(t)):
            order = Xoshiro256(hash64(self.seed, "batches", t, epoch)).permutation(len(x))
            total = 0.0
            for start in range(0, len(x), cfg.batch_size):
                b = order[start:start + cfg.batch_size]
                loss, grads = self.loss_and_grads(x[b], lab[b], from_buffer[b], new_cols)
                if cfg.algorithm == "agem" and mem_head is not None:
                    grads = self._agem(grads, mem_head, agem_rng)
                st.optimizer.step(st.params, grads)
                total += loss * len(b)
            loss_trace.append(total / max(len(x), 1))
            score = self._val_score(val, config, t)
            val_trace.append(score)
            lr_trace.append(st.optimizer.plateau(score if not math.isnan(score) else -np.inf))
        self.add_to_buffer(t, train, config)
        return {"lr_trace": lr_trace, "val_trace": val_trace, "loss_trace": loss_trace,
                "train_size": int(len(x))}

    def loss_and_grads(self, x, lab, from_buffer, new_cols):
        """Total loss and parameter gradients for one batch under the configured strategy."""
        cfg, st = self.cfg, self.state
        params = st.params
        trace = nn.forward(params, x)
        targets = make_targets(cfg.algorithm, lab, st, new_cols, x)
        weights = None
        if cfg.algorithm in ("icarl_cnn", "icarl_norm") and st.snapshot is not None \
                and cfg.distill_weight != 1.0:
            weights = np.ones(params.n_classes)
            weights[:st.snapshot.n_classes] = cfg.distill_weight
        loss, d_scores = nn.bce_loss(trace.scores, targets, params.n_classes, weights)
        d_feat = d_cos = None
        if cfg.algorithm == "lucir" and st.snapshot is not None:
            extra, d_feat, d_cos = lucir_terms(trace, nn.forward(st.snapshot, x).features, lab,
                                               from_buffer, new_cols, st.snapshot.n_classes, cfg)
            loss += extra
        return loss, nn.backward(params, trace, d_scores, d_feat, d_cos)

    def _agem(self, grads, mem, rng):
        feats, lab = mem
        n = min(self.cfg.agem_batch, len(feats))
        pick = np.sort(rng.choice(len(feats), n))
        trace = nn.forward(self.state.params, feats[pick])
        _, d_ref = nn.bce_loss(trace.scores, lab[pick].astype(np.float64), self.state.params.n_classes)
        g_ref = nn.backward(self.state.params, trace, d_ref)
        keys = self.state.params.keys()
        g = np.concatenate([grads[k].ravel() for k in keys])
        r = np.concatenate([g_ref[k].ravel() for k in keys])
        applied = agem_project(g, r)
        out, i = {}, 0
        for k in keys:
            a = grads[k]
            out[k] = applied[i:i + a.size].reshape(a.shape)
            i += a.size
        return out

    # -- buffer -----------------------------------------------------------

    def add_to_buffer(self, t: int, store: LabeledStore, config: TaskConfiguration):
        budget = self.cfg.buffer_per_class
        if budget == 0 or self.cfg.algorithm in _COMPLETE_INFO:
            return
        view = IncompleteView(store, config, t)
        feats_all = view.features
        for c in config.tasks[t]:
            rows = np.flatnonzero(view.labels == c)
            if budget is None or len(rows) <= budget:
                pick = rows
            elif self.cfg.selection == "herding":
                emb = nn.features(self.state.params, feats_all[rows])
                pick = rows[_kernels.herding(emb, budget)]
            else:
                pick = rows[Xoshiro256(hash64(self.seed, "buffer", c)).choice(len(rows), budget)]
            self.state.buffer.add(c, view.sample_ids[pick], feats_all[pick],
                                  [frozenset((c,))] * len(pick))

    # -- evaluation -------------------------------------------------------

    def predict_global(self, x) -> np.ndarray:
        p = self.state.params
        pred = np.zeros((len(x), len(self.h)), dtype=np.bool_)
        if len(x) and p.n_classes:
            pred[:, p.classes] = nn.predict(p, x)
        return pred

    def evaluate(self, store: LabeledStore, config: TaskConfiguration, j: int,
                 matrix: Optional[metrics.EvalMatrix] = None) -> dict:
        """Complete-information evaluation after task ``j``; fills row ``j`` of ``matrix``."""
        view = CompleteView(store, config, j)
        x, truth, ids = view.arrays()
        pred = self.predict_global(x)
        row_of = {int(s): i for i, s in enumerate(ids)}
        if matrix is not None:
            for k in range(j + 1):
                _, tk, idk = view.arrays(task=k)
                if len(idk) == 0:
                    continue
                sel = np.array([row_of[int(s)] for s in idk], dtype=np.int64)
                matrix.update(j, k, tk, pred[sel])
        sc = metrics.scores(truth, pred) if len(x) else {"MR": float("nan"), "JS": float("nan"),
                                                          "pwJS": float("nan")}
        if matrix is not None:
            matrix.avg[j] = sc["pwJS"]
        return {"scores": sc, "ids": ids, "truth": truth, "pred": pred, "observed": view.observed}


def lucir_terms(trace: nn.ForwardTrace, f_old: np.ndarray, lab: np.ndarray, from_buffer: np.ndarray,
                new_cols: np.ndarray, n_old: int, cfg: LearnerConfig):
    """Less-forget feature distillation plus margin ranking on buffer samples.

    Returns ``(loss, d loss / d features, d loss / d raw cosines)``.
    """
    b = trace.features.shape[0]
    n_new = len(new_cols)
    lam = cfg.lucir_lambda_base * math.sqrt(n_new / n_old) if n_old else 0.0
    # distillation: lam * mean(1 - cos(f_new, f_old))
    fu, fn = trace.f_unit, trace.f_norm
    ou, on = nn.unit_rows(f_old)
    cos_fo = np.sum(fu * ou, axis=1)
    # two all-zero feature rows are identical, not orthogonal
    cos_fo = np.where((fn == 0) & (on == 0), 1.0, cos_fo)
    loss = lam * float(np.mean(1.0 - cos_fo))
    d_feat = nn.unit_rows_backward(trace.features, fn, -(lam / b) * ou)
    d_cos = np.zeros_like(trace.cos)
    rows = np.flatnonzero(from_buffer)
    if len(rows) and n_new:
        old_lab = lab[rows][:, :n_old]
        r_idx, y_idx = np.nonzero(old_lab)
        if len(r_idx):
            sample_rows = rows[r_idx]
            cos_true = trace.cos[sample_rows, y_idx]
            cos_neg = trace.cos[np.ix_(sample_rows, new_cols)]
            per, top, active = margin_ranking(cos_true, cos_neg, cfg.lucir_margin, cfg.lucir_k)
            nb = len(rows)
            loss += float(per.sum()) / nb
            for j in range(top.shape[1]):
                on = active[:, j]
                np.add.at(d_cos, (sample_rows[on], y_idx[on]), -1.0 / nb)
                np.add.at(d_cos, (sample_rows[on], new_cols[top[on, j]]), 1.0 / nb)
    return loss, d_feat, d_cos


def train_task(learner: Learner, t: int, train: LabeledStore, val: Optional[LabeledStore],
               config: TaskConfiguration) -> dict:
    return learner.train_task(t, train, val, config)


def evaluate(learner: Learner, store: LabeledStore, config: TaskConfiguration, j: int,
             matrix: Optional[metrics.EvalMatrix] = None) -> dict:
    return learner.evaluate(store, config, j, matrix)
