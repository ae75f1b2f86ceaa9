"""Multi-label scores over boolean label matrices.

Rows are samples, columns are classes.  ``truth`` rows must be non-empty;
``pred`` rows may be empty, which scores 0 for JS and pw-JS.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import EmptyBatch, ParseError


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: int
    truth: frozenset
    predicted: frozenset


def records_to_arrays(records: Sequence[PredictionRecord], classes=None):
    """Boolean ``(truth, pred)`` matrices and the column order used."""
    if classes is None:
        seen = set()
        for r in records:
            seen |= set(r.truth) | set(r.predicted)
        classes = sorted(seen, key=lambda c: (isinstance(c, str), c))
    col = {c: j for j, c in enumerate(classes)}
    truth = np.zeros((len(records), len(classes)), dtype=np.bool_)
    pred = np.zeros_like(truth)
    for i, r in enumerate(records):
        truth[i, [col[c] for c in r.truth]] = True
        pred[i, [col[c] for c in r.predicted]] = True
    return truth, pred, list(classes)


def _counts(truth, pred):
    truth = np.asarray(truth, dtype=np.bool_)
    pred = np.asarray(pred, dtype=np.bool_)
    if truth.shape != pred.shape or truth.ndim != 2:
        raise ValueError(f"label matrices disagree: {truth.shape} vs {pred.shape}")
    if truth.shape[0] == 0:
        raise EmptyBatch("no samples to score")
    return _kernels.set_counts(truth, pred)


def per_sample(truth, pred):
    """Per-sample ``(exact match, JS, pw-JS)`` arrays."""
    inter, union, npred = _counts(truth, pred)
    ntrue = union - npred + inter
    inter_f = inter.astype(np.float64)
    js = np.divide(inter_f, union, out=np.zeros_like(inter_f), where=union > 0)
    prec = np.divide(inter_f, npred, out=np.zeros_like(inter_f), where=npred > 0)
    mr = ((inter == ntrue) & (inter == npred)).astype(np.float64)
    return mr, js, js * prec


def exact_match(truth, pred) -> float:
    return float(np.mean(per_sample(truth, pred)[0]))


def jaccard(truth, pred) -> float:
    return float(np.mean(per_sample(truth, pred)[1]))


def pw_js(truth, pred) -> float:
    """Precision-weighted Jaccard: mean of ``|Y & P| / |Y or P| * |Y & P| / |P|``."""
    return float(np.mean(per_sample(truth, pred)[2]))


def scores(truth, pred) -> dict:
    mr, js, pw = per_sample(truth, pred)
    return {"MR": float(np.mean(mr)), "JS": float(np.mean(js)), "pwJS": float(np.mean(pw))}


class EvalMatrix:
    """Lower-triangular ``R[j, k]``: pw-JS on task ``k`` data after training through task ``j``."""

    def __init__(self, n_tasks: int):
        self.R = np.full((n_tasks, n_tasks), np.nan)
        self.n = np.zeros((n_tasks, n_tasks), dtype=np.int64)
        self.avg = np.full(n_tasks, np.nan)

    def update(self, j: int, k: int, truth, pred) -> "EvalMatrix":
        if k > j:
            raise IndexError(f"R[{j}, {k}] is undefined for k > j")
        self.R[j, k] = pw_js(truth, pred)
        self.n[j, k] = len(truth)
        return self

    def row(self, j: int) -> list:
        return [float(v) for v in self.R[j, :j + 1]]

    def to_csv(self, path):
        t = self.R.shape[0]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["after_task"] + [f"task_{k}" for k in range(t)] + ["R_j"])
            for j in range(t):
                cells = ["" if math.isnan(v) else repr(float(v)) for v in self.R[j]]
                avg = "" if math.isnan(self.avg[j]) else repr(float(self.avg[j]))
                w.writerow([j] + cells + [avg])


def update_eval_matrix(m: EvalMatrix, j: int, k: int, truth, pred) -> EvalMatrix:
    return m.update(j, k, truth, pred)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    denom: np.ndarray

    def normalized(self) -> np.ndarray:
        d = self.denom.astype(np.float64)[:, None]
        return np.divide(self.counts, d, out=np.zeros(self.counts.shape), where=d > 0)

    def to_csv(self, path, names: Sequence[str], normalized: bool = True):
        data = self.normalized() if normalized else self.counts
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["truth\\pred"] + list(names))
            for name, row in zip(names, data):
                w.writerow([name] + [repr(float(v)) if normalized else int(v) for v in row])


def confusion(truth, pred, order: Sequence[int] | None = None) -> ConfusionMatrix:
    """``M[y, p]`` counts samples with ``y`` in the truth and ``p`` predicted.

    ``order`` selects and orders the columns considered (e.g. introduction order).
    """
    truth = np.asarray(truth, dtype=np.bool_)
    pred = np.asarray(pred, dtype=np.bool_)
    if order is not None:
        idx = np.asarray(order, dtype=np.int64)
        truth, pred = truth[:, idx], pred[:, idx]
    return ConfusionMatrix(_kernels.confusion_counts(truth, pred), truth.sum(axis=0).astype(np.int64))


# --------------------------------------------------------------------------
# predictions CSV: sample_id,truth;truth,pred;pred
# --------------------------------------------------------------------------


def write_predictions(path, ids, truth, pred, names: Sequence[str]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "truth", "pred"])
        for sid, t, p in zip(ids, truth, pred):
            w.writerow([int(sid), ";".join(names[j] for j in np.flatnonzero(t)),
                        ";".join(names[j] for j in np.flatnonzero(p))])


def _label_set(cell):
    return frozenset(x for x in cell.split(";") if x)


def read_predictions(path) -> list[PredictionRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sample_id", "truth", "pred"]:
            raise ParseError("header must be sample_id,truth,pred", line=1)
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError("expected 3 columns", line=lineno)
            try:
                sid = int(row[0])
            except ValueError:
                raise ParseError(f"bad sample id {row[0]!r}", line=lineno) from None
            out.append(PredictionRecord(sid, _label_set(row[1]), _label_set(row[2])))
    return out


def score_records(records: Iterable[PredictionRecord]) -> dict:
    records = list(records)
    if not records:
        raise EmptyBatch("no records")
    truth, pred, _ = records_to_arrays(records)
    return scores(truth, pred)
