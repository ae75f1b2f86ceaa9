"""Raw single-label datasets: seeded hierarchical Gaussian clusters or CSV files."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, DuplicateId, InvalidSpec, ParseError, UnknownLabel
from .hierarchy import Hierarchy
from .rng import Xoshiro256, hash64


class RawSample(NamedTuple):
    sample_id: int
    features: np.ndarray
    subclass: int


class RawDataset:
    """Columnar store of single-label samples; behaves like a list of :class:`RawSample`."""

    def __init__(self, hierarchy: Hierarchy, ids, features, labels):
        self.hierarchy = hierarchy
        self.ids = np.asarray(ids, dtype=np.int64)
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.ids) != len(self.features) or len(self.ids) != len(self.labels):
            raise DimensionMismatch("ids, features and labels disagree in length")
        if len(np.unique(self.ids)) != len(self.ids):
            raise DuplicateId("sample ids are not unique")

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, i):
        return RawSample(int(self.ids[i]), self.features[i], int(self.labels[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def by_class(self) -> dict[int, np.ndarray]:
        """Row positions of each leaf class, in row order."""
        out = {}
        for c in self.hierarchy.leaves:
            out[c] = np.flatnonzero(self.labels == c)
        return out

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "label"] + [f"f{j}" for j in range(self.dim)])
            names = self.hierarchy.names
            for sid, lab, row in zip(self.ids, self.labels, self.features):
                w.writerow([int(sid), names[lab]] + [repr(float(v)) for v in row])


@dataclass(frozen=True)
class SynthSpec:
    hierarchy: Hierarchy
    dim: int = 16
    samples_per_subclass: int = 500
    superclass_center_scale: float = 10.0
    subclass_offset_scale: float = 3.0
    noise_scale: float = 1.0
    seed: int = 0
    # pools drawn with the same seed share cluster centers; the pool index
    # selects an independent sample stream (0 = train, 1 = test)
    pool: int = 0
    id_offset: int = 0

    def validate(self):
        if self.dim < 2:
            raise InvalidSpec("dim must be >= 2")
        if self.samples_per_subclass < 1:
            raise InvalidSpec("samples_per_subclass must be >= 1")
        if not (self.superclass_center_scale > self.subclass_offset_scale > self.noise_scale > 0):
            raise InvalidSpec("scales must satisfy superclass > subclass > noise > 0")
        if not self.hierarchy.leaves:
            raise InvalidSpec("hierarchy has no sample-owning classes")


def class_centers(spec: SynthSpec) -> np.ndarray:
    """Cluster center of every class, shape ``(C, d)``.

    Draw order: superclass centers in index order, then leaf centers in index
    order (parented: parent center plus offset; standalone: fresh draw).
    """
    h, d = spec.hierarchy, spec.dim
    rng = Xoshiro256(hash64(spec.seed, "synth-centers"))
    centers = np.zeros((len(h), d))
    for s in h.superclasses:
        centers[s] = rng.normal(d, spec.superclass_center_scale)
    for c in h.leaves:
        p = h.parent(c)
        if p is None:
            centers[c] = rng.normal(d, spec.superclass_center_scale)
        else:
            centers[c] = centers[p] + rng.normal(d, spec.subclass_offset_scale)
    return centers


def generate_synthetic(spec: SynthSpec) -> RawDataset:
    spec.validate()
    h, d, n = spec.hierarchy, spec.dim, spec.samples_per_subclass
    centers = class_centers(spec)
    rng = Xoshiro256(hash64(spec.seed, "synth-samples", spec.pool))
    leaves = h.leaves
    feats = np.empty((n * len(leaves), d))
    labels = np.repeat(np.asarray(leaves, dtype=np.int64), n)
    for k, c in enumerate(leaves):
        noise = rng.normal(n * d, spec.noise_scale).reshape(n, d)
        feats[k * n:(k + 1) * n] = centers[c] + noise
    ids = np.arange(len(labels), dtype=np.int64) + spec.id_offset
    return RawDataset(h, ids, feats, labels)


def load_external(path, hierarchy: Hierarchy) -> RawDataset:
    """Parse a ``id,label,f0,...`` CSV whose labels name non-superclass classes."""
    path = Path(path)
    ids, labels, rows = [], [], []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if len(header) < 3 or header[0] != "id" or header[1] != "label":
            raise ParseError("header must be id,label,f0,...", line=1)
        d = len(header) - 2
        if header[2:] != [f"f{j}" for j in range(d)]:
            raise ParseError("feature columns must be f0..f{d-1}", line=1)
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != d + 2:
                raise DimensionMismatch(f"expected {d} features, got {len(row) - 2}", line=lineno)
            try:
                sid = int(row[0])
                feats = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if sid < 0:
                raise ParseError("sample id must be non-negative", line=lineno)
            name = row[1]
            if name not in hierarchy.names or hierarchy.is_superclass(name):
                raise UnknownLabel(f"label {name!r} is not a sample-owning class", line=lineno)
            if sid in seen:
                raise DuplicateId(f"sample id {sid} repeated", line=lineno)
            seen.add(sid)
            ids.append(sid)
            labels.append(hierarchy.index(name))
            rows.append(feats)
    feats = np.asarray(rows, dtype=np.float64).reshape(len(rows), d)
    return RawDataset(hierarchy, ids, feats, labels)
