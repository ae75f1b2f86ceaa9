"""Multi-label stores, class-ordering configurations and task views.

The training and in-task validation pools are built in *incomplete* mode:
each parented subclass keeps a shuffled prefix of its samples and hands a
shuffled suffix to its superclass, so some samples sit in two class lists
with different served labels.  Post-task validation and test pools are
built in *complete* mode, where a superclass list is the union of its
children and every sample carries its full label set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional

import numpy as np

from .data import RawDataset
from .errors import EmptyClass, InfeasibleConfig, InvalidSpec
from .hierarchy import Hierarchy
from .rng import Xoshiro256, hash64

INCOMPLETE = "incomplete"
COMPLETE = "complete"


def _frac(x) -> Fraction:
    # decimal-looking floats are taken at face value so floor(0.29 * 100) == 29
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(x).limit_denominator(10**9)


def floor_part(frac, n: int) -> int:
    return math.floor(_frac(frac) * n)


@dataclass(frozen=True)
class SplitSpec:
    in_task_val_frac: float = 0.1
    post_task_val_frac: float = 0.1

    def validate(self):
        a, b = _frac(self.in_task_val_frac), _frac(self.post_task_val_frac)
        if a < 0 or b < 0 or a + b >= 1:
            raise InvalidSpec("split fractions must be >= 0 and sum to < 1")


@dataclass(frozen=True)
class AssignmentRule:
    subclass_keep: float = 0.8
    superclass_take: float = 0.4
    cap_threshold: int = 8

    def validate(self):
        keep, take = _frac(self.subclass_keep), _frac(self.superclass_take)
        if not (0 <= take <= keep <= 1):
            raise InvalidSpec("need 0 <= superclass_take <= subclass_keep <= 1")
        if keep + take < 1:
            raise InvalidSpec("subclass_keep + superclass_take must be >= 1")
        if self.cap_threshold < 1:
            raise InvalidSpec("cap_threshold must be >= 1")

    def effective_take(self, n_children: int) -> Fraction:
        take = _frac(self.superclass_take)
        if n_children > self.cap_threshold:
            take *= Fraction(self.cap_threshold, n_children)
        return take

    def sizes(self, length: int, n_children: int) -> tuple[int, int]:
        """``(subclass list length, superclass contribution)`` for a child of ``length`` samples."""
        return (floor_part(self.subclass_keep, length),
                math.floor(self.effective_take(n_children) * length))


def split(raw: RawDataset, spec: SplitSpec, seed: int):
    """Stratified ``(train, in_task_val, post_task_val)`` split of a raw pool."""
    spec.validate()
    parts: list[list[np.ndarray]] = [[], [], []]
    for c, pos in raw.by_class().items():
        n = len(pos)
        if n == 0:
            raise EmptyClass(f"class {raw.hierarchy.name(c)!r} has no samples")
        pos = pos.copy()
        Xoshiro256(hash64(seed, "split", c)).shuffle(pos)
        n_in = floor_part(spec.in_task_val_frac, n)
        n_post = floor_part(spec.post_task_val_frac, n)
        n_train = n - n_in - n_post
        parts[0].append(pos[:n_train])
        parts[1].append(pos[n_train:n_train + n_in])
        parts[2].append(pos[n_train + n_in:])
    out = []
    for chunks in parts:
        rows = np.sort(np.concatenate(chunks)) if chunks else np.zeros(0, dtype=np.int64)
        out.append(RawDataset(raw.hierarchy, raw.ids[rows], raw.features[rows], raw.labels[rows]))
    return tuple(out)


class LabeledStore:
    """Per-class row lists over a raw pool plus each row's full label set."""

    def __init__(self, pool: RawDataset, mode: str, class_lists: dict[int, np.ndarray],
                 rule: Optional[AssignmentRule] = None):
        self.pool = pool
        self.hierarchy = pool.hierarchy
        self.mode = mode
        self.rule = rule
        self.class_lists = class_lists
        h = self.hierarchy
        lab = np.zeros((len(pool), len(h)), dtype=np.bool_)
        lab[np.arange(len(pool)), pool.labels] = True
        parents = np.array([-1 if h.parent(c) is None else h.parent(c) for c in range(len(h))])
        par = parents[pool.labels]
        has = par >= 0
        lab[np.flatnonzero(has), par[has]] = True
        self.label_matrix = lab

    def __len__(self):
        return len(self.pool)

    def class_size(self, cls) -> int:
        return len(self.class_lists[self.hierarchy.index(cls)])

    def with_duplicates(self) -> int:
        return int(sum(len(v) for v in self.class_lists.values()))

    def without_duplicates(self) -> int:
        if not self.class_lists:
            return 0
        return len(np.unique(np.concatenate(list(self.class_lists.values()))))

    def expected_overlap(self) -> int:
        """Rows listed under both a subclass and its superclass, from the rule arithmetic."""
        if self.mode == COMPLETE or self.rule is None:
            return 0
        h = self.hierarchy
        total = 0
        for c in h.subclasses:
            n = int(np.count_nonzero(self.pool.labels == c))
            keep, take = self.rule.sizes(n, len(h.children(h.parent(c))))
            total += max(0, keep + take - n)
        return total

    def count_identity_holds(self) -> bool:
        if self.mode == COMPLETE:
            return self.with_duplicates() == self.without_duplicates() + sum(
                len(self.class_lists[s]) for s in self.hierarchy.superclasses)
        return self.with_duplicates() == self.without_duplicates() + self.expected_overlap()


def build_labeled_store(pool: RawDataset, rule: AssignmentRule, seed: int, mode: str = INCOMPLETE) -> LabeledStore:
    h = pool.hierarchy
    by_class = pool.by_class()
    lists: dict[int, np.ndarray] = {}
    if mode == COMPLETE:
        for c in h.leaves:
            lists[c] = by_class[c]
        for s in h.superclasses:
            lists[s] = np.concatenate([by_class[c] for c in h.children(s)])
        return LabeledStore(pool, mode, lists)
    if mode != INCOMPLETE:
        raise ValueError(f"unknown mode {mode!r}")
    rule.validate()
    contrib: dict[int, list[np.ndarray]] = {s: [] for s in h.superclasses}
    for c in h.leaves:
        pos = by_class[c]
        p = h.parent(c)
        if p is None:
            lists[c] = pos
            continue
        pos = pos.copy()
        Xoshiro256(hash64(seed, "assign", c)).shuffle(pos)
        keep, take = rule.sizes(len(pos), len(h.children(p)))
        lists[c] = pos[:keep]
        contrib[p].append(pos[len(pos) - take:])
    for s, parts in contrib.items():
        lists[s] = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return LabeledStore(pool, mode, lists, rule)


# --------------------------------------------------------------------------
# task configurations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TaskConfiguration:
    tasks: tuple[tuple[int, ...], ...]
    seed: int = 0

    def __len__(self):
        return len(self.tasks)

    def task_of(self) -> dict[int, int]:
        return {c: t for t, classes in enumerate(self.tasks) for c in classes}

    def observed(self, through: int) -> list[int]:
        """Classes introduced in tasks ``0..through``, in introduction order."""
        return [c for t in self.tasks[:through + 1] for c in t]

    def to_json(self, hierarchy: Hierarchy) -> str:
        return json.dumps({"tasks": [[hierarchy.name(c) for c in t] for t in self.tasks],
                           "seed": self.seed}, indent=1)

    @classmethod
    def from_json(cls, text: str, hierarchy: Hierarchy) -> "TaskConfiguration":
        obj = json.loads(text)
        tasks = tuple(tuple(hierarchy.index(n) for n in t) for t in obj["tasks"])
        return cls(tasks, int(obj.get("seed", 0)))


def configuration_problems(h: Hierarchy, cfg: TaskConfiguration, n0: int, k: int,
                           superclasses_only: bool = True) -> list[str]:
    """Every violated configuration invariant, empty when the configuration is valid."""
    problems = []
    flat = [c for t in cfg.tasks for c in t]
    if sorted(flat) != list(range(len(h))):
        problems.append("classes do not partition the hierarchy")
    if not cfg.tasks or len(cfg.tasks[0]) != n0:
        problems.append("first task has the wrong size")
    elif superclasses_only and any(not h.is_superclass(c) for c in cfg.tasks[0]):
        problems.append("first task holds a non-superclass")
    if any(h.parent(c) is not None for c in (cfg.tasks[0] if cfg.tasks else ())):
        problems.append("first task holds a parented subclass")
    for t, classes in enumerate(cfg.tasks[1:], 1):
        last = t == len(cfg.tasks) - 1
        if len(classes) > k or (not last and len(classes) != k) or not classes:
            problems.append(f"task {t} has size {len(classes)}")
    where = cfg.task_of()
    for c in h.subclasses:
        if c in where and where.get(h.parent(c), len(cfg.tasks)) >= where[c]:
            problems.append(f"{h.name(c)!r} not after its superclass")
    return problems


def _pack(order: list[int], h: Hierarchy, k: int, placed: dict[int, int]) -> list[list[int]]:
    # greedy fill in shuffled order; a subclass met before its superclass
    # pulls the superclass into the current task and waits for the next one
    pending = list(order)
    tasks: list[list[int]] = []
    t = 1
    while pending:
        cur: list[int] = []
        rest: list[int] = []
        for c in pending:
            if c in placed:
                continue
            if len(cur) == k:
                rest.append(c)
                continue
            p = h.parent(c)
            if p is None or placed.get(p, t) < t:
                cur.append(c)
                placed[c] = t
            elif p in placed:
                rest.append(c)
            else:
                cur.append(p)
                placed[p] = t
                rest.append(c)
        tasks.append(cur)
        pending = [c for c in rest if c not in placed]
        t += 1
    return tasks


def generate_task_configuration(h: Hierarchy, n0: int, k: int, seed: int,
                                superclasses_only: bool = False,
                                max_attempts: int = 1000) -> TaskConfiguration:
    """Seeded class ordering: ``n0`` first-task classes, then tasks of ``k``.

    The first task is drawn from superclasses, topped up with standalone
    classes only when there are fewer than ``n0`` superclasses (an error if
    ``superclasses_only``).  The rest is shuffled and packed ``k`` per task,
    every subclass strictly after its superclass.  Shuffles that cannot be
    packed into full tasks are redrawn.
    """
    if n0 < 1 or k < 1:
        raise InfeasibleConfig("task sizes must be positive")
    rng = Xoshiro256(hash64(seed, "config"))
    supers = list(h.superclasses)
    if len(supers) >= n0:
        first = [supers[i] for i in rng.choice(len(supers), n0)]
    else:
        if superclasses_only:
            raise InfeasibleConfig(f"first task needs {n0} superclasses, hierarchy has {len(supers)}")
        extra = n0 - len(supers)
        if extra > len(h.standalone):
            raise InfeasibleConfig(f"not enough superclass or standalone classes for a first task of {n0}")
        first = supers + [h.standalone[i] for i in rng.choice(len(h.standalone), extra)]
    first_set = set(first)
    remaining = np.array([c for c in range(len(h)) if c not in first_set], dtype=np.int64)
    n_tasks = math.ceil(len(remaining) / k)
    for _ in range(max_attempts):
        order = rng.shuffle(remaining.copy()).tolist()
        later = _pack(order, h, k, {c: 0 for c in first})
        if len(later) == n_tasks and all(len(t) == k for t in later[:-1]):
            tasks = (tuple(first),) + tuple(tuple(t) for t in later)
            return TaskConfiguration(tasks, seed)
    raise InfeasibleConfig(f"no precedence-respecting packing into tasks of {k} found")


# --------------------------------------------------------------------------
# views
# --------------------------------------------------------------------------


class IncompleteView:
    """Training view of one task: each row is served with the single label of the current task."""

    def __init__(self, store: LabeledStore, config: TaskConfiguration, task: int):
        if not 0 <= task < len(config):
            raise IndexError(f"task {task} out of range")
        self.store, self.config, self.task = store, config, task
        self.classes = config.tasks[task]
        parts = [store.class_lists[c] for c in self.classes]
        self.rows = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
        sub = store.label_matrix[np.ix_(self.rows, np.asarray(self.classes, dtype=np.int64))]
        hits = sub.sum(axis=1)
        assert np.all(hits == 1), "served label is not unique; store or configuration is corrupt"
        self.labels = np.asarray(self.classes, dtype=np.int64)[np.argmax(sub, axis=1)] \
            if len(self.rows) else np.zeros(0, dtype=np.int64)

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i):
        if not -len(self) <= i < len(self):
            raise IndexError(f"item {i} out of range for task of {len(self)}")
        return self.store.pool.features[self.rows[i]], int(self.labels[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def advance(self) -> "IncompleteView":
        return IncompleteView(self.store, self.config, self.task + 1)

    @property
    def features(self) -> np.ndarray:
        return self.store.pool.features[self.rows]

    @property
    def sample_ids(self) -> np.ndarray:
        return self.store.pool.ids[self.rows]


class CompleteView:
    """Evaluation view after ``task``: every observed-class row once, labels cut to observed classes."""

    def __init__(self, store: LabeledStore, config: TaskConfiguration, task: int):
        if not 0 <= task < len(config):
            raise IndexError(f"task {task} out of range")
        self.store, self.config, self.task = store, config, task
        self.observed = config.observed(task)
        mask = np.zeros(len(store.hierarchy), dtype=np.bool_)
        mask[self.observed] = True
        self.observed_mask = mask
        self.rows = self._rows_for(self.observed)

    def _rows_for(self, classes) -> np.ndarray:
        parts = [self.store.class_lists[c] for c in classes]
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(parts))

    def __len__(self):
        return len(self.rows)

    def labels_for(self, rows) -> np.ndarray:
        return self.store.label_matrix[rows] & self.observed_mask

    def items(self) -> Iterator[tuple[np.ndarray, frozenset[int]]]:
        lab = self.labels_for(self.rows)
        for r, row in zip(self.rows, lab):
            yield self.store.pool.features[r], frozenset(np.flatnonzero(row).tolist())

    def advance(self) -> "CompleteView":
        return CompleteView(self.store, self.config, self.task + 1)

    def arrays(self, task: Optional[int] = None):
        """``(features, label matrix, sample ids)`` over all observed data, or one task's classes."""
        if task is None:
            rows = self.rows
        else:
            if task > self.task:
                raise IndexError("task not yet observed")
            rows = self._rows_for(self.config.tasks[task])
        pool = self.store.pool
        return pool.features[rows], self.labels_for(rows), pool.ids[rows]


def complete_items(view: CompleteView):
    return view.items()


def incomplete_item(view: IncompleteView, index: int):
    return view[index]


@dataclass
class Streams:
    """All four stores of one experiment."""
    hierarchy: Hierarchy
    train: LabeledStore
    in_task_val: LabeledStore
    post_task_val: LabeledStore
    test: LabeledStore
    extra: dict = field(default_factory=dict)

    def count_rows(self) -> list[tuple[str, int, int]]:
        return [(name, s.with_duplicates() if s.mode == INCOMPLETE else s.without_duplicates(),
                 s.without_duplicates())
                for name, s in (("train", self.train), ("in_task_val", self.in_task_val),
                                ("post_task_val", self.post_task_val), ("test", self.test))]

    def identity_holds(self) -> bool:
        return all(s.count_identity_holds() for s in (self.train, self.in_task_val,
                                                        self.post_task_val, self.test))


def build_streams(train_raw: RawDataset, test_raw: RawDataset, split_spec: SplitSpec,
                  rule: AssignmentRule, seed: int) -> Streams:
    train, in_val, post_val = split(train_raw, split_spec, hash64(seed, "split-pool"))
    return Streams(
        train_raw.hierarchy,
        build_labeled_store(train, rule, hash64(seed, "store", 0), INCOMPLETE),
        build_labeled_store(in_val, rule, hash64(seed, "store", 1), INCOMPLETE),
        build_labeled_store(post_val, rule, 0, COMPLETE),
        build_labeled_store(test_raw, rule, 0, COMPLETE),
    )
