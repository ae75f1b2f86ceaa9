"""Two-level class taxonomy: superclasses, their subclasses, and standalone classes."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

from .errors import (
    CycleOrDepthViolation,
    DanglingParent,
    DuplicateClass,
    EmptyHierarchy,
    HierarchyError,
    IsSuperclass,
    UnknownClass,
)

CIFAR_HIERARCHY = "iirc_cifar.tsv"


class ClassId(NamedTuple):
    name: str
    index: int


class Hierarchy:
    """Immutable validated taxonomy.

    Class indices are dense: superclasses first (order of first appearance
    as a parent), then parented subclasses (record order), then standalone
    classes (record order).
    """

    def __init__(self, names, parent):
        self._names = tuple(names)
        self._parent = dict(parent)
        self._index = {n: i for i, n in enumerate(self._names)}
        children: dict[int, list[int]] = {}
        for child, par in self._parent.items():
            children.setdefault(par, []).append(child)
        self._children = {k: tuple(sorted(v)) for k, v in children.items()}
        self.superclasses = tuple(sorted(self._children))
        self.subclasses = tuple(sorted(self._parent))
        self.standalone = tuple(
            i for i in range(len(self._names))
            if i not in self._parent and i not in self._children
        )
        # classes that own raw samples
        self.leaves = tuple(sorted(self.subclasses + self.standalone))

    # -- construction -----------------------------------------------------

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, Optional[str]]], strict: bool = False):
        return build_hierarchy(records, strict=strict)

    @classmethod
    def from_tsv(cls, path, strict: bool = False):
        return build_hierarchy(read_tsv(path), strict=strict)

    @classmethod
    def bundled(cls, name: str = CIFAR_HIERARCHY):
        text = resources.files("iirc").joinpath("hierarchies").joinpath(name).read_text(encoding="utf-8")
        return build_hierarchy(parse_tsv(text.splitlines()))

    # -- queries ----------------------------------------------------------

    def __len__(self):
        return len(self._names)

    def __eq__(self, other):
        if not isinstance(other, Hierarchy):
            return NotImplemented
        return self._names == other._names and self._parent == other._parent

    def __hash__(self):
        return hash((self._names, tuple(sorted(self._parent.items()))))

    def __repr__(self):
        return (f"Hierarchy({len(self.superclasses)} superclasses, {len(self.subclasses)} parented, "
                f"{len(self.standalone)} standalone)")

    @property
    def names(self) -> tuple[str, ...]:
        return self._names

    @property
    def classes(self) -> tuple[ClassId, ...]:
        return tuple(ClassId(n, i) for i, n in enumerate(self._names))

    def index(self, cls) -> int:
        if isinstance(cls, (int,)) and not isinstance(cls, bool):
            if 0 <= cls < len(self._names):
                return cls
            raise UnknownClass(f"class index {cls} out of range")
        if isinstance(cls, ClassId):
            return self.index(cls.index)
        try:
            return self._index[cls]
        except KeyError:
            raise UnknownClass(f"unknown class {cls!r}") from None

    def name(self, idx: int) -> str:
        return self._names[self.index(idx)]

    def parent(self, cls) -> Optional[int]:
        return self._parent.get(self.index(cls))

    def children(self, cls) -> tuple[int, ...]:
        return self._children.get(self.index(cls), ())

    def is_superclass(self, cls) -> bool:
        return self.index(cls) in self._children

    def labels_of(self, subclass) -> frozenset[int]:
        """Full label set of a raw sample whose fine label is ``subclass``."""
        i = self.index(subclass)
        if i in self._children:
            raise IsSuperclass(f"{self._names[i]!r} is a superclass and owns no samples")
        p = self._parent.get(i)
        return frozenset((i,)) if p is None else frozenset((i, p))

    # -- serialization ----------------------------------------------------

    def records(self) -> list[tuple[str, Optional[str]]]:
        out: list[tuple[str, Optional[str]]] = [
            (self._names[c], self._names[self._parent[c]]) for c in self.subclasses
        ]
        out.extend((self._names[c], None) for c in self.standalone)
        return out

    def to_tsv(self) -> str:
        lines = [child if par is None else f"{child}\t{par}" for child, par in self.records()]
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_tsv(), encoding="utf-8")


def parse_tsv(lines: Iterable[str]) -> list[tuple[str, Optional[str]]]:
    records = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) > 2:
            raise HierarchyError(f"line {lineno}: expected 'child' or 'child<TAB>parent'")
        child = parts[0].strip()
        parent = parts[1].strip() if len(parts) == 2 and parts[1].strip() else None
        records.append((child, parent))
    return records


def read_tsv(path) -> list[tuple[str, Optional[str]]]:
    with open(path, encoding="utf-8") as fh:
        return parse_tsv(fh)


def build_hierarchy(records: Iterable[tuple[str, Optional[str]]], strict: bool = False) -> Hierarchy:
    """Validate ``(child, parent-or-None)`` records and assign class indices.

    Superclasses are declared by appearing in the parent column.  With
    ``strict=True`` every parent must also be listed on a line of its own,
    otherwise :class:`DanglingParent` is raised.
    """
    records = list(records)
    if not records:
        raise EmptyHierarchy("hierarchy has no records")

    child_parent: dict[str, str] = {}
    child_order: list[str] = []
    alone: list[str] = []
    alone_seen: set[str] = set()
    super_order: list[str] = []
    super_seen: set[str] = set()

    for child, parent in records:
        if not child or not str(child).strip():
            raise HierarchyError("class names must be non-empty")
        if parent is not None and not str(parent).strip():
            parent = None
        if parent is None:
            if child in alone_seen or child in child_parent:
                raise DuplicateClass(f"class {child!r} defined twice")
            alone_seen.add(child)
            alone.append(child)
            continue
        if child == parent:
            raise CycleOrDepthViolation(f"class {child!r} is its own parent")
        if child in child_parent or child in alone_seen:
            raise DuplicateClass(f"class {child!r} defined twice")
        child_parent[child] = parent
        child_order.append(child)
        if parent not in super_seen:
            super_seen.add(parent)
            super_order.append(parent)

    for child in child_order:
        if child in super_seen:
            raise CycleOrDepthViolation(
                f"class {child!r} is both a subclass and a superclass (depth > 2)")
    if strict:
        for sup in super_order:
            if sup not in alone_seen:
                raise DanglingParent(f"parent {sup!r} is never declared")

    # a lone line naming a superclass is a declaration, not a standalone class
    standalone = [c for c in alone if c not in super_seen]
    names = super_order + child_order + standalone
    index = {n: i for i, n in enumerate(names)}
    parent = {index[c]: index[p] for c, p in child_parent.items()}
    return Hierarchy(names, parent)
