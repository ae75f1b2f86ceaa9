import pytest
from hypothesis import given
from hypothesis import strategies as st

from iirc.errors import (
    CycleOrDepthViolation,
    DanglingParent,
    DuplicateClass,
    EmptyHierarchy,
    HierarchyError,
    IsSuperclass,
    UnknownClass,
)
from iirc.hierarchy import Hierarchy, build_hierarchy, parse_tsv


def test_cifar_table_shape(cifar):
    assert len(cifar.superclasses) == 15
    assert len(cifar.subclasses) == 77
    assert len(cifar.standalone) == 23
    assert len(cifar) == 115
    assert len(cifar.leaves) == 100


def test_cifar_known_rows(cifar):
    assert len(cifar.children("vehicles")) == 8
    assert len(cifar.children("aquatic mammals")) == 5
    assert cifar.parent("bus") == cifar.index("vehicles")
    assert cifar.parent("mushroom") is None
    assert cifar.labels_of("mushroom") == {cifar.index("mushroom")}


def test_minimal_and_depth():
    h = build_hierarchy([("a", None)])
    assert h.standalone == (0,) and h.superclasses == ()
    with pytest.raises(CycleOrDepthViolation):
        build_hierarchy([("a", "b"), ("b", "c")])
    with pytest.raises(CycleOrDepthViolation):
        build_hierarchy([("a", "a")])


def test_errors():
    with pytest.raises(EmptyHierarchy):
        build_hierarchy([])
    with pytest.raises(DuplicateClass):
        build_hierarchy([("a", "x"), ("a", "y")])
    with pytest.raises(DuplicateClass):
        build_hierarchy([("a", None), ("a", "y")])
    with pytest.raises(DanglingParent):
        build_hierarchy([("whippet", "dog")], strict=True)
    build_hierarchy([("dog", None), ("whippet", "dog")], strict=True)
    with pytest.raises(HierarchyError):
        parse_tsv(["a\tb\tc"])


def test_labels_of():
    h = build_hierarchy([("whippet", "dog"), ("mushroom", None)])
    assert h.labels_of("whippet") == {h.index("whippet"), h.index("dog")}
    assert h.labels_of("mushroom") == {h.index("mushroom")}
    with pytest.raises(UnknownClass):
        h.labels_of("cat")
    with pytest.raises(IsSuperclass):
        h.labels_of("dog")


def test_index_order():
    h = build_hierarchy([("x", None), ("b1", "B"), ("a1", "A"), ("b2", "B")])
    assert h.names == ("B", "A", "b1", "a1", "b2", "x")


names = st.text(alphabet="abcdefgh", min_size=1, max_size=4)


@st.composite
def record_lists(draw):
    pool = draw(st.lists(names, min_size=1, max_size=20, unique=True))
    n_par = draw(st.integers(0, len(pool) // 2))
    parents, rest = pool[:n_par], pool[n_par:]
    recs = []
    for c in rest:
        recs.append((c, draw(st.sampled_from(parents)) if parents and draw(st.booleans()) else None))
    return recs


@given(record_lists())
def test_partition_and_roundtrip(recs):
    h = build_hierarchy(recs)
    parts = set(h.superclasses) | set(h.subclasses) | set(h.standalone)
    assert len(parts) == len(h) == len(h.superclasses) + len(h.subclasses) + len(h.standalone)
    for s in h.superclasses:
        assert len(h.children(s)) >= 1
    for c in h.leaves:
        assert len(h.labels_of(c)) == (2 if h.parent(c) is not None else 1)
    again = build_hierarchy(parse_tsv(h.to_tsv().splitlines()))
    assert again == h
    assert build_hierarchy(recs) == h


def test_bundled_file_roundtrip(cifar, tmp_path):
    cifar.save(tmp_path / "h.tsv")
    assert Hierarchy.from_tsv(tmp_path / "h.tsv") == cifar
