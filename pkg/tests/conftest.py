import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from iirc.data import SynthSpec, generate_synthetic  # noqa: E402
from iirc.hierarchy import Hierarchy, build_hierarchy  # noqa: E402
from iirc.stream import AssignmentRule, SplitSpec, build_streams  # noqa: E402

ACCEPTANCE_LINES = []


def small_records(n_super=4, n_sub=4, n_alone=4):
    recs = [(f"s{s}c{c}", f"S{s}") for s in range(n_super) for c in range(n_sub)]
    recs += [(f"a{a}", None) for a in range(n_alone)]
    return recs


def small_streams(train=100, test=50, seed=0):
    h = build_hierarchy(small_records())
    tr = generate_synthetic(SynthSpec(h, samples_per_subclass=train, seed=seed, pool=0))
    te = generate_synthetic(SynthSpec(h, samples_per_subclass=test, seed=seed, pool=1, id_offset=len(tr)))
    return build_streams(tr, te, SplitSpec(), AssignmentRule(), seed)


@pytest.fixture(scope="session")
def cifar():
    return Hierarchy.bundled()


@pytest.fixture(scope="session")
def small_h():
    return build_hierarchy(small_records())


@pytest.fixture(scope="session")
def small():
    return small_streams()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
