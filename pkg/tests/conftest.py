import os
import random
import sys

import pytest
from hypothesis import settings
from hypothesis import strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from lossforge import expr as E  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def tree_from_seed(seed, constraints=E.GenConstraints()):
    return E.random_tree(constraints, random.Random(seed))


trees = st.integers(0, 2**32 - 1).map(tree_from_seed)


@pytest.fixture
def rng():
    return random.Random(1234)


ACCEPTANCE = []


def report_criterion(number, title, passed, detail):
    """Record one acceptance line; echoed now and repeated in the terminal summary."""
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
