import random
from fractions import Fraction

import pytest

from transborel.multiseries import GeneratorSet, Multiseries

GEN_FAMILIES = [
    GeneratorSet.powers(Fraction(-1)),
    GeneratorSet.powers(Fraction(-1, 2), Fraction(-1, 3)),
    GeneratorSet([(0, -1), (-1, 0)]),
]


def random_series(rng, gens, N=20, max_terms=30, max_deg=6):
    M = len(gens)
    co = {}
    for _ in range(rng.randint(1, max_terms)):
        k = [0] * M
        for _ in range(rng.randint(0, max_deg)):
            k[rng.randrange(M)] += 1
        co[tuple(k)] = Fraction(rng.randint(-9, 9), rng.randint(1, 9))
    if all(c == 0 for c in co.values()):
        co[(0,) * M] = Fraction(1)
    return Multiseries.from_coeffs(gens, co, N)


@pytest.fixture
def rng():
    return random.Random(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
