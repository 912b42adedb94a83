import random

import pytest

from difflat import systems
from difflat.analysis import analyze
from difflat.expr import add, mul, num
from difflat.model import invert_extension


@pytest.fixture(scope="session")
def vtol():
    return systems.load("vtol")


@pytest.fixture(scope="session")
def academic():
    return systems.load("academic")


@pytest.fixture(scope="session")
def robot():
    return systems.load("robot")


@pytest.fixture(scope="session")
def corpus(vtol, academic, robot):
    return {"vtol": vtol, "academic": academic, "robot": robot}


@pytest.fixture(scope="session")
def reports(corpus):
    """Full analysis of every bundled system, shared across the suite."""
    return {name: analyze(sf.model, sf.candidate, sf.options)
            for name, sf in corpus.items()}


@pytest.fixture(scope="session")
def models_with_psi(corpus):
    return {name: invert_extension(sf.model) for name, sf in corpus.items()}


def random_corpus_expressions(sf, count, seed=0, max_shift=1):
    """Random algebraic combinations of a system's own expressions, used for
    the shift-operator round-trip and morphism properties."""
    rng = random.Random(seed)
    sys = sf.model
    atoms = list(sys.f) + list(sys.g or ()) + list(sf.candidate.phi) \
        + list(sys.state_vars) + list(sys.input_vars)
    out = []
    for _ in range(count):
        k = rng.randint(2, 4)
        picks = [rng.choice(atoms) for _ in range(k)]
        e = picks[0]
        for p in picks[1:]:
            op = rng.randint(0, 3)
            if op == 0:
                e = add(e, p)
            elif op == 1:
                e = mul(e, p)
            elif op == 2:
                e = add(e, mul(num(rng.randint(-3, 3)), p))
            else:
                e = add(mul(e, p), num(rng.randint(-2, 2)))
        out.append(e)
    return out
