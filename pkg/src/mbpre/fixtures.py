"""Reference models used throughout the tests, demos and docs.

``F1``  single type, single environment, Bernoulli(1/2) offspring.
``F2``  single type, two Bernoulli environments with means 1/4 and 1/2.
``F3``  two types, two environment states with small supports; satisfies
        every standing condition, with one state expanding in every direction.
"""

from __future__ import annotations

from .envmodel import EnvModel, EnvState, OffspringLaw


def _law(atoms: dict) -> OffspringLaw:
    return OffspringLaw.from_dict(atoms)


def f1() -> EnvModel:
    state = EnvState((_law({(0,): 0.5, (1,): 0.5}),))
    return EnvModel((state,), (1.0,), name="F1")


def f2() -> EnvModel:
    a = EnvState((_law({(0,): 0.75, (1,): 0.25}),))
    b = EnvState((_law({(0,): 0.5, (1,): 0.5}),))
    return EnvModel((a, b), (0.5, 0.5), name="F2")


# F3: the good state has mean row sums 1.05 in both directions, the harsh
# state 0.65 and 0.7. Annealed mean [[0.48, 0.25], [0.22, 0.55]].
F3_GOOD = (
    {(0, 0): 0.25, (1, 0): 0.35, (0, 1): 0.1, (1, 1): 0.15, (2, 0): 0.15},
    {(0, 0): 0.2, (1, 0): 0.2, (0, 1): 0.35, (1, 1): 0.1, (0, 2): 0.15},
)
F3_HARSH = (
    {(0, 0): 0.45, (1, 0): 0.3, (0, 1): 0.15, (1, 1): 0.1},
    {(0, 0): 0.4, (1, 0): 0.1, (0, 1): 0.4, (1, 1): 0.1},
)
F3_PROBS = (0.2, 0.8)


def f3() -> EnvModel:
    a = EnvState(tuple(_law(d) for d in F3_GOOD))
    b = EnvState(tuple(_law(d) for d in F3_HARSH))
    return EnvModel((a, b), F3_PROBS, name="F3")


FIXTURES = {"f1": f1, "f2": f2, "f3": f3}
