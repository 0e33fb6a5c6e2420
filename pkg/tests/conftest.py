import numpy as np
import pytest

from mosaic.space import (AlgorithmChoice, Condition, DecisionStep, HyperparameterSpec as H, Pipeline,
                          SearchSpace, enumerate_pipelines)


def algo(name, *hps, **defaults):
    return AlgorithmChoice(name, tuple(hps), dict(defaults))


def step(index, *algos, default=None):
    return DecisionStep(index, tuple(algos), default)


def toy_space():
    """12 configurations: 2 learners x 3 values x 2 scalers."""
    return SearchSpace("toy", (
        step(1, algo("a", H.categorical("u", [0, 1, 2]), u=0), algo("b", H.categorical("v", [0, 1, 2]), v=0)),
        step(2, algo("p"), algo("q")),
    ))


def toy_table():
    """Fixed rewards on the toy space, unique optimum 0.9."""
    rng = np.random.default_rng(7)
    xs = list(enumerate_pipelines(toy_space()))
    vals = rng.uniform(0.2, 0.8, size=len(xs))
    vals[5] = 0.9
    return {x: float(v) for x, v in zip(xs, vals)}


def mixed_space():
    return SearchSpace("mixed", (
        step(1,
             algo("svm", H.continuous("C", 0.01, 100.0), H.categorical("kernel", ["rbf", "linear"]),
                  H.continuous("gamma", 0.001, 1.0, condition=Condition("kernel", ("rbf",))),
                  C=1.0, kernel="rbf", gamma=0.1),
             algo("tree", H.integer("depth", 1, 8), depth=3)),
        step(2, algo("none"), algo("pca", H.continuous("keep", 0.5, 0.99), keep=0.9)),
        step(3, algo("mean"), algo("median")),
    ), forbidden=(((1, "tree"), (2, "pca")),))


def single_space(continuous=True):
    """One step, one algorithm."""
    hps = (H.continuous("x", 0.0, 1.0),) if continuous else ()
    return SearchSpace("single", (step(1, AlgorithmChoice("f", hps, {"x": 0.5} if continuous else {})),))


def bandit_space():
    return SearchSpace("bandit", (step(1, algo("arm0"), algo("arm1")),))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pipe(structure, *thetas):
    return Pipeline(tuple(structure), tuple(thetas) if thetas else tuple({} for _ in structure))


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
            terminalreporter.write_line(ACCEPTANCE[key])
