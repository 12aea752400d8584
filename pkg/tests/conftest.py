import warnings

import pytest

from germfold.germfile import load_corpus_germ
from germfold.obstruction import build_germ_system
from germfold.parser import parse_poly
from germfold.wgeom import make_weight_system


def make_germ(variables, weights, equations, perturbations, name=""):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ws = make_weight_system(weights)
    f = [parse_poly(e, variables) for e in equations]
    g = [parse_poly(e, variables) for e in perturbations]
    return build_germ_system(ws, f, g, variables, name)


@pytest.fixture(scope="session")
def corpus():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_corpus_germ(name).build()
        return cache[name]

    return get


@pytest.fixture(scope="session")
def quadric(corpus):
    return corpus("quadric")


@pytest.fixture(scope="session")
def bs(corpus):
    return corpus("bs")


# -- acceptance summary: one pass/fail line per criterion ----------------------

_ACCEPTANCE: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, title = mark.args
    entry = _ACCEPTANCE.setdefault(n, [title, True])
    if rep.failed or (rep.when == "call" and rep.skipped):
        entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[n]
        tr.write_line(f"criterion {n:2d}  {'PASS' if ok else 'FAIL'}  {title}")
