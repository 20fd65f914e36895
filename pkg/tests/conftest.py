"""Shared fixtures and the per-criterion acceptance summary."""

import collections

import pytest

_RESULTS = collections.OrderedDict()
_TITLES = {}


def pytest_addoption(parser):
    parser.addoption("--recompute-oracles", action="store_true",
                     help="also recompute the expensive frozen oracle values")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number n")
    config.addinivalue_line("markers", "oracle: expensive oracle recomputation, opt-in")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--recompute-oracles"):
        return
    skip = pytest.mark.skip(reason="expensive oracle; run with --recompute-oracles")
    for item in items:
        if "oracle" in item.keywords:
            item.add_marker(skip)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    n, title = mark.args
    _TITLES[n] = title
    detail = item.user_properties and dict(item.user_properties).get("observed")
    _RESULTS.setdefault(n, []).append((item.name, rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        parts = _RESULTS[n]
        ok = all(p for _, p, _ in parts)
        tr.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {_TITLES[n]}")
        for name, passed, detail in parts:
            tail = f": {detail}" if detail else ""
            tr.write_line(f"    {'pass' if passed else 'FAIL'} {name}{tail}")


@pytest.fixture
def observe(record_property):
    """Attach a one-line observation to the acceptance summary."""
    def _observe(text):
        record_property("observed", text)
    return _observe
