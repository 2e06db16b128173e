import pytest

from biotallard.material import MaterialParams
from biotallard.permeability import PermeabilitySeries

_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def params():
    return MaterialParams(rho_s=2.5, rho_f=1.0, phi=0.3, alpha=0.8, c0=0.5, eta=0.5,
                          alpha_inf=1.5, lame=(1.0, 0.7))


@pytest.fixture
def series1(params):
    return PermeabilitySeries.from_material(params, [(0.5, 1.0)])


@pytest.fixture
def series2(params):
    return PermeabilitySeries.from_material(params, [(0.5, 1.0), (2.0, 0.5)])


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    cid, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    item.config.stash[_RESULTS].append((cid, title, rep.passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_RESULTS, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for cid, title, ok, detail in sorted(rows, key=lambda r: r[0]):
        line = f"criterion {cid:<4} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
