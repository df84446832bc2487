import numpy as np
import pytest

from eyeglass_recon.ffd import build_lattice
from eyeglass_recon.synth import KEYPOINTS, sample_dataset
from eyeglass_recon.template import build_template


@pytest.fixture(scope="session")
def dataset():
    return sample_dataset()


@pytest.fixture(scope="session")
def template_history(dataset):
    history = []
    tm = build_template(dataset, KEYPOINTS, history=history)
    return tm, history


@pytest.fixture(scope="session")
def template(template_history):
    return template_history[0]


@pytest.fixture(scope="session")
def lattice(template):
    return build_lattice(template.mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_addoption(parser):
    parser.addoption("--full-grid", action="store_true", default=False,
                     help="run the pose round trip on all 845 grid cells")


_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.skipped:
        return
    if rep.when == "call" or rep.failed:
        num, title = mark.args
        prev_ok, _, prev = _criteria.get(num, (True, title, ""))
        details = "; ".join([prev] * bool(prev) + [f"{k}={v}" for k, v in rep.user_properties])
        _criteria[num] = (prev_ok and rep.passed, title, details)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        ok, title, details = _criteria[num]
        line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{details}]" if details else ""))
