import numpy as np
import pytest

from ultralight.blocks import PVMConfig, PVMWeights

_criteria = {}
_outcomes = {}
_details = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number): acceptance criterion covered by a test")


def pytest_collection_modifyitems(session, config, items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            number = m.args[0]
            _criteria[item.nodeid] = (number, getattr(item.module, "CRITERIA", {}).get(number, ""))


def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    if report.when == "call" or report.failed or (report.when == "setup" and report.skipped):
        prev = _outcomes.get(report.nodeid, "passed")
        _outcomes[report.nodeid] = report.outcome if prev == "passed" else prev


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    by_number = {}
    for nodeid, (number, text) in _criteria.items():
        if nodeid in _outcomes:
            ok = by_number.get(number, (True, text))[0]
            by_number[number] = (ok and _outcomes[nodeid] == "passed", text)
    terminalreporter.section("acceptance criteria")
    for number in sorted(by_number):
        ok, text = by_number[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {text}")
        for line in _details.get(number, []):
            terminalreporter.write_line(f"            {line}")


@pytest.fixture
def note(request):
    """Attach a measured value to the summary line of the test's criterion."""
    m = request.node.get_closest_marker("criterion")
    number = m.args[0] if m else None
    return lambda text: _details.setdefault(number, []).append(text)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def random_tensors(shapes, rng, scale=0.5):
    return {k: (rng.standard_normal(s) * scale).astype(np.float32) for k, s in shapes.items()}


def random_bundle(cls, cfg, rng, scale=0.5):
    return cls.from_tensors(cfg, random_tensors(cls.shapes(cfg), rng, scale))


def random_pvm(cfg: PVMConfig, rng, scale=0.5):
    return PVMWeights.from_tensors(cfg, random_tensors(PVMWeights.shapes(cfg), rng, scale))


def rel_err(actual, expected):
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    return float(np.abs(actual - expected).max() / (np.abs(expected).max() + 1e-12))
