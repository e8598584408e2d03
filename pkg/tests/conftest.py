import os

import numpy as np
import pytest


@pytest.fixture(autouse=True, scope="session")
def _basis_cache(tmp_path_factory):
    # keep the user cache untouched during tests
    os.environ.setdefault("IBS2_CACHE_DIR", str(tmp_path_factory.mktemp("ibs2cache")))
    yield


@pytest.fixture(scope="session")
def basis10():
    from ibs2.grids import default_pnodes
    from ibs2.pswf import build_basis

    return build_basis(10.0, 0.9, P=default_pnodes(5.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion; the summary prints them."""
    lines = request.config.__dict__.setdefault("_ibs2_criteria", [])

    def record(num, ok, detail):
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((num, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_ibs2_criteria", [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
