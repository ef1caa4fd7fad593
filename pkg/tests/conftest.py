import pytest
from hypothesis import HealthCheck, settings

from grasplab.catalog import builtin_paper_catalog, find_object

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=200,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def catalog():
    return builtin_paper_catalog()


@pytest.fixture(scope="session")
def obj_by_name(catalog):
    return lambda name: find_object(catalog, name)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
