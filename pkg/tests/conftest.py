import warnings

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def golden1():
    from quadobs.mu_design import load_golden
    return load_golden(1)


@pytest.fixture(scope="session")
def golden2():
    from quadobs.mu_design import load_golden
    return load_golden(2)


@pytest.fixture(scope="session")
def golden1_report(golden1):
    from quadobs.brackets import check_hypotheses
    mus, cfg, _ = golden1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return check_hypotheses(mus, cfg)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
