"""Shared fixtures and the acceptance-criteria report.

Acceptance tests register one line per criterion (before asserting), and
the collected lines are printed as a section at the end of the run, so
``pytest`` output always carries an explicit pass/fail line per criterion.
"""

import pytest

ACCEPTANCE_RESULTS = []


def record_criterion(number: int, title: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {number}: {title}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_RESULTS.append(line)
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def norm_oracle():
    """High-precision standard-normal CDF/quantile, independent of SciPy."""
    import mpmath

    mpmath.mp.dps = 30

    def cdf(x):
        return float(mpmath.ncdf(mpmath.mpf(repr(float(x)))))

    def quantile(p):
        return float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(repr(float(p))) - 1))

    return cdf, quantile
