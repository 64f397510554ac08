"""Shared pytest hooks: verdict lines for the acceptance suite."""

import sys


def pytest_runtest_logreport(report):
    """Print one ACCEPTANCE <name>: PASS/FAIL line per acceptance test."""
    if not report.nodeid.split("::")[0].endswith("test_acceptance.py"):
        return
    name = report.nodeid.split("::")[-1]
    if name.startswith("test_"):
        name = name[5:]
    if report.when == "call":
        verdict = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and (report.failed or report.skipped):
        verdict = "FAIL" if report.failed else "SKIP"
    else:
        return
    sys.stdout.write(f"\nACCEPTANCE {name}: {verdict}\n")
    sys.stdout.flush()
