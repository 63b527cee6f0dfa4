import re


def pytest_runtest_logreport(report):
    """Print one pass/fail line per acceptance criterion."""
    if "test_acceptance.py" not in report.nodeid:
        return
    m = re.search(r"criterion_(\d+)", report.nodeid)
    if m is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\nacceptance criterion {int(m.group(1)):2d}: {verdict}")
