import os

import pytest
from hypothesis import settings

os.environ.setdefault("AB_WAVELAB_THREADS", "1")

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    _CRITERIA[mark.args[0]] = (rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
