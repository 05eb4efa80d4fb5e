import json
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


def load_fixture(name):
    return json.loads((FIXTURES / name).read_text())


# -- acceptance summary ---------------------------------------------------------
# Tests marked @pytest.mark.criterion(n, "title") are grouped; a criterion passes
# only if all of its tests pass. xfail counts as FAIL and prints its reason.

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion grouping")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not (rep.when == "setup" and not rep.passed)):
        return
    n, title = mark.args
    entry = _CRITERIA.setdefault(n, {"title": title, "ok": True, "notes": []})
    if hasattr(rep, "wasxfail"):
        entry["ok"] = False
        entry["notes"].append(f"{item.name}: expected failure ({rep.wasxfail})")
    elif not rep.passed:
        entry["ok"] = False
        entry["notes"].append(f"{item.name}: {rep.outcome}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        tr.write_line(f"criterion {n} {'PASS' if e['ok'] else 'FAIL'}: {e['title']}")
        for note in e["notes"]:
            tr.write_line(f"    {note}")
