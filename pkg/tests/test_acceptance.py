"""Runs the full acceptance gate once and asserts every criterion line."""

import pytest

from fracsig import acceptance

CRITERION_IDS = [
    "C1", "C2", "C3", "C4", "C5", "C6a", "C6b", "C7a", "C7b",
    "C8", "C9", "C10a", "C10b", "C11", "C12",
]


@pytest.fixture(scope="module")
def report():
    acceptance.clear_cache()
    rep = acceptance.run_acceptance()
    print()
    print(rep.render())
    return rep


def test_every_criterion_reported(report):
    assert [line.cid for line in report.lines] == CRITERION_IDS


@pytest.mark.parametrize("cid", CRITERION_IDS)
def test_criterion(report, cid):
    line = next(ln for ln in report.lines if ln.cid == cid)
    detail = (f"{line.cid}: {line.label} "
              f"[measured {line.measured}, requires {line.threshold}]")
    if line.blocking:
        assert line.passed, detail
    elif not line.passed:
        pytest.xfail(f"advisory criterion failed: {detail}")


def test_verdict(report):
    assert report.all_pass
    assert report.render().splitlines()[-1].startswith("ACCEPT")


def test_advisory_lines(report):
    # only the weighted ground-state cross-check is advisory
    advisory = {ln.cid for ln in report.lines if not ln.blocking}
    assert advisory == {"C7b"}


def test_crash_reports_a_failed_line(monkeypatch):
    def _c99_boom(report, fast):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(acceptance, "_CRITERIA", (_c99_boom,))
    rep = acceptance.run_acceptance(fast=True)
    assert len(rep.lines) == 1
    line = rep.lines[0]
    assert line.cid == "C99"
    assert not line.passed
    assert "synthetic failure" in line.label
    assert rep.render().splitlines()[-1].startswith("REJECT")
