import pytest

from inertial_dr.checks import SuiteResult, run_all


@pytest.mark.parametrize("seed,alpha", [(0, 0.2), (7, 0.0), (3, 0.3)])
def test_quick_suites_pass_across_seeds(seed, alpha):
    results = run_all(seed=seed, alpha=alpha, quick=True)
    bad = [r.line() for r in results if not r.passed]
    assert not bad, bad
    assert all(r.checked > 0 for r in results)


def test_suite_result_caps_failures():
    r = SuiteResult("demo")
    for i in range(50):
        r.fail(f"violation {i}")
    assert not r.passed
    assert len(r.failures) == 21 and r.failures[-1].startswith("...")
    assert r.line().startswith("FAIL demo") and "violation 0" in r.line()


def test_suite_result_pass_line():
    r = SuiteResult("ok", checked=3)
    assert r.passed and r.line().startswith("PASS ok: 3 checks")
