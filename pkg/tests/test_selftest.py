import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abstention import selftest

SLOW = {"report_determinism", "cdt_matches_sampling"}


@pytest.mark.parametrize("name", sorted(selftest.CHECKS))
def test_check_holds_on_random_streams(name):
    check = selftest.CHECKS[name]

    @settings(max_examples=5 if name in SLOW else 40)
    @given(st.integers(0, 2**63 - 1))
    def run(seed):
        check(np.random.Generator(np.random.Philox(seed)))

    run()


def test_run_selftest_reports_failures(monkeypatch):
    def broken(rng):
        raise AssertionError("always")

    monkeypatch.setitem(selftest.CHECKS, "broken", broken)
    lines = []
    failures = selftest.run_selftest(seed=1, trials=2, echo=lines.append)
    assert failures == ["broken"]
    assert any(line.startswith("FAIL broken") for line in lines)
    assert sum(line.startswith("ok") for line in lines) == len(selftest.CHECKS) - 1
