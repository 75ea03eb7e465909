import functools

import pytest

from transzero.core import SearchConfig
from transzero.synthlab import lab_suite, weak_pair_lab

# Collected (name, passed, detail) triples from the acceptance suite, printed
# as one line per criterion in the terminal summary.
_ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def acceptance(name):
    """Decorator for acceptance tests: the wrapped test returns a detail
    string on success; any failure (assert or crash) is recorded as FAIL with
    the reason, so the summary always carries exactly one line per criterion.
    """

    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except AssertionError as exc:
                _ACCEPTANCE_RESULTS.append((name, False, str(exc).splitlines()[0] if str(exc) else "assertion failed"))
                raise
            except Exception as exc:  # noqa: BLE001 - reported then re-raised
                _ACCEPTANCE_RESULTS.append((name, False, f"error: {exc!r}"))
                raise
            _ACCEPTANCE_RESULTS.append((name, True, detail or ""))

        return wrapper

    return deco


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, passed, detail in _ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        terminalreporter.write_line(f"[{status}] {name}{suffix}")


@pytest.fixture(scope="session")
def lab():
    """One standard weak-pair lab shared by read-only tests."""
    world, translator = weak_pair_lab(seed=0)
    return world, translator, lab_suite(world, translator)


@pytest.fixture(scope="session")
def lab_cfg(lab):
    world, _, _ = lab
    return SearchConfig(languages=tuple(world.languages), seed=0)
