import pytest

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    Usage: ``with criterion(n, "title") as note: ...``; ``note(text)`` appends
    a short measured summary to the line.
    """
    lines = request.config.stash[_LINES_KEY]

    class _Recorder:
        def __call__(self, number, title):
            self.number, self.title, self.details = number, title, []
            return self

        def __enter__(self):
            return self.details.append

        def __exit__(self, exc_type, exc, tb):
            status = "PASS" if exc_type is None else "FAIL"
            detail = "; ".join(self.details)
            line = f"[{status}] criterion {self.number}: {self.title}" + (f" ({detail})" if detail else "")
            lines.append(line)
            print(line)
            return False

    return _Recorder()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
