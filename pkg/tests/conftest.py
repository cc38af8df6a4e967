"""Shared test hooks: collects acceptance scorecard lines and prints them in
the terminal summary, where output capture cannot swallow them."""

_scorecard: list[str] = []


def record_scorecard(text: str) -> None:
    _scorecard.append(text)


def pytest_terminal_summary(terminalreporter):
    if _scorecard:
        terminalreporter.section("acceptance scorecard")
        for line in _scorecard:
            terminalreporter.write_line(line)
