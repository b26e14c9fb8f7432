# acceptance verdicts are collected here and echoed in the terminal summary,
# so they show up even when pytest captures stdout
VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
