AC_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if AC_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(AC_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
