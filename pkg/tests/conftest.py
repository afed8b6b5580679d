import builders


def pytest_terminal_summary(terminalreporter):
    if not builders.CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in builders.CRITERIA:
        terminalreporter.write_line(line)
