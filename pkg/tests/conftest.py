def pytest_terminal_summary(terminalreporter):
    """Echo acceptance-criterion verdict lines past output capture."""
    try:
        from tests import test_acceptance
    except ImportError:
        import test_acceptance
    if test_acceptance.REPORT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.REPORT_LINES:
            terminalreporter.write_line(line)
