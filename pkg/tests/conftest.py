import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    import suite

    if suite.ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(suite.ACCEPTANCE):
            terminalreporter.write_line(suite.ACCEPTANCE[k])
