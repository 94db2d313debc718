import os

import hypothesis


hypothesis.settings.register_profile("fast", max_examples=10)
hypothesis.settings.register_profile("ci", derandomize=True, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False)


def pytest_configure(config):
    hypothesis.settings.load_profile(os.environ.get("NLB_HYPOTHESIS_PROFILE", "default"))
