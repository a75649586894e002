"""
Shared pytest setup: import the package from the source checkout and gate
the long scenario runs behind INFOSEEK_SLOW=1.
"""
import os
import sys

import pytest

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: full scenario runs (enable with INFOSEEK_SLOW=1)"
    )


def pytest_collection_modifyitems(config, items):
    if os.environ.get("INFOSEEK_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set INFOSEEK_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def project_root():
    """Get the project root directory."""
    return PROJECT_ROOT
