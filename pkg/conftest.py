"""
Global pytest configuration for the project.
"""

import sys
from pathlib import Path

import pytest

project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

# Settings a developer shell or .env may carry
LAB_ENV_VARS = (
    "BRWTIE_WORKERS",
    "BRWTIE_LOG_LEVEL",
    "BRWTIE_LOG_FORMAT",
)


@pytest.fixture(autouse=True)
def clean_lab_environment(monkeypatch):
    """Run every test with the built-in defaults."""
    for name in LAB_ENV_VARS:
        monkeypatch.delenv(name, raising=False)
