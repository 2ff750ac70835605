"""The marimo notebook loads and exposes its app."""

import importlib.util
from pathlib import Path

import marimo

NOTEBOOK = Path(__file__).parent.parent / "notebooks" / "migration_analysis.py"


def test_notebook_defines_an_app():
    found = importlib.util.spec_from_file_location("migration_analysis", NOTEBOOK)
    module = importlib.util.module_from_spec(found)
    found.loader.exec_module(module)
    assert isinstance(module.app, marimo.App)
