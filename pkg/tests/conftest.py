from __future__ import annotations

from pathlib import Path

import pytest

from gazectx.simharness import load_fixtures, packaged_fixtures_dir
from gazectx.workspace import Workspace, place_windows, typeset_text

GOLDEN_DIR = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures():
    return load_fixtures(packaged_fixtures_dir())


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return GOLDEN_DIR


def single_window_workspace(text: str) -> Workspace:
    """One straight-ahead window with the given text typeset onto it."""
    win = place_windows(1)[0]
    return Workspace((win,), tuple(typeset_text(win, text)))
