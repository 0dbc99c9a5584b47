import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spoaudit.analyze import analyze_app  # noqa: E402
from spoaudit.taxonomy import load_taxonomy  # noqa: E402
from oracle import corpus_apps  # noqa: E402


@pytest.fixture(scope="session")
def tax():
    return load_taxonomy()


@pytest.fixture(scope="session")
def corpus_results(tax):
    """Analysis of every fixture app, computed once per session."""
    return {d.name: analyze_app(d, tax) for d in corpus_apps()}


def write_app(root: Path, files: dict) -> Path:
    for rel, text in files.items():
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if not isinstance(text, str):
            text = json.dumps(text)
        p.write_text(text, encoding="utf-8")
    return root


@pytest.fixture
def make_app(tmp_path):
    counter = iter(range(10_000))

    def _make(files: dict, name: str | None = None) -> Path:
        return write_app(tmp_path / (name or f"app{next(counter)}"), files)

    return _make


def one_page(js: str, wxml: str = "<view/>", **extra) -> dict:
    files = {"app.json": {"pages": ["pages/index/index"]}, "app.js": "App({})\n",
             "pages/index/index.js": js, "pages/index/index.wxml": wxml}
    files.update(extra)
    return files
