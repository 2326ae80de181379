from __future__ import annotations

import json
from pathlib import Path

import pytest

from specforge.gateway import (
    ProviderConfig,
    RawResponse,
    register_scripted_provider,
    unregister_scripted_provider,
)
from specforge.verifier import register_mock_driver, unregister_mock_driver

REPO_ROOT = Path(__file__).resolve().parent.parent
CORPUS_ROOT = REPO_ROOT / "corpus"


def pytest_runtest_logreport(report):
    # one visible PASS/FAIL line per acceptance criterion check
    if "test_acceptance" in report.nodeid and report.when == "call":
        outcome = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        name = report.nodeid.split("::", 1)[1]
        print(f"\nACCEPTANCE {outcome}: {name}")


@pytest.fixture(scope="session")
def corpus_root() -> Path:
    return CORPUS_ROOT


@pytest.fixture(scope="session")
def corpus_manifest() -> dict:
    return json.loads((CORPUS_ROOT / "manifest.json").read_text())


@pytest.fixture(scope="session")
def corpus_texts(corpus_manifest) -> dict[str, str]:
    return {
        entry["id"]: (CORPUS_ROOT / entry["file"]).read_text()
        for entry in corpus_manifest["programs"]
    }


@pytest.fixture(scope="session")
def binsearch_text(corpus_texts) -> str:
    return corpus_texts["binary_search"]


class ScriptedResponses:
    """Queue-backed scripted provider; wraps programs in BEGIN/END tags."""

    def __init__(self, programs: list[str], wrap: bool = True):
        self.programs = programs
        self.wrap = wrap
        self.received: list[list[dict]] = []

    def __call__(self, messages, cfg) -> RawResponse:
        self.received.append(messages)
        index = min(len(self.received) - 1, len(self.programs) - 1)
        text = self.programs[index]
        if self.wrap:
            text = f"BEGIN DAFNY\n{text}\nEND DAFNY"
        return RawResponse(text=text, input_tokens=100, output_tokens=50)


@pytest.fixture
def scripted_provider():
    """Factory registering a scripted provider; unregisters on teardown."""
    registered: list[str] = []

    def make(name: str, programs: list[str], wrap: bool = True, **cfg_kwargs) -> tuple[ProviderConfig, ScriptedResponses]:
        script = ScriptedResponses(programs, wrap=wrap)
        register_scripted_provider(name, script)
        registered.append(name)
        defaults = dict(name=name, kind=f"scripted:{name}", priority=1)
        defaults.update(cfg_kwargs)
        return ProviderConfig(**defaults), script

    yield make
    for name in registered:
        unregister_scripted_provider(name)


@pytest.fixture
def mock_verifier():
    """Factory registering a mock verifier driver; unregisters on teardown."""
    registered: list[str] = []

    def make(name: str, driver):
        register_mock_driver(name, driver)
        registered.append(name)
        return f"mock:{name}"

    yield make
    for name in registered:
        unregister_mock_driver(name)
