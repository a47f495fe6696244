from __future__ import annotations

import pytest

from qaplan.catalog import data_path, load_catalog_file
from qaplan.pddl import load_domain
from qaplan.pipeline import Pipeline, PipelineConfig
from qaplan.reasoner import load_rules
from qaplan.translator import TranslatorConfig

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def catalog():
    return load_catalog_file()


@pytest.fixture(scope="session")
def rules():
    return load_rules(data_path("rules.lp"))


@pytest.fixture(scope="session")
def domain():
    return load_domain()


@pytest.fixture(scope="session")
def fixture_config():
    return TranslatorConfig("fixture", fixtures_path=str(data_path("fixtures.json")))


@pytest.fixture(scope="session")
def pipeline(fixture_config):
    return Pipeline(PipelineConfig(fixture_config))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
