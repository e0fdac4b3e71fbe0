"""Shared fixtures.

Every ParameterSchema built anywhere during the run is independently re-checked
against the JSON Schema 2020-12 meta-schema; a violation fails loudly at the
point of construction and is also tallied for the acceptance suite.
"""

from __future__ import annotations

import jsonschema
import pytest

import toolbus.core as core
from toolbus.executor import Executor
from toolbus.testkit import start_mock_mcp, start_mock_openapi

SCHEMA_CHECKS = {"count": 0, "failures": []}


@pytest.fixture(scope="session", autouse=True)
def schema_meta_checks():
    original = core.ParameterSchema.from_dict.__func__

    def checked(cls, root):
        schema = original(cls, root)
        SCHEMA_CHECKS["count"] += 1
        try:
            jsonschema.Draft202012Validator.check_schema(schema.root)
        except jsonschema.SchemaError as exc:  # pragma: no cover - must never happen
            SCHEMA_CHECKS["failures"].append(str(exc))
            raise
        return schema

    core.ParameterSchema.from_dict = classmethod(checked)
    yield SCHEMA_CHECKS
    core.ParameterSchema.from_dict = classmethod(original)


@pytest.fixture(scope="module")
def mock_openapi():
    server = start_mock_openapi()
    yield server
    server.stop()


@pytest.fixture(scope="module")
def mock_mcp():
    server = start_mock_mcp()
    yield server
    server.stop()


@pytest.fixture
def executor():
    ex = Executor()
    yield ex
    ex.shutdown()


@pytest.fixture(scope="module")
def module_executor():
    ex = Executor()
    yield ex
    ex.shutdown()
