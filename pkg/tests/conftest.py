"""Shared fixtures: demo catalog/datasets and stub endpoints."""

from __future__ import annotations

import pytest

from annogate import fixtures
from annogate.gateway import GatewayClient, ModelEndpoint
from annogate.stub_server import StubServer


@pytest.fixture(scope="session")
def catalog():
    return fixtures.demo_catalog()


@pytest.fixture(scope="session")
def binary_dataset():
    return fixtures.demo_binary_dataset()


@pytest.fixture()
def stub():
    """Fresh scripted stub endpoint; script entries added per test."""
    server = StubServer()
    server.start()
    yield server
    server.stop()


@pytest.fixture()
def client():
    # No real backoff sleeping in tests.
    return GatewayClient(sleep=lambda _: None)


def make_endpoint(stub: StubServer, retries: int = 2) -> ModelEndpoint:
    return ModelEndpoint(
        base_url=stub.url, model="stub-model", timeout=5.0, max_retries=retries
    )


@pytest.fixture()
def endpoint(stub):
    return make_endpoint(stub)
