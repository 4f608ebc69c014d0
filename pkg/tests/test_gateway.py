import math

import pytest

from annogate.errors import (
    EndpointRefused,
    MalformedResponse,
    MissingLogprobs,
    TransportError,
)
from annogate.gateway import (
    GENERATE_TEXT,
    NEXT_TOKEN_DISTRIBUTION,
    CompletionRequest,
    GatewayClient,
    ModelEndpoint,
)
from annogate.stub_server import sha256_text

from conftest import make_endpoint


def script_text(stub, prompt, text, **extra):
    stub.add_entry(
        {
            "prompt_sha256": sha256_text(prompt),
            "mode": "generate_text",
            "text": text,
            **extra,
        }
    )


def script_distribution(stub, prompt, top_tokens, **extra):
    stub.add_entry(
        {
            "prompt_sha256": sha256_text(prompt),
            "mode": "next_token_distribution",
            "top_tokens": top_tokens,
            **extra,
        }
    )


def test_complete_text_echoes_script(stub, client, endpoint):
    script_text(stub, "ping", "[ANSWER] yes")
    request = CompletionRequest(prompt="ping", mode=GENERATE_TEXT)
    assert client.complete_text(endpoint, request) == "[ANSWER] yes"


def test_retry_then_success_records_three_attempts(stub, client):
    script_text(stub, "flaky", "ok", fail_first=2)
    endpoint = make_endpoint(stub, retries=3)
    request = CompletionRequest(prompt="flaky", mode=GENERATE_TEXT)
    assert client.complete_text(endpoint, request) == "ok"
    assert stub.request_count(sha256_text("flaky")) == 3


def test_no_retries_surfaces_transport_error(stub, client):
    script_text(stub, "flaky", "ok", fail_first=5)
    endpoint = make_endpoint(stub, retries=0)
    request = CompletionRequest(prompt="flaky", mode=GENERATE_TEXT)
    with pytest.raises(TransportError):
        client.complete_text(endpoint, request)
    assert stub.request_count(sha256_text("flaky")) == 1


def test_backoff_delays_monotone(stub):
    delays = []
    client = GatewayClient(sleep=delays.append, backoff_base=0.1)
    script_text(stub, "flaky", "ok", fail_first=3)
    endpoint = make_endpoint(stub, retries=3)
    client.complete_text(endpoint, CompletionRequest(prompt="flaky"))
    assert delays == sorted(delays)
    assert len(delays) == 3


def test_unscripted_prompt_refused(stub, client, endpoint):
    request = CompletionRequest(prompt="never scripted", mode=GENERATE_TEXT)
    with pytest.raises(EndpointRefused):
        client.complete_text(endpoint, request)


def test_distribution_from_linear_probs(stub, client, endpoint):
    script_distribution(stub, "p", {"1": 0.9, "0": 0.1})
    request = CompletionRequest(prompt="p", mode=NEXT_TOKEN_DISTRIBUTION)
    dist = client.next_token_distribution(endpoint, request)
    assert dist.as_dict() == pytest.approx({"1": 0.9, "0": 0.1})
    assert dist.argmax == "1"


def test_distribution_mode_forces_single_token():
    request = CompletionRequest(
        prompt="p", mode=NEXT_TOKEN_DISTRIBUTION, max_new_tokens=64
    )
    assert request.max_new_tokens == 1


def test_logprobs_exponentiate_to_linear_probs(stub, client, endpoint):
    stub.add_entry(
        {
            "prompt_sha256": sha256_text("lp"),
            "mode": "next_token_distribution",
            "top_logprobs": {"1": -0.10536, "0": -2.30259},
        }
    )
    request = CompletionRequest(prompt="lp", mode=NEXT_TOKEN_DISTRIBUTION)
    dist = client.next_token_distribution(endpoint, request).as_dict()
    assert dist["1"] == pytest.approx(0.9, abs=1e-5)
    assert dist["0"] == pytest.approx(0.1, abs=1e-5)


def test_missing_logprobs(stub, client, endpoint):
    script_text(stub, "textonly", "some generated text")
    request = CompletionRequest(prompt="textonly", mode=NEXT_TOKEN_DISTRIBUTION)
    with pytest.raises(MissingLogprobs):
        client.next_token_distribution(endpoint, request)


def test_positive_logprob_is_malformed(stub, client, endpoint):
    stub.add_entry(
        {
            "prompt_sha256": sha256_text("bad"),
            "mode": "next_token_distribution",
            "top_logprobs": {"1": 0.25},  # exp(0.25) > 1
        }
    )
    request = CompletionRequest(prompt="bad", mode=NEXT_TOKEN_DISTRIBUTION)
    with pytest.raises(MalformedResponse):
        client.next_token_distribution(endpoint, request)


def test_oversum_distribution_is_malformed(stub, client, endpoint):
    stub.add_entry(
        {
            "prompt_sha256": sha256_text("oversum"),
            "mode": "next_token_distribution",
            "top_logprobs": {"1": math.log(0.7), "0": math.log(0.7)},
        }
    )
    request = CompletionRequest(prompt="oversum", mode=NEXT_TOKEN_DISTRIBUTION)
    with pytest.raises(MalformedResponse):
        client.next_token_distribution(endpoint, request)


def test_greedy_text_matches_scripted_argmax(stub, client, endpoint):
    """Distribution-only entries answer text requests with the argmax token."""
    script_distribution(stub, "both", {"1": 0.8, "0": 0.2})
    text = client.complete_text(
        endpoint, CompletionRequest(prompt="both", mode=GENERATE_TEXT)
    )
    dist = client.next_token_distribution(
        endpoint, CompletionRequest(prompt="both", mode=NEXT_TOKEN_DISTRIBUTION)
    )
    assert text == dist.argmax


def test_embeddings_normalized_and_deterministic(stub, client, endpoint):
    vectors = client.embed_texts(endpoint, ["hello world", "hello world", "other"])
    assert vectors[0] == vectors[1]
    assert vectors[0] != vectors[2]
    assert len(vectors[0]) == 16  # stub default dimension


def test_endpoint_validation():
    with pytest.raises(ValueError):
        ModelEndpoint(base_url="http://x", model="m", timeout=0)
    with pytest.raises(ValueError):
        ModelEndpoint(base_url="http://x", model="m", max_retries=-1)


def test_rerank_scores_roundtrip(stub, client, endpoint):
    stub.add_entry(
        {
            "query_sha256": sha256_text("find me"),
            "mode": "rerank",
            "scores": [0.1, 0.9, 0.5],
        }
    )
    scores = client.rerank_scores(endpoint, "find me", ["a", "b", "c"])
    assert scores == [0.1, 0.9, 0.5]
