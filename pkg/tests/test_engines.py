import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annogate import fixtures
from annogate.catalog import CONF_ID, UNK_ID, BinaryTask, MultiClassTask, Utterance
from annogate.engines import (
    PROB,
    AnnotationOutcome,
    EngineConfig,
    decide_from_answer_probs,
    ensemble_annotate,
    parse_answer_binary,
    parse_answer_multiclass,
    prob_annotate,
    redecide,
    run_prob_after_reasoning,
    run_text_annotation,
)
from annogate.errors import (
    MalformedAnswer,
    MissingProbs,
    NoLegalToken,
    OptionSetMismatch,
    OutOfRangeOption,
)
from annogate.gateway import TokenDistribution
from annogate.prompting import BINARY_TEXT, render_binary
from annogate.stub_server import sha256_text
from conftest import make_endpoint


def binary_task(task_id="b1"):
    return BinaryTask(
        utterance=Utterance(id=task_id, text="how much is the apple plan"),
        candidate="pricing",
    )


def mc_task(task_id="m1", with_unk=True):
    candidates = ["alpha", "bravo", "charlie", "delta"]
    candidates.append(UNK_ID if with_unk else "echo")
    return MultiClassTask(
        utterance=Utterance(id=task_id, text="some client text"),
        candidates=tuple(candidates),
    )


def dist(mapping):
    return TokenDistribution(entries=tuple(sorted(mapping.items(), key=lambda e: -e[1])))


# --- answer parsing -------------------------------------------------------------


def test_parse_binary_yes():
    assert parse_answer_binary("[REASONING] fits [ANSWER] yes") == 1


def test_parse_binary_whitespace_and_case():
    assert parse_answer_binary("blah [ANSWER]\n no ") == 0
    assert parse_answer_binary("[ANSWER] YES") == 1


def test_parse_binary_malformed():
    with pytest.raises(MalformedAnswer):
        parse_answer_binary("... [ANSWER] Maybe")
    with pytest.raises(MalformedAnswer):
        parse_answer_binary("no answer block at all")


def test_parse_binary_uses_last_marker():
    text = "[ANSWER] no is wrong, reconsider [ANSWER] yes"
    assert parse_answer_binary(text) == 1


def test_parse_multiclass_number():
    assert parse_answer_multiclass("[ANSWER] 3", mc_task()) == "charlie"


def test_parse_multiclass_unk_option():
    assert parse_answer_multiclass("[ANSWER] 5", mc_task(with_unk=True)) == UNK_ID


def test_parse_multiclass_out_of_range():
    with pytest.raises(OutOfRangeOption):
        parse_answer_multiclass("[ANSWER] 9", mc_task())


def test_parse_multiclass_requires_number():
    with pytest.raises(MalformedAnswer):
        parse_answer_multiclass("[ANSWER] charlie", mc_task())


# --- prob approach ---------------------------------------------------------------


def test_prob_annotate_renormalizes_and_decides():
    config = EngineConfig(approach=PROB, threshold=0.8)
    outcome = prob_annotate(
        binary_task(), dist({"1": 0.9, "0": 0.05, "m": 0.01}), config
    )
    assert outcome.decision == 1
    assert outcome.answer_probs["1"] == pytest.approx(0.9 / 0.95, abs=1e-12)
    assert outcome.answer_probs["0"] == pytest.approx(0.05 / 0.95, abs=1e-12)
    assert outcome.max_prob == pytest.approx(0.9473684210526316, abs=1e-9)
    # raw values preserved untouched
    assert outcome.raw_token_probs["1"] == 0.9


def test_prob_annotate_below_threshold_abstains():
    config = EngineConfig(approach=PROB, threshold=0.8)
    outcome = prob_annotate(binary_task(), dist({"1": 0.55, "0": 0.45}), config)
    assert outcome.decision == UNK_ID
    assert outcome.max_prob == pytest.approx(0.55)


def test_prob_annotate_tie_prefers_lowest_option():
    config = EngineConfig(approach=PROB, threshold=0.4)
    outcome = prob_annotate(mc_task(), dist({"2": 0.5, "1": 0.5}), config)
    assert outcome.decision == "alpha"


def test_prob_annotate_leading_space_tokens_pool():
    config = EngineConfig(approach=PROB, threshold=0.5)
    outcome = prob_annotate(
        binary_task(), dist({" 1": 0.6, "1": 0.2, "0": 0.1}), config
    )
    assert outcome.decision == 1
    assert outcome.answer_probs["1"] == pytest.approx(0.8 / 0.9, abs=1e-12)


def test_prob_annotate_no_legal_token():
    config = EngineConfig(approach=PROB, threshold=0.5)
    with pytest.raises(NoLegalToken):
        prob_annotate(binary_task(), dist({"yes": 0.9, "no": 0.1}), config)


def test_prob_annotate_unk_candidate_chosen():
    config = EngineConfig(approach=PROB, threshold=0.5)
    outcome = prob_annotate(mc_task(), dist({"5": 0.9, "1": 0.1}), config)
    assert outcome.decision == UNK_ID


def test_answer_probs_sum_to_one():
    config = EngineConfig(approach=PROB, threshold=0.5)
    outcome = prob_annotate(
        mc_task(), dist({"1": 0.3, "2": 0.2, "3": 0.1, "4": 0.05, "5": 0.05}), config
    )
    assert math.fsum(outcome.answer_probs.values()) == pytest.approx(1.0, abs=1e-12)


# --- text approach over the wire ----------------------------------------------------


def test_run_text_annotation_roundtrip(stub, client, catalog):
    task = fixtures.demo_binary_dataset().records[0]
    prompt = render_binary(BINARY_TEXT, task, catalog.resolve(task.candidate))
    stub.add_entry(
        {
            "prompt_sha256": sha256_text(prompt.text),
            "mode": "generate_text",
            "text": "[REASONING] the client asks a price [ANSWER] yes",
        }
    )
    config = EngineConfig(approach="text")
    outcome = run_text_annotation(client, make_endpoint(stub), task, prompt, config)
    assert outcome.decision == 1
    assert "price" in outcome.transcript


def test_text_malformed_policy_unk(stub, client, catalog):
    task = fixtures.demo_binary_dataset().records[0]
    prompt = render_binary(BINARY_TEXT, task, catalog.resolve(task.candidate))
    stub.add_entry(
        {
            "prompt_sha256": sha256_text(prompt.text),
            "mode": "generate_text",
            "text": "[ANSWER] dunno",
        }
    )
    endpoint = make_endpoint(stub)
    with pytest.raises(MalformedAnswer):
        run_text_annotation(
            client, endpoint, task, prompt, EngineConfig(approach="text")
        )
    outcome = run_text_annotation(
        client,
        endpoint,
        task,
        prompt,
        EngineConfig(approach="text", malformed_policy="unk"),
    )
    assert outcome.decision == UNK_ID
    assert "malformed_answer" in outcome.flags


# --- two-stage mode ------------------------------------------------------------------


def test_prob_after_reasoning_two_stages(stub, client, catalog):
    task = fixtures.demo_binary_dataset().records[0]
    prompt = render_binary(BINARY_TEXT, task, catalog.resolve(task.candidate))
    generated = "\n[REASONING] plan prices are listed. [ANSWER] yes"
    stripped = "\n[REASONING] plan prices are listed. "
    stub.add_entry(
        {
            "prompt_sha256": sha256_text(prompt.text),
            "mode": "generate_text",
            "text": generated,
        }
    )
    stage2_prompt = prompt.text + stripped + "[ANSWER]"
    stub.add_entry(
        {
            "prompt_sha256": sha256_text(stage2_prompt),
            "mode": "next_token_distribution",
            "top_tokens": {"1": 0.85, "0": 0.1},
        }
    )
    config = EngineConfig(approach="prob_after_reasoning", threshold=0.6)
    outcome = run_prob_after_reasoning(
        client, make_endpoint(stub), task, prompt, config
    )
    assert outcome.decision == 1
    assert outcome.engine == "prob_after_reasoning"
    assert outcome.stage_transcripts == (generated, stage2_prompt)
    assert outcome.max_prob == pytest.approx(0.85 / 0.95, abs=1e-9)


def test_prob_after_reasoning_without_marker_flags(stub, client, catalog):
    task = fixtures.demo_binary_dataset().records[0]
    prompt = render_binary(BINARY_TEXT, task, catalog.resolve(task.candidate))
    generated = " plain text, no markers anywhere"
    stub.add_entry(
        {
            "prompt_sha256": sha256_text(prompt.text),
            "mode": "generate_text",
            "text": generated,
        }
    )
    stage2_prompt = prompt.text + generated + "[ANSWER]"
    stub.add_entry(
        {
            "prompt_sha256": sha256_text(stage2_prompt),
            "mode": "next_token_distribution",
            "top_tokens": {"0": 0.7, "1": 0.2},
        }
    )
    config = EngineConfig(approach="prob_after_reasoning", threshold=0.5)
    outcome = run_prob_after_reasoning(
        client, make_endpoint(stub), task, prompt, config
    )
    assert outcome.decision == 0
    assert "no_answer_marker" in outcome.flags
    assert "no_reasoning_marker" in outcome.flags


# --- ensembles ------------------------------------------------------------------------


def member(task, probs, model="m"):
    config = EngineConfig(approach=PROB, threshold=0.0)
    return prob_annotate(task, dist(probs), config, model=model)


def test_ensemble_averages():
    task = binary_task()
    a = member(task, {"1": 0.9, "0": 0.1}, model="a")
    b = member(task, {"1": 0.7, "0": 0.3}, model="b")
    outcome = ensemble_annotate(task, [a, b], threshold=0.5)
    assert outcome.answer_probs == {"1": 0.8, "0": 0.2}
    assert outcome.decision == 1
    assert outcome.model == "a+b"
    assert len(outcome.members) == 2
    assert outcome.members[0].answer_probs == a.answer_probs


@pytest.mark.parametrize("copies", [2, 3, 5])
def test_ensemble_idempotent_on_identical_members(copies):
    task = binary_task()
    probs = {"1": 0.63, "0": 0.37}
    members = [member(task, probs, model=f"m{i}") for i in range(copies)]
    outcome = ensemble_annotate(task, members, threshold=0.5)
    assert outcome.answer_probs == members[0].answer_probs
    assert outcome.decision == members[0].decision
    assert outcome.max_prob == members[0].max_prob


def test_ensemble_option_set_mismatch():
    a = member(binary_task(), {"1": 0.9, "0": 0.1})
    b = member(mc_task(), {"1": 0.5, "2": 0.3, "3": 0.1, "4": 0.05, "5": 0.05})
    with pytest.raises(OptionSetMismatch):
        ensemble_annotate(binary_task(), [a, b], threshold=0.5)


def test_ensemble_requires_probs():
    task = binary_task()
    text_outcome = AnnotationOutcome(
        task_id="b1", kind="binary", decision=1, engine="text", model="t"
    )
    with pytest.raises(MissingProbs):
        ensemble_annotate(task, [member(task, {"1": 0.9, "0": 0.1}), text_outcome], 0.5)


def test_ensemble_needs_two_members():
    task = binary_task()
    with pytest.raises(ValueError):
        ensemble_annotate(task, [member(task, {"1": 0.9, "0": 0.1})], 0.5)


# --- invariants -------------------------------------------------------------------------


def test_engines_never_emit_conf():
    with pytest.raises(ValueError):
        AnnotationOutcome(
            task_id="x", kind="binary", decision=CONF_ID, engine="text", model="m"
        )


def test_redecide_reproduces_original():
    config = EngineConfig(approach=PROB, threshold=0.8)
    task = binary_task()
    outcome = prob_annotate(task, dist({"1": 0.9, "0": 0.05}), config)
    again = redecide(outcome, task, 0.8)
    assert again.decision == outcome.decision
    assert again.max_prob == outcome.max_prob


@settings(max_examples=200, deadline=None)
@given(
    p1=st.floats(0.0, 1.0),
    t1=st.floats(0.0, 1.05),
    t2=st.floats(0.0, 1.05),
)
def test_monotone_abstention(p1, t1, t2):
    """Decided at the higher threshold implies decided at the lower one."""
    low, high = sorted((t1, t2))
    probs = {"1": p1, "0": 1.0 - p1}
    task = binary_task()
    decision_high, _ = decide_from_answer_probs(probs, task, high)
    decision_low, _ = decide_from_answer_probs(probs, task, low)
    if decision_high != UNK_ID:
        assert decision_low == decision_high


def test_outcome_record_roundtrip():
    config = EngineConfig(approach=PROB, threshold=0.8)
    task = binary_task()
    outcome = prob_annotate(task, dist({"1": 0.9, "0": 0.05}), config, model="m")
    restored = AnnotationOutcome.from_record(outcome.to_record())
    assert restored == outcome
