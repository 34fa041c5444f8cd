import json
from pathlib import Path

import httpx
import numpy as np
import pytest

from deltatab.analyze import intra_node_distance
from deltatab.data import from_arrays, read_cells
from deltatab.datasets import csv_path
from deltatab.forest import extract_rule_set, fit_forest, rank_trees
from deltatab.pipeline import prepare_splits
from deltatab.refine import (
    ChatCompletionsClient,
    DatasetMeta,
    Prompt,
    RefinementError,
    RefinerConfig,
    RefinerNetworkError,
    ReplayClient,
    TranscriptWriter,
    build_prompt,
    heuristic_refine,
    leaked_cells,
    query_refiner,
    rule_features,
)
from deltatab.ruledsl import parse_rule, serialize_rule, validate_rule

from conftest import blobs

FIXTURES = Path(__file__).parent / "fixtures"
ADULT_META = DatasetMeta("adult", "binclass", 6, 8, 26048)


@pytest.fixture(scope="module")
def forest_and_rules():
    ds = blobs(n=120, d=3, seed=1)
    f = fit_forest(ds, K=3, seed=0)
    return ds, f, extract_rule_set(f, rank_trees(f, ds))


def stub_prompt(n_features=14, leaf_limit=30):
    return Prompt("meta", "rules", "requirement", n_features, leaf_limit)


class ScriptedClient:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def complete(self, prompt, slot=0, attempt=0):
        self.calls.append((slot, attempt))
        return self.responses.pop(0)


TEMPLATE_JSON = (FIXTURES / "remote_transcript.jsonl").read_text().splitlines()[0]
TEMPLATE_TEXT = json.loads(TEMPLATE_JSON)["response"]["choices"][0]["message"]["content"]


# ---- prompt ----------------------------------------------------------------


def test_prompt_meta_block(forest_and_rules):
    _, _, rs = forest_and_rules
    p = build_prompt(ADULT_META, rs)
    assert '"task_type": "binclass"' in p.text and '"train_size": 26048' in p.text
    assert '"n_num_features": 6' in p.text


def test_prompt_order_and_leaf_limit(forest_and_rules):
    _, _, rs = forest_and_rules
    p = build_prompt(ADULT_META, rs, leaf_limit=17)
    assert p.text == p.meta + "\n" + p.rules + "\n" + p.requirement
    assert p.text.index("# Dataset summary") < p.text.index("# Tree rules") < p.text.index("at most 17 leaves")
    assert p.leaf_limit == 17


def test_included_trees_truncates(forest_and_rules):
    _, _, rs = forest_and_rules
    p = build_prompt(ADULT_META, rs, included_trees=1)
    assert p.text.count("Tree 1 rules:") == 1 and "Tree 2 rules:" not in p.text


def test_prompt_deterministic(forest_and_rules):
    _, _, rs = forest_and_rules
    assert build_prompt(ADULT_META, rs).text == build_prompt(ADULT_META, rs).text


def test_prompt_example_object_parses():
    p = build_prompt(ADULT_META, extract_rule_set(fit_forest(blobs(40), K=1)))
    example = p.requirement.split("shape:\n", 1)[1].split("\nInternal nodes", 1)[0]
    assert parse_rule(example).n_leaves == 3
    assert parse_rule(p.requirement).n_leaves == 3


def test_empty_rule_set_rejected(forest_and_rules):
    _, _, rs = forest_and_rules
    with pytest.raises(ValueError):
        build_prompt(ADULT_META, rs.head(0))


def test_no_feature_names_in_credit_prompt(credit_raw):
    tr, va, _ = prepare_splits(credit_raw, seed=0)
    f = fit_forest(tr, K=5, seed=0)
    p = build_prompt(DatasetMeta.from_dataset(tr.schema, tr), extract_rule_set(f, rank_trees(f, va)))
    for col in tr.schema.columns:
        assert col.name not in p.text


def test_no_whole_cell_tokens_in_rule_lines(credit_raw):
    # categorical codes such as "A11" never appear; numeric cells only as
    # substrings of counts or thresholds, never as standalone tokens
    tr, va, _ = prepare_splits(credit_raw, seed=0)
    f = fit_forest(tr, K=5, seed=0)
    p = build_prompt(DatasetMeta.from_dataset(tr.schema, tr), extract_rule_set(f, rank_trees(f, va)))
    cells = set(read_cells(csv_path("credit"), rows=tr.indices))
    text_cells = {c for c in cells if not c.replace(".", "").isdigit()}
    assert leaked_cells(p.text, text_cells) == set()


def test_leaked_cells_detects_substrings():
    assert leaked_cells("feature_3 <= 0.25", ["0.25", "abc", ""]) == {"0.25"}


# ---- heuristic backend ------------------------------------------------------


def test_heuristic_single_leaf(forest_and_rules):
    ds, _, rs = forest_and_rules
    assert heuristic_refine(rs, ds, leaf_limit=1).n_leaves == 1


def test_heuristic_separates_clusters(forest_and_rules):
    ds, _, rs = forest_and_rules
    r = heuristic_refine(rs, ds, leaf_limit=2)
    assert r.n_leaves == 2 and r.root.feature == 0
    single = parse_rule('{"id": "leaf_1"}')
    assert intra_node_distance(r, ds) < intra_node_distance(single, ds)
    leaf = r.assign(ds.features)
    assert all(len(set(ds.labels[leaf == l])) == 1 for l in range(2))


def test_heuristic_restricted_to_rule_features():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 5))
    ds = from_arrays(X, (X[:, 3] > 0).astype(int))
    rs = extract_rule_set(fit_forest(ds, K=2, seed=0))
    used = set(rule_features(rs).tolist())
    assert set(heuristic_refine(rs, ds, leaf_limit=8).features_used) <= used


def test_heuristic_backend_deterministic_and_valid(forest_and_rules):
    ds, _, rs = forest_and_rules
    cfg = RefinerConfig(n_queries=3, seed=4)
    p = build_prompt(DatasetMeta.from_dataset(ds.schema, ds), rs)
    a = query_refiner(cfg, p, train=ds, rules=rs)
    b = query_refiner(cfg, p, train=ds, rules=rs)
    assert len(a) == 3 and [serialize_rule(r) for r in a] == [serialize_rule(r) for r in b]
    assert all(validate_rule(r, ds.d, 30) == [] for r in a)


def test_heuristic_slots_are_diverse():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 6))
    ds = from_arrays(X, (X[:, 0] + X[:, 1] + 0.5 * rng.normal(size=300) > 0).astype(int))
    rs = extract_rule_set(fit_forest(ds, K=5, seed=0))
    p = build_prompt(DatasetMeta.from_dataset(ds.schema, ds), rs)
    out = query_refiner(RefinerConfig(n_queries=6, heuristic_jitter=0.2), p, train=ds, rules=rs)
    assert len({serialize_rule(r) for r in out}) > 1


def test_config_invariants():
    with pytest.raises(ValueError):
        RefinerConfig(n_queries=0)
    with pytest.raises(ValueError):
        RefinerConfig(leaf_limit=1)


# ---- remote orchestration ----------------------------------------------------


def test_stub_remote_template_rule():
    cfg = RefinerConfig(backend="remote", n_queries=1)
    res = query_refiner(cfg, stub_prompt(), client=ScriptedClient([TEMPLATE_TEXT]))
    assert len(res) == 1 and res[0].n_leaves == 3 and res.retries == [0]


def test_garbage_then_valid_is_retried():
    client = ScriptedClient(["no rule here, sorry", TEMPLATE_TEXT])
    res = query_refiner(RefinerConfig(backend="remote", n_queries=1, max_retries=2), stub_prompt(), client=client)
    assert res.retries == [1] and client.calls == [(0, 0), (0, 1)]
    assert res.responses[0][0] == "no rule here, sorry"


def test_invalid_rule_counts_as_failure():
    # feature 11 is out of range for a 5-feature dataset
    client = ScriptedClient([TEMPLATE_TEXT, TEMPLATE_TEXT])
    with pytest.raises(RefinementError) as e:
        query_refiner(RefinerConfig(backend="remote", n_queries=1, max_retries=1), stub_prompt(n_features=5), client=client)
    assert len(e.value.responses) == 2


def test_concurrent_slots_keep_order():
    replay = ReplayClient(FIXTURES / "remote_transcript.jsonl", check_prompt=False)
    cfg = RefinerConfig(backend="remote", n_queries=3, max_retries=2, concurrency=3)
    res = query_refiner(cfg, stub_prompt(), client=replay)
    assert [r.root.feature for r in res] == [11, 2, 5]


def test_replay_fixture():
    replay = ReplayClient(FIXTURES / "remote_transcript.jsonl", check_prompt=False)
    res = query_refiner(RefinerConfig(backend="remote", n_queries=3, max_retries=2), stub_prompt(), client=replay)
    assert len(res) == 3 and res.retries == [0, 1, 0]
    assert [r.n_leaves for r in res] == [3, 3, 2]


def test_replay_exhausted_raises():
    replay = ReplayClient(FIXTURES / "exhausted_transcript.jsonl", check_prompt=False)
    with pytest.raises(RefinementError):
        query_refiner(RefinerConfig(backend="remote", n_queries=1, max_retries=2), stub_prompt(), client=replay)


def test_replay_prompt_mismatch(tmp_path):
    replay = ReplayClient(FIXTURES / "remote_transcript.jsonl")
    with pytest.raises(RefinerNetworkError):
        replay.complete("a different prompt", 0, 0)


def _chat(content):
    return {"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}


def test_http_client_contract(tmp_path, monkeypatch):
    monkeypatch.setenv("TEST_REFINER_KEY", "sk-test")
    seen = []

    def handler(request: httpx.Request):
        seen.append(request)
        return httpx.Response(200, json=_chat(TEMPLATE_TEXT))

    writer = TranscriptWriter(tmp_path / "t.jsonl")
    c = ChatCompletionsClient("https://example.invalid/v1/chat/completions", "gpt-4o", "TEST_REFINER_KEY",
                              temperature=0.3, transcript=writer, transport=httpx.MockTransport(handler))
    assert c.complete("hello", slot=2, attempt=1) == TEMPLATE_TEXT
    body = json.loads(seen[0].content)
    assert body == {"model": "gpt-4o", "messages": [{"role": "user", "content": "hello"}], "temperature": 0.3}
    assert seen[0].headers["authorization"] == "Bearer sk-test"
    rec = json.loads((tmp_path / "t.jsonl").read_text())
    assert set(rec) >= {"request", "response", "timestamp"} and (rec["slot"], rec["attempt"]) == (2, 1)
    # the recorded exchange replays
    assert ReplayClient(tmp_path / "t.jsonl").complete("hello", 2, 1) == TEMPLATE_TEXT


def test_http_client_retries_with_backoff():
    codes = iter([503, 429, 200])
    sleeps = []

    def handler(request):
        code = next(codes)
        return httpx.Response(code, json=_chat("{}") if code == 200 else {"error": "busy"})

    c = ChatCompletionsClient("https://example.invalid", "m", transport=httpx.MockTransport(handler),
                              backoff=0.5, sleep=sleeps.append)
    assert c.complete("x") == "{}"
    assert sleeps == [0.5, 1.0]


def test_http_client_gives_up_and_fails_fast_on_4xx():
    def down(request):
        raise httpx.ConnectError("refused")

    c = ChatCompletionsClient("https://example.invalid", "m", transport=httpx.MockTransport(down),
                              transport_retries=2, sleep=lambda s: None)
    with pytest.raises(RefinerNetworkError):
        c.complete("x")
    calls = []

    def unauthorized(request):
        calls.append(1)
        return httpx.Response(401, json={"error": "bad key"})

    c = ChatCompletionsClient("https://example.invalid", "m", transport=httpx.MockTransport(unauthorized), sleep=lambda s: None)
    with pytest.raises(RefinerNetworkError):
        c.complete("x")
    assert len(calls) == 1


def test_key_not_in_transcript(tmp_path, monkeypatch):
    monkeypatch.setenv("TEST_REFINER_KEY", "sk-secret-value")
    c = ChatCompletionsClient("https://example.invalid", "m", "TEST_REFINER_KEY",
                              transcript=TranscriptWriter(tmp_path / "t.jsonl"),
                              transport=httpx.MockTransport(lambda r: httpx.Response(200, json=_chat("{}"))))
    c.complete("x")
    assert "sk-secret-value" not in (tmp_path / "t.jsonl").read_text()
