"""Obtaining refined partitioning rules from a forest's rule set."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..cart import CLASSIFICATION, TreeParams, build_tree, parse_rule_text, task_kind
from ..data import Dataset
from ..forest import RuleSet
from ..ruledsl import RefinedRule, RuleParseError, parse_rule, rule_from_tree, serialize_rule, validate_rule
from .client import ChatCompletionsClient, RefinerNetworkError, ReplayClient, TranscriptWriter
from .prompt import DatasetMeta, Prompt, build_prompt, leaked_cells

__all__ = [
    "ChatCompletionsClient",
    "DatasetMeta",
    "Prompt",
    "RefinementError",
    "RefinementResult",
    "RefinerConfig",
    "RefinerNetworkError",
    "ReplayClient",
    "TranscriptWriter",
    "build_prompt",
    "heuristic_refine",
    "leaked_cells",
    "make_client",
    "query_refiner",
    "rule_features",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RefinerConfig:
    backend: str = "heuristic"  # heuristic | remote | replay
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.7
    timeout: float = 60.0
    n_queries: int = 10
    max_retries: int = 3
    transport_retries: int = 3
    backoff: float = 1.0
    leaf_limit: int = 30
    included_trees: int = 10
    concurrency: int = 1
    seed: int = 0
    heuristic_jitter: float = 0.05
    heuristic_min_leaf: int = 5
    transcript: str | None = None  # record remote exchanges here
    replay: str | None = None  # serve responses from this transcript
    fallback_to_heuristic: bool = False

    def __post_init__(self):
        if self.n_queries < 1:
            raise ValueError("n_queries must be >= 1")
        if self.leaf_limit < 2:
            raise ValueError("leaf_limit must be >= 2")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backend not in ("heuristic", "remote", "replay"):
            raise ValueError(f"unknown refiner backend {self.backend!r}")

    def to_dict(self) -> dict:
        return asdict(self)


class RefinementError(RuntimeError):
    def __init__(self, message: str, responses: list[str]):
        super().__init__(message)
        self.responses = responses


@dataclass
class RefinementResult:
    rules: list[RefinedRule]
    retries: list[int]  # failed attempts before success, per slot
    responses: list[list[str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def __getitem__(self, i):
        return self.rules[i]


def rule_features(rules: RuleSet) -> np.ndarray:
    """Feature indices referenced anywhere in the rule set."""
    used: set[int] = set()
    for text in rules.rules:
        stack = [parse_rule_text(text)]
        while stack:
            n = stack.pop()
            if "feature" in n:
                used.add(n["feature"])
                stack += [n["left"], n["right"]]
    return np.array(sorted(used), dtype=np.int64)


def heuristic_refine(
    rules: RuleSet,
    train: Dataset,
    leaf_limit: int = 30,
    seed: int = 0,
    jitter: float = 0.0,
    min_leaf: int = 5,
) -> RefinedRule:
    """Offline stand-in for the remote refiner.

    Fits one CART on the whole training set, restricted to the features the
    rule set mentions and capped at ``leaf_limit`` leaves, then drops its
    predictions. ``jitter`` > 0 lets ``seed`` choose among near-best splits.
    """
    if train.n == 0:
        raise ValueError("training set is empty")
    if leaf_limit <= 1:
        return parse_rule('{"id": "leaf_1"}')
    allowed = rule_features(rules) if len(rules) else None
    if allowed is not None and len(allowed) == 0:
        allowed = None
    kind = task_kind(train.task)
    params = TreeParams(max_depth=leaf_limit, min_leaf=min_leaf, max_leaf_nodes=leaf_limit)
    tree = build_tree(
        train.features,
        train.labels,
        kind,
        params,
        n_classes=train.n_classes if kind == CLASSIFICATION else None,
        rng=np.random.default_rng(seed),
        split_jitter=jitter,
        allowed_features=allowed,
    )
    return rule_from_tree(tree)


def make_client(cfg: RefinerConfig, transport=None):
    if cfg.backend == "replay" or cfg.replay:
        if not cfg.replay:
            raise ValueError("replay backend needs a transcript path")
        return ReplayClient(cfg.replay)
    transcript = TranscriptWriter(cfg.transcript) if cfg.transcript else None
    return ChatCompletionsClient(
        cfg.endpoint,
        cfg.model,
        cfg.api_key_env,
        cfg.temperature,
        cfg.timeout,
        cfg.transport_retries,
        cfg.backoff,
        transcript=transcript,
        transport=transport,
    )


def query_refiner(
    cfg: RefinerConfig,
    prompt: Prompt,
    client=None,
    train: Dataset | None = None,
    rules: RuleSet | None = None,
) -> RefinementResult:
    """Collect exactly ``cfg.n_queries`` valid rules.

    Each slot re-asks with the same prompt until a response parses and
    validates, up to ``cfg.max_retries`` extra attempts.
    """
    if cfg.backend == "heuristic":
        if train is None or rules is None:
            raise ValueError("heuristic backend needs the training set and rule set")
        return _heuristic_slots(cfg, prompt, train, rules)
    if client is None:
        client = make_client(cfg)

    def run_slot(slot: int):
        responses: list[str] = []
        for attempt in range(cfg.max_retries + 1):
            text = client.complete(prompt.text, slot=slot, attempt=attempt)
            responses.append(text)
            try:
                rule = parse_rule(text)
            except RuleParseError as exc:
                log.info("slot %d attempt %d: unparseable response (%s)", slot, attempt, exc)
                continue
            problems = validate_rule(rule, prompt.n_features, prompt.leaf_limit)
            if problems:
                log.info("slot %d attempt %d: invalid rule (%s)", slot, attempt, "; ".join(problems))
                continue
            return rule, attempt, responses
        raise RefinementError(f"slot {slot}: no valid rule after {cfg.max_retries + 1} attempts", responses)

    slots = range(cfg.n_queries)
    if cfg.concurrency > 1:
        with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
            done = list(pool.map(run_slot, slots))
    else:
        done = [run_slot(s) for s in slots]
    return RefinementResult([d[0] for d in done], [d[1] for d in done], [d[2] for d in done])


def _heuristic_slots(cfg: RefinerConfig, prompt: Prompt, train: Dataset, rules: RuleSet) -> RefinementResult:
    out, texts = [], []
    shown = rules.head(cfg.included_trees)
    for slot in range(cfg.n_queries):
        rule = heuristic_refine(
            shown,
            train,
            leaf_limit=prompt.leaf_limit,
            seed=cfg.seed * 1000 + slot,
            jitter=0.0 if slot == 0 else cfg.heuristic_jitter,
            min_leaf=cfg.heuristic_min_leaf,
        )
        text = serialize_rule(rule)
        # same acceptance path as remote responses
        rule = parse_rule(text)
        problems = validate_rule(rule, prompt.n_features, prompt.leaf_limit)
        if problems:
            raise RefinementError(f"heuristic rule invalid: {problems}", [text])
        out.append(rule)
        texts.append([text])
    return RefinementResult(out, [0] * len(out), texts)
