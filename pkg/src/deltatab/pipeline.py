"""The end-to-end training pipeline shared by the CLI and the ablation runner."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

from .cart import TreeParams
from .correct import DEFAULT_ETA_GRID, DeltaModel, default_loss, default_net_params, fit_delta_model
from .data import Dataset, evaluate, fit_stats, preprocess, split
from .forest import Forest, RuleSet, default_forest_params, extract_rule_set, fit_forest, rank_trees
from .refine import DatasetMeta, Prompt, RefinementResult, RefinerConfig, build_prompt, query_refiner

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    K: int = 100
    forest_params: TreeParams | None = None  # None -> task default
    bootstrap: bool = True
    refiner: RefinerConfig = field(default_factory=RefinerConfig)
    net_params: TreeParams = field(default_factory=default_net_params)
    eta_grid: tuple[float, ...] = DEFAULT_ETA_GRID
    loss: str | None = None
    seed: int = 0
    n_jobs: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["refiner"] = self.refiner.to_dict()
        return d


@dataclass
class PipelineResult:
    model: DeltaModel
    forest: Forest
    ranked: RuleSet  # every tree's rules, best validation score first
    prompt: Prompt
    refinement: RefinementResult


def prepare_splits(raw: Dataset, ratios: Sequence[float] = (0.64, 0.16, 0.2), seed: int = 0):
    """Split a raw dataset and preprocess all parts with train statistics."""
    tr, va, te = split(raw, ratios, seed)
    stats = fit_stats(tr)
    return preprocess(tr, stats), preprocess(va, stats), preprocess(te, stats)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage label
        raise StageError(name, exc) from exc


def run_pipeline(train: Dataset, val: Dataset, cfg: PipelineConfig, client=None) -> PipelineResult:
    params = cfg.forest_params or default_forest_params(train.task)
    forest = _stage("forest", fit_forest, train, cfg.K, params, cfg.seed, cfg.bootstrap, cfg.n_jobs)
    ranked = _stage("rules", lambda: extract_rule_set(forest, rank_trees(forest, val)))
    meta = DatasetMeta.from_dataset(train.schema, train)
    prompt = _stage("prompt", build_prompt, meta, ranked, cfg.refiner.leaf_limit, cfg.refiner.included_trees)
    refinement = _stage("refine", _refine, cfg.refiner, prompt, client, train, ranked)
    model = _stage(
        "correct",
        fit_delta_model,
        forest,
        train,
        val,
        refinement.rules,
        cfg.net_params,
        cfg.eta_grid,
        cfg.loss or default_loss(train.task),
        cfg.seed,
        cfg.n_jobs,
    )
    log.info("selected eta=%.1f over %d rules", model.eta, len(refinement))
    return PipelineResult(model, forest, ranked, prompt, refinement)


def _refine(rcfg: RefinerConfig, prompt: Prompt, client, train: Dataset, ranked: RuleSet) -> RefinementResult:
    try:
        return query_refiner(rcfg, prompt, client=client, train=train, rules=ranked)
    except Exception as exc:
        if rcfg.backend == "heuristic" or not rcfg.fallback_to_heuristic:
            raise
        log.warning("refiner failed (%s); falling back to the heuristic backend", exc)
        return query_refiner(replace(rcfg, backend="heuristic"), prompt, train=train, rules=ranked)


def score(model, data: Dataset):
    return evaluate(model.predict(data.features), data.labels, data.task)
