"""Command-line entry point: train, eval, ablate, distance, fewshot-sweep."""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, kernels
from .analyze import VARIANTS, AblationConfig, ablation_csv, ablation_table, intra_node_distance, run_ablation
from .cart import TreeParams
from .correct import DEFAULT_ETA_GRID, LOSS_KINDS, DeltaModel
from .data import (
    DataParseError,
    Dataset,
    PreprocessStats,
    Schema,
    SchemaError,
    evaluate,
    fit_stats,
    load_csv,
    load_schema,
    preprocess,
    split,
    subsample_fewshot,
)
from .datasets import convert_blood
from .forest import default_forest_params
from .pipeline import PipelineConfig, PipelineResult, StageError, prepare_splits, run_pipeline
from .refine import RefinementError, RefinerConfig, RefinerNetworkError
from .ruledsl import RuleParseError, serialize_rule

log = logging.getLogger("deltatab")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_REFINER, EXIT_INTERNAL = 0, 1, 2, 3, 4
MODEL_FORMAT = "deltatab.model-file/1"


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# ---- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    csv: str
    schema: str
    ratios: tuple[float, float, float] = (0.64, 0.16, 0.2)
    seed: int = 0
    K: int = 100
    forest_params: TreeParams | None = None
    n_jobs: int = 1
    refiner: RefinerConfig = field(default_factory=RefinerConfig)
    eta_grid: tuple[float, ...] = DEFAULT_ETA_GRID
    loss: str | None = None
    net_params: TreeParams = field(default_factory=lambda: PipelineConfig().net_params)
    fewshot: int | None = None
    output_dir: str = "runs/latest"

    def validate(self) -> "RunConfig":
        for p in (self.csv, self.schema):
            if not Path(p).is_file():
                raise ConfigError(f"file not found: {p}")
        if self.refiner.replay and not Path(self.refiner.replay).is_file():
            raise ConfigError(f"transcript not found: {self.refiner.replay}")
        if self.loss is not None and self.loss not in LOSS_KINDS:
            raise ConfigError(f"loss must be one of {LOSS_KINDS}")
        if not self.eta_grid or any(e <= 0 for e in self.eta_grid):
            raise ConfigError("eta grid must hold positive values")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.fewshot is not None and self.fewshot < 1:
            raise ConfigError("fewshot must be >= 1")
        return self

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            K=self.K,
            forest_params=self.forest_params,
            refiner=self.refiner,
            net_params=self.net_params,
            eta_grid=self.eta_grid,
            loss=self.loss,
            seed=self.seed,
            n_jobs=self.n_jobs,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["refiner"] = self.refiner.to_dict()
        return d

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _floats(s: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in s.replace(" ", "").split(",") if x)
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {s!r}") from None


def _max_features(s: str):
    if s in ("", "none", "None"):
        return None
    return int(s) if s.isdigit() else s


def _tree_params(sec, base: TreeParams) -> TreeParams:
    kw = {}
    for key in ("max_depth", "min_leaf", "max_leaf_nodes"):
        if key in sec:
            kw[key] = sec.getint(key)
    if "max_features" in sec:
        kw["max_features"] = _max_features(sec["max_features"])
    return replace(base, **kw)


_REFINER_TYPES = {f: type(getattr(RefinerConfig(), f)) for f in RefinerConfig.__dataclass_fields__}


def read_config(path: str | Path) -> dict:
    """Parse an INI run configuration into RunConfig keyword arguments."""
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise ConfigError(f"config file not found: {path}")
    out: dict = {}
    base = Path(path).resolve().parent
    try:
        if cp.has_section("data"):
            s = cp["data"]
            for key in ("csv", "schema"):
                if key in s:
                    out[key] = str((base / s[key]).resolve())
            if "ratios" in s:
                out["ratios"] = _floats(s["ratios"])
            if "seed" in s:
                out["seed"] = s.getint("seed")
            if "fewshot" in s:
                out["fewshot"] = s.getint("fewshot")
        if cp.has_section("forest"):
            s = cp["forest"]
            if "K" in s:
                out["K"] = s.getint("K")
            if "n_jobs" in s:
                out["n_jobs"] = s.getint("n_jobs")
            if any(k in s for k in ("max_depth", "min_leaf", "max_leaf_nodes", "max_features")):
                out["forest_params_section"] = dict(s)
        if cp.has_section("refiner"):
            s = cp["refiner"]
            rk = {}
            for key, val in s.items():
                if key in ("api_key", "key", "token"):
                    raise ConfigError("API keys are read from the environment variable named by api_key_env")
                if key not in _REFINER_TYPES:
                    raise ConfigError(f"[refiner] unknown key {key!r}")
                t = _REFINER_TYPES[key]
                if t is bool:
                    rk[key] = s.getboolean(key)
                elif t is int:
                    rk[key] = s.getint(key)
                elif t is float:
                    rk[key] = s.getfloat(key)
                elif key in ("transcript", "replay"):
                    rk[key] = str((base / val).resolve())
                else:
                    rk[key] = val
            out["refiner_kwargs"] = rk
        if cp.has_section("correct"):
            s = cp["correct"]
            if "eta_grid" in s:
                out["eta_grid"] = _floats(s["eta_grid"])
            if "loss" in s:
                out["loss"] = s["loss"]
            if any(k in s for k in ("max_depth", "min_leaf", "max_leaf_nodes", "max_features")):
                out["net_params"] = _tree_params(s, PipelineConfig().net_params)
        if cp.has_section("run") and "output_dir" in cp["run"]:
            out["output_dir"] = cp["run"]["output_dir"]
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc
    return out


def build_run_config(args: argparse.Namespace) -> RunConfig:
    kw = read_config(args.config) if getattr(args, "config", None) else {}
    fsec = kw.pop("forest_params_section", None)
    rk = kw.pop("refiner_kwargs", {})
    flag_map = {
        "csv": "csv", "schema": "schema", "seed": "seed", "K": "K", "n_jobs": "n_jobs",
        "fewshot": "fewshot", "out": "output_dir", "loss": "loss",
    }
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            kw[key] = v
    if getattr(args, "ratios", None):
        kw["ratios"] = _floats(args.ratios)
    if getattr(args, "eta_grid", None):
        kw["eta_grid"] = _floats(args.eta_grid)
    for flag in ("backend", "endpoint", "model", "api_key_env", "n_queries", "max_retries", "leaf_limit",
                 "included_trees", "temperature", "concurrency", "transcript", "replay"):
        v = getattr(args, flag, None)
        if v is not None:
            rk[flag] = v
    if getattr(args, "fallback_to_heuristic", False):
        rk["fallback_to_heuristic"] = True
    if "csv" not in kw or "schema" not in kw:
        raise ConfigError("a dataset is required: pass --csv and --schema or a config file with a [data] section")
    if rk.get("replay") and "backend" not in rk:
        rk["backend"] = "replay"
    rk.setdefault("seed", kw.get("seed", 0))
    try:
        refiner = RefinerConfig(**rk)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"refiner: {exc}") from exc
    if len(kw.get("ratios", (0.64, 0.16, 0.2))) != 3:
        raise ConfigError("ratios must have three values")
    kw["ratios"] = tuple(kw.get("ratios", (0.64, 0.16, 0.2)))
    cfg = RunConfig(refiner=refiner, **kw)
    if fsec is not None:
        schema = load_schema(cfg.schema)
        cp = configparser.ConfigParser()
        cp.read_dict({"forest": fsec})
        cfg = replace(cfg, forest_params=_tree_params(cp["forest"], default_forest_params(schema.task)))
    return cfg.validate()


# ---- persistence -----------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def model_document(model: DeltaModel, schema: Schema, stats: PreprocessStats, cfg: RunConfig) -> dict:
    return {
        "format": MODEL_FORMAT,
        "schema": schema.to_dict(),
        "schema_hash": schema.hash(),
        "stats": stats.to_dict(),
        "split": {"ratios": list(cfg.ratios), "seed": cfg.seed},
        "fewshot": cfg.fewshot,
        "model": model.to_dict(schema.hash()),
    }


def load_model_file(path: str | Path):
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise ConfigError(f"{path}: not a model file")
    return doc, DeltaModel.from_dict(doc["model"]), Schema.from_dict(doc["schema"]), PreprocessStats.from_dict(doc["stats"])


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_transcript(path: Path, result: PipelineResult, cfg: RefinerConfig) -> None:
    """Record non-network exchanges (heuristic or replayed) in transcript format."""
    with open(path, "w", encoding="utf-8") as f:
        for slot, texts in enumerate(result.refinement.responses):
            for attempt, text in enumerate(texts):
                rec = {
                    "request": {"model": cfg.model, "messages": [{"role": "user", "content": result.prompt.text}], "temperature": cfg.temperature},
                    "response": {"choices": [{"message": {"role": "assistant", "content": text}}]},
                    "backend": cfg.backend,
                    "slot": slot,
                    "attempt": attempt,
                }
                f.write(json.dumps(rec, sort_keys=True) + "\n")


# ---- data helpers ----------------------------------------------------------


def load_run_data(cfg: RunConfig):
    schema = load_schema(cfg.schema)
    raw = load_csv(cfg.csv, schema)
    tr_raw, va_raw, te_raw = split(raw, cfg.ratios, cfg.seed)
    stats = fit_stats(tr_raw)
    train, val, test = (preprocess(p, stats) for p in (tr_raw, va_raw, te_raw))
    if cfg.fewshot is not None:
        train = fewshot_train(train, cfg.fewshot, cfg.seed)
        # with only n labelled rows available, eta is chosen on those rows
        val = train
    return schema, stats, train, val, test


def fewshot_train(train: Dataset, n: int, seed: int) -> Dataset:
    if n > train.n:
        raise DataError(f"fewshot n={n} exceeds the {train.n} training rows")
    return subsample_fewshot(train, n, seed)


# ---- commands --------------------------------------------------------------


def cmd_train(cfg: RunConfig, client=None) -> dict:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    schema, stats, train, val, test = load_run_data(cfg)
    rcfg = cfg.refiner
    transcript = out / "transcript.jsonl"
    if rcfg.backend == "remote":
        transcript.unlink(missing_ok=True)
        rcfg = replace(rcfg, transcript=str(transcript))
    pcfg = replace(cfg.pipeline(), refiner=rcfg)
    result = run_pipeline(train, val, pcfg, client=client)
    if rcfg.backend != "remote":
        write_transcript(transcript, result, rcfg)

    model = result.model
    doc = model_document(model, schema, stats, cfg)
    (out / "model.json").write_text(_dumps(doc), encoding="utf-8")

    rows = []
    for split_name, data in (("val", val), ("test", test)):
        for name, m in (("forest", result.forest), ("delta", model)):
            rep = evaluate(m.predict(data.features), data.labels, data.task)
            rows.append({"model": name, "split": split_name, "metric": rep.name, "value": rep.value, "n_samples": rep.n_samples})
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=["model", "split", "metric", "value", "n_samples"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "value": f"{r['value']:.6f}"})

    manifest = {
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "data_sha256": _sha256(cfg.csv),
        "schema_hash": schema.hash(),
        "seeds": {
            "split": cfg.seed,
            "forest": cfg.seed,
            "refiner": rcfg.seed,
            "fewshot": cfg.seed if cfg.fewshot is not None else None,
            "gradient_nets": cfg.seed,
        },
        "split_sizes": {"train": train.n, "val": val.n, "test": test.n},
        "included_tree_indices": list(result.ranked.tree_indices[: rcfg.included_trees]),
        "refiner_retries": result.refinement.retries,
        "rules": [serialize_rule(r) for r in result.refinement.rules],
        "eta": model.eta,
        "loss": model.loss,
        "transcript": str(transcript.name),
        "replayed_from": rcfg.replay,
        "outputs": ["model.json", "metrics.csv", "manifest.json", "transcript.jsonl"],
    }
    (out / "manifest.json").write_text(_dumps(manifest), encoding="utf-8")
    test_delta = next(r for r in rows if r["model"] == "delta" and r["split"] == "test")
    print(f"{test_delta['metric']} (test): {test_delta['value']:.4f}  eta={model.eta}  -> {out}")
    return {"rows": rows, "eta": model.eta, "result": result}


def cmd_eval(model_path: str, csv_path: str, schema_path: str, which: str = "test", fewshot: int | None = None,
             seed: int | None = None, ratios: Sequence[float] | None = None):
    doc, model, m_schema, stats = load_model_file(model_path)
    schema = load_schema(schema_path)
    if schema.hash() != m_schema.hash():
        raise DataError(f"schema mismatch: model expects {m_schema.hash()}, got {schema.hash()} from {schema_path}")
    raw = load_csv(csv_path, schema)
    if which == "all":
        part = raw
    else:
        seed = doc["split"]["seed"] if seed is None else seed
        ratios = tuple(doc["split"]["ratios"]) if ratios is None else tuple(ratios)
        part = dict(zip(("train", "val", "test"), split(raw, ratios, seed)))[which]
    data = preprocess(part, stats)
    if fewshot is not None:
        data = fewshot_train(data, fewshot, doc["split"]["seed"] if seed is None else seed)
    rep = evaluate(model.predict(data.features), data.labels, data.task)
    print(f"{rep.name}: {rep.value:.6f}  (n={rep.n_samples})")
    return rep


def cmd_distance(cfg: RunConfig, client=None) -> dict:
    schema, stats, train, val, test = load_run_data(cfg)
    result = run_pipeline(train, val, cfg.pipeline(), client=client)
    forest_d = [intra_node_distance(t, train) for t in result.forest.trees]
    refined_d = [intra_node_distance(r, train) for r in result.refinement.rules]
    f_mean, r_mean = float(np.mean(forest_d)), float(np.mean(refined_d))
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "distance.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["source", "index", "distance"])
        for i, v in enumerate(forest_d):
            w.writerow(["forest", i, f"{v:.6f}"])
        for i, v in enumerate(refined_d):
            w.writerow(["refined", i, f"{v:.6f}"])
    drop = (f_mean - r_mean) / f_mean if f_mean else 0.0
    print(f"forest rules  : {f_mean:.4f} (mean of {len(forest_d)})")
    print(f"refined rules : {r_mean:.4f} (mean of {len(refined_d)})")
    print(f"relative drop : {100 * drop:.2f}%")
    return {"forest": f_mean, "refined": r_mean, "drop": drop}


def cmd_ablate(cfg: RunConfig, variants: Sequence[str], seeds: Sequence[int], client=None) -> str:
    schema = load_schema(cfg.schema)
    raw = load_csv(cfg.csv, schema)
    acfg = AblationConfig(pipeline=cfg.pipeline(), seeds=tuple(seeds), ratios=cfg.ratios)
    rows = run_ablation(list(variants), [(schema.name, raw)], acfg, client=client)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = ablation_csv(rows)
    (out / "ablation.csv").write_text(text, encoding="utf-8")
    table = ablation_table(rows)
    (out / "ablation.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return text


def cmd_fewshot_sweep(cfg: RunConfig, shots: Sequence[int], seeds: Sequence[int], client=None) -> str:
    schema = load_schema(cfg.schema)
    raw = load_csv(cfg.csv, schema)
    lines = ["n_shots,seed,model,metric,value"]
    for seed in seeds:
        train, _, test = prepare_splits(raw, cfg.ratios, seed)
        for n in shots:
            sub = fewshot_train(train, n, seed)
            pcfg = replace(cfg.pipeline(), seed=seed, refiner=replace(cfg.refiner, seed=seed))
            res = run_pipeline(sub, sub, pcfg, client=client)
            for name, m in (("forest", res.forest), ("delta", res.model)):
                rep = evaluate(m.predict(test.features), test.labels, test.task)
                lines.append(f"{n},{seed},{name},{rep.name},{rep.value:.6f}")
                print(f"n={n:<5d} seed={seed} {name:<6s} {rep.name}={rep.value:.4f}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = "\n".join(lines) + "\n"
    (out / "fewshot.csv").write_text(text, encoding="utf-8")
    return text


# ---- argument parsing ------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ints(s: str) -> list[int]:
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--config", help="INI run configuration; flags override its values")
    g.add_argument("--csv", help="dataset CSV with a header row")
    g.add_argument("--schema", help="JSON schema describing columns and target")
    g.add_argument("--ratios", help="train,val,test fractions (default 0.64,0.16,0.2)")
    g.add_argument("--seed", type=int)
    g.add_argument("--fewshot", type=int, help="train on this many sampled training rows")
    g.add_argument("--out", help="output directory")
    g = p.add_argument_group("forest")
    g.add_argument("--K", type=int, help="number of trees (default 100)")
    g.add_argument("--n-jobs", dest="n_jobs", type=int)
    g = p.add_argument_group("refiner")
    g.add_argument("--backend", choices=["heuristic", "remote", "replay"])
    g.add_argument("--endpoint")
    g.add_argument("--model")
    g.add_argument("--api-key-env", dest="api_key_env", help="name of the environment variable holding the API key")
    g.add_argument("--n-queries", dest="n_queries", type=int)
    g.add_argument("--max-retries", dest="max_retries", type=int)
    g.add_argument("--leaf-limit", dest="leaf_limit", type=int)
    g.add_argument("--included-trees", dest="included_trees", type=int)
    g.add_argument("--temperature", type=float)
    g.add_argument("--concurrency", type=int)
    g.add_argument("--transcript", help="record remote exchanges to this JSON-lines file")
    g.add_argument("--replay", help="serve refiner responses from a recorded transcript")
    g.add_argument("--fallback-to-heuristic", dest="fallback_to_heuristic", action="store_true")
    g = p.add_argument_group("correction")
    g.add_argument("--eta-grid", dest="eta_grid", help="comma-separated eta candidates")
    g.add_argument("--loss", choices=list(LOSS_KINDS))


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="deltatab", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="fit forest, refine rules, fit corrections, evaluate")
    _add_run_flags(t)

    e = sub.add_parser("eval", help="evaluate a saved model")
    e.add_argument("--model-file", dest="model_file", required=True)
    e.add_argument("--csv", required=True)
    e.add_argument("--schema", required=True)
    e.add_argument("--split", dest="which", choices=["train", "val", "test", "all"], default="test")
    e.add_argument("--fewshot", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--ratios")

    a = sub.add_parser("ablate", help="run ablation variants")
    _add_run_flags(a)
    a.add_argument("--variants", default=",".join(VARIANTS), help=f"subset of {','.join(VARIANTS)}")
    a.add_argument("--seeds", type=_ints, default=[0, 1, 2, 3, 4])

    d = sub.add_parser("distance", help="intra-node distance of forest vs refined rules")
    _add_run_flags(d)

    f = sub.add_parser("fewshot-sweep", help="forest vs corrected model across training sizes")
    _add_run_flags(f)
    f.add_argument("--shots", type=_ints, default=[16, 32, 64, 128])
    f.add_argument("--seeds", type=_ints, default=[0, 1, 2])

    c = sub.add_parser("import-blood", help="rewrite UCI transfusion.data with schema column names")
    c.add_argument("src")
    c.add_argument("dst")
    return p


def _dispatch(args) -> int:
    if args.command == "eval":
        ratios = _floats(args.ratios) if args.ratios else None
        cmd_eval(args.model_file, args.csv, args.schema, args.which, args.fewshot, args.seed, ratios)
        return EXIT_OK
    if args.command == "import-blood":
        n = convert_blood(args.src, args.dst)
        print(f"wrote {n} rows to {args.dst}")
        return EXIT_OK
    cfg = build_run_config(args)
    if args.command == "train":
        cmd_train(cfg)
    elif args.command == "ablate":
        variants = [v.strip() for v in args.variants.split(",") if v.strip()]
        unknown = [v for v in variants if v not in VARIANTS]
        if unknown:
            raise ConfigError(f"unknown variants {unknown}")
        cmd_ablate(cfg, variants, args.seeds)
    elif args.command == "distance":
        cmd_distance(cfg)
    elif args.command == "fewshot-sweep":
        cmd_fewshot_sweep(cfg, args.shots, args.seeds)
    return EXIT_OK


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        if exc.stage == "refine" or isinstance(exc.cause, (RefinementError, RefinerNetworkError, RuleParseError)):
            return EXIT_REFINER
        return exit_code_for(exc.cause) if isinstance(exc.cause, (SchemaError, DataParseError, DataError)) else EXIT_INTERNAL
    if isinstance(exc, (RefinementError, RefinerNetworkError)):
        return EXIT_REFINER
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, (SchemaError, DataParseError, DataError, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_INTERNAL


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        code = exit_code_for(exc)
        print(f"deltatab {args.command}: error: {exc}", file=sys.stderr)
        if code == EXIT_INTERNAL:
            log.debug("internal error", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())
