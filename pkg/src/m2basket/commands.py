"""Pipeline commands. Each is a pure function of (config, input files, seed).

Every command writes UTF-8 JSON/CSV into the configured output directory and
returns a small summary dictionary for the command line to print.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Mapping, Sequence

import numpy as np

from .baselines import Pop, Poep, PopularityTable
from .config import RunConfig, to_timestamp
from .dataset import (
    SplitCorpus,
    assemble_baskets,
    filter_corpus,
    load_split,
    parse_interactions,
    save_corpus,
    save_split,
    split_order,
    split_time,
)
from .errors import ConfigError, DataError
from .evaluation import (
    EvalReport,
    build_cases,
    diversity_report,
    evaluate_horizon,
    export_embeddings,
    item_frequencies,
    paired_t_test,
    similarity_report,
    transition_matrix,
)
from .evaluation.protocol import metric_names
from .model import Hyperparams, M2Model, init_params, load_model, save_model, train
from .recommend import UserContext
from .synthetic import BayesOracle, SyntheticSpec, generate, write_synthetic

_log = logging.getLogger(__name__)

BASELINES = ("pop", "poep", "ugp-only", "tpi-only", "oracle")
LEDGER_VERSION = 1


def _write_json(path, obj, *, indent: int | None = 1) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, indent=indent, sort_keys=True, ensure_ascii=False))
        fh.write("\n")


def _write_jsonl(path, rows: Sequence[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


def _require(path, what: str) -> str:
    if not path or not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    return str(path)


def _start(cfg: RunConfig, command: str) -> None:
    os.makedirs(cfg.output_dir, exist_ok=True)
    cfg.dump(cfg.path(f"config_{command}.json"))


def _load_prepared(cfg: RunConfig) -> SplitCorpus:
    return load_split(_require(cfg.path("split.json"), "prepared split (run prepare first)"))


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------


def cmd_prepare(cfg: RunConfig) -> dict:
    """Parse, filter and split the raw log; write corpus, split and statistics."""
    source = _require(cfg["interactions"], "interactions file")
    split_cfg = cfg["split"]
    kind = split_cfg.get("kind", "time")
    if kind not in ("time", "order"):
        raise ConfigError(f"split.kind must be 'time' or 'order', got {kind!r}")
    _start(cfg, "prepare")

    parsed = parse_interactions(source, cfg.format_spec)
    raw = assemble_baskets(parsed.records)
    corpus = filter_corpus(raw, cfg.filter_spec)
    if kind == "time":
        if split_cfg.get("train_end") is None or split_cfg.get("valid_end") is None:
            raise ConfigError("time split needs split.train_end and split.valid_end")
        split = split_time(corpus, to_timestamp(split_cfg["train_end"]), to_timestamp(split_cfg["valid_end"]))
    else:
        split = split_order(corpus, int(split_cfg.get("min_baskets", 4)))

    stats = {
        "parsed_records": len(parsed.records),
        "skipped_rows": parsed.skipped,
        "raw": raw.statistics(),
        "filtered": corpus.statistics(),
        "split": split.statistics(),
    }
    save_corpus(corpus, cfg.path("corpus.json"))
    save_split(split, cfg.path("split.json"))
    _write_json(cfg.path("stats.json"), stats)
    return stats


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cell_key(hp: Hyperparams) -> str:
    """Stable ledger key: the full hyperparameter set as canonical JSON."""
    return json.dumps(hp.to_dict(), sort_keys=True, separators=(",", ":"))


def _strip_seconds(log: Sequence[Mapping]) -> list[dict]:
    return [{k: v for k, v in entry.items() if k != "seconds"} for entry in log]


def _run_cell(split: SplitCorpus, hp: Hyperparams) -> tuple[dict, list[dict]]:
    result = train(split, hp, validate=True)
    score = result.best_score
    entry = {
        "hyperparams": hp.to_dict(),
        "valid_recall@5": score[0] if score else None,
        "valid_ndcg@5": score[1] if score else None,
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.log),
        "skipped_users": result.skipped_users,
        "log": _strip_seconds(result.log),
    }
    timings = [{"cell": cell_key(hp), "epoch": e["epoch"], "seconds": e["seconds"]} for e in result.log]
    return entry, timings


def _run_cell_from_file(split_path: str, hp_dict: dict) -> tuple[dict, list[dict]]:
    return _run_cell(load_split(split_path), Hyperparams.from_dict(hp_dict))


def _selection_key(entry: Mapping) -> tuple[float, float]:
    r, g = entry.get("valid_recall@5"), entry.get("valid_ndcg@5")
    return (-np.inf if r is None else r, -np.inf if g is None else g)


def _boundary_winners(cfg: RunConfig, best: Hyperparams) -> list[str]:
    """Grid keys whose winning value sits on the edge of its searched range."""
    grid = cfg["grid"] or {}
    out = []
    for key, values in grid.items():
        if len(values) < 2:
            continue
        attr = "lam" if key == "lambda" else key
        value = getattr(best, attr)
        if value in (min(values), max(values)):
            out.append(key)
    return out


def cmd_train(cfg: RunConfig, *, resume: bool = False, jobs: int | None = None) -> dict:
    """Grid search on validation recall@5, then retrain on train+validation.

    Writes ``grid_ledger.json`` (every cell's validation score),
    ``model.json``, ``training_log.jsonl`` and, separately because wall time
    is not reproducible, ``timings.jsonl``.
    """
    points = cfg.grid_points()
    split = _load_prepared(cfg)
    _start(cfg, "train")
    ledger_path = cfg.path("grid_ledger.json")
    old: dict = {}
    if resume and os.path.exists(ledger_path):
        with open(ledger_path, encoding="utf-8") as fh:
            old = json.load(fh)
        if old.get("format_version") != LEDGER_VERSION:
            raise DataError(f"unsupported ledger format_version {old.get('format_version')!r}", source=ledger_path)

    cells: dict[str, dict] = {}
    timings: list[dict] = []
    todo = []
    for hp in points:
        key = cell_key(hp)
        if key in old.get("cells", {}):
            cells[key] = old["cells"][key]
        else:
            todo.append(hp)
    jobs = int(jobs if jobs is not None else cfg["jobs"])
    if todo and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            split_path = cfg.path("split.json")
            futures = [pool.submit(_run_cell_from_file, split_path, hp.to_dict()) for hp in todo]
            results = [f.result() for f in futures]
    else:
        results = [_run_cell(split, hp) for hp in todo]
    for hp, (entry, cell_timings) in zip(todo, results):
        cells[cell_key(hp)] = entry
        timings.extend(cell_timings)

    # first cell in grid order wins ties
    best_key, best_score = None, None
    for hp in points:
        key = cell_key(hp)
        score = _selection_key(cells[key])
        if best_score is None or score > best_score:
            best_key, best_score = key, score
    best_entry = cells[best_key]
    best_hp = Hyperparams.from_dict(best_entry["hyperparams"])
    if best_entry["valid_recall@5"] is None:
        _log.warning("no validation users: selection falls back to the first grid cell and all epochs")
        final_epochs = best_hp.epochs
    else:
        final_epochs = best_entry["best_epoch"]
    final_hp = Hyperparams.from_dict({**best_hp.to_dict(), "epochs": final_epochs})

    model_path = cfg.path("model.json")
    final_old = old.get("final")
    reused = bool(not todo and final_old and final_old.get("hyperparams") == final_hp.to_dict() and os.path.exists(model_path))
    if reused:
        final_log = final_old["log"]
    else:
        merged = split.merged_for_test()
        final = train(merged, final_hp, validate=False)
        save_model(final.model, merged.vocabulary, model_path)
        final_log = _strip_seconds(final.log)
        timings.extend({"cell": "final", "epoch": e["epoch"], "seconds": e["seconds"]} for e in final.log)

    ledger = {
        "format_version": LEDGER_VERSION,
        "selection": "valid_recall@5, ties broken by valid_ndcg@5, then grid order",
        "cells": cells,
        "best": best_key,
        "boundary_winners": _boundary_winners(cfg, best_hp),
        "final": {"hyperparams": final_hp.to_dict(), "log": final_log},
    }
    _write_json(ledger_path, ledger)
    rows = []
    for hp in points:
        key = cell_key(hp)
        rows.extend({"cell": key, **e} for e in cells[key]["log"])
    rows.extend({"cell": "final", **e} for e in final_log)
    _write_jsonl(cfg.path("training_log.jsonl"), rows)
    if not reused:
        _write_jsonl(cfg.path("timings.jsonl"), timings)
    return {
        "cells": len(points),
        "trained_cells": len(todo),
        "best": best_entry["hyperparams"],
        "valid_recall@5": best_entry["valid_recall@5"],
        "valid_ndcg@5": best_entry["valid_ndcg@5"],
        "final_epochs": final_epochs,
        "boundary_winners": ledger["boundary_winners"],
        "retrained": not reused,
    }


# ---------------------------------------------------------------------------
# scorer selection
# ---------------------------------------------------------------------------


def build_scorer(
    split: SplitCorpus,
    *,
    model_path=None,
    baseline: str | None = None,
    manifest_path=None,
) -> tuple[object, SplitCorpus, str]:
    """Resolve a model file and/or baseline name into (scorer, split, label).

    The returned split is re-indexed onto the model's vocabulary when a model
    is involved.
    """
    if baseline is not None and baseline not in BASELINES:
        raise ConfigError(f"unknown baseline {baseline!r}; expected one of {BASELINES}")
    model = None
    if model_path is not None:
        model, vocab = load_model(_require(model_path, "model file"))
        split = split.reindexed(vocab)
    if baseline is None:
        if model is None:
            raise ConfigError("give a model file or a baseline name")
        return model, split, model.variant.lower()
    if baseline == "pop":
        return Pop(PopularityTable.from_corpus(split.train)), split, "pop"
    if baseline == "poep":
        return Poep(split.n), split, "poep"
    if baseline == "ugp-only":
        if model is not None and model.variant != "UGP_ONLY":
            try:
                return model.ablated("UGP_ONLY"), split, "ugp-only"
            except ValueError:
                pass
        # no trainable blocks: an untrained parameter set scores exactly p
        hp = Hyperparams(variant="UGP_ONLY", d=1)
        return M2Model(init_params("UGP_ONLY", split.n, 1, np.random.default_rng(0)), hp), split, "ugp-only"
    if baseline == "tpi-only":
        if model is None:
            raise ConfigError("tpi-only needs a trained model file (--model)")
        if model.variant == "TPI_ONLY":
            return model, split, "tpi-only"
        try:
            return model.ablated("TPI_ONLY"), split, "tpi-only"
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    # oracle
    if manifest_path is None:
        raise ConfigError("the oracle needs the synthetic ground-truth manifest (--manifest)")
    with open(_require(manifest_path, "manifest file"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    return BayesOracle(manifest, split.vocabulary), split, "oracle"


# ---------------------------------------------------------------------------
# evaluate / compare
# ---------------------------------------------------------------------------


def cmd_evaluate(
    cfg: RunConfig,
    *,
    model_path=None,
    baseline: str | None = None,
    manifest_path=None,
    name: str | None = None,
) -> dict:
    """Evaluate on the test split for every configured horizon.

    History is train plus validation. Writes ``eval/<name>_h<h>.csv`` (per
    user) and ``eval/<name>_h<h>.json`` (aggregate and per-user values).
    """
    ks, horizons = cfg.ks, cfg.horizons
    split = _load_prepared(cfg).merged_for_test()
    scorer, split, label = build_scorer(split, model_path=model_path, baseline=baseline, manifest_path=manifest_path)
    label = name or label
    _start(cfg, "evaluate")
    os.makedirs(cfg.path("eval"), exist_ok=True)
    summary = {"method": label, "horizons": {}}
    for h in horizons:
        report = evaluate_horizon(scorer, split, h, ks, target="test", exclude_cold=bool(cfg["exclude_cold"]))
        report.method = label
        data = report.to_dict()
        if not report.users:
            data["note"] = f"no test user owns {h} test baskets; nothing to evaluate at horizon {h}"
        base = cfg.path("eval", f"{label}_h{h}")
        _write_json(base + ".json", data)
        with open(base + ".csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv())
        summary["horizons"][h] = {"users": report.n_users, "means": report.means, "report": base + ".json"}
    return summary


def load_report(path) -> EvalReport:
    with open(_require(path, "report"), encoding="utf-8") as fh:
        try:
            return EvalReport.from_dict(json.load(fh))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"not an evaluation report: {exc}", source=str(path)) from None


def compare_reports(a: EvalReport, b: EvalReport, alpha: float = 0.05) -> list[dict]:
    """Per-metric paired comparison of A against B over the same users."""
    if a.horizon != b.horizon:
        raise DataError(f"reports cover different horizons: {a.horizon} vs {b.horizon}")
    users_a = {u.user_id for u in a.users}
    users_b = {u.user_id for u in b.users}
    if users_a != users_b:
        raise DataError(f"reports cover different users: symmetric difference has {len(users_a ^ users_b)} users")
    metrics = [m for m in metric_names(a.ks) if m in metric_names(b.ks)]
    order = [u.user_id for u in a.users]
    rows = []
    for metric in metrics:
        va, vb = a.values(metric), b.values(metric)
        xa = [va[u] for u in order]
        xb = [vb[u] for u in order]
        mean_a, mean_b = a.means[metric], b.means[metric]
        improvement = (mean_a - mean_b) / mean_b * 100.0 if mean_b else None
        try:
            test = paired_t_test(xa, xb, alpha)
        except ValueError as exc:
            raise DataError(f"{metric}: {exc}") from None
        rows.append(
            {
                "metric": metric,
                "mean_a": mean_a,
                "mean_b": mean_b,
                "improvement_pct": improvement,
                "t": test.t,
                "p": test.p,
                "significant": test.significant,
                "star": "*" if test.significant else "",
            }
        )
    return rows


def format_compare(rows: Sequence[Mapping], label_a: str = "A", label_b: str = "B") -> str:
    lines = [f"{'metric':<14}{label_a:>12}{label_b:>12}{'improv%':>10}{'t':>10}{'p':>10}"]
    for r in rows:
        imp = "n/a" if r["improvement_pct"] is None else f"{r['improvement_pct']:.2f}"
        lines.append(
            f"{r['metric']:<14}{r['mean_a']:>12.4f}{r['mean_b']:>12.4f}{imp:>10}{r['t']:>10.3f}{r['p']:>10.4f} {r['star']}"
        )
    return "\n".join(lines)


def cmd_compare(path_a, path_b, output=None, alpha: float = 0.05) -> dict:
    a, b = load_report(path_a), load_report(path_b)
    rows = compare_reports(a, b, alpha)
    result = {"a": a.method or str(path_a), "b": b.method or str(path_b), "horizon": a.horizon, "n_users": a.n_users, "rows": rows}
    if output is not None:
        _write_json(output, result)
    return result


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def cmd_generate_synthetic(cfg: RunConfig) -> dict:
    spec = SyntheticSpec.from_dict(cfg["synthetic"])
    _start(cfg, "generate-synthetic")
    data = generate(spec)
    csv_path, manifest_path = cfg.path("synthetic.csv"), cfg.path("synthetic_manifest.json")
    write_synthetic(data, csv_path, manifest_path)
    return {"interactions": csv_path, "manifest": manifest_path, "users": spec.n_users, "items": spec.n_items}


# ---------------------------------------------------------------------------
# analyses
# ---------------------------------------------------------------------------


def cmd_analyze_diversity(cfg: RunConfig, *, model_path=None, baseline=None, manifest_path=None, k: int = 20, name=None) -> dict:
    """Share of top-k slots per item-frequency decile, over horizon-1 test users."""
    split = _load_prepared(cfg).merged_for_test()
    scorer, split, label = build_scorer(split, model_path=model_path, baseline=baseline, manifest_path=manifest_path)
    label = name or label
    _start(cfg, "analyze-diversity")
    cases = build_cases(split, 1, "test")
    recs = scorer.recommend([UserContext(c.user_id, c.context) for c in cases], k) if cases else []
    result = {
        "method": label,
        "k": k,
        "users": len(cases),
        "bucket_percentages": diversity_report((r.items for r in recs), item_frequencies(split.train)),
    }
    _write_json(cfg.path(f"diversity_{label}.json"), result)
    return result


def _parse_cluster(cluster: Sequence[str] | None, cluster_file) -> list[str]:
    ids = list(cluster or [])
    if cluster_file is not None:
        with open(_require(cluster_file, "cluster file"), encoding="utf-8") as fh:
            text = fh.read()
        try:
            loaded = json.loads(text)
            ids.extend(str(x) for x in loaded)
        except json.JSONDecodeError:
            ids.extend(line.strip() for line in text.splitlines() if line.strip())
    return ids


def cmd_analyze_transitions(cfg: RunConfig, *, cluster=None, cluster_file=None, window: int = 1) -> dict:
    """Cosine similarity of transition rows inside a cluster versus all items."""
    split = _load_prepared(cfg).merged_for_test()
    ids = _parse_cluster(cluster, cluster_file)
    vocab = split.vocabulary
    unknown = [i for i in ids if vocab.index.get(i, vocab.n) >= vocab.n]
    if unknown:
        raise ConfigError(f"cluster items not in the training vocabulary: {unknown}")
    if window < 1:
        raise ConfigError("window must be >= 1")
    _start(cfg, "analyze-transitions")
    T = transition_matrix(split.train, window)
    try:
        rep = similarity_report(T, [vocab.index[i] for i in ids])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    result = {
        "cluster": sorted(set(ids)),
        "window": window,
        "cluster_mean_cosine": rep.cluster_mean,
        "global_mean_cosine": rep.global_mean,
        "ratio": rep.ratio,
        "percent_higher": rep.percent_higher,
        "nonzero_transitions": int(T.nnz),
    }
    _write_json(cfg.path("transitions.json"), result)
    return result


def cmd_export_embeddings(model_path, output) -> dict:
    model, vocab = load_model(_require(model_path, "model file"))
    if "W" not in model.params:
        raise ConfigError(f"{model.variant} has no encoder weights to export")
    export_embeddings(model.params["W"], vocab, output)
    return {"output": str(output), "items": model.params.n, "dims": model.params.d}
