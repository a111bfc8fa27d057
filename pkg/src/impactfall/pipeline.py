"""Pipeline stages. Each stage reads and writes only its own files under ``cfg.out``.

Layout::

    raw/<device>.csv           synth-gen   synthetic device recordings
    ground_truth.csv           synth-gen   trace_id,start_ms,end_ms
    streams/<device>.csv       ingest      validated device streams
    dataset.csv                sync        synchronized (and derived) features
    smv.csv, events.csv        smv         SMV trace and segmented events
    labeled.csv                label       threshold labels
    reviewed.csv               review-apply
    splits/{train,val,test}.csv, norm_params.json,
    importances.csv, topk_study.csv        rank
    selected_features.txt      select
    models/<kind>.json, train_times.json   train
    report.json, roc_<kind>.csv, confusion_<kind>.csv   eval
    report.md                  report
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

from .base import load_model, save_model
from .config import PipelineConfig
from .dataio import (
    IngestSchema, SplitSpec, impute_missing, ingest_csv, read_dataset, split,
    synchronize, write_dataset, write_stream_csv,
)
from .errors import ConfigError, DataError
from .evaluation import evaluate_model, fit_timed, report_document, summary_table, sweep_threshold, write_report
from .featsel import (
    read_importances, rank_features, select_top_k, topk_study, write_importances, write_topk_study,
)
from .signal import (
    DetectorConfig, apply_review, derive_features, label_impacts, read_review,
    read_smv_csv, segment_events, smv_series, write_smv_csv, zscore_apply, zscore_fit,
)
from .synth import gen_streams, write_ground_truth

log = logging.getLogger(__name__)


def _out(cfg: PipelineConfig, *parts) -> Path:
    path = Path(cfg.out, *parts)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def synth_gen(cfg: PipelineConfig) -> None:
    syn = cfg.input.synthetic
    if syn is None:
        raise ConfigError("synth-gen needs an 'input.synthetic' section")
    streams, truth = gen_streams(
        syn.n_subjects, syn.trials, cfg.seed, duration_s=syn.duration_s,
        sample_rate_hz=syn.sample_rate_hz, noise_std_g=syn.noise_std_g, n_distractors=syn.n_distractors,
        beta=cfg.signal.beta, margin_g=syn.margin_g,
    )
    for stream in streams:
        write_stream_csv(stream, _out(cfg, "raw", f"{stream.device_id}.csv"))
    write_ground_truth(truth, _out(cfg, "ground_truth.csv"))
    log.info("synth-gen: %d devices, %d impact intervals", len(streams), len(truth))


def ingest(cfg: PipelineConfig) -> None:
    if cfg.input.devices is not None:
        sources = [(d.path, IngestSchema(d.id, d.timestamp_column, d.channels)) for d in cfg.input.devices]
    else:
        sources = [(Path(cfg.out, "raw", f"{i}.csv"), IngestSchema(i)) for i in cfg.device_ids()]
    for path, schema in sources:
        stream = ingest_csv(path, schema)
        write_stream_csv(stream, _out(cfg, "streams", f"{schema.device_id}.csv"))
        log.info("ingest: %s -> %d samples x %d channels", schema.device_id, len(stream), len(stream.channel_names))


def sync(cfg: PipelineConfig) -> None:
    streams = [ingest_csv(Path(cfg.out, "streams", f"{i}.csv"), IngestSchema(i)) for i in cfg.device_ids()]
    ds = synchronize(streams, cfg.sync.reference, cfg.sync.tolerance_ms)
    if cfg.features.derive:
        ds = derive_features(ds, cfg.signal.axes, cfg.features.window)
    write_dataset(ds, _out(cfg, "dataset.csv"))
    log.info("sync: %d rows x %d features", len(ds), ds.n_features)


def _detector(cfg: PipelineConfig) -> DetectorConfig:
    return DetectorConfig(cfg.signal.beta, cfg.signal.refractory_ms)


def smv(cfg: PipelineConfig) -> None:
    ds = read_dataset(Path(cfg.out, "dataset.csv"))
    series = smv_series(ds, cfg.signal.axes)
    write_smv_csv(series, _out(cfg, "smv.csv"))
    events = segment_events(series, _detector(cfg))
    with _out(cfg, "events.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["start_ms", "peak_ms", "end_ms", "peak_smv_g"])
        for e in events:
            writer.writerow([e.start, e.peak, e.end, repr(e.peak_smv)])
    log.info("smv: %d events above %.2f g", len(events), cfg.signal.beta)


def label(cfg: PipelineConfig) -> None:
    ds = read_dataset(Path(cfg.out, "dataset.csv"))
    series = read_smv_csv(Path(cfg.out, "smv.csv"))
    labeled = label_impacts(ds, series, _detector(cfg))
    write_dataset(labeled, _out(cfg, "labeled.csv"))
    log.info("label: %d of %d rows labeled impact", int(labeled.labels.sum()), len(labeled))


def review_apply(cfg: PipelineConfig) -> None:
    ds = read_dataset(Path(cfg.out, "labeled.csv"))
    entries = read_review(cfg.review) if cfg.review is not None else []
    reviewed = apply_review(ds, entries)
    write_dataset(reviewed, _out(cfg, "reviewed.csv"))
    log.info("review-apply: %d review ranges", len(entries))


def rank(cfg: PipelineConfig) -> None:
    """Split, impute and normalize with training statistics, then rank features on train."""
    ds = read_dataset(Path(cfg.out, "reviewed.csv"))
    spec = SplitSpec(cfg.split.train, cfg.split.val, cfg.split.test, cfg.seed, cfg.split.stratified)
    train, val, test = split(ds, spec)
    train_filled = impute_missing(train, train)
    params = zscore_fit(train_filled)
    parts = {}
    for name, part in (("train", train_filled), ("val", val), ("test", test)):
        parts[name] = zscore_apply(impute_missing(part, train_filled), params)
        write_dataset(parts[name], _out(cfg, "splits", f"{name}.csv"))
    _out(cfg, "norm_params.json").write_text(json.dumps(params.to_dict(), indent=2) + "\n")

    sel = cfg.selection
    ranking = rank_features(parts["train"], seed=cfg.seed, n_estimators=sel.n_estimators)
    write_importances(ranking, _out(cfg, "importances.csv"))
    ks = [k for k in sel.study_ks if k == "all" or k <= len(ranking)]
    rows = topk_study(parts["train"], ranking, ks, seed=cfg.seed, n_estimators=sel.n_estimators,
                      repeats=sel.study_repeats)
    write_topk_study(rows, _out(cfg, "topk_study.csv"))
    log.info("rank: top feature %s; study sizes %s", ranking.names[0], [r.k for r in rows])


def select(cfg: PipelineConfig) -> None:
    ranking = read_importances(Path(cfg.out, "importances.csv"))
    names = select_top_k(ranking, cfg.selection.k)
    _out(cfg, "selected_features.txt").write_text("".join(f"{n}\n" for n in names))
    log.info("select: %s", ", ".join(names))


def _selected(cfg: PipelineConfig) -> list[str]:
    path = Path(cfg.out, "selected_features.txt")
    if not path.is_file():
        raise DataError(f"missing input file: {path}")
    return [line for line in path.read_text().splitlines() if line]


def _split(cfg: PipelineConfig, name: str, features):
    return read_dataset(Path(cfg.out, "splits", f"{name}.csv")).select(features)


def train(cfg: PipelineConfig) -> None:
    features = _selected(cfg)
    data = _split(cfg, "train", features)
    times = {}
    for kind in cfg.models:
        model, seconds = fit_timed(kind, data, cfg.seed)
        save_model(model, _out(cfg, "models", f"{kind}.json"))
        times[kind] = seconds
        log.info("train: %s in %.3f s", kind, seconds)
    _out(cfg, "train_times.json").write_text(json.dumps(times, indent=2, sort_keys=True) + "\n")


def evaluate(cfg: PipelineConfig) -> None:
    features = _selected(cfg)
    val, test = _split(cfg, "val", features), _split(cfg, "test", features)
    times_path = Path(cfg.out, "train_times.json")
    if not times_path.is_file():
        raise DataError(f"missing input file: {times_path}")
    times = json.loads(times_path.read_text())
    reports = {}
    for kind in cfg.models:
        model = load_model(Path(cfg.out, "models", f"{kind}.json"))
        thr = sweep_threshold(model, val) if cfg.threshold_sweep else None
        reports[kind] = evaluate_model(kind, model, test, float(times[kind]), thr)
    sizes = {"test": len(test), "val": len(val)}
    doc = report_document(reports, seed=cfg.seed, features=features, sizes=sizes)
    write_report(doc, cfg.out, reports)
    log.info("eval: %s", ", ".join(f"{k}={r.metrics.accuracy:.4f}" for k, r in reports.items()))


def report(cfg: PipelineConfig) -> str:
    path = Path(cfg.out, "report.json")
    if not path.is_file():
        raise DataError(f"missing input file: {path}")
    table = summary_table(json.loads(path.read_text()))
    _out(cfg, "report.md").write_text(table)
    return table


STAGES = {
    "synth-gen": synth_gen,
    "ingest": ingest,
    "sync": sync,
    "smv": smv,
    "label": label,
    "review-apply": review_apply,
    "rank": rank,
    "select": select,
    "train": train,
    "eval": evaluate,
    "report": report,
}


def run_all(cfg: PipelineConfig) -> None:
    for name, stage in STAGES.items():
        if name == "synth-gen" and cfg.input.synthetic is None:
            continue
        run_stage(name, cfg)


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def run_stage(name: str, cfg: PipelineConfig):
    try:
        return STAGES[name](cfg)
    except Exception as exc:
        raise StageError(name, exc) from exc
