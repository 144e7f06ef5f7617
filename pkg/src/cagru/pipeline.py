"""End-to-end orchestration: cluster, train one forecaster per cluster, pooled evaluation.

Also holds the four ablation variants, the cluster-count sweep, run
configuration loading and all artifact persistence.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import synth
from .data import (
    ActivityMatrix,
    Windows,
    build_activity_matrix,
    chronological_split,
    index_events,
    make_windows,
    read_transactions,
)
from .encoder import PatternDictionary, build_dictionary, encode_matrix
from .errors import ConfigError, DataError, UsageError
from .forecaster import ModelConfig
from .kshape import ClusterModel, kshape_cluster
from .metrics import MetricsReport, compute_metrics, top_n_threshold
from .training import fit, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

# variant -> (uses clustering, uses attention)
VARIANTS = {
    "CAGRU": (True, True),
    "CGRU": (True, False),
    "AGRU": (False, True),
    "GRU": (False, False),
}
SWEEP_VALUES = (2, 3, 4, 5)
RECENT_DAYS = 7


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on.

    Exactly one of ``data`` (a transaction CSV) or ``preset`` (a synthetic
    scale name) selects the data source. ``model.seed`` is ignored; each
    cluster's model seed is derived from ``seed``.
    """

    data: str | None = None
    preset: str | None = "16K"
    shops: int = 4
    days: int = synth.PRESET_DAYS
    n_clusters: int = 2
    variant: str = "CAGRU"
    top_n_fraction: float = 0.3
    seed: int = 0
    out: str = "runs/latest"
    kshape_n_init: int = 3
    kshape_max_iter: int = 100
    lookback: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ConfigError(f"n_clusters must be >= 1, got {self.n_clusters}")
        if not 0 < self.top_n_fraction < 1:
            raise ConfigError(f"top_n_fraction must lie in (0, 1), got {self.top_n_fraction}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {sorted(VARIANTS)}, got {self.variant!r}")
        if (self.data is None) == (self.preset is None):
            raise ConfigError("set exactly one of data or preset")
        if self.kshape_n_init < 1 or self.kshape_max_iter < 1:
            raise ConfigError("kshape_n_init and kshape_max_iter must be >= 1")

    @property
    def L(self) -> int:
        return self.model.L

    def to_dict(self, include_out=False):
        d = asdict(self)
        if not include_out:
            d.pop("out")
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        model = d.pop("model", {})
        return cls(model=ModelConfig(**model) if isinstance(model, dict) else model, **d)


_RUN_FIELDS = {f.name: f for f in fields(RunConfig) if f.name != "model"}
_MODEL_FIELDS = {f.name: f for f in fields(ModelConfig)}


def _coerce(name, raw, default):
    text = raw.strip()
    if text.lower() in ("none", "null", ""):
        return None
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    if name == "l":
        return int(text)
    return text


def apply_overrides(config: RunConfig, values: dict) -> RunConfig:
    """Return ``config`` with string-valued overrides applied.

    Keys may name a :class:`RunConfig` field or a :class:`ModelConfig` field.
    Setting ``data`` clears ``preset`` and vice versa.
    """
    run, model = {}, {}
    for key, raw in values.items():
        key = key.strip().replace("-", "_")
        if key in _RUN_FIELDS:
            default = getattr(RunConfig(), key)
            run[key] = raw if not isinstance(raw, str) else _coerce(key, raw, default)
        elif key in _MODEL_FIELDS:
            default = getattr(ModelConfig(), key)
            model[key] = raw if not isinstance(raw, str) else _coerce(key, raw, default)
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    if run.get("data") is not None:
        run.setdefault("preset", None)
    if run.get("preset") is not None:
        run.setdefault("data", None)
    if model:
        run["model"] = replace(config.model, **model)
    return replace(config, **run)


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    """Read a key/value config file.

    The file is INI-style; keys may sit under any section (``[run]`` and
    ``[model]`` are conventional) or before the first section header.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # window length L and positional base l differ only by case
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_string("[__top__]\n" + fh.read(), source=str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    values = {}
    for section in parser.sections():
        values.update(parser[section])
    return apply_overrides(base or RunConfig(), values)


# --------------------------------------------------------------------------- data


@dataclass
class Dataset:
    matrix: ActivityMatrix
    labels: dict | None = None  # planted archetypes when synthetic


def load_dataset(config: RunConfig) -> Dataset:
    if config.preset is not None:
        gen = synth.preset(config.preset, seed=config.seed, shops=config.shops, days=config.days)
        events, labels = synth.generate(gen)
        matrix = build_activity_matrix(
            events, synth.customer_ids(gen.customers), synth.shop_ids(gen.shops), gen.days
        )
        return Dataset(matrix, labels)
    events = read_transactions(config.data)
    customers, shops, t = index_events(events)
    return Dataset(build_activity_matrix(events, customers, shops, t))


def default_features(matrix: ActivityMatrix, L: int) -> np.ndarray:
    """Per-day customer features, shape ``(n, t, 2)``.

    Column 0 is activeness over the trailing ``L`` days; column 1 is the
    purchase-day count over the trailing week divided by 7. Both include
    the day itself and never look ahead.
    """
    bought = matrix.purchased.astype(np.float64)
    csum = np.concatenate([np.zeros((bought.shape[0], 1)), np.cumsum(bought, axis=1)], axis=1)
    days = np.arange(matrix.days)

    def trailing(span):
        lo = np.maximum(days + 1 - span, 0)
        return csum[:, days + 1] - csum[:, lo]

    active = trailing(L) / np.minimum(days + 1, L)
    recent = trailing(RECENT_DAYS) / RECENT_DAYS
    return np.stack([active, recent], axis=2)


@dataclass
class Prepared:
    """Everything shared between variants of one run."""

    config: RunConfig
    dataset: Dataset
    dictionary: PatternDictionary
    codes: np.ndarray
    split: object
    train: Windows
    val: Windows
    test: Windows
    clusters: ClusterModel | None = None

    @property
    def matrix(self):
        return self.dataset.matrix


def encode_dataset(config: RunConfig, dataset: Dataset | None = None):
    """Load the data and encode it over the full observation range.

    Returns ``(dataset, dictionary, codes)`` with ``codes`` of shape ``(n, t)``.
    """
    dataset = dataset or load_dataset(config)
    dictionary = build_dictionary(dataset.matrix)
    return dataset, dictionary, encode_matrix(dataset.matrix, dictionary)


def prepare(config: RunConfig, dataset: Dataset | None = None) -> Prepared:
    """Encode, split and window the data once for a run."""
    dataset, dictionary, codes = encode_dataset(config, dataset)
    m = dataset.matrix
    scale = max(len(dictionary) - 1, 1)
    feats = default_features(m, config.L)
    split = chronological_split(m.days)
    L = config.L

    def windows(r):
        back = 0 if config.lookback else None
        return make_windows(codes / scale, feats, m, r, L, lookback_start=back)

    return Prepared(config, dataset, dictionary, codes, split,
                    windows(split.train), windows(split.validation), windows(split.test))


def cluster_codes(codes, config: RunConfig, n_clusters=None) -> ClusterModel:
    """k-shape over each customer's full-range pattern-code sequence."""
    return kshape_cluster(codes, config.n_clusters if n_clusters is None else n_clusters,
                          seed=config.seed, max_iter=config.kshape_max_iter,
                          n_init=config.kshape_n_init)


def cluster_customers(prep: Prepared, n_clusters: int) -> ClusterModel:
    return cluster_codes(prep.codes, prep.config, n_clusters)


def model_seed(seed, cluster) -> int:
    return int(np.random.SeedSequence([seed, cluster]).generate_state(1)[0])


def _customer_mask(windows: Windows, members: set):
    return np.fromiter((c in members for c in windows.customer_ids), bool, len(windows))


# --------------------------------------------------------------------------- runs


@dataclass
class RunResult:
    report: MetricsReport
    models: dict
    traces: dict
    probabilities: np.ndarray
    clusters: ClusterModel | None
    warnings: list = field(default_factory=list)


def _variant_model_config(config: RunConfig, attention: bool, cluster: int) -> ModelConfig:
    return replace(config.model, attention=attention, seed=model_seed(config.seed, cluster))


def train_variant(prep: Prepared, variant: str, clusters: ClusterModel | None = None) -> RunResult:
    """Fit and evaluate one variant on prepared data.

    Clustered variants fit one model per cluster; a cluster with no
    training windows is logged and its customers are scored by a single
    unclustered model with the same attention setting.
    """
    cfg = prep.config
    use_clusters, attention = VARIANTS[variant]
    ids = prep.matrix.customers
    if use_clusters:
        if clusters is None:
            clusters = cluster_customers(prep, cfg.n_clusters)
        labels = clusters.labels
        k = clusters.k
    else:
        clusters = None
        labels = np.zeros(len(ids), dtype=np.int64)
        k = 1

    models, traces, warnings = {}, {}, []
    test_prob = np.full(len(prep.test), np.nan)
    test_cluster = np.full(len(prep.test), -1, dtype=np.int64)
    fallback_mask = np.zeros(len(prep.test), dtype=bool)
    for c in range(k):
        members = {ids[i] for i in np.flatnonzero(labels == c)}
        tr = prep.train.subset(_customer_mask(prep.train, members))
        va = prep.val.subset(_customer_mask(prep.val, members))
        te_mask = _customer_mask(prep.test, members)
        test_cluster[te_mask] = c
        if len(tr) == 0:
            msg = f"cluster {c} has no training windows; using the unclustered fallback model"
            log.warning(msg)
            warnings.append(msg)
            fallback_mask |= te_mask
            continue
        model, trace = fit(tr, va, _variant_model_config(cfg, attention, c))
        models[c], traces[c] = model, trace
        if te_mask.any():
            test_prob[te_mask] = model.forward(prep.test.inputs[te_mask])

    if fallback_mask.any():
        model, trace = fit(prep.train, prep.val, _variant_model_config(cfg, attention, 0))
        models["fallback"], traces["fallback"] = model, trace
        test_prob[fallback_mask] = model.forward(prep.test.inputs[fallback_mask])

    report = evaluate_pooled(prep.test.labels, test_prob, test_cluster, cfg.top_n_fraction)
    report.metadata = _metadata(prep, variant, clusters, traces, warnings)
    return RunResult(report, models, traces, test_prob, clusters, warnings)


def evaluate_pooled(labels, probabilities, cluster_of, fraction) -> MetricsReport:
    """One global top-N cut over the pooled probabilities plus per-cluster counts."""
    prob = np.asarray(probabilities, dtype=np.float64)
    if np.isnan(prob).any():
        raise DataError("some test windows were never scored")
    pred = top_n_threshold(prob, fraction)
    report = compute_metrics(labels, prob, pred)
    for c in np.unique(cluster_of):
        m = cluster_of == c
        sub = compute_metrics(np.asarray(labels)[m], prob[m], pred[m])
        report.per_cluster[int(c)] = {**sub.row(), "n_samples": sub.n_samples,
                                      "tp": sub.tp, "fp": sub.fp, "tn": sub.tn, "fn": sub.fn}
    return report


def _metadata(prep, variant, clusters, traces, warnings):
    m = prep.matrix
    meta = {
        "variant": variant,
        "n_customers": len(m.customers),
        "n_shops": len(m.shops),
        "n_days": m.days,
        "n_interactions": m.n_interactions,
        "dictionary_size": len(prep.dictionary),
        "split": {k: [r.start, r.stop] for k, r in zip(("train", "val", "test"), prep.split)},
        "windows": {"train": len(prep.train), "val": len(prep.val), "test": len(prep.test)},
        "training": {
            str(c): {"epochs": len(t.epochs), "best_epoch": t.best_epoch} for c, t in traces.items()
        },
        "warnings": list(warnings),
    }
    if clusters is not None:
        meta["cluster_sizes"] = np.bincount(clusters.labels, minlength=clusters.k).tolist()
        meta["kshape_iterations"] = clusters.iterations_run
    return meta


# --------------------------------------------------------------------------- persistence


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else repr(float(x))


def save_run(out, prep: Prepared, result: RunResult):
    """Write dictionary, cluster model, checkpoints, report and CSVs under ``out``."""
    os.makedirs(out, exist_ok=True)
    cfg = prep.config
    prep.dictionary.to_csv(os.path.join(out, "dictionary.csv"))
    if result.clusters is not None:
        result.clusters.save(os.path.join(out, "clusters"), prep.matrix.customers)
    ck = os.path.join(out, "checkpoints")
    os.makedirs(ck, exist_ok=True)
    for c, model in result.models.items():
        save_checkpoint(model, os.path.join(ck, f"cluster_{c}.npz"))
    _write_json(os.path.join(out, "config.json"), cfg.to_dict())
    _write_json(os.path.join(out, "report.json"),
                {"config": cfg.to_dict(), "metrics": result.report.to_dict()})
    _write_rows(os.path.join(out, "metrics.csv"), ("scope", *MetricsReport.METRICS),
                [("pooled", *map(_fmt, result.report.row().values()))]
                + [(f"cluster_{c}", *(_fmt(v[m]) for m in MetricsReport.METRICS))
                   for c, v in result.report.per_cluster.items()])
    write_loss_curves(os.path.join(out, "loss_curves.csv"), result.traces)


def write_loss_curves(path, traces):
    rows = []
    for c, trace in traces.items():
        for r in trace.as_rows():
            rows.append((c, r["epoch"], _fmt(r["train_loss"]),
                         _fmt(r.get("val_loss")), _fmt(r.get("val_score"))))
    _write_rows(path, ("cluster", "epoch", "train_loss", "val_loss", "val_auc"), rows)


def run_pipeline(config: RunConfig, dataset: Dataset | None = None, save=True) -> RunResult:
    """Run one variant end to end and persist its artifacts to ``config.out``."""
    prep = prepare(config, dataset)
    result = train_variant(prep, config.variant)
    if save:
        save_run(config.out, prep, result)
    return result


def run_ablation(config: RunConfig, variants=tuple(VARIANTS), dataset: Dataset | None = None,
                 save=True) -> dict:
    """Fit every variant on shared data, split, clusters and seeds.

    Returns ``{variant: MetricsReport}``. With ``save`` each variant's
    artifacts land in ``out/<variant>/`` and the table goes to
    ``out/ablation.csv`` and ``out/report.json``.
    """
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    prep = prepare(config, dataset)
    clusters = cluster_customers(prep, config.n_clusters) if any(
        VARIANTS[v][0] for v in variants) else None
    table = {}
    for v in variants:
        result = train_variant(prep, v, clusters)
        table[v] = result.report
        log.info("%s f1=%.4f auc=%.4f", v, result.report.f1, result.report.auc)
        if save:
            save_run(os.path.join(config.out, v), replace(prep, config=replace(config, variant=v)),
                     result)
    if save:
        _write_rows(os.path.join(config.out, "ablation.csv"), ("variant", *MetricsReport.METRICS),
                    [(v, *map(_fmt, r.row().values())) for v, r in table.items()])
        _write_json(os.path.join(config.out, "report.json"), {
            "config": config.to_dict(),
            "ablation": {v: r.to_dict() for v, r in table.items()},
        })
    return table


def cluster_sweep(config: RunConfig, n_values=SWEEP_VALUES, dataset: Dataset | None = None,
                  save=True) -> dict:
    """One full run of ``config.variant`` per cluster count on shared data.

    Returns ``{n: MetricsReport}``; the F1-best ``n`` is written into
    ``out/report.json`` as ``best_n``.
    """
    prep = prepare(config, dataset)
    reports = {}
    for n in n_values:
        cfg = replace(config, n_clusters=n)
        p = replace(prep, config=cfg)
        result = train_variant(p, cfg.variant)
        reports[n] = result.report
        if save:
            save_run(os.path.join(config.out, f"n{n}"), p, result)
    best = best_n(reports)
    if save:
        _write_rows(os.path.join(config.out, "sweep.csv"), ("n_clusters", *MetricsReport.METRICS),
                    [(n, *map(_fmt, r.row().values())) for n, r in reports.items()])
        _write_json(os.path.join(config.out, "report.json"), {
            "config": config.to_dict(),
            "best_n": best,
            "sweep": {str(n): r.to_dict() for n, r in reports.items()},
        })
    return reports


def best_n(reports: dict) -> int:
    # first n wins ties
    return max(reports, key=lambda n: (reports[n].f1, -list(reports).index(n)))


def evaluate(run_dir, dataset: Dataset | None = None) -> MetricsReport:
    """Re-score a saved single-variant run from its artifacts.

    Rebuilds the test windows from the saved config and dictionary, routes
    every customer through its saved cluster label and checkpoint, and
    repeats the pooled top-N evaluation.
    """
    cfg_path = os.path.join(run_dir, "config.json")
    if not os.path.exists(cfg_path):
        raise UsageError(f"{run_dir} does not hold a saved run (no config.json)")
    with open(cfg_path, encoding="utf-8") as fh:
        config = RunConfig.from_dict(json.load(fh))
    prep = prepare(config, dataset)
    saved = PatternDictionary.from_csv(os.path.join(run_dir, "dictionary.csv"))
    if saved.vectors != prep.dictionary.vectors:
        raise DataError("data no longer matches the saved pattern dictionary")

    ids = prep.matrix.customers
    cluster_dir = os.path.join(run_dir, "clusters")
    if VARIANTS[config.variant][0]:
        clusters, saved_ids = ClusterModel.load(cluster_dir)
        if tuple(saved_ids) != tuple(ids):
            raise DataError("saved cluster labels cover different customers")
        labels = clusters.labels
    else:
        clusters, labels = None, np.zeros(len(ids), dtype=np.int64)

    ck = os.path.join(run_dir, "checkpoints")
    cluster_of = np.full(len(prep.test), -1, dtype=np.int64)
    prob = np.full(len(prep.test), np.nan)
    for c in range(int(labels.max()) + 1):
        members = {ids[i] for i in np.flatnonzero(labels == c)}
        mask = _customer_mask(prep.test, members)
        cluster_of[mask] = c
        path = os.path.join(ck, f"cluster_{c}.npz")
        if not os.path.exists(path):
            path = os.path.join(ck, "cluster_fallback.npz")
        if mask.any():
            prob[mask] = load_checkpoint(path).forward(prep.test.inputs[mask])
    return evaluate_pooled(prep.test.labels, prob, cluster_of, config.top_n_fraction)
