import json
import math
from dataclasses import replace

import numpy as np
import pytest

from cagru import synth
from cagru.data import ActivityMatrix, write_transactions
from cagru.errors import ConfigError, UsageError
from cagru.forecaster import ModelConfig
from cagru.kshape import ClusterModel
from cagru.pipeline import (
    RunConfig,
    apply_overrides,
    best_n,
    cluster_sweep,
    default_features,
    evaluate,
    load_config,
    prepare,
    run_ablation,
    run_pipeline,
    train_variant,
)

SMALL_MODEL = ModelConfig(d=4, w=6, L=8, max_epochs=3, patience=1, batch_size=64, learning_rate=5e-3)


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    events, _ = synth.generate(synth.default_config(customers=60, days=40, seed=11))
    path = d / "tx.csv"
    write_transactions(events, path)
    return str(path)


@pytest.fixture
def config(data_file, tmp_path):
    return RunConfig(data=data_file, preset=None, model=SMALL_MODEL, out=str(tmp_path / "run"),
                     kshape_n_init=1)


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(n_clusters=0)
    with pytest.raises(ConfigError):
        RunConfig(top_n_fraction=1.0)
    with pytest.raises(ConfigError):
        RunConfig(variant="LSTM")
    with pytest.raises(ConfigError):
        RunConfig(data="x.csv", preset="16K")


def test_load_config_sections_and_case(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("seed = 4\n[run]\ndata = tx.csv\nvariant = GRU\nlookback = no\n"
                    "[model]\nL = 12\nl = 40\ngamma = 0.9\n")
    cfg = load_config(path)
    assert cfg.seed == 4 and cfg.data == "tx.csv" and cfg.preset is None
    assert cfg.variant == "GRU" and cfg.lookback is False
    assert cfg.model.L == 12 and cfg.model.l == 40 and cfg.model.gamma == 0.9


def test_load_config_errors(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nwhat = 1\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), {"n_clusters": "two"})


def test_default_features_hand_values():
    bought = np.array([[1, 0, 1, 1, 0, 0, 0, 0, 1, 1]], dtype=np.uint8)
    m = ActivityMatrix(("u",), ("s",), 10, bought[:, :, None])
    f = default_features(m, L=4)
    # trailing-4 activeness: day 0 -> 1/1, day 3 -> 3/4, day 9 -> 2/4
    assert f[0, 0, 0] == 1.0 and f[0, 3, 0] == 0.75 and f[0, 9, 0] == 0.5
    # trailing-week count / 7: day 6 covers days 0..6 -> 3 purchases
    assert f[0, 6, 1] == pytest.approx(3 / 7)
    assert f[0, 9, 1] == pytest.approx(3 / 7)


def test_features_never_look_ahead():
    rng = np.random.default_rng(0)
    data = (rng.random((3, 20, 2)) < 0.5).astype(np.uint8)
    m = ActivityMatrix(("a", "b", "c"), ("s", "t"), 20, data)
    full = default_features(m, 5)
    cut = ActivityMatrix(m.customers, m.shops, 12, data[:, :12])
    np.testing.assert_array_equal(default_features(cut, 5), full[:, :12])


def test_run_pipeline_contract(config):
    result = run_pipeline(config)
    r = result.report
    n_test = r.metadata["windows"]["test"]
    assert r.tp + r.fp == math.floor(0.3 * n_test + 1e-9)
    assert sum(v["n_samples"] for v in r.per_cluster.values()) == n_test == r.n_samples
    out = config.out
    for name in ("report.json", "metrics.csv", "loss_curves.csv", "dictionary.csv", "config.json",
                 "clusters/labels.csv", "checkpoints/cluster_0.npz", "checkpoints/cluster_1.npz"):
        assert (__import__("pathlib").Path(out) / name).exists(), name


def test_run_is_byte_identical(config, tmp_path):
    run_pipeline(config)
    run_pipeline(replace(config, out=str(tmp_path / "again")))
    a = open(f"{config.out}/report.json", "rb").read()
    b = open(tmp_path / "again" / "report.json", "rb").read()
    assert a == b


def test_single_cluster_equals_agru(config):
    cagru = run_pipeline(replace(config, n_clusters=1, variant="CAGRU"), save=False).report
    agru = run_pipeline(replace(config, n_clusters=1, variant="AGRU"), save=False).report
    assert cagru.row() == agru.row()


def test_ablation_table(config):
    table = run_ablation(config)
    assert list(table) == ["CAGRU", "CGRU", "AGRU", "GRU"]
    assert len({r.n_samples for r in table.values()}) == 1
    rows = open(f"{config.out}/ablation.csv").read().splitlines()
    assert rows[0] == "variant,acc,auc,precision,recall,f1" and len(rows) == 5
    report = json.load(open(f"{config.out}/report.json"))
    assert set(report["ablation"]) == set(table)


def test_sweep(config):
    reports = cluster_sweep(config, n_values=(2, 3, 4, 5))
    assert list(reports) == [2, 3, 4, 5]
    assert len({r.n_samples for r in reports.values()}) == 1
    report = json.load(open(f"{config.out}/report.json"))
    assert report["best_n"] == best_n(reports)
    assert reports[report["best_n"]].f1 == max(r.f1 for r in reports.values())
    assert len(open(f"{config.out}/sweep.csv").read().splitlines()) == 5


def test_best_n_prefers_first_on_ties():
    class R:
        def __init__(self, f1):
            self.f1 = f1
    assert best_n({2: R(0.5), 3: R(0.6), 4: R(0.6)}) == 3


def test_evaluate_reproduces_saved_metrics(config):
    result = run_pipeline(config)
    again = evaluate(config.out)
    assert again.row() == result.report.row()
    assert (again.tp, again.fp) == (result.report.tp, result.report.fp)


def test_evaluate_needs_a_run(tmp_path):
    with pytest.raises(UsageError):
        evaluate(tmp_path)


def test_empty_cluster_is_reported(config):
    prep = prepare(config)
    n = len(prep.matrix.customers)
    labels = np.arange(n) % 2
    clusters = ClusterModel(3, np.zeros((3, prep.matrix.days)), labels, 1, 0.0)
    result = train_variant(prep, "CAGRU", clusters)
    assert any("cluster 2" in w for w in result.warnings)
    assert not np.isnan(result.probabilities).any()
