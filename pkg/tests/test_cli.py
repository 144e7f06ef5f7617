import json
import subprocess
import sys

import pytest

from cagru.cli import main, resolve_config, build_parser

SMALL = ["--L", "8", "--d", "4", "--w", "6", "--max-epochs", "2", "--batch-size", "64",
         "--kshape-n-init", "1"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--customers", "50", "--days", "36", "--seed", "3", "--out", str(out)]) == 0
    return out


def _n_buyers(synth_dir):
    # customers who never bought are absent from the log
    rows = (synth_dir / "transactions.csv").read_text().splitlines()[1:]
    return len({r.split(",")[0] for r in rows})


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_synth_writes_log_and_labels(synth_dir):
    assert (synth_dir / "transactions.csv").read_text().startswith("customer_id,")
    assert len((synth_dir / "labels.csv").read_text().splitlines()) == 51


def test_survey(synth_dir, tmp_path, capsys):
    code = main(["survey", "--data", str(synth_dir / "transactions.csv"), "--out", str(tmp_path)])
    assert code == 0
    summary = _json(capsys)
    assert sum(summary["histogram"]) == _n_buyers(synth_dir)
    assert summary["mean_hamming_within"] < summary["mean_hamming_global"]
    for name in ("activeness_histogram.csv", "distance_matrix.csv", "engagement_labels.csv"):
        assert (tmp_path / name).exists()


def test_cluster_reports_rand_index(synth_dir, tmp_path, capsys):
    code = main(["cluster", "--data", str(synth_dir / "transactions.csv"), "--n-clusters", "3",
                 "--labels", str(synth_dir / "labels.csv"),
                 "--out", str(tmp_path), *SMALL])
    assert code == 0
    summary = _json(capsys)
    assert sum(summary["sizes"]) == _n_buyers(synth_dir) and 0 <= summary["rand_index"] <= 1
    assert (tmp_path / "clusters" / "labels.csv").exists()


def test_train_then_evaluate(synth_dir, tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["train", "--data", str(synth_dir / "transactions.csv"), "--out", str(run), *SMALL]) == 0
    trained = _json(capsys)
    assert main(["evaluate", str(run)]) == 0
    assert _json(capsys)["f1"] == trained["f1"]


def test_ablate_subset_of_variants(synth_dir, tmp_path, capsys):
    code = main(["ablate", "--data", str(synth_dir / "transactions.csv"), "--variants", "CAGRU,GRU",
                 "--out", str(tmp_path), *SMALL])
    assert code == 0
    assert list(_json(capsys)) == ["CAGRU", "GRU"]


def test_sweep_reports_best_n(synth_dir, tmp_path, capsys):
    code = main(["sweep", "--data", str(synth_dir / "transactions.csv"), "--n-values", "2,3",
                 "--out", str(tmp_path), *SMALL])
    assert code == 0
    summary = _json(capsys)
    assert summary["best_n"] in (2, 3) and set(summary["sweep"]) == {"2", "3"}


def test_precedence_defaults_file_flags(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[run]\nseed = 5\nn_clusters = 4\n[model]\nL = 12\n")
    args = build_parser().parse_args(["train", "--config", str(ini), "--seed", "9",
                                      "--set", "gamma=0.8"])
    cfg = resolve_config(args)
    assert cfg.seed == 9 and cfg.n_clusters == 4 and cfg.model.L == 12 and cfg.model.gamma == 0.8


def test_exit_codes(tmp_path, capsys):
    # configuration problems exit 2, data problems exit 3
    assert main(["train", "--n-clusters", "0", "--out", str(tmp_path)]) == 2
    assert main(["train", "--set", "bogus=1", "--out", str(tmp_path)]) == 2
    assert main(["evaluate", str(tmp_path / "nothing")]) == 2
    assert main(["train", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("customer_id,shop_id,date\nu1,s1,not-a-date\n")
    assert main(["survey", "--data", str(bad), "--out", str(tmp_path)]) == 3
    err = capsys.readouterr().err
    assert "line" in err


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cagru", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "ablate" in proc.stdout
