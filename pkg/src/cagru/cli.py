"""Command-line interface.

Every subcommand accepts ``--config FILE``, ``--seed`` and ``--out``.
Settings resolve as defaults, then the config file, then explicit flags.
Exit status is 0 on success, 2 for configuration errors, 3 for data errors
and 4 for numeric failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import numpy as np

from . import pipeline, survey, synth
from .data import write_transactions
from .errors import CagruError, ConfigError, DataError
from .metrics import rand_index

log = logging.getLogger("cagru")

# flag -> config key; model keys are forwarded to ModelConfig
RUN_FLAGS = {
    "data": str, "preset": str, "shops": int, "days": int, "n_clusters": int,
    "variant": str, "top_n_fraction": float, "kshape_n_init": int,
}
MODEL_FLAGS = {
    "L": int, "d": int, "w": int, "gamma": float, "learning_rate": float,
    "batch_size": int, "max_epochs": int, "patience": int, "compress": str,
}


def _add_common(p, run_flags=True):
    p.add_argument("--config", help="key/value config file (INI style)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)
    if not run_flags:
        return
    for name, typ in {**RUN_FLAGS, **MODEL_FLAGS}.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; repeatable")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cagru", description="Cluster-aware attention-GRU purchase-intention pipeline."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic transaction log and archetype labels")
    _add_common(p, run_flags=False)
    p.add_argument("--preset", help=f"scale preset, one of {sorted(synth.PRESETS)}")
    p.add_argument("--customers", type=int, default=300)
    p.add_argument("--shops", type=int, default=4)
    p.add_argument("--days", type=int)

    p = sub.add_parser("survey", help="activeness histogram, Hamming distances, engagement k-means")
    _add_common(p)
    p.add_argument("--engagement-clusters", type=int, default=3)

    p = sub.add_parser("cluster", help="encode customers and run k-shape")
    _add_common(p)
    p.add_argument("--labels", help="customer_id,label CSV; adds the Rand index to the summary")

    p = sub.add_parser("train", help="run one variant end to end")
    _add_common(p)

    p = sub.add_parser("evaluate", help="re-score a saved run from its artifacts")
    _add_common(p, run_flags=False)
    p.add_argument("run_dir", help="directory written by `train`")

    p = sub.add_parser("ablate", help="compare CAGRU, CGRU, AGRU and GRU")
    _add_common(p)
    p.add_argument("--variants", default=",".join(pipeline.VARIANTS))

    p = sub.add_parser("sweep", help="run the pipeline for several cluster counts")
    _add_common(p)
    p.add_argument("--n-values", default=",".join(map(str, pipeline.SWEEP_VALUES)))
    return parser


def resolve_config(args) -> pipeline.RunConfig:
    config = pipeline.RunConfig()
    if args.config:
        config = pipeline.load_config(args.config, config)
    values = {}
    for name in (*RUN_FLAGS, *MODEL_FLAGS):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    for item in getattr(args, "set", []):
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        values[key] = val
    if args.seed is not None:
        values["seed"] = args.seed
    if args.out is not None:
        values["out"] = args.out
    return pipeline.apply_overrides(config, values)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _csv_list(text, typ=str):
    return tuple(typ(x.strip()) for x in text.split(",") if x.strip())


def cmd_synth(args):
    seed = 0 if args.seed is None else args.seed
    if args.preset:
        kw = {} if args.days is None else {"days": args.days}
        config = synth.preset(args.preset, seed=seed, shops=args.shops, **kw)
    else:
        config = synth.default_config(args.customers, args.shops, args.days or 120, seed)
    events, labels = synth.generate(config)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    write_transactions(events, os.path.join(out, "transactions.csv"))
    synth.write_labels(labels, os.path.join(out, "labels.csv"))
    _emit({"customers": config.customers, "shops": config.shops, "days": config.days,
           "interactions": len(events), "out": out})


def cmd_survey(args):
    config = resolve_config(args)
    ds = pipeline.load_dataset(config)
    m = ds.matrix
    values = survey.activeness_all(m)
    km = survey.kmeans_engagement(values, args.engagement_clusters, seed=config.seed)
    bits = [survey.attendance_sequence(m, u) for u in m.customers]
    dm = survey.hamming_matrix(bits)
    counts, edges = survey.activeness_histogram(values)
    os.makedirs(config.out, exist_ok=True)
    survey.write_histogram_csv(os.path.join(config.out, "activeness_histogram.csv"), counts, edges)
    survey.write_distance_csv(os.path.join(config.out, "distance_matrix.csv"), dm)
    survey.write_labels_csv(os.path.join(config.out, "engagement_labels.csv"),
                            m.customers, values, km.labels)
    _emit({
        "histogram": counts.tolist(),
        "head_tail": survey.is_head_tail(counts),
        "mean_hamming_global": survey.mean_pairwise(dm.values),
        "mean_hamming_within": survey.mean_pairwise(dm.values, km.labels),
        "engagement_centers": km.centers.tolist(),
    })


def cmd_cluster(args):
    config = resolve_config(args)
    dataset, dictionary, codes = pipeline.encode_dataset(config)
    model = pipeline.cluster_codes(codes, config)
    os.makedirs(config.out, exist_ok=True)
    dictionary.to_csv(os.path.join(config.out, "dictionary.csv"))
    model.save(os.path.join(config.out, "clusters"), dataset.matrix.customers)
    summary = {
        "k": model.k,
        "sizes": np.bincount(model.labels, minlength=model.k).tolist(),
        "inertia": model.inertia,
        "iterations": model.iterations_run,
    }
    known = synth.read_labels(args.labels) if args.labels else dataset.labels
    if known:
        missing = [c for c in dataset.matrix.customers if c not in known]
        if missing:
            raise DataError(f"no label for customer {missing[0]!r}")
        truth = [known[c] for c in dataset.matrix.customers]
        summary["rand_index"] = rand_index(truth, model.labels)
    _emit(summary)


def cmd_train(args):
    config = resolve_config(args)
    result = pipeline.run_pipeline(config)
    _emit(result.report.to_dict())


def cmd_evaluate(args):
    report = pipeline.evaluate(args.run_dir)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "evaluation.json"), "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    _emit(report.to_dict())


def cmd_ablate(args):
    config = resolve_config(args)
    table = pipeline.run_ablation(config, variants=_csv_list(args.variants))
    _emit({v: r.row() for v, r in table.items()})


def cmd_sweep(args):
    config = resolve_config(args)
    reports = pipeline.cluster_sweep(config, n_values=_csv_list(args.n_values, int))
    _emit({"best_n": pipeline.best_n(reports),
           "sweep": {str(n): r.row() for n, r in reports.items()}})


COMMANDS = {
    "synth": cmd_synth, "survey": cmd_survey, "cluster": cmd_cluster, "train": cmd_train,
    "evaluate": cmd_evaluate, "ablate": cmd_ablate, "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except CagruError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        # unreadable or missing input files count as data errors
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
