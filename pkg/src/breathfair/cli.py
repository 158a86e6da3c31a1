"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
failure (the failing run index goes to stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import audio_ingest as ai
from . import threshold_mitigator as tm
from .dataset_pipeline import (EmptySelection, InsufficientPatients, SplitSpec,
                               TooShort, balance_classes, featurize_corpus,
                               filter_zero, instances_to_arrays, read_feature_csv,
                               select_recordings, split_train_test,
                               write_feature_csv)
from .dsp_features import DspConfig
from .experiment import (ConfigError, DataError, RunFailure, SyntheticSpec,
                         config_from_json, emit_outputs, generate_synthetic,
                         metric_snapshot, run_experiment)
from .tree_learner import ParamGrid, TreeParams, fit_tree, grid_search_cv

_DATA_ERRORS = (
    DataError, OSError, ValueError,
    ai.MalformedContainer, ai.UnsupportedEncoding, ai.EmptyAudio,
    ai.MissingColumn, ai.BadEnumValue, ai.DuplicateRow,
    EmptySelection, TooShort, InsufficientPatients,
)


def _parse_params(text: str) -> TreeParams:
    try:
        criterion, leaf, split = text.split(",")
        return TreeParams(criterion.strip(), int(leaf), int(split))
    except ValueError as exc:
        raise ConfigError(f"--params must look like 'gini,3,4': {exc}") from exc


def _cmd_featurize(args) -> int:
    root = Path(args.corpus)
    records = ai.load_metadata(root / "metadata.csv")
    corpus = select_recordings(ai.scan_corpus(root, records), args.min_seconds)
    instances = filter_zero(featurize_corpus(corpus, DspConfig(), args.sample_rate))
    write_feature_csv(instances, args.output)
    print(f"wrote {len(instances)} instances from "
          f"{len(corpus.entries)} recordings to {args.output}")
    return 0


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(bias=args.bias, noise=args.noise)
    instances = generate_synthetic(spec, args.seed)
    write_feature_csv(instances, args.output)
    print(f"wrote {len(instances)} synthetic instances "
          f"({spec.n_patients()} patients) to {args.output}")
    return 0


def _cmd_train(args) -> int:
    instances = read_feature_csv(args.features)
    rng = np.random.default_rng(args.seed)
    balanced = balance_classes(instances, rng)
    split = SplitSpec(test_fraction=args.test_fraction, seed=args.seed)
    train, test = split_train_test(balanced, split, rng)
    X_tr, y_tr, _, pid_tr = instances_to_arrays(train)
    X_te, y_te, g_te, _ = instances_to_arrays(test)
    if args.grid:
        params = grid_search_cv(X_tr, y_tr, ParamGrid(), args.seed, pid_tr)
        print(f"grid search winner: {params.criterion},"
              f"{params.min_samples_leaf},{params.min_samples_split}")
    else:
        params = _parse_params(args.params)
    tree = fit_tree(X_tr, y_tr, params)
    preds = (tree.predict_scores(X_te) > 0.5).astype(int)
    snap = metric_snapshot(preds, y_te, g_te)
    print(f"train={len(train)} test={len(test)} leaves={tree.n_leaves()}")
    for key in sorted(snap):
        print(f"  {key} = {snap[key]:.4f}")
    if args.output:
        Path(args.output).write_text(tree.to_json() + "\n", encoding="utf-8")
        print(f"tree written to {args.output}")
    return 0


def _cmd_experiment(args) -> int:
    cfg = config_from_json(args.config)
    out_dir = args.outdir or cfg.output_dir
    if out_dir is None:
        raise ConfigError("no output directory: pass -o or set output_dir in config")
    report = run_experiment(cfg)
    written = emit_outputs(report, out_dir)
    for path in written:
        print(f"wrote {path}")
    for constraint, metrics in sorted(report["aggregate"].items()):
        key = "dp_difference" if constraint == tm.DEMOGRAPHIC_PARITY else "eo_difference"
        m = metrics[key]
        pct = m["pct_improvement"]
        pct_text = "n/a" if pct is None else f"{pct:.2f}%"
        print(f"{constraint}: {key} {m['mu_before']:.4f} -> {m['mu_after']:.4f} "
              f"(improvement {pct_text}, Welch p = {m['p']:.3g})")
    return 0


def _cmd_report(args) -> int:
    report_path = Path(args.outdir) / "report.json"
    if not report_path.is_file():
        raise DataError(f"{report_path} not found")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    for path in emit_outputs(report, args.outdir):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="breathfair",
        description="Breathing-sound COPD/COVID-19 classification with "
                    "sex-bias measurement and threshold-policy mitigation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="MFCC-featurize a WAV corpus into a CSV")
    p.add_argument("corpus", help="corpus root holding audio/ and metadata.csv")
    p.add_argument("-o", "--output", required=True, help="feature CSV to write")
    p.add_argument("--sample-rate", type=int, default=ai.DEFAULT_SAMPLE_RATE)
    p.add_argument("--min-seconds", type=float, default=14.0)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("synth", help="generate a synthetic biased cohort CSV")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--bias", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="fit one tree on a feature CSV and report metrics")
    p.add_argument("features", help="feature CSV from featurize/synth")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--grid", action="store_true",
                       help="grid-search criterion/min_samples_leaf/min_samples_split")
    group.add_argument("--params", default="gini,3,4",
                       help="fixed criterion,min_samples_leaf,min_samples_split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("-o", "--output", help="write the fitted tree as JSON")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("experiment", help="run the repeated-run protocol from a config")
    p.add_argument("-c", "--config", required=True, help="config.json path")
    p.add_argument("-o", "--outdir", help="output directory (overrides config)")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="re-emit metrics.csv and figures from report.json")
    p.add_argument("outdir", help="directory holding report.json")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except RunFailure as exc:
        print(f"runtime failure in run {exc.run_index}: {exc.cause}", file=sys.stderr)
        return 4
    except Exception as exc:  # anything else is a runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
