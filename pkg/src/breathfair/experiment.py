"""Experiment orchestration: repeated runs, before/after metrics, reports.

Each run re-randomizes the majority-class subsample and the train/test
split from a seed derived from (master_seed, run index), fits the tree,
takes baseline predictions at score > 0.5, then fits and applies one
threshold policy per constraint. Metric samples across runs are aggregated
with Welch tests and percentage improvements. The report is a plain JSON
document whose bytes are a pure function of (config, master_seed).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import fairness_metrics as fm
from . import threshold_mitigator as tm
from .audio_ingest import DEFAULT_SAMPLE_RATE, Label, Sex, load_metadata, scan_corpus
from .dataset_pipeline import (Instance, SplitSpec, balance_classes,
                               featurize_corpus, filter_zero, group_composition,
                               instances_to_arrays, read_feature_csv,
                               select_recordings, split_train_test)
from .dsp_features import DspConfig
from .seeding import derive_seed, text_key
from .stats import RunSamples, summarize_runs
from .svg_report import Bar, Panel, render_figure
from .tree_learner import ParamGrid, TreeParams, fit_tree, grid_search_cv

POSITIVE_CLASS = "covid"
BASELINE_THRESHOLD = 0.5

# The synthetic source stands in for a fixed external corpus, so its draw
# does not depend on master_seed; runs re-randomize subsample and split only.
SYNTHETIC_POOL_SEED = 99

# synthetic cohort geometry (see SyntheticSpec)
N_INFORMATIVE = 8
SIGNAL_SCALE = 1.1
COVID_SHIFT_GAIN = 2.0 * SIGNAL_SCALE + 0.4   # female class centres meet at bias=1
COPD_SHIFT_GAIN = 0.4
COVID_SPREAD_GAIN = 0.8
COPD_SHRINK_GAIN = 0.35
QUANT_STEP = 0.5
_BACKGROUND = np.cos(np.arange(40))


class ConfigError(Exception):
    """config.json (or CLI arguments) are malformed."""


class DataError(Exception):
    """The configured data source is missing or unusable."""


class RunFailure(Exception):
    """A run inside the repeated-run loop failed."""

    def __init__(self, run_index: int, cause: Exception):
        super().__init__(f"run {run_index} failed: {cause}")
        self.run_index = run_index
        self.cause = cause


@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale biased cohort standing in for the external corpora.

    Class identity lives on a shared scalar written to the first
    N_INFORMATIVE feature coordinates (the rest carry a fixed background).
    `bias` shifts the female class centres toward each other and skews
    their spreads (positives wider, negatives tighter), so a tree trained
    on the pooled data systematically under-detects positive females, the
    way a cohort dominated by one sex behaves. Values are snapped to a
    coarse lattice so leaf scores stay calibrated instead of memorizing
    the training split; bias 0 restores full symmetry between the sexes.
    """

    copd_male: int = 15
    copd_female: int = 15
    covid_male: int = 30
    covid_female: int = 30
    bias: float = 1.0
    noise: float = 1.0
    age_range: tuple[int, int] = (54, 54)

    def __post_init__(self):
        cells = (self.copd_male, self.copd_female, self.covid_male, self.covid_female)
        if any(c < 2 for c in cells):
            raise ValueError("every (label, sex) cell needs at least 2 patients")
        if self.age_range[0] > self.age_range[1]:
            raise ValueError("age_range must be (low, high)")
        if self.noise <= 0:
            raise ValueError("noise must be positive")

    def n_patients(self) -> int:
        return self.copd_male + self.copd_female + self.covid_male + self.covid_female

    def cluster(self, label: Label, sex: Sex) -> tuple[float, float]:
        """(centre, spread) of the informative scalar for one cell."""
        if label is Label.COVID:
            centre, spread = SIGNAL_SCALE, self.noise
            if sex is Sex.FEMALE:
                centre -= COVID_SHIFT_GAIN * self.bias
                spread *= 1.0 + COVID_SPREAD_GAIN * self.bias
        else:
            centre, spread = -SIGNAL_SCALE, self.noise
            if sex is Sex.FEMALE:
                centre -= COPD_SHIFT_GAIN * self.bias
                spread /= 1.0 + COPD_SHRINK_GAIN * self.bias
        return centre, spread


def generate_synthetic(spec: SyntheticSpec, seed: int) -> list[Instance]:
    """7 instances per synthetic patient, deterministic given the seed."""
    rng = np.random.default_rng(seed)
    lo, hi = spec.age_range
    step = QUANT_STEP * spec.noise
    cells = (
        (Label.COPD, Sex.MALE, spec.copd_male),
        (Label.COPD, Sex.FEMALE, spec.copd_female),
        (Label.COVID, Sex.MALE, spec.covid_male),
        (Label.COVID, Sex.FEMALE, spec.covid_female),
    )
    instances: list[Instance] = []
    for label, sex, count in cells:
        centre, spread = spec.cluster(label, sex)
        for p in range(count):
            pid = f"syn-{label.value}-{sex.value[0]}{p:03d}"
            age = int(rng.integers(lo, hi + 1))
            for seg in range(7):
                value = centre + rng.normal(0.0, spread)
                value = np.round(value / step) * step
                features = _BACKGROUND.copy()
                features[:N_INFORMATIVE] = value
                instances.append(Instance(
                    patient_id=pid, segment_index=seg, features=features,
                    sex=sex, age=age, label=1 if label is Label.COVID else 0,
                ))
    return instances


@dataclass(frozen=True)
class ExperimentConfig:
    features_csv: str | None = None
    corpus_dir: str | None = None
    synthetic: SyntheticSpec | None = None
    sample_rate: int = DEFAULT_SAMPLE_RATE
    dsp: DspConfig = field(default_factory=DspConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    params: TreeParams | None = field(default_factory=lambda: TreeParams("gini", 3, 4))
    grid: ParamGrid | None = None
    constraints: tuple[str, ...] = tm.CONSTRAINTS
    runs: int = 30
    master_seed: int = 0
    dp_grid_size: int = tm.DEFAULT_DP_GRID
    eo_grid_size: int = tm.DEFAULT_EO_GRID
    output_dir: str | None = None

    def __post_init__(self):
        sources = [s for s in (self.features_csv, self.corpus_dir, self.synthetic)
                   if s is not None]
        if len(sources) != 1:
            raise ConfigError("exactly one of features_csv, corpus_dir, synthetic required")
        if self.runs < 2:
            raise ConfigError("runs must be >= 2 (Welch test needs n >= 2)")
        if not self.constraints:
            raise ConfigError("at least one constraint required")
        for c in self.constraints:
            if c not in tm.CONSTRAINTS:
                raise ConfigError(f"unknown constraint {c!r}")
        if (self.params is None) == (self.grid is None):
            raise ConfigError("exactly one of params, grid required")


def _expect_keys(obj: dict, allowed: Sequence[str], where: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(unknown)}")


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a config.json document.

    Unknown keys are rejected at every level so typos fail loudly.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _expect_keys(doc, ("source", "audio", "dsp", "split", "params", "grid",
                       "constraints", "runs", "master_seed", "dp_grid_size",
                       "eo_grid_size", "output_dir"), "config")
    kwargs: dict = {}
    try:
        source = doc.get("source")
        if not isinstance(source, dict) or len(source) != 1:
            raise ConfigError("source must hold exactly one of "
                              "features_csv, corpus_dir, synthetic")
        key, value = next(iter(source.items()))
        if key == "features_csv":
            kwargs["features_csv"] = str(value)
        elif key == "corpus_dir":
            kwargs["corpus_dir"] = str(value)
        elif key == "synthetic":
            _expect_keys(value, ("copd_male", "copd_female", "covid_male",
                                 "covid_female", "bias", "noise", "age_range"),
                         "source.synthetic")
            if "age_range" in value:
                value = dict(value, age_range=tuple(value["age_range"]))
            kwargs["synthetic"] = SyntheticSpec(**value)
        else:
            raise ConfigError(f"unknown source key {key!r}")
        if "audio" in doc:
            _expect_keys(doc["audio"], ("sample_rate",), "audio")
            kwargs["sample_rate"] = int(doc["audio"]["sample_rate"])
        if "dsp" in doc:
            _expect_keys(doc["dsp"], ("frame_length", "hop_length", "n_mels",
                                      "n_mfcc", "fmin", "fmax", "amin", "top_db"), "dsp")
            kwargs["dsp"] = DspConfig(**doc["dsp"])
        if "split" in doc:
            _expect_keys(doc["split"], ("test_fraction", "group_by_patient",
                                        "stratify_by_label", "seed"), "split")
            kwargs["split"] = SplitSpec(**doc["split"])
        if "grid" in doc:
            _expect_keys(doc["grid"], ("criteria", "leaf_values", "split_values",
                                       "folds"), "grid")
            grid = {k: tuple(v) if isinstance(v, list) else v
                    for k, v in doc["grid"].items()}
            kwargs["grid"] = ParamGrid(**grid)
            kwargs["params"] = None
        elif "params" in doc:
            _expect_keys(doc["params"], ("criterion", "min_samples_leaf",
                                         "min_samples_split"), "params")
            kwargs["params"] = TreeParams(**doc["params"])
        if "constraints" in doc:
            kwargs["constraints"] = tuple(doc["constraints"])
        for key in ("runs", "master_seed", "dp_grid_size", "eo_grid_size"):
            if key in doc:
                kwargs[key] = int(doc[key])
        if "output_dir" in doc:
            kwargs["output_dir"] = str(doc["output_dir"])
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_from_json(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


def _config_echo(cfg: ExperimentConfig) -> dict:
    doc = asdict(cfg)
    doc["dsp"] = asdict(cfg.dsp)
    doc["split"] = asdict(cfg.split)
    if cfg.synthetic is not None:
        doc["synthetic"] = asdict(cfg.synthetic)
        doc["synthetic"]["age_range"] = list(cfg.synthetic.age_range)
    if cfg.params is not None:
        doc["params"] = asdict(cfg.params)
    if cfg.grid is not None:
        doc["grid"] = {k: list(v) if isinstance(v, tuple) else v
                       for k, v in asdict(cfg.grid).items()}
    doc["constraints"] = list(cfg.constraints)
    return doc


def load_instances(cfg: ExperimentConfig) -> list[Instance]:
    """Materialize the instance pool from whichever source is configured."""
    try:
        if cfg.features_csv is not None:
            return read_feature_csv(cfg.features_csv)
        if cfg.corpus_dir is not None:
            root = Path(cfg.corpus_dir)
            records = load_metadata(root / "metadata.csv")
            corpus = select_recordings(scan_corpus(root, records))
            return filter_zero(featurize_corpus(corpus, cfg.dsp, cfg.sample_rate))
        assert cfg.synthetic is not None
        return generate_synthetic(cfg.synthetic, SYNTHETIC_POOL_SEED)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    except Exception as exc:
        if exc.__class__.__module__.startswith("breathfair"):
            raise DataError(str(exc)) from exc
        raise


def metric_snapshot(predictions: Sequence[int], labels: Sequence[int],
                    groups: Sequence[str]) -> dict[str, float]:
    """All reported metrics, keyed the way they appear in report.json."""
    snap: dict[str, float] = {"accuracy": fm.accuracy(predictions, labels)}
    parity = fm.demographic_parity(predictions, groups)
    snap["dp_ratio"] = parity.dp_ratio
    snap["dp_difference"] = parity.dp_difference
    for g, rate in parity.rates.items():
        snap[f"selection_rate.{g}"] = rate
    snap["selection_rate.overall"] = fm.selection_rate(predictions)
    odds = fm.equalized_odds(predictions, labels, groups)
    snap["eo_ratio"] = odds.eo_ratio
    snap["eo_difference"] = odds.eo_difference
    for name, rates in (("tpr", odds.tpr), ("fpr", odds.fpr), ("fnr", odds.fnr)):
        for g, rate in rates.items():
            snap[f"{name}.{g}"] = rate
    return snap


def _single_run(instances: list[Instance], cfg: ExperimentConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    balanced = balance_classes(instances, rng)
    train, test = split_train_test(balanced, cfg.split, rng)
    X_tr, y_tr, g_tr, pid_tr = instances_to_arrays(train)
    X_te, y_te, g_te, _ = instances_to_arrays(test)

    if cfg.grid is not None:
        params = grid_search_cv(X_tr, y_tr, cfg.grid, seed,
                                pid_tr if cfg.split.group_by_patient else None)
    else:
        params = cfg.params
    tree = fit_tree(X_tr, y_tr, params)
    scores_tr = tree.predict_scores(X_tr)
    scores_te = tree.predict_scores(X_te)

    before_preds = (scores_te > BASELINE_THRESHOLD).astype(int)
    before = metric_snapshot(before_preds, y_te, g_te)

    keys = [text_key(f"{inst.patient_id}#{inst.segment_index}") for inst in test]
    groups_tr = np.array(g_tr)
    group_data = {
        g: (scores_tr[groups_tr == g], y_tr[groups_tr == g])
        for g in sorted(set(g_tr))
    }
    after: dict[str, dict[str, float]] = {}
    policies: dict[str, dict] = {}
    for constraint in cfg.constraints:
        if constraint == tm.DEMOGRAPHIC_PARITY:
            policy = tm.fit_demographic_parity(group_data, cfg.dp_grid_size)
        else:
            policy = tm.fit_equalized_odds(group_data, cfg.eo_grid_size)
        preds = tm.apply_policy_batch(policy, scores_te, g_te, seed, keys)
        after[constraint] = metric_snapshot(preds, y_te, g_te)
        policies[constraint] = policy.to_dict()

    return {
        "seed": seed,
        "composition": group_composition(balanced),
        "train_size": len(train),
        "test_size": len(test),
        "params": asdict(params),
        "before": before,
        "after": after,
        "policies": policies,
    }


def _aggregate(run_entries: list[dict], constraints: Sequence[str]) -> dict:
    aggregate: dict[str, dict] = {}
    for constraint in constraints:
        metrics = sorted(run_entries[0]["before"])
        samples = [
            RunSamples(
                metric=m,
                before=tuple(r["before"][m] for r in run_entries),
                after=tuple(r["after"][constraint][m] for r in run_entries),
            )
            for m in metrics
        ]
        aggregate[constraint] = {
            m: summary.to_dict() for m, summary in summarize_runs(samples).items()
        }
    return aggregate


def _check_rate_aggregation(aggregate: dict) -> dict:
    """mean-over-runs of dp_difference must dominate the gap of mean rates.

    This is the Jensen-style relation that lets a small gap between mean
    group selection rates coexist with a larger mean per-run difference.
    """
    checks = {}
    for constraint, metrics in aggregate.items():
        rate_keys = [k for k in metrics
                     if k.startswith("selection_rate.") and not k.endswith("overall")]
        for phase in ("before", "after"):
            mu = "mu_" + phase
            means = [metrics[k][mu] for k in rate_keys]
            gap = max(means) - min(means)
            mean_diff = metrics["dp_difference"][mu]
            if mean_diff + 1e-9 < gap:
                raise RuntimeError(
                    f"aggregation inconsistency ({constraint}/{phase}): "
                    f"mean dp_difference {mean_diff} < gap of mean rates {gap}")
            checks[f"{constraint}.{phase}"] = {
                "mean_dp_difference": mean_diff,
                "gap_of_mean_selection_rates": gap,
            }
    return checks


def run_experiment(cfg: ExperimentConfig,
                   instances: list[Instance] | None = None) -> dict:
    """Full repeated-run protocol; returns the report document."""
    pool = load_instances(cfg) if instances is None else instances
    if not pool:
        raise DataError("instance pool is empty")
    run_entries = []
    for i in range(cfg.runs):
        try:
            run_entries.append(_single_run(pool, cfg, derive_seed(cfg.master_seed, i + 1)))
        except Exception as exc:
            raise RunFailure(i, exc) from exc
    aggregate = _aggregate(run_entries, cfg.constraints)
    return {
        "config": _config_echo(cfg),
        "positive_class": POSITIVE_CLASS,
        "baseline_threshold": BASELINE_THRESHOLD,
        "pool_size": len(pool),
        "pool_composition": group_composition(pool),
        "runs": run_entries,
        "aggregate": aggregate,
        "aggregation_checks": _check_rate_aggregation(aggregate),
    }


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

def _json_safe(value):
    """Replace non-finite floats by strings so the document is valid JSON."""
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def report_to_json(report: dict) -> str:
    return json.dumps(_json_safe(report), sort_keys=True, indent=2,
                      allow_nan=False) + "\n"


_FIGURE_PANELS = {
    tm.DEMOGRAPHIC_PARITY: (
        ("Selection rate", "selection_rate", True),
        ("Demographic parity ratio", "dp_ratio", False),
        ("Demographic parity difference", "dp_difference", False),
    ),
    tm.EQUALIZED_ODDS: (
        ("False negative rate", "fnr", True),
        ("Equalized odds ratio", "eo_ratio", False),
        ("Equalized odds difference", "eo_difference", False),
    ),
}


def _figure_panels(constraint: str, metrics: dict) -> list[Panel]:
    panels = []
    for title, key, per_group in _FIGURE_PANELS[constraint]:
        bars = []
        if per_group:
            groups = sorted(k.split(".", 1)[1] for k in metrics
                            if k.startswith(key + ".") and not k.endswith("overall"))
            for group in groups:
                m = metrics[f"{key}.{group}"]
                for phase in ("before", "after"):
                    bars.append(Bar(metric=key, series=group, phase=phase,
                                    mean=m[f"mu_{phase}"], err=m[f"stderr_{phase}"]))
        else:
            m = metrics[key]
            for phase in ("before", "after"):
                bars.append(Bar(metric=key, series="value", phase=phase,
                                mean=m[f"mu_{phase}"], err=m[f"stderr_{phase}"]))
        panels.append(Panel(title=title, bars=bars))
    return panels


def emit_outputs(report: dict, out_dir) -> list[Path]:
    """Write report.json, metrics.csv, and one figure per constraint."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    report_path = out / "report.json"
    report_path.write_text(report_to_json(report), encoding="utf-8")
    written.append(report_path)

    csv_path = out / "metrics.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "constraint", "phase", "metric", "value"])
        for i, entry in enumerate(report["runs"]):
            for constraint in sorted(entry["after"]):
                for phase in ("before", "after"):
                    snap = entry["before"] if phase == "before" else entry["after"][constraint]
                    for metric in sorted(snap):
                        writer.writerow([i, constraint, phase, metric, f"{snap[metric]:.6f}"])
    written.append(csv_path)

    fig_dir = out / "figures"
    for constraint, metrics in sorted(report["aggregate"].items()):
        if constraint not in _FIGURE_PANELS or not metrics:
            continue
        fig_dir.mkdir(exist_ok=True)
        fig_path = fig_dir / f"{constraint}.svg"
        title = f"{constraint.replace('_', ' ')} - before vs. after mitigation " \
                f"({len(report['runs'])} runs, stderr bars)"
        render_figure(title, _figure_panels(constraint, metrics), fig_path)
        written.append(fig_path)
    return written
