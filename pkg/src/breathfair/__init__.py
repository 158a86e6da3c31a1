"""breathfair: sex-bias measurement and mitigation for breathing-sound
COPD/COVID-19 classifiers.

Pipeline: WAV ingest -> MFCC features -> balanced patient-grouped splits ->
CART tree -> per-group randomized threshold policies (demographic parity /
equalized odds) -> repeated-run reports with Welch tests.
"""

from .audio_ingest import (CorpusIndex, Label, PatientRecord, Sex, Waveform,
                           decode_wav, load_metadata, scan_corpus,
                           to_mono_resampled)
from .dataset_pipeline import (Instance, SplitSpec, balance_classes,
                               filter_zero, read_feature_csv, segment_and_featurize,
                               select_recordings, split_train_test,
                               write_feature_csv)
from .dsp_features import DspConfig, MfccMatrix, mel_filterbank, mfcc, \
    power_spectrogram, summarize
from .experiment import (ExperimentConfig, SyntheticSpec, config_from_json,
                         emit_outputs, generate_synthetic, run_experiment)
from .fairness_metrics import (accuracy, demographic_parity, equalized_odds,
                               group_rates, selection_rate)
from .stats import (RunSamples, WelchResult, percent_improvement,
                    summarize_runs, welch_t_test)
from .threshold_mitigator import (ThresholdPolicy, apply_policy,
                                  dp_tradeoff_curve, fit_demographic_parity,
                                  fit_equalized_odds, roc_convex_hull)
from .tree_learner import (ParamGrid, Tree, TreeParams, fit_tree,
                           grid_search_cv, impurity)

__version__ = "0.1.0"
