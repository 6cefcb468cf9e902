"""UAV type classification from PX4 ULog flight logs."""

from .ulog import (
    BadMagic,
    FlightLog,
    TopicSeries,
    UlogError,
    VehicleType,
    extract_vehicle_type,
    flight_duration,
    parse_ulog,
)
from .cache import read_cache, write_cache
from .features import (
    BASELINE_SUBSET,
    FeatureKey,
    FeatureSubset,
    assemble_features,
    compute_coverage,
    prune_by_coverage,
    quaternion_to_euler,
    random_subsets,
)
from .resample import (
    Dataset,
    SampledInstance,
    SamplingConfig,
    Scaler,
    average_sample,
    fixed_window_sample,
    global_time_range,
)
from .balance import (
    AugmentSpec,
    BalanceConfig,
    assert_test_fold_purity,
    augment_timeseries,
    cluster_centroid_undersample,
    random_oversample,
    random_undersample,
    rebalance,
    smote_oversample,
)
from .lstm import AdamState, LstmParams, TrainConfig, adam_step, backward, forward, predict, train
from .evaluate import (
    TrialReport,
    aggregate_folds,
    baseline_scores,
    class_metrics,
    confusion,
    macro_f,
    stratified_kfold,
)
from .synth import SynthSpec, generate_corpus, generate_flight, write_ulog
from .pipeline import build_dataset, run_trial

__version__ = "0.1.0"
