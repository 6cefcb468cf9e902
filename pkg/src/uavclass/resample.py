"""Fixed-length resampling of variable-length, asynchronous flight series.

Both methods bin a flight's own [t_min, t_max] envelope into n equal
intervals. Average sampling uses every point in a bin; fixed-window average
sampling only uses points within window_s seconds of the bin start. Empty
bins become 0 and are flagged so standardization can skip them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ulog import US_PER_S, VehicleType

AVERAGE = "average"
FIXED_WINDOW = "fixed_window"


class ResampleError(Exception):
    pass


class AllEmpty(ResampleError):
    pass


class DegenerateRange(ResampleError):
    """Flight spans a single instant; excluded at dataset assembly."""


class EmptySplit(ResampleError):
    pass


@dataclass
class SamplingConfig:
    method: str = AVERAGE
    n_intervals: int = 50
    window_s: float | None = None
    standardize: bool = True

    def __post_init__(self):
        if self.method not in (AVERAGE, FIXED_WINDOW):
            raise ResampleError(f"unknown sampling method {self.method!r}")
        if self.n_intervals < 1:
            raise ResampleError("n_intervals must be >= 1")
        if self.method == FIXED_WINDOW and (self.window_s is None or self.window_s <= 0):
            raise ResampleError("fixed_window sampling needs window_s > 0")

    def describe(self) -> str:
        if self.method == AVERAGE:
            return f"{self.n_intervals}"
        return f"{self.n_intervals}, {self.window_s:g}"


@dataclass
class SampledInstance:
    """Fixed-length [n_intervals x n_features] matrix with its class label."""

    values: np.ndarray
    mask: np.ndarray  # True where the bin contained data
    label: VehicleType
    source_id: str = ""
    synthetic: bool = False


@dataclass
class Dataset:
    """Labeled instances sharing one sampling configuration."""

    instances: list
    config: SamplingConfig
    feature_names: tuple = ()

    def __len__(self):
        return len(self.instances)

    def labels(self) -> np.ndarray:
        return np.array([inst.label.class_index for inst in self.instances])

    def class_counts(self) -> dict:
        counts = {}
        for inst in self.instances:
            counts[inst.label] = counts.get(inst.label, 0) + 1
        return counts


def global_time_range(series_list):
    """Envelope (t_min, t_max) in microseconds over a flight's feature series."""
    non_empty = [(ts, vs) for ts, vs in series_list if len(ts) > 0]
    if not non_empty:
        raise AllEmpty("no samples in any series")
    t_min = min(int(ts[0]) for ts, _ in non_empty)
    t_max = max(int(ts[-1]) for ts, _ in non_empty)
    return t_min, t_max


def _bin_edges(t_min, t_max, n_intervals):
    if t_max == t_min:
        raise DegenerateRange("flight spans a single instant")
    width = (t_max - t_min) / n_intervals
    return t_min + width * np.arange(n_intervals + 1), width


def _bin_means(series_list, n_intervals, window_us=None):
    t_min, t_max = global_time_range(series_list)
    edges, width = _bin_edges(t_min, t_max, n_intervals)
    values = np.zeros((n_intervals, len(series_list)))
    mask = np.zeros((n_intervals, len(series_list)), dtype=bool)
    for f, (ts, vs) in enumerate(series_list):
        t = np.asarray(ts, dtype=np.float64)
        v = np.asarray(vs, dtype=np.float64)
        bins = np.searchsorted(edges, t, side="right") - 1
        bins = np.clip(bins, 0, n_intervals - 1)
        if window_us is not None:
            keep = (t - edges[bins]) <= window_us
            bins, v = bins[keep], v[keep]
        sums = np.bincount(bins, weights=v, minlength=n_intervals)
        counts = np.bincount(bins, minlength=n_intervals)
        filled = counts > 0
        values[filled, f] = sums[filled] / counts[filled]
        mask[:, f] = filled
    return values, mask


def average_sample(series_list, n_intervals):
    """Mean of each feature per equal-width bin; empty bins are zero."""
    return _bin_means(series_list, n_intervals)


def fixed_window_sample(series_list, n_intervals, window_s):
    """Mean over only the first window_s seconds of each bin.

    A window at least as wide as the bin reduces to average_sample exactly.
    """
    if window_s <= 0:
        raise ResampleError("window_s must be > 0")
    t_min, t_max = global_time_range(series_list)
    _, width = _bin_edges(t_min, t_max, n_intervals)
    window_us = window_s * US_PER_S
    if window_us >= width:
        return _bin_means(series_list, n_intervals)
    return _bin_means(series_list, n_intervals, window_us=window_us)


def resample_flight(series_list, config: SamplingConfig):
    if config.method == AVERAGE:
        return average_sample(series_list, config.n_intervals)
    return fixed_window_sample(series_list, config.n_intervals, config.window_s)


class Scaler:
    """Per-feature standardization fitted on training folds only.

    Zero-padded cells (mask False) neither contribute to the statistics nor
    get transformed. Near-constant features are left unscaled.
    """

    def __init__(self):
        self.mean = None
        self.scale = None

    def fit(self, instances):
        if not instances:
            raise EmptySplit("cannot fit scaler on an empty split")
        n_features = instances[0].values.shape[1]
        total = np.zeros(n_features)
        total_sq = np.zeros(n_features)
        count = np.zeros(n_features)
        for inst in instances:
            masked = np.where(inst.mask, inst.values, 0.0)
            total += masked.sum(axis=0)
            total_sq += (masked * masked).sum(axis=0)
            count += inst.mask.sum(axis=0)
        safe = np.maximum(count, 1)
        mean = total / safe
        var = np.maximum(total_sq / safe - mean * mean, 0.0)
        std = np.sqrt(var)
        degenerate = (std < 1e-12) | (count == 0)
        self.mean = np.where(degenerate, 0.0, mean)
        self.scale = np.where(degenerate, 1.0, std)
        return self

    def transform(self, inst: SampledInstance) -> SampledInstance:
        if self.mean is None:
            raise EmptySplit("scaler not fitted")
        values = np.where(inst.mask, (inst.values - self.mean) / self.scale, inst.values)
        return SampledInstance(values, inst.mask.copy(), inst.label, inst.source_id, inst.synthetic)

    def transform_all(self, instances):
        return [self.transform(inst) for inst in instances]
