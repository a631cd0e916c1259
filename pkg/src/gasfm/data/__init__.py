from .adf import adf_statistic, weighted_adf
from .ingest import consolidate_readings, read_dataset, read_metadata, read_readings, write_dataset
from .pipeline import prepare_dataset
from .screening import LinearInterpolationImputer, filter_short_series, impute, zscore_screen
from .splits import Splits, fit_normalization, make_splits, normalize_dataset
from .synthetic import generate_synthetic_dataset
from .types import (
    UNKNOWN,
    CustomerSeries,
    DataError,
    DatasetManifest,
    NormalizationStats,
    RawMeterReading,
    SplitSpec,
)
