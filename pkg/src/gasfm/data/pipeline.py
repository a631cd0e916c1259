from __future__ import annotations

import logging

from ..config import ScreeningConfig
from .adf import weighted_adf
from .screening import Imputer, filter_short_series, impute, screen_dataset
from .types import DatasetManifest

logger = logging.getLogger(__name__)


def prepare_dataset(series, screening: ScreeningConfig | None = None, imputer: Imputer | None = None, diagnostics=None):
    """Short-series filter, Z-score screen, imputation, then dataset statistics."""
    screening = screening or ScreeningConfig()
    kept = filter_short_series(series, screening.min_len)
    if diagnostics is not None and len(kept) < len(series):
        diagnostics.append(f"dropped {len(series) - len(kept)} series shorter than {screening.min_len}")
    kept = screen_dataset(kept, screening.z_threshold, screening.max_fraction, diagnostics)
    prepared = [impute(s, imputer) for s in kept]
    manifest = DatasetManifest.from_series(prepared, weighted_adf=weighted_adf(prepared))
    logger.info("prepared %d/%d customers, weighted ADF %.3f", len(prepared), len(series), manifest.weighted_adf)
    return prepared, manifest
