import datetime as dt

import numpy as np
import pytest
import torch

from gasfm.config import ModelConfig, parse_config
from gasfm.data import CustomerSeries, SplitSpec
from gasfm.data.windows import prepare_customers


def make_series(values, cid="C1", industry="processing", start=dt.date(2020, 1, 1), mask=None):
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = np.isfinite(values)
    return CustomerSeries(cid, start, values, np.asarray(mask, dtype=bool), industry_l1=industry)


@pytest.fixture
def tiny_model_cfg():
    return ModelConfig(patch_len=8, patch_stride=4, model_dim=16, heads=2, encoder_layers=1, decoder_layers=1, feedforward_dim=32, dropout=0.0)


@pytest.fixture
def tiny_run_cfg():
    """Small, fast configuration for protocol and CLI tests."""
    return parse_config(
        {
            "data": {"synthetic": {"n_customers": 16, "min_length": 420, "max_length": 700}, "split": {"history_len": 32}},
            "model": {"patch_len": 8, "patch_stride": 4, "model_dim": 16, "heads": 2, "encoder_layers": 1, "feedforward_dim": 32},
            "pretrain": {"steps": 3, "batch_size": 6},
            "finetune": {"epochs": 1, "steps_per_epoch": 3, "batch_size": 16, "max_val_windows": 64},
            "evaluation": {"horizons": [7], "test_stride": 7},
        }
    )


@pytest.fixture
def tiny_customers(tiny_run_cfg):
    from gasfm.data import generate_synthetic_dataset, prepare_dataset
    from gasfm.evaluation import split_spec

    series, _ = generate_synthetic_dataset(tiny_run_cfg.data.synthetic, 3)
    prepared, _ = prepare_dataset(series, tiny_run_cfg.data.screening)
    return prepare_customers(prepared, split_spec(tiny_run_cfg))


@pytest.fixture
def float64():
    old = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(old)


@pytest.fixture
def spec():
    return SplitSpec()


# -- acceptance verdicts -----------------------------------------------------

ACCEPTANCE_CRITERIA = {
    1: "loss oracle equivalence",
    2: "gradient checks",
    3: "false-negative mask",
    4: "rotary invariance",
    5: "metric identities",
    6: "smooth-L1 boundary",
    7: "split / no leakage",
    8: "end-to-end pretrained vs scratch",
    9: "ablation harness",
    10: "determinism",
}
_verdicts: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    """Record a criterion's outcome, then fail the test if it did not hold."""

    def record(number: int, ok: bool, detail: str = ""):
        _verdicts[number] = (bool(ok), detail)
        assert ok, f"criterion {number} ({ACCEPTANCE_CRITERIA[number]}): {detail}"

    return record


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if report.failed and name.startswith("test_criterion_"):
        number = int(name.split("_")[2])
        _verdicts.setdefault(number, (False, f"raised during {report.when}"))


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in ACCEPTANCE_CRITERIA.items():
        if n in _verdicts:
            ok, detail = _verdicts[n]
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d} {name}: {detail}")
        else:
            terminalreporter.write_line(f"[----] {n:2d} {name}: not run")
