from .evaluate import customer_test_windows, evaluate_model, naive_forecaster
from .metrics import mae, mase, mse, smape
from .partition import DEFAULT_PARTITION_SEED, partition_customers, partition_label
from .protocols import (
    ABLATION_VARIANTS,
    RunOutcome,
    ablation_config,
    run_ablation,
    run_main,
    run_scratch,
    run_transfer,
    run_zero_shot,
    split_spec,
    train_and_evaluate,
)
from .report import METRICS, SUMMARY_SCHEMA, MetricReport, scatter_rows, write_scatter
