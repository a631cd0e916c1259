from .core import (
    ForecastResult,
    FinetuneResult,
    IncompatibleCheckpoint,
    batched_forecast,
    decay_weights,
    finetune,
    predict,
    signal_decay_loss,
    write_forecasts,
)
