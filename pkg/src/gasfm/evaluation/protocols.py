"""Experiment protocols: main, from-scratch, transfer, zero-shot and ablation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..config import RunConfig, config_diff
from ..data.types import SplitSpec
from ..data.windows import PreparedCustomer
from ..finetune.core import finetune
from ..model.network import GasFM, build_model
from ..pretrain import losses as L
from ..pretrain.trainer import ProvenanceGuard, pretrain
from .evaluate import evaluate_model
from .partition import partition_customers
from .report import MetricReport

logger = logging.getLogger(__name__)

ABLATION_VARIANTS = {
    "full": None,
    "wo_cl": "use_cl",
    "wo_dn": "use_dn",
    "wo_fn": "use_fn",
}


def split_spec(cfg: RunConfig, horizon: int | None = None) -> SplitSpec:
    s = cfg.data.split
    return SplitSpec(s.test_span_days, tuple(s.train_val_ratio), s.history_len, horizon or cfg.finetune.horizon)


@dataclass
class RunOutcome:
    report: MetricReport
    pretrained: GasFM | None = None
    finetuned: dict[int, GasFM] = field(default_factory=dict)
    pretrain_log: list[dict] = field(default_factory=list)
    finetune_logs: dict[int, list[dict]] = field(default_factory=dict)
    guards: list[ProvenanceGuard] = field(default_factory=list)

    @property
    def violations(self) -> int:
        return sum(g.violations for g in self.guards)


def train_and_evaluate(
    cfg: RunConfig,
    seed: int,
    pretrain_on: list[PreparedCustomer] | None,
    finetune_on: list[PreparedCustomer],
    evaluate_on: list[PreparedCustomer],
    horizons,
    label: str = "model",
    pretrain_guard: ProvenanceGuard | None = None,
    finetune_guard: ProvenanceGuard | None = None,
) -> RunOutcome:
    """Optional pretraining, one fine-tune per horizon, then test-set evaluation.

    ``pretrain_on=None`` trains from scratch: same architecture and seed, no
    self-supervised stage.
    """
    n = cfg.data.split.history_len
    model = build_model(cfg.model, n, seed)
    outcome = RunOutcome(MetricReport(label), guards=[g for g in (pretrain_guard, finetune_guard) if g])
    if pretrain_on is not None:
        res = pretrain(model, pretrain_on, cfg.pretrain, seed, guard=pretrain_guard)
        outcome.pretrained, outcome.pretrain_log = res.model, res.log
    for h in sorted(horizons):
        ft_cfg = cfg.finetune.model_copy(update={"horizon": h})
        ft = finetune(model, finetune_on, ft_cfg, seed, guard=finetune_guard, history_len=n)
        outcome.finetuned[h] = ft.model
        outcome.finetune_logs[h] = ft.log
        part = evaluate_model(
            ft.model, evaluate_on, [h], split_spec(cfg, h), cfg.evaluation.test_stride,
            cfg.evaluation.batch_size, cfg.evaluation.mase_denominator, label,
        )
        outcome.report.rows.extend(part.rows)
        outcome.report.excluded.update(part.excluded)
    return outcome


def run_main(customers, cfg: RunConfig, seed: int | None = None, horizons=None) -> RunOutcome:
    seed = cfg.seed if seed is None else seed
    return train_and_evaluate(cfg, seed, customers, customers, customers, horizons or cfg.evaluation.horizons, "pretrained")


def run_scratch(customers, cfg: RunConfig, seed: int | None = None, horizons=None) -> RunOutcome:
    seed = cfg.seed if seed is None else seed
    return train_and_evaluate(cfg, seed, None, customers, customers, horizons or cfg.evaluation.horizons, "scratch")


def _parts(customers, cfg: RunConfig, source_part: int | None):
    source_part = cfg.evaluation.source_part if source_part is None else source_part
    ids = partition_customers([c.customer_id for c in customers], cfg.evaluation.partition_seed)
    src_ids, tgt_ids = set(ids[source_part]), set(ids[1 - source_part])
    src = [c for c in customers if c.customer_id in src_ids]
    tgt = [c for c in customers if c.customer_id in tgt_ids]
    if not src or not tgt:
        raise ValueError(f"partition left an empty part ({len(src)} source, {len(tgt)} target)")
    return src, tgt


def run_transfer(customers, cfg: RunConfig, source_part: int | None = None, seed: int | None = None, horizons=None) -> RunOutcome:
    """Pretrain on the source part; fine-tune and test on the target part."""
    seed = cfg.seed if seed is None else seed
    src, tgt = _parts(customers, cfg, source_part)
    return train_and_evaluate(
        cfg, seed, src, tgt, tgt, horizons or cfg.evaluation.horizons, "transfer",
        pretrain_guard=ProvenanceGuard({c.customer_id for c in src}, "pretrain(source)"),
        finetune_guard=ProvenanceGuard({c.customer_id for c in tgt}, "finetune(target)"),
    )


def run_zero_shot(customers, cfg: RunConfig, source_part: int | None = None, seed: int | None = None, horizons=None) -> RunOutcome:
    """Pretrain and fine-tune on the source part; test on the target part without updates."""
    seed = cfg.seed if seed is None else seed
    src, tgt = _parts(customers, cfg, source_part)
    src_ids = {c.customer_id for c in src}
    return train_and_evaluate(
        cfg, seed, src, src, tgt, horizons or cfg.evaluation.horizons, "zero_shot",
        pretrain_guard=ProvenanceGuard(src_ids, "pretrain(source)"),
        finetune_guard=ProvenanceGuard(src_ids, "finetune(source)"),
    )


def ablation_config(cfg: RunConfig, variant: str) -> RunConfig:
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}; choose from {list(ABLATION_VARIANTS)}")
    flag = ABLATION_VARIANTS[variant]
    if flag is None:
        return cfg
    pre = cfg.pretrain.model_copy(update={flag: False})
    out = cfg.model_copy(update={"pretrain": pre})
    diff = config_diff(cfg, out)
    if list(diff) != [f"pretrain.{flag}"]:
        raise AssertionError(f"{variant}: expected a single-field change, got {sorted(diff)}")
    return out


def run_ablation(customers, cfg: RunConfig, variants=tuple(ABLATION_VARIANTS), seed: int | None = None, horizon: int = 180) -> dict[str, RunOutcome]:
    """One full pretrain, fine-tune and evaluate cycle per variant, same data and seed."""
    seed = cfg.seed if seed is None else seed
    out = {}
    for v in variants:
        vcfg = ablation_config(cfg, v)
        if not vcfg.pretrain.use_cl:
            L.similarity_calls.clear()
        out[v] = train_and_evaluate(vcfg, seed, customers, customers, customers, [horizon], v)
        if not vcfg.pretrain.use_cl and sum(L.similarity_calls.values()):
            raise AssertionError(f"{v}: similarity matrices computed with contrastive learning disabled")
    return out
