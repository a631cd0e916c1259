from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

METRICS = ("mse", "mae", "smape", "mase")
ROW_FIELDS = ("customer_id", "horizon", "mse", "mae", "smape", "mase", "n_windows", "mase_excluded")

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["label", "horizons", "per_horizon", "grand", "excluded_customers"],
    "properties": {
        "label": {"type": "string"},
        "horizons": {"type": "array", "items": {"type": "integer"}},
        "per_horizon": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["customers", *METRICS],
                "properties": {
                    "customers": {"type": "integer", "minimum": 0},
                    "mse": {"type": ["number", "null"], "minimum": 0},
                    "mae": {"type": ["number", "null"], "minimum": 0},
                    "smape": {"type": ["number", "null"], "minimum": 0, "maximum": 2},
                    "mase": {"type": ["number", "null"], "minimum": 0},
                    "mase_excluded_windows": {"type": "integer", "minimum": 0},
                },
            },
        },
        "grand": {"type": "object"},
        "excluded_customers": {"type": "object"},
    },
}


def _mean(values):
    vals = [v for v in values if v is not None and not math.isnan(v)]
    return sum(vals) / len(vals) if vals else None


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


@dataclass
class MetricReport:
    """Per-customer metric rows plus per-horizon and grand aggregates.

    Aggregation order: windows -> customer mean -> mean across customers.
    """

    label: str = "model"
    rows: list[dict] = field(default_factory=list)
    excluded: dict[int, list[str]] = field(default_factory=dict)

    @property
    def horizons(self) -> list[int]:
        return sorted({r["horizon"] for r in self.rows} | set(self.excluded))

    def aggregate(self, horizon: int) -> dict:
        rows = [r for r in self.rows if r["horizon"] == horizon]
        out = {"customers": len(rows)}
        for m in METRICS:
            out[m] = _mean([r[m] for r in rows])
        out["mase_excluded_windows"] = int(sum(r["mase_excluded"] for r in rows))
        return out

    def grand(self) -> dict:
        aggs = [self.aggregate(h) for h in self.horizons]
        return {m: _mean([a[m] for a in aggs]) for m in METRICS}

    def summary(self) -> dict:
        return {
            "label": self.label,
            "horizons": self.horizons,
            "per_horizon": {str(h): self.aggregate(h) for h in self.horizons},
            "grand": self.grand(),
            "excluded_customers": {str(h): sorted(v) for h, v in sorted(self.excluded.items())},
        }

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ROW_FIELDS)
            for r in sorted(self.rows, key=lambda r: (r["horizon"], r["customer_id"])):
                w.writerow([_fmt(r[k]) for k in ROW_FIELDS])

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read_csv(cls, path, label: str = "model") -> "MetricReport":
        rep = cls(label)
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                rep.rows.append(
                    {
                        "customer_id": row["customer_id"],
                        "horizon": int(row["horizon"]),
                        **{m: (float(row[m]) if row[m] != "" else math.nan) for m in METRICS},
                        "n_windows": int(row["n_windows"]),
                        "mase_excluded": int(row["mase_excluded"]),
                    }
                )
        return rep


def scatter_rows(ours: MetricReport, baseline: MetricReport) -> list[tuple]:
    """(customer_id, metric@h, value_ours, value_baseline) for customers present in both."""
    base = {(r["customer_id"], r["horizon"]): r for r in baseline.rows}
    out = []
    for r in sorted(ours.rows, key=lambda r: (r["horizon"], r["customer_id"])):
        b = base.get((r["customer_id"], r["horizon"]))
        if b is None:
            continue
        for m in METRICS:
            out.append((r["customer_id"], f"{m}@{r['horizon']}", r[m], b[m]))
    return out


def write_scatter(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("customer_id", "metric", "value_ours", "value_baseline"))
        for cid, metric, a, b in rows:
            w.writerow([cid, metric, _fmt(a), _fmt(b)])
