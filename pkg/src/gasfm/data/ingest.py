"""Reading raw meter exports and consolidating them into per-customer series."""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .types import UNKNOWN, CustomerSeries, DataError, RawMeterReading

logger = logging.getLogger(__name__)

READING_FIELDS = ("customer_id", "meter_id", "date", "volume")
METADATA_FIELDS = ("customer_id", "industry_l1", "industry_l2", "province", "city")


def consolidate_readings(readings, metadata=None, diagnostics=None):
    """Sum readings across meters per (customer, day) and lay them on a daily grid.

    Days between a customer's first and last reading that have no reading are
    kept as gaps (``observed_mask`` False).  Readings with a negative or
    non-finite volume are rejected; a message is logged and, if given, appended
    to ``diagnostics``.  Output is sorted by customer id, so the result does
    not depend on input order.
    """
    metadata = metadata or {}
    per_day: dict[str, dict[dt.date, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in readings:
        if not math.isfinite(r.volume) or r.volume < 0:
            msg = f"rejected reading customer={r.customer_id} meter={r.meter_id} date={r.date}: volume={r.volume}"
            logger.warning(msg)
            if diagnostics is not None:
                diagnostics.append(msg)
            continue
        per_day[r.customer_id][r.date].append(float(r.volume))

    out = []
    for cid in sorted(per_day):
        days = per_day[cid]
        start, end = min(days), max(days)
        length = (end - start).days + 1
        values = np.full(length, np.nan)
        mask = np.zeros(length, dtype=bool)
        for day, vols in days.items():
            i = (day - start).days
            # fsum is exact, so the total does not depend on meter order
            values[i] = math.fsum(vols)
            mask[i] = True
        meta = metadata.get(cid, {})
        out.append(
            CustomerSeries(
                customer_id=cid,
                start_date=start,
                values=values,
                observed_mask=mask,
                industry_l1=meta.get("industry_l1") or UNKNOWN,
                industry_l2=meta.get("industry_l2") or UNKNOWN,
                province=meta.get("province") or UNKNOWN,
                city=meta.get("city") or UNKNOWN,
            )
        )
    return out


def _parse_reading(row: dict, where: str) -> RawMeterReading:
    try:
        return RawMeterReading(
            customer_id=str(row["customer_id"]),
            meter_id=str(row["meter_id"]),
            date=dt.date.fromisoformat(str(row["date"])),
            volume=float(row["volume"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{where}: malformed reading {row!r}: {exc}") from exc


def read_readings(path) -> list[RawMeterReading]:
    """Load readings from CSV (``customer_id,meter_id,date,volume``) or JSON lines."""
    path = Path(path)
    out = []
    if path.suffix in (".jsonl", ".ndjson"):
        with path.open() as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{lineno}: not valid JSON: {exc}") from None
                out.append(_parse_reading(row, f"{path}:{lineno}"))
        return out
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(READING_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, 2):
            out.append(_parse_reading(row, f"{path}:{lineno}"))
    return out


def write_readings(path, readings) -> None:
    path = Path(path)
    if path.suffix in (".jsonl", ".ndjson"):
        with path.open("w") as fh:
            for r in readings:
                rec = {"customer_id": r.customer_id, "meter_id": r.meter_id, "date": r.date.isoformat(), "volume": float(r.volume)}
                fh.write(json.dumps(rec) + "\n")
        return
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(READING_FIELDS)
        for r in readings:
            w.writerow([r.customer_id, r.meter_id, r.date.isoformat(), repr(float(r.volume))])


def read_metadata(path) -> dict[str, dict[str, str]]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(METADATA_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        return {
            row["customer_id"]: {k: (row[k].strip() or UNKNOWN) for k in METADATA_FIELDS[1:]}
            for row in reader
        }


def write_metadata(path, series) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METADATA_FIELDS)
        for s in series:
            w.writerow([s.customer_id, s.industry_l1, s.industry_l2, s.province, s.city])


def series_to_readings(series) -> list[RawMeterReading]:
    """Explode series into single-meter readings (observed days only)."""
    out = []
    for s in series:
        for i in np.flatnonzero(s.observed_mask):
            out.append(
                RawMeterReading(s.customer_id, f"{s.customer_id}-m0", s.start_date + dt.timedelta(days=int(i)), float(s.values[i]))
            )
    return out


def _series_record(s: CustomerSeries) -> dict:
    return {
        "customer_id": s.customer_id,
        "industry_l1": s.industry_l1,
        "industry_l2": s.industry_l2,
        "province": s.province,
        "city": s.city,
        "start_date": s.start_date.isoformat(),
        "values": [float(v) if m else None for v, m in zip(s.values.tolist(), s.observed_mask.tolist())],
    }


def write_dataset(path, series) -> None:
    """One JSON record per customer; missing days are ``null``."""
    with Path(path).open("w") as fh:
        for s in series:
            fh.write(json.dumps(_series_record(s), separators=(",", ":")))
            fh.write("\n")


def read_dataset(path) -> list[CustomerSeries]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset not found: {path}")
    out = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                raw = rec["values"]
                mask = np.array([v is not None for v in raw], dtype=bool)
                values = np.array([np.nan if v is None else float(v) for v in raw], dtype=np.float64)
                out.append(
                    CustomerSeries(
                        customer_id=str(rec["customer_id"]),
                        start_date=dt.date.fromisoformat(rec["start_date"]),
                        values=values,
                        observed_mask=mask,
                        industry_l1=rec.get("industry_l1") or UNKNOWN,
                        industry_l2=rec.get("industry_l2") or UNKNOWN,
                        province=rec.get("province") or UNKNOWN,
                        city=rec.get("city") or UNKNOWN,
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed customer record: {exc}") from exc
    return out
