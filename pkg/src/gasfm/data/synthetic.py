"""Seeded synthetic stand-in for a multi-customer daily gas consumption dataset.

Each customer is drawn from an industry archetype.  All archetypes share the
same building blocks:

    level_t  = base * (1 + trend * t/365) * (1 + annual_t) * (1 + weekly_t) * regime_t
    y_t      = max(0, level_t * (1 + noise_t))

with archetype-specific parameters:

* ``processing``: high base, weak weekly/annual cycle, smooth AR(1) noise
  (~3%), rare short shutdowns.  Continuous and regular.
* ``catering``: low base, strong weekly cycle, moderate annual cycle,
  heavy-tailed multiplicative noise (~25%) and frequent spikes/dips.
* ``glass``: high base, two-state Markov regime that alternates between a
  stable phase (~3% noise) and a volatile phase with large level jumps and
  ~30% noise.
* ``heating``: medium base dominated by a winter-peaking annual cycle.

Noise is heteroscedastic because it is multiplicative in the level.  A
fraction of customers can be turned into "meter malfunction" series: about
1.1% of their days carry spikes of ~150x the level, which the default Z-score
screen removes.  Missing days are sprinkled in (first and last day always
observed).  Every customer gets its own child RNG spawned from the seed, so
output does not depend on generation order.
"""
from __future__ import annotations

import datetime as dt

import numpy as np

from ..config import SyntheticConfig
from .types import UNKNOWN, CustomerSeries, DatasetManifest

PROVINCES = ("Hebei", "Shandong", "Henan", "Jiangsu", "Zhejiang", "Guangdong", "Anhui", "Hunan")

SECONDARY = {
    "processing": ("petroleum_refining", "coal_processing", "chemical_feedstock"),
    "catering": ("restaurant", "hotel", "canteen"),
    "glass": ("flat_glass", "glass_container", "glass_fiber"),
    "heating": ("district_heating", "boiler_room"),
}

MALFUNCTION_SHARE = 0.011
MALFUNCTION_SCALE = 150.0


def _ar1(rng, n, phi, sigma):
    eps = rng.normal(0.0, sigma * np.sqrt(1 - phi**2), size=n)
    out = np.empty(n)
    acc = rng.normal(0.0, sigma)
    for i in range(n):
        acc = phi * acc + eps[i]
        out[i] = acc
    return out


def _weekly(rng, day_of_week, amp):
    profile = rng.normal(0.0, 1.0, size=7)
    profile = profile - profile.mean()
    profile = profile / (np.abs(profile).max() + 1e-12)
    return amp * profile[day_of_week]


def _annual(rng, day_of_year, amp, winter_peak=True):
    phase = rng.uniform(-15, 15) + (15.0 if winter_peak else 196.0)
    return amp * np.cos(2 * np.pi * (day_of_year - phase) / 365.25)


def _generate_values(archetype, rng, dates):
    n = len(dates)
    t = np.arange(n)
    dow = np.array([d.weekday() for d in dates])
    doy = np.array([d.timetuple().tm_yday for d in dates])

    if archetype == "processing":
        base = rng.lognormal(np.log(5000), 0.5)
        level = (1 + rng.normal(0, 0.05) * t / 365) * (1 + _annual(rng, doy, rng.uniform(0.05, 0.15)))
        level = level * (1 + _weekly(rng, dow, rng.uniform(0.0, 0.03)))
        regime = np.ones(n)
        for _ in range(rng.poisson(n / 400)):
            s = rng.integers(0, n)
            regime[s : s + rng.integers(2, 8)] = rng.uniform(0.1, 0.5)
        noise = _ar1(rng, n, 0.7, rng.uniform(0.02, 0.04))
    elif archetype == "catering":
        base = rng.lognormal(np.log(300), 0.7)
        level = (1 + rng.normal(0, 0.1) * t / 365) * (1 + _annual(rng, doy, rng.uniform(0.1, 0.35)))
        level = level * (1 + _weekly(rng, dow, rng.uniform(0.15, 0.4)))
        regime = np.ones(n)
        spikes = rng.random(n) < 0.05
        regime[spikes] = rng.choice([0.3, 1.8], size=spikes.sum())
        noise = rng.standard_t(4, size=n) * rng.uniform(0.15, 0.3)
    elif archetype == "glass":
        base = rng.lognormal(np.log(8000), 0.5)
        level = (1 + rng.normal(0, 0.05) * t / 365) * (1 + _annual(rng, doy, rng.uniform(0.03, 0.1)))
        level = level * (1 + _weekly(rng, dow, rng.uniform(0.0, 0.05)))
        regime = np.ones(n)
        noise_scale = np.full(n, rng.uniform(0.02, 0.04))
        volatile = rng.random() < 0.5
        i = 0
        while i < n:
            dur = int(rng.geometric(1 / 60))
            if volatile:
                seg = slice(i, i + dur)
                jumps = rng.choice([0.4, 0.7, 1.0, 1.4, 1.8], size=max(1, dur // 7 + 1))
                regime[seg] = np.repeat(jumps, 7)[: len(regime[seg])]
                noise_scale[seg] = rng.uniform(0.2, 0.35)
            volatile = not volatile
            i += dur
        noise = rng.normal(0.0, 1.0, size=n) * noise_scale
    elif archetype == "heating":
        base = rng.lognormal(np.log(1500), 0.6)
        level = 1 + _annual(rng, doy, rng.uniform(0.6, 0.9))
        level = level * (1 + _weekly(rng, dow, rng.uniform(0.0, 0.05)))
        regime = np.ones(n)
        noise = _ar1(rng, n, 0.8, rng.uniform(0.05, 0.12))
    else:
        raise ValueError(f"unknown archetype {archetype!r}")

    return np.maximum(0.0, base * level * regime * (1 + noise))


def generate_customer(index: int, archetype: str, cfg: SyntheticConfig, rng: np.random.Generator) -> CustomerSeries:
    length = int(rng.integers(cfg.min_length, cfg.max_length + 1))
    origin = dt.date.fromisoformat(cfg.start_date)
    start = origin + dt.timedelta(days=int(rng.integers(0, cfg.span_days - length + 1)))
    dates = [start + dt.timedelta(days=i) for i in range(length)]
    values = _generate_values(archetype, rng, dates)

    if rng.random() < cfg.malfunction_fraction:
        k = int(np.ceil(MALFUNCTION_SHARE * length))
        idx = rng.choice(length, size=k, replace=False)
        values[idx] = values.mean() * MALFUNCTION_SCALE * rng.uniform(0.98, 1.02, size=k)

    mask = rng.random(length) >= cfg.missing_rate
    mask[0] = mask[-1] = True
    values = np.where(mask, values, np.nan)

    province = PROVINCES[int(rng.integers(len(PROVINCES)))]
    l1, l2 = archetype, SECONDARY[archetype][int(rng.integers(len(SECONDARY[archetype])))]
    if rng.random() < cfg.unknown_fraction:
        l1 = l2 = UNKNOWN
    return CustomerSeries(
        customer_id=f"C{index:05d}",
        start_date=start,
        values=values,
        observed_mask=mask,
        industry_l1=l1,
        industry_l2=l2,
        province=province,
        city=f"{province}-{int(rng.integers(1, 6))}",
    )


def generate_synthetic_dataset(cfg: SyntheticConfig, seed: int):
    """Return (series, manifest); bit-identical output for equal (cfg, seed)."""
    root = np.random.SeedSequence(seed)
    assign_rng = np.random.default_rng(root.spawn(1)[0])
    weights = np.asarray(cfg.archetype_weights or [1.0] * len(cfg.archetypes), dtype=float)
    choice = assign_rng.choice(len(cfg.archetypes), size=cfg.n_customers, p=weights / weights.sum())
    children = np.random.SeedSequence([seed, 1]).spawn(cfg.n_customers)
    series = [
        generate_customer(i, cfg.archetypes[int(a)], cfg, np.random.default_rng(children[i]))
        for i, a in enumerate(choice)
    ]
    return series, DatasetManifest.from_series(series)
