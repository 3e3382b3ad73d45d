"""Time-dependent OD demand and its split into UE (class 1) and SO (class 2).

Demand is indexed by (origin, destination, assignment interval) and may be
fractional; the loader discretizes to whole vehicles. The noisy split is
counter-based on (seed, origin, destination, interval) so results do not
depend on iteration order.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass

UE = 1
SO = 2


@dataclass(frozen=True)
class NoiseConfig:
    seed: int = 0
    beta_max: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.beta_max <= 1.0:
            raise ValueError("beta_max must lie in [0, 1]")


class ClassDemand:
    """Per (OD, interval) vehicle counts for the UE and SO classes."""

    def __init__(self, entries: dict[tuple[str, str, int], tuple[float, float]]):
        for key, (q1, q2) in entries.items():
            if q1 < 0 or q2 < 0:
                raise ValueError(f"negative class demand at {key}")
        self.entries = dict(entries)

    def q1(self, origin, destination, interval) -> float:
        return self.entries.get((origin, destination, interval), (0.0, 0.0))[0]

    def q2(self, origin, destination, interval) -> float:
        return self.entries.get((origin, destination, interval), (0.0, 0.0))[1]

    def total(self, origin, destination, interval) -> float:
        q1, q2 = self.entries.get((origin, destination, interval), (0.0, 0.0))
        return q1 + q2

    def od_pairs(self) -> list[tuple[str, str]]:
        return sorted({(o, d) for (o, d, _) in self.entries})

    def intervals(self, origin, destination) -> list[int]:
        return sorted(t for (o, d, t) in self.entries if (o, d) == (origin, destination))

    def total_vehicles(self) -> float:
        return sum(q1 + q2 for q1, q2 in self.entries.values())


def _clamped_split(q: float, q2: float) -> tuple[float, float]:
    q2 = min(max(q2, 0.0), q)
    return q - q2, q2


def split_demand_uniform(demand: dict[tuple[str, str, int], float],
                         so_ratio: float) -> ClassDemand:
    """Split every (OD, interval) total with the same SO share."""
    if not 0.0 <= so_ratio <= 1.0:
        raise ValueError("so_ratio must lie in [0, 1]")
    return ClassDemand({key: _clamped_split(q, so_ratio * q)
                        for key, q in demand.items()})


def split_demand_noisy(demand: dict[tuple[str, str, int], float],
                       so_ratio: float,
                       noise: NoiseConfig) -> ClassDemand:
    """Split with per-(OD, interval) uniform noise on the SO share.

    For each entry, beta ~ U(0, beta_max) then eps ~ U(-beta*q, beta*q);
    q2 = clamp(so_ratio*q + eps, 0, q). Bit-identical given the seed:
    each entry draws from its own generator keyed on
    (seed, origin, destination, interval).
    """
    if not 0.0 <= so_ratio <= 1.0:
        raise ValueError("so_ratio must lie in [0, 1]")
    entries = {}
    for (o, d, tau), q in demand.items():
        rng = random.Random(f"{noise.seed}|{o}|{d}|{tau}")
        beta = rng.uniform(0.0, noise.beta_max)
        eps = rng.uniform(-beta * q, beta * q)
        entries[(o, d, tau)] = _clamped_split(q, so_ratio * q + eps)
    return ClassDemand(entries)


_DEMAND_FIELDS = {"origin", "destination", "interval_index", "total", "so_ratio"}


def demand_from_records(records) -> tuple[dict[tuple[str, str, int], float],
                                          dict[tuple[str, str, int], float]]:
    """Parse demand records into totals and per-record SO-ratio overrides."""
    totals: dict[tuple[str, str, int], float] = {}
    overrides: dict[tuple[str, str, int], float] = {}
    for rec in records:
        unknown = set(rec) - _DEMAND_FIELDS
        if unknown:
            raise ValueError(f"unknown demand fields: {sorted(unknown)}")
        key = (str(rec["origin"]), str(rec["destination"]), int(rec["interval_index"]))
        if key[0] == key[1]:
            raise ValueError(f"demand origin equals destination: {key[0]!r}")
        total = float(rec["total"])
        if total < 0:
            raise ValueError(f"negative demand at {key}")
        totals[key] = totals.get(key, 0.0) + total
        if "so_ratio" in rec and rec["so_ratio"] is not None:
            overrides[key] = float(rec["so_ratio"])
    return totals, overrides


def load_demand_file(path):
    with open(path, encoding="utf-8") as fh:
        return demand_from_records(json.load(fh))


def save_demand_file(totals, path, overrides=None) -> None:
    overrides = overrides or {}
    records = []
    for (o, d, tau) in sorted(totals):
        rec = {"origin": o, "destination": d, "interval_index": tau,
               "total": totals[(o, d, tau)]}
        if (o, d, tau) in overrides:
            rec["so_ratio"] = overrides[(o, d, tau)]
        records.append(rec)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=2, sort_keys=True)
        fh.write("\n")


def split_demand(totals, so_ratio, noise=None, overrides=None) -> ClassDemand:
    """Split with optional noise and per-record ratio overrides."""
    overrides = overrides or {}
    plain = {k: v for k, v in totals.items() if k not in overrides}
    if noise is not None and noise.beta_max > 0:
        result = split_demand_noisy(plain, so_ratio, noise)
    else:
        result = split_demand_uniform(plain, so_ratio)
    entries = dict(result.entries)
    for key, ratio in overrides.items():
        if key in totals:
            q = totals[key]
            if noise is not None and noise.beta_max > 0:
                entries[key] = split_demand_noisy({key: q}, ratio, noise).entries[key]
            else:
                entries[key] = _clamped_split(q, ratio * q)
    return ClassDemand(entries)
