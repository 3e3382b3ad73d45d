"""Triangular link fundamental diagram and CAV/HV reaction-time blending.

The flow-density relation is q(k) = min(V*k, (1 - L*k)/R) per lane, with
free-flow speed V (m/s), effective vehicle length L (m) and reaction time
R (s). Flow is zero at k = 0 and at jam density 1/L, and maximal at the
intersection of the two branches.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class FDParams:
    speed: float          # V, m/s
    veh_length: float     # L, m
    reaction_time: float  # R, s (already scaled by the link factor)

    def __post_init__(self):
        if self.speed <= 0 or self.veh_length <= 0 or self.reaction_time <= 0:
            raise ValueError("FD parameters must be positive")

    @property
    def k_jam(self) -> float:
        """Jam density, veh/m/lane."""
        return 1.0 / self.veh_length

    @property
    def k_crit(self) -> float:
        """Critical density, veh/m/lane."""
        return 1.0 / (self.speed * self.reaction_time + self.veh_length)

    @property
    def q_max(self) -> float:
        """Capacity, veh/s/lane."""
        return self.speed / (self.speed * self.reaction_time + self.veh_length)


@dataclass(frozen=True)
class ClassReactionTimes:
    r_hv: float = 1.5   # s
    r_cav: float = 1.0  # s

    def __post_init__(self):
        if self.r_hv <= 0 or self.r_cav <= 0:
            raise ValueError("reaction times must be positive")
        if self.r_cav > self.r_hv:
            raise ValueError("CAV reaction time must not exceed the HV one")


def fd_flow(k: float, params: FDParams) -> float:
    """Flow (veh/s/lane) at per-lane density k (veh/m/lane)."""
    if k < 0 or k > params.k_jam:
        raise ValueError(f"density {k} outside [0, {params.k_jam}]")
    return min(params.speed * k,
               (1.0 - params.veh_length * k) / params.reaction_time)


def fd_capacity(params: FDParams) -> tuple[float, float]:
    """(critical density veh/m/lane, capacity veh/s/lane)."""
    return params.k_crit, params.q_max


def blended_reaction_time(cav_fraction: float, times: ClassReactionTimes) -> float:
    """Average reaction time for a link given the entering CAV fraction."""
    if not 0.0 <= cav_fraction <= 1.0:
        raise ValueError("cav_fraction must lie in [0, 1]")
    return cav_fraction * times.r_cav + (1.0 - cav_fraction) * times.r_hv
