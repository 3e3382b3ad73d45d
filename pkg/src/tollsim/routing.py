"""Time-dependent least-cost path search and bounded path-set management.

Link costs are read at the interval of arrival at each link; arrival times
propagate along travel-time skims. Ties are broken by the lexicographically
smallest link-id sequence so searches are fully deterministic.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .network import Clock, Network, Path

UE_COST = "ue"
SO_COST = "so"

CAP_UE = 3
CAP_SO = 5


class UnreachableError(ValueError):
    def __init__(self, origin, destination):
        super().__init__(f"destination {destination!r} unreachable from {origin!r}")
        self.od = (origin, destination)


class CostSkims:
    """Per-(link, interval) travel times plus UE and SO generalized costs."""

    def __init__(self, clock: Clock, travel_time, ue_cost, so_cost):
        self.clock = clock
        self._tt = travel_time
        self._costs = {UE_COST: ue_cost, SO_COST: so_cost}

    @classmethod
    def from_loading(cls, result, toll_schedule=None, vot_per_hour: float = 15.0):
        """Build skims from a loading; tolls enter the UE cost in seconds."""
        clock = result.clock
        tt = {}
        ue = {}
        so = {}
        for lid, rows in result.states.items():
            link = result.network.links[lid]
            for tau, st in enumerate(rows):
                tt[(lid, tau)] = st.travel_time
                toll_s = 0.0
                if toll_schedule is not None and link.in_pricing_zone:
                    toll = toll_schedule.link_toll(link, tau)
                    toll_s = toll / vot_per_hour * 3600.0
                ue[(lid, tau)] = st.travel_time + toll_s
                so[(lid, tau)] = result.marginal_time(lid, tau)
        return cls(clock, tt, ue, so)

    def travel_time(self, link_id: str, interval: int) -> float:
        return self._tt[(link_id, interval)]

    def cost(self, kind: str, link_id: str, interval: int) -> float:
        return self._costs[kind][(link_id, interval)]

    def path_cost(self, path: Path, departure_interval: int, kind: str) -> float:
        """Sum of per-link costs with arrival-interval lookups along the path."""
        t = departure_interval * self.clock.interval_s
        total = 0.0
        for lid in path.link_ids:
            tau = self.clock.interval_of(t)
            total += self.cost(kind, lid, tau)
            t += self.travel_time(lid, tau)
        return total


def td_shortest_path(network: Network, skims: CostSkims, origin: str,
                     destination: str, departure_interval: int,
                     cost_kind: str = UE_COST) -> tuple[Path, float]:
    """Least-cost acyclic path for a departure at the start of the interval."""
    start_t = departure_interval * skims.clock.interval_s
    heap = [(0.0, (), origin, float(start_t))]
    settled: set[str] = set()
    while heap:
        cost, lex, node, t = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node == destination:
            if not lex:
                raise UnreachableError(origin, destination)
            return Path(lex, origin, destination), cost
        for link in network.out_links.get(node, ()):
            if link.to_node in settled:
                continue
            tau = skims.clock.interval_of(t)
            c = skims.cost(cost_kind, link.id, tau)
            heapq.heappush(heap, (cost + c, lex + (link.id,), link.to_node,
                                  t + skims.travel_time(link.id, tau)))
    raise UnreachableError(origin, destination)


def td_least_marginal_path(network, skims, origin, destination,
                           departure_interval) -> tuple[Path, float]:
    return td_shortest_path(network, skims, origin, destination,
                            departure_interval, SO_COST)


def distance_shortest_path(network: Network, origin: str, destination: str) -> Path:
    """Static shortest path by link length (used for initialization)."""
    heap = [(0.0, (), origin)]
    settled: set[str] = set()
    while heap:
        dist, lex, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        if node == destination:
            if not lex:
                raise UnreachableError(origin, destination)
            return Path(lex, origin, destination)
        for link in network.out_links.get(node, ()):
            if link.to_node in settled:
                continue
            heapq.heappush(heap, (dist + link.length, lex + (link.id,), link.to_node))
    raise UnreachableError(origin, destination)


@dataclass
class PathSet:
    """Bounded path collection for one (OD, class) with per-interval proportions."""

    origin: str
    destination: str
    cap: int
    intervals: tuple[int, ...]
    paths: list = field(default_factory=list)
    proportions: dict = field(default_factory=dict)   # interval -> list[float]

    def __post_init__(self):
        if self.cap < 1:
            raise ValueError("path-set cap must be at least 1")
        for tau in self.intervals:
            self.proportions.setdefault(tau, [])

    def index_of(self, path: Path):
        for i, p in enumerate(self.paths):
            if p.link_ids == path.link_ids:
                return i
        return None

    def insert(self, path: Path) -> int:
        """Insert a path honoring the cap; returns its index.

        A duplicate leaves the set unchanged. At cap, the path with the
        smallest mean proportion (ties: oldest) is evicted and the survivors
        are renormalized; the new path always starts at proportion 0.
        """
        idx = self.index_of(path)
        if idx is not None:
            return idx
        if not self.paths:
            self.paths.append(path)
            for tau in self.proportions:
                self.proportions[tau] = [1.0]
            return 0
        if len(self.paths) >= self.cap:
            means = [sum(self.proportions[tau][i] for tau in self.proportions)
                     for i in range(len(self.paths))]
            evict = min(range(len(self.paths)), key=lambda i: (means[i], i))
            del self.paths[evict]
            for tau, vec in self.proportions.items():
                removed = vec.pop(evict)
                rest = sum(vec)
                if rest > 0:
                    self.proportions[tau] = [v / rest for v in vec]
                elif vec:
                    self.proportions[tau] = [1.0 / len(vec)] * len(vec)
        self.paths.append(path)
        for tau, vec in self.proportions.items():
            if len(vec) < len(self.paths):
                vec.append(0.0 if sum(vec) > 0 else 1.0)
        return len(self.paths) - 1

    def check(self) -> None:
        for tau, vec in self.proportions.items():
            if vec and abs(sum(vec) - 1.0) > 1e-9:
                raise AssertionError(f"proportions at interval {tau} sum to {sum(vec)}")


def update_path_set(path_set: PathSet, path: Path, cap=None) -> PathSet:
    """Functional wrapper over PathSet.insert (cap fixed at construction)."""
    if cap is not None and cap != path_set.cap:
        raise ValueError("cap is fixed at path-set construction")
    path_set.insert(path)
    return path_set
