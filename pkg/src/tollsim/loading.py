"""Discrete-time mesoscopic network loading on triangular fundamental diagrams.

Each link behaves as a FIFO pipe with a free-flow traversal delay followed by
a capacity server at its downstream end (point queue with finite storage):

* sending is limited to vehicles older than the link's free-flow time and to
  the FD capacity q_max * lanes,
* receiving is limited by the congested FD branch (1 - L*k)/R * lanes and by
  the link's jam storage, so queues spill back,
* each link's FD reaction time is re-blended every assignment interval from
  the CAV/HV mix that entered the link during the previous interval.

The loader moves whole vehicles and is fully deterministic.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .demand import SO, UE
from .fd import ClassReactionTimes, blended_reaction_time
from .network import Clock, Network, Path

_EPS = 1e-9


class GridlockError(RuntimeError):
    """The horizon ended with vehicles still in the network."""

    def __init__(self, stranded: int):
        super().__init__(f"network gridlock: {stranded} vehicles stranded at horizon end")
        self.stranded = stranded


@dataclass(frozen=True)
class PathAssignment:
    """Fractional vehicle flow for one (class, path, departure interval)."""
    vehicle_class: int   # UE = 1, SO = 2
    path: Path
    interval: int
    flow: float


@dataclass(frozen=True)
class VehiclePlan:
    vehicle_class: int
    path: Path
    interval: int
    departure_time: float


@dataclass
class VehicleRecord:
    vehicle_id: int
    vehicle_class: int
    path: Path
    interval: int
    departure_time: float
    link_entries: list
    exit_time: float = math.nan

    @property
    def travel_time(self) -> float:
        return self.exit_time - self.departure_time


@dataclass(frozen=True)
class LinkIntervalState:
    density: float       # veh/km/lane, time average
    flow: float          # veh/h/lane, from link exits
    travel_time: float   # s, mean over vehicles entering during the interval
    free_flow_time: float  # s, rounded up to whole steps
    cav_fraction: float  # fraction of CAVs entering during the interval
    reaction_time: float  # s, blended value used by the FD


def discretize_assignments(assignments, clock: Clock) -> list[VehiclePlan]:
    """Turn fractional path flows into whole-vehicle departure plans.

    Per (class, OD, interval) the vehicle count is the rounded class total,
    shared among paths by largest remainder; each path group's departures are
    spread uniformly over the interval. Deterministic for a given input set.
    """
    groups: dict[tuple, list[PathAssignment]] = {}
    for asg in assignments:
        if asg.flow < 0:
            raise ValueError("path flows must be non-negative")
        key = (asg.vehicle_class, asg.path.origin, asg.path.destination, asg.interval)
        groups.setdefault(key, []).append(asg)

    plans: list[VehiclePlan] = []
    for key in sorted(groups):
        cls, _o, _d, tau = key
        members = sorted(groups[key], key=lambda a: a.path.link_ids)
        total = sum(a.flow for a in members)
        n_total = int(math.floor(total + 0.5))
        if n_total == 0:
            continue
        quotas = [a.flow * n_total / total for a in members]
        counts = [int(math.floor(q)) for q in quotas]
        remainder = n_total - sum(counts)
        order = sorted(range(len(members)),
                       key=lambda i: (-(quotas[i] - counts[i]), i))
        for i in order[:remainder]:
            counts[i] += 1
        start = tau * clock.interval_s
        for a, n in zip(members, counts):
            for j in range(n):
                dep = start + (j * clock.interval_s) // n
                plans.append(VehiclePlan(cls, a.path, tau, float(dep)))
    return plans


class _LinkRT:
    """Mutable per-link simulation state."""

    __slots__ = ("link", "ff_steps", "storage", "queue", "next_free", "recv_carry",
                 "recv_credit", "credit_step", "reaction", "headway",
                 "enter_hv", "enter_cav", "stat_entries", "stat_tt_sum",
                 "stat_entry_time_sum", "stat_exits", "stat_count_integral",
                 "stat_cav", "stat_reaction", "queue_flag")

    def __init__(self, link, clock, n_intervals):
        self.link = link
        self.ff_steps = max(1, math.ceil(link.free_flow_time / clock.step_s - _EPS))
        self.storage = link.storage
        self.queue = deque()     # vehicle indices, FIFO (head at queue[0])
        self.next_free = 0.0     # server availability time, s
        self.recv_carry = 1.0    # an empty link accepts a vehicle instantly
        self.recv_credit = 0.0
        self.credit_step = -1
        self.reaction = None     # set at the first interval roll
        self.headway = None
        self.enter_hv = 0
        self.enter_cav = 0
        self.stat_entries = [0] * n_intervals
        self.stat_tt_sum = [0.0] * n_intervals
        self.stat_entry_time_sum = [0.0] * n_intervals
        self.stat_exits = [0] * n_intervals
        self.stat_count_integral = [0.0] * n_intervals
        self.stat_cav = [0.0] * n_intervals
        self.stat_reaction = [0.0] * n_intervals
        self.queue_flag = None   # bytearray over steps, filled by the loader


class LoadingResult:
    """Immutable outcome of one network loading."""

    def __init__(self, network, clock, states, vehicles, next_empty,
                 entry_time_means):
        self.network = network
        self.clock = clock
        self.states = states                # link_id -> [LinkIntervalState per interval]
        self.vehicles = vehicles            # list[VehicleRecord]
        self._next_empty = next_empty       # link_id -> list[int] per step
        self._entry_means = entry_time_means  # (link_id, tau) -> mean entry time
        self._mt_cache: dict[tuple[str, int], float] = {}

    @property
    def vehicles_entered(self) -> int:
        return len(self.vehicles)

    @property
    def vehicles_exited(self) -> int:
        return sum(1 for v in self.vehicles if not math.isnan(v.exit_time))

    @property
    def tstt_veh_h(self) -> float:
        """Total system travel time in vehicle-hours."""
        return sum(v.travel_time for v in self.vehicles) / 3600.0

    def travel_time(self, link_id: str, interval: int) -> float:
        return self.states[link_id][interval].travel_time

    def queue_clearance_delay(self, link_id: str, t: float) -> float:
        """Seconds after time t until the link's standing queue dissipates."""
        flags = self._next_empty[link_id]
        step = int(t // self.clock.step_s)
        if step < 0:
            step = 0
        if step >= len(flags):
            return 0.0
        return max(0.0, flags[step] * self.clock.step_s - t)

    def marginal_time(self, link_id: str, interval: int) -> float:
        """Local link marginal travel time skim for an entry in `interval`."""
        key = (link_id, interval)
        cached = self._mt_cache.get(key)
        if cached is not None:
            return cached
        st = self.states[link_id][interval]
        entry = self._entry_means.get(key)
        if entry is None:
            entry = (interval + 0.5) * self.clock.interval_s
        mt = st.travel_time + self.queue_clearance_delay(link_id, entry + st.travel_time)
        self._mt_cache[key] = mt
        return mt

    def path_travel_time(self, path: Path, interval: int) -> float:
        """Experienced travel time of the path for a departure in `interval`."""
        t = interval * self.clock.interval_s
        total = 0.0
        for lid in path.link_ids:
            tau = self.clock.interval_of(t)
            tt = self.states[lid][tau].travel_time
            total += tt
            t += tt
        return total

    def path_marginal_time(self, path: Path, interval: int) -> float:
        """Local-approximation path marginal time for a departure in `interval`.

        Each link contributes its travel time plus the dissipation time of the
        queue standing at the probe's exit. The probe's clock advances past
        that dissipation before the next link is read, so nested queues
        (an upstream queue held back by a downstream one) are not re-counted.
        """
        t = interval * self.clock.interval_s
        total = 0.0
        for lid in path.link_ids:
            tau = self.clock.interval_of(t)
            st = self.states[lid][tau]
            exit_t = t + st.travel_time
            clearance = self.queue_clearance_delay(lid, exit_t)
            total += st.travel_time + clearance
            t = exit_t + clearance
        return total


def link_marginal_time(result: LoadingResult, link_id: str, exit_time: float) -> float:
    """Marginal time of one link for a probe exiting it at `exit_time`.

    Travel time is read at the probe's (estimated) entry interval; the
    externality is the time until the queue present at the exit dissipates.
    """
    clock = result.clock
    tau_exit = clock.interval_of(exit_time)
    tt_guess = result.states[link_id][tau_exit].travel_time
    tau_entry = clock.interval_of(exit_time - tt_guess)
    tt = result.states[link_id][tau_entry].travel_time
    return tt + result.queue_clearance_delay(link_id, exit_time)


def load_vehicles(network: Network, plans, clock: Clock,
                  reaction_times: ClassReactionTimes = ClassReactionTimes()
                  ) -> LoadingResult:
    """Simulate an explicit list of vehicle plans. See `load_network`."""
    for plan in plans:
        plan.path.validate(network)

    order = sorted(range(len(plans)),
                   key=lambda i: (plans[i].departure_time, plans[i].vehicle_class,
                                  plans[i].path.origin, plans[i].path.destination,
                                  plans[i].path.link_ids, i))
    vehicles = [VehicleRecord(vid, plans[i].vehicle_class, plans[i].path,
                              plans[i].interval, plans[i].departure_time, [])
                for vid, i in enumerate(order)]

    n_int = clock.n_intervals
    n_steps = clock.n_steps
    dt = float(clock.step_s)
    rts = {a.id: _LinkRT(a, clock, n_int) for a in network.link_list}
    link_order = [rts[lid] for lid in sorted(rts)]
    for rt in link_order:
        rt.queue_flag = bytearray(n_steps)

    # Per-vehicle current position bookkeeping.
    veh_link_idx = [0] * len(vehicles)       # index into path.link_ids
    veh_ready = [0.0] * len(vehicles)        # earliest exit time from current link
    veh_entry = [0.0] * len(vehicles)        # entry time into current link

    # Origin buffers: FIFO of vehicle ids per origin node, sorted by departure.
    buffers: dict[str, list[int]] = {}
    for v in vehicles:
        buffers.setdefault(v.path.origin, []).append(v.vehicle_id)
    origin_order = sorted(buffers)
    buf_pos = {o: 0 for o in origin_order}

    in_network = 0

    def recv_ok(rt: _LinkRT, step: int, t: float) -> bool:
        if rt.credit_step != step:
            count = len(rt.queue)
            k = count / (rt.link.lanes * rt.link.length)   # veh/m/lane
            rate = max(0.0, (1.0 - rt.link.effective_vehicle_length * k)
                       / rt.reaction) * rt.link.lanes
            # Credit regenerates across idle steps but a single step never
            # admits more than one step's rate plus one stored vehicle.
            elapsed = step - rt.credit_step if rt.credit_step >= 0 else 1
            rt.recv_credit = min(rt.recv_carry + rate * dt * elapsed,
                                 1.0 + rate * dt)
            rt.credit_step = step
        return (rt.recv_credit >= 1.0 - _EPS
                and len(rt.queue) + 1 <= rt.storage + _EPS)

    def enter(rt: _LinkRT, vid: int, t: float, tau: int) -> None:
        rt.recv_credit -= 1.0
        rt.queue.append(vid)
        veh_entry[vid] = t
        veh_ready[vid] = t + rt.ff_steps * dt
        vehicles[vid].link_entries.append(t)
        if vehicles[vid].vehicle_class == SO:
            rt.enter_cav += 1
        else:
            rt.enter_hv += 1
        rt.stat_entries[tau] += 1
        rt.stat_entry_time_sum[tau] += t

    tau = -1
    for step in range(n_steps):
        t = step * dt
        new_tau = step * clock.step_s // clock.interval_s
        if new_tau != tau:
            tau = new_tau
            for rt in link_order:
                entered = rt.enter_hv + rt.enter_cav
                if tau == 0:
                    frac = 0.0
                elif entered > 0:
                    frac = rt.enter_cav / entered
                else:
                    # Nothing entered last interval: keep the previous blend.
                    frac = (rt.stat_cav[tau - 1] if tau > 0 else 0.0)
                base = blended_reaction_time(frac, reaction_times)
                rt.reaction = base * rt.link.reaction_time_factor
                q_max = rt.link.speed_limit / (
                    rt.link.speed_limit * rt.reaction + rt.link.effective_vehicle_length)
                rt.headway = 1.0 / (q_max * rt.link.lanes)
                rt.stat_cav[tau] = frac
                rt.stat_reaction[tau] = rt.reaction
                rt.enter_hv = 0
                rt.enter_cav = 0

        # Link exits, fixed deterministic order.
        for rt in link_order:
            q = rt.queue
            while q:
                vid = q[0]
                if veh_ready[vid] > t + _EPS or rt.next_free > t + dt - _EPS:
                    break
                li = veh_link_idx[vid]
                path = vehicles[vid].path
                if li + 1 < len(path.link_ids):
                    nrt = rts[path.link_ids[li + 1]]
                    if not recv_ok(nrt, step, t):
                        break
                else:
                    nrt = None
                q.popleft()
                rt.next_free = max(rt.next_free, t) + rt.headway
                entry_tau = clock.interval_of(veh_entry[vid])
                rt.stat_tt_sum[entry_tau] += t - veh_entry[vid]
                rt.stat_exits[tau] += 1
                if nrt is None:
                    vehicles[vid].exit_time = t
                    in_network -= 1
                else:
                    veh_link_idx[vid] = li + 1
                    enter(nrt, vid, t, tau)

        # Demand injection from origin buffers.
        for origin in origin_order:
            buf = buffers[origin]
            pos = buf_pos[origin]
            while pos < len(buf):
                vid = buf[pos]
                if vehicles[vid].departure_time > t + _EPS:
                    break
                rt = rts[vehicles[vid].path.link_ids[0]]
                if not recv_ok(rt, step, t):
                    break
                enter(rt, vid, t, tau)
                in_network += 1
                pos += 1
            buf_pos[origin] = pos

        # End-of-step bookkeeping.
        for rt in link_order:
            if rt.credit_step == step:
                rt.recv_carry = min(rt.recv_credit, 1.0)
            count = len(rt.queue)
            if count:
                rt.stat_count_integral[tau] += count * dt
                # A standing queue exists while the head vehicle is waiting or
                # while the capacity server is still busy from an earlier exit.
                if (veh_ready[rt.queue[0]] <= t + _EPS
                        or rt.next_free > t + dt - _EPS):
                    rt.queue_flag[step] = 1

    stranded = in_network + sum(len(buffers[o]) - buf_pos[o] for o in origin_order)
    if stranded:
        raise GridlockError(stranded)

    states = {}
    next_empty = {}
    entry_means = {}
    for rt in link_order:
        a = rt.link
        ff = rt.ff_steps * dt
        rows = []
        for i in range(n_int):
            n_in = rt.stat_entries[i]
            tt = rt.stat_tt_sum[i] / n_in if n_in else ff
            k = (rt.stat_count_integral[i] / clock.interval_s
                 / (a.lanes * a.length)) * 1000.0          # veh/km/lane
            flow = rt.stat_exits[i] / clock.interval_s / a.lanes * 3600.0  # veh/h/lane
            rows.append(LinkIntervalState(
                density=k, flow=flow, travel_time=max(tt, ff), free_flow_time=ff,
                cav_fraction=rt.stat_cav[i], reaction_time=rt.stat_reaction[i]))
            if n_in:
                entry_means[(a.id, i)] = rt.stat_entry_time_sum[i] / n_in
        states[a.id] = rows
        # Backward pass: first step >= s with an empty standing queue.
        ne = [n_steps] * (n_steps + 1)
        nxt = n_steps
        for s in range(n_steps - 1, -1, -1):
            if not rt.queue_flag[s]:
                nxt = s
            ne[s] = nxt
        next_empty[a.id] = ne

    return LoadingResult(network, clock, states, vehicles, next_empty, entry_means)


def load_network(network: Network, assignments, clock: Clock,
                 reaction_times: ClassReactionTimes = ClassReactionTimes()
                 ) -> LoadingResult:
    """Load fractional per-path class flows onto the network.

    Raises GridlockError if the horizon ends before the network empties.
    """
    plans = discretize_assignments(assignments, clock)
    return load_vehicles(network, plans, clock, reaction_times)
