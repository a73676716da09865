"""Two-intersection signalized network with Gipps car following.

Intersection L sits west of R.  Each has a west/east, north and south
approach; the two are joined by the connecting lanes 7R (L -> R) and 7L
(R -> L).  Subnetwork 1 owns lanes 1L..7L, subnetwork 2 owns 1R..7R.

Vehicles enter the source lanes from a Poisson arrival process.  Arrivals
that find no room at the lane entrance wait in a virtual buffer and are
charged travel time from their arrival instant.  The north/south approaches
of an intersection get the first ``u`` seconds of every cycle, the east/west
approaches the remainder minus the lost time.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

VEHICLE_LENGTH = 7.5
QUEUE_SPEED = 0.5

SUBNETWORK_LANES = {
    1: ("1L", "2L", "3L", "4L", "5L", "6L", "7L"),
    2: ("1R", "2R", "3R", "4R", "5R", "6R", "7R"),
}
INTERSECTIONS = ("L", "R")
SUBNETWORK_OF = {"L": 1, "R": 2}


@dataclass(frozen=True)
class Lane:
    label: str
    length: float
    subnetwork: int
    role: str                  # "source", "exit" or "connecting"
    enters: str | None = None  # intersection at the downstream end
    phase: str | None = None   # "NS" or "EW" for signal-controlled lanes

    @property
    def capacity(self) -> int:
        return int(math.floor(self.length / VEHICLE_LENGTH))


def _default_lanes(side: float = 150.0, connecting: float = 300.0) -> dict[str, Lane]:
    lanes = {}
    for x, sub in (("L", 1), ("R", 2)):
        lanes[f"1{x}"] = Lane(f"1{x}", side, sub, "source", x, "EW")
        lanes[f"2{x}"] = Lane(f"2{x}", side, sub, "source", x, "NS")
        lanes[f"3{x}"] = Lane(f"3{x}", side, sub, "source", x, "NS")
        for i in (4, 5, 6):
            lanes[f"{i}{x}"] = Lane(f"{i}{x}", side, sub, "exit")
    lanes["7L"] = Lane("7L", connecting, 1, "connecting", "L", "EW")
    lanes["7R"] = Lane("7R", connecting, 2, "connecting", "R", "EW")
    return lanes


# legal movements (no U-turns): 4x = outer east/west exit, 5x = north, 6x = south
MOVEMENTS = {
    "1L": ("5L", "6L", "7R"), "2L": ("4L", "6L", "7R"), "3L": ("4L", "5L", "7R"), "7L": ("4L", "5L", "6L"),
    "1R": ("5R", "6R", "7L"), "2R": ("4R", "6R", "7L"), "3R": ("4R", "5R", "7L"), "7R": ("4R", "5R", "6R"),
}


@dataclass
class TrafficNetwork:
    lanes: dict[str, Lane] = field(default_factory=_default_lanes)
    cycle: float = 90.0
    lost_time: float = 0.0
    dt: float = 0.5
    max_accel: float = 1.7
    comfort_decel: float = -3.0
    leader_decel: float = -3.5
    desired_speed: float = 14.0
    measurement: str = "average"

    def __post_init__(self):
        if self.measurement not in ("average", "snapshot"):
            raise ValueError(f"measurement must be 'average' or 'snapshot', got {self.measurement!r}")
        if self.cycle <= 0 or self.dt <= 0:
            raise ValueError("cycle and time step must be positive")

    @property
    def sources(self) -> list[str]:
        return [l for l, lane in self.lanes.items() if lane.role == "source"]

    def entrances(self, intersection: str) -> list[str]:
        return [l for l, lane in self.lanes.items() if lane.enters == intersection]

    def feeders(self, lane: str) -> list[str]:
        """Lanes whose vehicles can move directly onto ``lane``."""
        return [src for src, targets in MOVEMENTS.items() if lane in targets]


@dataclass
class Scenario:
    """Demand description: piecewise-constant Poisson rates per source lane."""

    duration: float = 300.0
    rates: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    turning: dict[str, dict[str, float]] = field(default_factory=dict)
    seed: int = 0
    repetitions: int = 10
    name: str = ""

    def __post_init__(self):
        for lane, steps in self.rates.items():
            if any(r < 0 for _, r in steps):
                raise ValueError(f"negative inflow rate on {lane}")
        for lane, probs in self.turning.items():
            if set(probs) - set(MOVEMENTS[lane]):
                raise ValueError(f"illegal movement from {lane}: {sorted(set(probs) - set(MOVEMENTS[lane]))}")
            if abs(sum(probs.values()) - 1.0) > 1e-9:
                raise ValueError(f"turning probabilities of {lane} do not sum to 1")

    def rate(self, lane: str, t: float) -> float:
        current = 0.0
        for start, r in self.rates.get(lane, ()):
            if t >= start:
                current = r
        return current

    def turning_probs(self, lane: str) -> dict[str, float]:
        if lane in self.turning:
            return self.turning[lane]
        moves = MOVEMENTS[lane]
        return {m: 1.0 / len(moves) for m in moves}

    def to_dict(self) -> dict:
        return {"name": self.name, "duration": self.duration, "seed": self.seed,
                "repetitions": self.repetitions,
                "rates": {k: [list(p) for p in v] for k, v in self.rates.items()},
                "turning": self.turning}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scenario":
        return cls(duration=float(d.get("duration", 300.0)),
                   rates={k: [(float(a), float(b)) for a, b in v] for k, v in d.get("rates", {}).items()},
                   turning={k: dict(v) for k, v in d.get("turning", {}).items()},
                   seed=int(d.get("seed", 0)), repetitions=int(d.get("repetitions", 10)),
                   name=d.get("name", ""))

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


class Vehicle:
    __slots__ = ("vid", "x", "v", "next_lane", "t_arrival")

    def __init__(self, vid, x, v, next_lane, t_arrival):
        self.vid = vid
        self.x = x
        self.v = v
        self.next_lane = next_lane
        self.t_arrival = t_arrival


class SafetyViolation(AssertionError):
    pass


class Plant:
    """Mutable simulation state for one run.

    ``lanes[label]`` lists vehicles front first.  ``green[I]`` is the
    north/south green time of intersection ``I`` for the current cycle.
    """

    def __init__(self, network: TrafficNetwork, scenario: Scenario, rng: np.random.Generator,
                 check: bool = False):
        self.net = network
        self.scn = scenario
        self.rng = rng
        self.check = check
        self.t = 0.0
        self.lanes: dict[str, list[Vehicle]] = {l: [] for l in network.lanes}
        self.buffer: dict[str, list[Vehicle]] = {l: [] for l in network.sources}
        self.green = {i: network.cycle / 2 for i in INTERSECTIONS}
        self.cycle_start = 0.0
        self.entries = {l: 0 for l in network.lanes}     # cumulative vehicles entering each lane/buffer
        self.arrived = 0
        self.exited = 0
        self.travel_done = 0.0                           # seconds of finished trips
        self._vid = 0
        self._a = 2.5 * network.max_accel * network.dt
        self._turn_cache = {l: (list(scenario.turning_probs(l)), np.cumsum(list(scenario.turning_probs(l).values())))
                            for l in MOVEMENTS}

    # -- signals -----------------------------------------------------------
    def set_green(self, intersection: str, u: float):
        self.green[intersection] = float(u)

    def start_cycle(self):
        self.cycle_start = self.t

    def phase_green(self, intersection: str, phase: str, t: float | None = None) -> bool:
        tau = (self.t if t is None else t) - self.cycle_start
        tau = tau % self.net.cycle
        u = self.green[intersection]
        if phase == "NS":
            return tau < u
        return u + self.net.lost_time <= tau < self.net.cycle

    # -- demand ------------------------------------------------------------
    def _draw_turn(self, lane: str) -> str:
        targets, cum = self._turn_cache[lane]
        return targets[min(int(np.searchsorted(cum, self.rng.random(), side="right")), len(targets) - 1)]

    def spawn(self):
        """Poisson arrivals for the coming step, then admit buffered vehicles."""
        dt = self.net.dt
        for lane in self.net.sources:
            rate = self.scn.rate(lane, self.t)
            n_new = self.rng.poisson(rate * dt) if rate > 0 else 0
            for _ in range(n_new):
                self._vid += 1
                self.buffer[lane].append(Vehicle(self._vid, 0.0, 0.0, self._draw_turn(lane), self.t))
                self.arrived += 1
                self.entries[lane] += 1
            self._admit(lane)

    def _admit(self, lane: str):
        buf = self.buffer[lane]
        if not buf:
            return
        queue = self.lanes[lane]
        if len(queue) >= self.net.lanes[lane].capacity or (queue and queue[-1].x < VEHICLE_LENGTH):
            return
        veh = buf.pop(0)
        if queue:
            lead = queue[-1]
            veh.v = min(self.net.desired_speed, self._safe_speed(0.0, 0.0, lead.x, lead.v))
        else:
            veh.v = self.net.desired_speed
        veh.x = 0.0
        queue.append(veh)

    # -- car following -----------------------------------------------------
    def _safe_speed(self, x, v, x_lead, v_lead):
        b, bh, tau = self.net.comfort_decel, self.net.leader_decel, self.net.dt
        rad = b * b * tau * tau - b * (2.0 * (x_lead - VEHICLE_LENGTH - x) - v * tau - v_lead * v_lead / bh)
        if rad < 0:
            return 0.0
        return b * tau + math.sqrt(rad)

    def _free_speed(self, v):
        V = self.net.desired_speed
        r = max(v / V, 0.0)
        return v + self._a * (1.0 - r) * math.sqrt(0.025 + r)

    def _front_leader(self, label: str, veh: Vehicle):
        lane = self.net.lanes[label]
        if lane.role == "exit":
            return None
        if not self.phase_green(lane.enters, lane.phase):
            return (lane.length + VEHICLE_LENGTH, 0.0)          # stop line
        target = self.lanes[veh.next_lane]
        if target:
            tail = target[-1]
            return (lane.length + tail.x, tail.v)
        return None

    def gipps_step(self):
        dt = self.net.dt
        new = {}
        for label, queue in self.lanes.items():
            states = []
            for i, veh in enumerate(queue):
                if i == 0:
                    lead = self._front_leader(label, veh)
                else:
                    lead = (queue[i - 1].x, queue[i - 1].v)
                v_new = self._free_speed(veh.v)
                if lead is not None:
                    v_new = min(v_new, self._safe_speed(veh.x, veh.v, lead[0], lead[1]))
                v_new = max(v_new, 0.0)
                states.append((veh.x + 0.5 * (veh.v + v_new) * dt, v_new))
            new[label] = states
        for label, states in new.items():
            for veh, (x, v) in zip(self.lanes[label], states):
                veh.x, veh.v = x, v
        self.t += dt
        self._resolve_boundaries()

    def _resolve_boundaries(self):
        for label in self.net.lanes:
            lane = self.net.lanes[label]
            queue = self.lanes[label]
            if lane.role == "exit":
                while queue and queue[0].x >= lane.length:
                    veh = queue.pop(0)
                    self.exited += 1
                    self.travel_done += self.t - veh.t_arrival
                continue
            # entrance lanes: the front vehicle crosses only on green with room ahead
            while queue and queue[0].x >= lane.length:
                veh = queue[0]
                target_label = veh.next_lane
                target = self.lanes[target_label]
                pos = veh.x - lane.length
                room = target[-1].x - VEHICLE_LENGTH if target else math.inf
                fits = room >= 0 and len(target) < self.net.lanes[target_label].capacity
                if self.phase_green(lane.enters, lane.phase, self.t - self.net.dt) and fits:
                    queue.pop(0)
                    veh.x = min(pos, room)
                    if veh.x < pos:
                        veh.v = min(veh.v, target[-1].v)
                    veh.next_lane = self._draw_turn(target_label) if target_label in MOVEMENTS else None
                    target.append(veh)
                    self.entries[target_label] += 1
                else:
                    veh.x, veh.v = lane.length, 0.0
                    break
        for queue in self.lanes.values():
            for i in range(1, len(queue)):
                limit = queue[i - 1].x - VEHICLE_LENGTH
                if queue[i].x > limit:
                    queue[i].v = min(queue[i].v, queue[i - 1].v)
                    queue[i].x = limit
        if self.check:
            self.check_invariants()

    def step(self):
        self.spawn()
        self.gipps_step()

    def advance(self, seconds: float):
        n = int(round(seconds / self.net.dt))
        for _ in range(n):
            self.step()

    # -- observation -------------------------------------------------------
    def measure(self, lane: str) -> tuple[int, int]:
        queue = self.lanes[lane]
        buffered = len(self.buffer.get(lane, ()))
        q = sum(1 for v in queue if v.v < QUEUE_SPEED)
        return len(queue) + buffered, q + buffered

    def state(self, subnetwork: int) -> tuple[np.ndarray, np.ndarray]:
        ms = [self.measure(l) for l in SUBNETWORK_LANES[subnetwork]]
        return np.array([m[0] for m in ms], float), np.array([m[1] for m in ms], float)

    def present(self) -> int:
        return sum(len(q) for q in self.lanes.values())

    def buffered(self) -> int:
        return sum(len(b) for b in self.buffer.values())

    def travel_time(self) -> float:
        """Total seconds spent in the network so far, counting vehicles still inside."""
        open_time = sum(self.t - v.t_arrival for q in self.lanes.values() for v in q)
        open_time += sum(self.t - v.t_arrival for b in self.buffer.values() for v in b)
        return self.travel_done + open_time

    def check_invariants(self):
        if self.arrived != self.exited + self.present() + self.buffered():
            raise SafetyViolation(f"conservation broken at t={self.t}")
        for label, queue in self.lanes.items():
            if len(queue) > self.net.lanes[label].capacity:
                raise SafetyViolation(f"{label} holds {len(queue)} vehicles at t={self.t}")
            for a, b in zip(queue, queue[1:]):
                if a.x - b.x < VEHICLE_LENGTH - 1e-9:
                    raise SafetyViolation(f"spacing {a.x - b.x:.3f} m on {label} at t={self.t}")
            for v in queue:
                if v.v < 0:
                    raise SafetyViolation(f"negative speed on {label}")
        for i in INTERSECTIONS:
            if self.phase_green(i, "NS") and self.phase_green(i, "EW"):
                raise SafetyViolation(f"NS and EW both green at {i}")


def total_travel_time(trips, end_time: float | None = None) -> float:
    """Total travel time in minutes of ``(arrival, exit)`` pairs; ``exit=None`` runs to ``end_time``."""
    total = 0.0
    for arrival, exit_ in trips:
        if exit_ is None:
            if end_time is None:
                raise ValueError("open trip needs an end time")
            exit_ = end_time
        total += exit_ - arrival
    return total / 60.0


@dataclass
class CycleRecord:
    """What the controllers see about one finished control interval.

    ``n``/``q`` form measurement ``k``.  With the default averaging they are
    the mean counts over the interval that ended when cycle ``k`` began (zero
    for ``k = 0`` since the network starts empty), so that
    ``sum(n) * cycle`` is the vehicle-seconds spent on those links.  With
    ``measurement="snapshot"`` they are the counts at that instant.
    """

    k: int
    t: float
    n: dict[int, np.ndarray]
    q: dict[int, np.ndarray]
    u: dict[str, float]
    entries: dict[str, int]


Controller = Callable[[int, "Plant", list], Mapping[str, float]]


@dataclass
class RunResult:
    ttt_minutes: float
    records: list
    log_rows: list
    arrived: int
    exited: int


def run_scenario(network: TrafficNetwork, scenario: Scenario, controller, seed: int | None = None,
                 check: bool = False) -> RunResult:
    """Simulate one repetition.

    ``controller(k, history)`` is called at every cycle start with the list of
    :class:`CycleRecord` for finished cycles (the newest is cycle ``k-1``;
    measurements therefore arrive with one control step of delay) and returns
    the north/south green time per intersection.
    """
    rng = np.random.default_rng(scenario.seed if seed is None else seed)
    plant = Plant(network, scenario, rng, check=check)
    history: list[CycleRecord] = []
    log_rows = []
    k = 0
    last_entries = dict(plant.entries)
    averaged = network.measurement == "average"
    # with averaging, the measurement closing an interval is its mean occupancy
    meas = {s: plant.state(s) for s in SUBNETWORK_LANES}
    while plant.t < scenario.duration - 1e-9:
        u = controller(k, history)
        for i in INTERSECTIONS:
            plant.set_green(i, u[i])
        plant.start_cycle()
        n0 = {s: meas[s][0] for s in SUBNETWORK_LANES}
        q0 = {s: meas[s][1] for s in SUBNETWORK_LANES}
        span = min(network.cycle, scenario.duration - plant.t)
        steps = int(round(span / network.dt))
        acc = {s: [np.zeros(len(l)), np.zeros(len(l))] for s, l in SUBNETWORK_LANES.items()}
        for _ in range(steps):
            plant.step()
            if averaged:
                for s in SUBNETWORK_LANES:
                    n, q = plant.state(s)
                    acc[s][0] += n
                    acc[s][1] += q
        meas = ({s: (acc[s][0] / steps, acc[s][1] / steps) for s in SUBNETWORK_LANES} if averaged and steps
                else {s: plant.state(s) for s in SUBNETWORK_LANES})
        entries = {l: plant.entries[l] - last_entries[l] for l in plant.entries}
        last_entries = dict(plant.entries)
        history.append(CycleRecord(k, plant.t - span, n0, q0, dict(u), entries))
        for s, lanes in SUBNETWORK_LANES.items():
            for j, lane in enumerate(lanes):
                log_rows.append((plant.t - span, lane, int(n0[s][j]), int(q0[s][j]), u["L"], u["R"]))
        k += 1
    # final state closes the last record
    history.append(CycleRecord(k, plant.t, {s: meas[s][0] for s in SUBNETWORK_LANES},
                               {s: meas[s][1] for s in SUBNETWORK_LANES}, {}, {}))
    return RunResult(plant.travel_time() / 60.0, history, log_rows, plant.arrived, plant.exited)


def write_run_log(path, result: RunResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "lane", "n", "q", "u_L", "u_R"])
        w.writerows(result.log_rows)
