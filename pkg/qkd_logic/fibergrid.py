####################################
#  Fiber Grid : Cores // DWDM Plan #
####################################

# Frequencies are integer GHz everywhere in this module so that plan
# validation compares exact integers.

from dataclasses import dataclass, replace
from enum import Enum
from typing import FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from qkd_logic.errors import DomainError


class Role(str, Enum):
    QUANTUM = "quantum"
    CLASSICAL = "classical"
    SYNC = "sync"


class Direction(str, Enum):
    """Propagation direction relative to the quantum signal"""
    CO = "co"
    COUNTER = "counter"


def parse_direction(value) -> Direction:
    if isinstance(value, Direction):
        return value
    try:
        return Direction(str(value).strip().lower())
    except ValueError:
        raise DomainError(f"direction must be 'co' or 'counter', got: {value}", field="direction")


def parse_role(value) -> Role:
    if isinstance(value, Role):
        return value
    try:
        return Role(str(value).strip().lower())
    except ValueError:
        raise DomainError(f"role must be quantum, classical or sync, got: {value}", field="role")


#### TOPOLOGY ####

@dataclass(frozen=True)
class CoreTopology:
    """Cores numbered 1..core_count; adjacency holds unordered pairs"""
    core_count: int
    center_core: int
    adjacency: FrozenSet[FrozenSet[int]]

    def __post_init__(self):
        if self.core_count < 1:
            raise DomainError("topology needs at least one core", field="core_count")
        if not 1 <= self.center_core <= self.core_count:
            raise DomainError(f"center core {self.center_core} outside 1..{self.core_count}", field="center_core")
        for pair in self.adjacency:
            if len(pair) != 2:
                raise DomainError(f"adjacency entry {sorted(pair)} is not a pair of distinct cores", field="adjacency")
            for core in pair:
                if not 1 <= core <= self.core_count:
                    raise DomainError(f"adjacency references unknown core {core}", field="adjacency")

    @classmethod
    def from_pairs(cls, core_count: int, center_core: int, pairs: Iterable[Tuple[int, int]]) -> "CoreTopology":
        return cls(core_count, center_core, frozenset(frozenset(p) for p in pairs))

    @property
    def cores(self) -> Tuple[int, ...]:
        return tuple(range(1, self.core_count + 1))

    @property
    def outer_cores(self) -> Tuple[int, ...]:
        return tuple(c for c in self.cores if c != self.center_core)

    def has_core(self, core: int) -> bool:
        return isinstance(core, (int, np.integer)) and 1 <= core <= self.core_count


def hexagonal_topology() -> CoreTopology:
    """
    Default 7-core layout: core 1 at the center, cores 2..7 around the ring in
    cyclic order, so core 3 touches 1, 2 and 4.
    """
    ring = list(range(2, 8))
    pairs = [(1, c) for c in ring]
    pairs += [(ring[i], ring[(i + 1) % len(ring)]) for i in range(len(ring))]
    return CoreTopology.from_pairs(7, 1, pairs)


def nearest_neighbors(topology: CoreTopology, core: int) -> FrozenSet[int]:
    """All cores adjacent to the given core"""
    if not topology.has_core(core):
        raise DomainError(f"unknown core {core} (topology has cores 1..{topology.core_count})", field="core")
    return frozenset(other for pair in topology.adjacency if core in pair for other in pair if other != core)


#### FREQUENCY GRID ####

@dataclass(frozen=True)
class FrequencyGrid:
    f0_ghz: int
    delta_f_ghz: int
    channel_count: int

    def __post_init__(self):
        if self.f0_ghz <= 0:
            raise DomainError(f"f0 must be positive, got {self.f0_ghz} GHz", field="f0_ghz")
        if self.delta_f_ghz <= 0:
            raise DomainError(f"channel spacing must be positive, got {self.delta_f_ghz} GHz", field="delta_f_ghz")
        # quantum channels sit at half spacing; keep them on the integer raster
        if self.delta_f_ghz % 2:
            raise DomainError(f"channel spacing must be an even number of GHz, got {self.delta_f_ghz}", field="delta_f_ghz")
        if self.channel_count < 0:
            raise DomainError(f"channel count must be non-negative, got {self.channel_count}", field="channel_count")

    @property
    def half_spacing_ghz(self) -> int:
        return self.delta_f_ghz // 2


def classical_frequency(n: int, grid: FrequencyGrid) -> int:
    """f_c(n) = f0 + (n - 1) * delta_f, in GHz"""
    if not 1 <= n <= grid.channel_count:
        raise DomainError(f"classical channel ordinal {n} outside 1..{grid.channel_count}", field="n")
    return grid.f0_ghz + (n - 1) * grid.delta_f_ghz


def quantum_frequency(k: int, grid: FrequencyGrid) -> int:
    """f_q(k) = f0 + (k - 1/2) * delta_f, in GHz"""
    if k < 1:
        raise DomainError(f"quantum channel ordinal must be >= 1, got {k}", field="k")
    return grid.f0_ghz + (k - 1) * grid.delta_f_ghz + grid.half_spacing_ghz


def quantum_ordinal(freq_ghz: int, grid: FrequencyGrid) -> Optional[int]:
    """Inverse of quantum_frequency; None when freq is not an interleave slot"""
    offset = freq_ghz - grid.f0_ghz + grid.half_spacing_ghz
    if offset <= 0 or offset % grid.delta_f_ghz:
        return None
    return offset // grid.delta_f_ghz


def sync_frequency(grid: FrequencyGrid) -> int:
    """Slot half a spacing below f0, where the synchronization channel rides"""
    freq = grid.f0_ghz - grid.half_spacing_ghz
    if freq <= 0:
        raise DomainError("no positive frequency below f0 for the sync channel", field="f0_ghz")
    return freq


#### CHANNEL PLAN ####

@dataclass(frozen=True)
class ChannelAssignment:
    core: int
    freq_ghz: int
    role: Role
    direction: Direction = Direction.CO
    launch_power_dbm: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.role, Role):
            object.__setattr__(self, "role", parse_role(self.role))
        if not isinstance(self.direction, Direction):
            object.__setattr__(self, "direction", parse_direction(self.direction))
        if self.freq_ghz <= 0:
            raise DomainError(f"frequency must be positive, got {self.freq_ghz} GHz", field="freq_ghz")
        if self.role is Role.QUANTUM and self.launch_power_dbm is not None:
            raise DomainError("quantum channels carry no launch power", field="power_dbm")
        if self.role is Role.CLASSICAL:
            if self.launch_power_dbm is None or not np.isfinite(self.launch_power_dbm):
                raise DomainError("classical channels need a finite launch power", field="power_dbm")


@dataclass(frozen=True)
class ChannelPlan:
    topology: CoreTopology
    grid: FrequencyGrid
    assignments: Tuple[ChannelAssignment, ...]
    quantum_core: int

    def __post_init__(self):
        object.__setattr__(self, "assignments", tuple(self.assignments))

    def _by_role(self, role: Role) -> Tuple[ChannelAssignment, ...]:
        return tuple(a for a in self.assignments if a.role is role)

    @property
    def quantum_channels(self) -> Tuple[ChannelAssignment, ...]:
        return self._by_role(Role.QUANTUM)

    @property
    def classical_channels(self) -> Tuple[ChannelAssignment, ...]:
        return self._by_role(Role.CLASSICAL)

    @property
    def sync_channels(self) -> Tuple[ChannelAssignment, ...]:
        return self._by_role(Role.SYNC)

    def with_classical_power(self, power_dbm: float) -> "ChannelPlan":
        """Same plan with every classical channel launched at power_dbm"""
        return self._map_classical(lambda a: replace(a, launch_power_dbm=float(power_dbm)))

    def with_power_offset(self, delta_db: float) -> "ChannelPlan":
        return self._map_classical(lambda a: replace(a, launch_power_dbm=a.launch_power_dbm + delta_db))

    def with_classical_direction(self, direction: Direction) -> "ChannelPlan":
        """Same plan with all classical traffic travelling in one direction"""
        direction = parse_direction(direction)
        return self._map_classical(lambda a: replace(a, direction=direction))

    def without_classical(self) -> "ChannelPlan":
        return replace(self, assignments=tuple(a for a in self.assignments if a.role is not Role.CLASSICAL))

    def _map_classical(self, fn) -> "ChannelPlan":
        assignments = tuple(fn(a) if a.role is Role.CLASSICAL else a for a in self.assignments)
        return replace(self, assignments=assignments)


def validate_plan(plan: ChannelPlan) -> List[str]:
    """
    Check a plan against the core allocation and interleave rules.
    Returns the violations in a fixed order; an empty list means valid.
    """
    violations = []
    topology, grid, q_core = plan.topology, plan.grid, plan.quantum_core

    for a in plan.assignments:
        if not topology.has_core(a.core):
            violations.append(f"unknown core {a.core} for {a.role.value} channel at {a.freq_ghz} GHz")

    if not topology.has_core(q_core):
        violations.append(f"unknown quantum core {q_core}")
    elif q_core == topology.center_core:
        violations.append("quantum core must be outer")

    for a in plan.quantum_channels:
        if a.core != q_core:
            violations.append(f"quantum channel at {a.freq_ghz} GHz outside quantum core {q_core}")
        if quantum_ordinal(a.freq_ghz, grid) is None:
            violations.append(f"quantum channel at {a.freq_ghz} GHz off the interleave grid")

    for a in plan.classical_channels:
        if a.core == q_core:
            violations.append(f"classical channel at {a.freq_ghz} GHz occupies quantum core {q_core}")

    others = [a for a in plan.assignments if a.role is not Role.QUANTUM]
    for q in plan.quantum_channels:
        for a in others:
            if abs(q.freq_ghz - a.freq_ghz) < grid.half_spacing_ghz:
                violations.append(
                    f"separation below Δf/2: quantum {q.freq_ghz} GHz vs {a.role.value} {a.freq_ghz} GHz in core {a.core}"
                )

    quantum_directions = {q.direction for q in plan.quantum_channels} or {Direction.CO}
    for a in plan.sync_channels:
        if a.core != q_core:
            violations.append(f"sync channel at {a.freq_ghz} GHz must share quantum core {q_core}")
        if quantum_directions != {a.direction}:
            violations.append(f"sync channel at {a.freq_ghz} GHz must travel with the quantum signal")

    seen = set()
    for a in others:
        slot = (a.core, a.freq_ghz)
        if slot in seen:
            violations.append(f"frequency collision at {a.freq_ghz} GHz in core {a.core}")
        seen.add(slot)

    return violations
