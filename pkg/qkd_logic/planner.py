####################################
#  Planner : Quantum Core // Pack  #
####################################

import itertools
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from qkd_logic.errors import CapacityError, DomainError
from qkd_logic.fibergrid import (ChannelAssignment, ChannelPlan, CoreTopology, Direction, FrequencyGrid, Role,
                                 classical_frequency, nearest_neighbors, parse_direction, quantum_frequency,
                                 sync_frequency, validate_plan)
from qkd_logic.units import dbm_to_mw
from qkd_logic.xtmodel import XtalkModel, predict_xt_pcr

logger = logging.getLogger(__name__)

EXHAUSTIVE_MAX_CHANNELS = 6


@dataclass(frozen=True)
class ClassicalDemand:
    ordinal: int
    launch_power_dbm: float
    direction: Direction = Direction.CO

    def __post_init__(self):
        object.__setattr__(self, "direction", parse_direction(self.direction))
        if not np.isfinite(self.launch_power_dbm):
            raise DomainError(f"launch power must be finite, got {self.launch_power_dbm}", field="power_dbm")


@dataclass(frozen=True)
class TrafficDemand:
    classical_channels: Tuple[ClassicalDemand, ...]
    quantum_channels: int = 1
    sync_required: bool = True

    def __post_init__(self):
        object.__setattr__(self, "classical_channels", tuple(self.classical_channels))
        if self.quantum_channels < 0:
            raise DomainError(f"quantum channel count must be >= 0, got {self.quantum_channels}", field="quantum_count")


#### QUANTUM CORE ####

def choose_quantum_core(topology: CoreTopology, per_core_power: Mapping[int, float],
                        candidates: Optional[Sequence[int]] = None) -> int:
    """
    Outer core whose nearest neighbours carry the least classical power (mW);
    ties go to the lowest core index. candidates, when given, narrows the
    outer cores considered.
    """
    outer = topology.outer_cores
    if candidates is not None:
        outer = tuple(c for c in outer if c in candidates)
    if not outer:
        raise DomainError("topology has no outer core for the quantum signal", field="topology")

    def neighbour_load(core: int) -> float:
        return sum(per_core_power.get(n, 0.0) for n in sorted(nearest_neighbors(topology, core)))

    return min(outer, key=lambda core: (neighbour_load(core), core))


#### CAPACITY / COST ####

def _free_outer_cores(topology: CoreTopology, background_mw: Mapping[int, float]) -> Tuple[int, ...]:
    """Outer cores carrying no background classical power; only these may host the quantum signal"""
    if not topology.outer_cores:
        raise DomainError("topology has no outer core for the quantum signal", field="topology")
    free = tuple(c for c in topology.outer_cores if background_mw.get(c, 0.0) <= 0)
    if not free:
        raise CapacityError("every outer core already carries classical traffic", 1)
    return free


def _check_capacity(demand: TrafficDemand, topology: CoreTopology, grid: FrequencyGrid):
    for ch in demand.classical_channels:
        if not 1 <= ch.ordinal <= grid.channel_count:
            raise DomainError(f"classical ordinal {ch.ordinal} outside 1..{grid.channel_count}", field="ordinal")

    # every core except the quantum core can hold each ordinal once
    per_ordinal = Counter(ch.ordinal for ch in demand.classical_channels)
    classical_cores = topology.core_count - 1
    shortfall = sum(max(0, count - classical_cores) for count in per_ordinal.values())
    if shortfall:
        raise CapacityError(f"demand exceeds grid capacity, shortfall of {shortfall} classical channel(s)", shortfall)


def _channel_weights(demand: TrafficDemand, model: Optional[XtalkModel]) -> List[float]:
    """Per-channel XT contribution when placed next to the quantum core (up to a common length factor)"""
    weights = []
    for ch in demand.classical_channels:
        mw = float(dbm_to_mw(ch.launch_power_dbm))
        weights.append(mw * model.chi(ch.direction) if model is not None else mw)
    return weights


def plan_cost(plan: ChannelPlan, model: Optional[XtalkModel] = None) -> float:
    """
    Planner objective: predicted IC-XT PCR per km into the quantum core, or the
    classical power (mW) in its nearest neighbours when no model is given.
    """
    if model is not None:
        return sum(predict_xt_pcr(model, plan, 1.0, d) for d in Direction)
    neighbors = nearest_neighbors(plan.topology, plan.quantum_core)
    powers = [a.launch_power_dbm for a in plan.classical_channels if a.core in neighbors]
    return float(np.sum(dbm_to_mw(powers))) if powers else 0.0


#### GREEDY ####

def _greedy_pack(demand: TrafficDemand, topology: CoreTopology, quantum_core: int,
                 weights: Sequence[float]) -> Tuple[int, ...]:
    """Heaviest channels first, into non-neighbour cores, then neighbours by ascending load"""
    neighbors = nearest_neighbors(topology, quantum_core)
    far_cores = [c for c in topology.cores if c != quantum_core and c not in neighbors]
    near_cores = [c for c in topology.cores if c != quantum_core and c in neighbors]

    load: Dict[int, float] = {c: 0.0 for c in topology.cores}
    occupied = set()
    placement: List[Optional[int]] = [None] * len(demand.classical_channels)

    for i in sorted(range(len(weights)), key=lambda i: (-weights[i], i)):
        ordinal = demand.classical_channels[i].ordinal
        for pool in (far_cores, near_cores):
            free = [c for c in pool if (c, ordinal) not in occupied]
            if free:
                core = min(free, key=lambda c: (load[c], c))
                break
        else:
            raise CapacityError(f"no free core for classical ordinal {ordinal}", 1)

        placement[i] = core
        occupied.add((core, ordinal))
        load[core] += weights[i]

    return tuple(placement)


#### EXHAUSTIVE ####

def _best_for_core(demand: TrafficDemand, topology: CoreTopology, quantum_core: int,
                   weights: Sequence[float]) -> Tuple[float, Tuple[int, ...]]:
    neighbors = nearest_neighbors(topology, quantum_core)
    candidates = [c for c in topology.cores if c != quantum_core]
    ordinals = [ch.ordinal for ch in demand.classical_channels]

    best = None
    for cores in itertools.product(candidates, repeat=len(ordinals)):
        if len(set(zip(cores, ordinals))) != len(ordinals):
            continue
        cost = sum(w for w, c in zip(weights, cores) if c in neighbors)
        if best is None or (cost, cores) < best:
            best = (cost, cores)
    return best


def _exhaustive_pack(demand: TrafficDemand, topology: CoreTopology, weights: Sequence[float],
                     outer: Sequence[int], workers: int = 1) -> Tuple[int, Tuple[int, ...]]:
    if len(demand.classical_channels) > EXHAUSTIVE_MAX_CHANNELS:
        raise DomainError(
            f"exhaustive planning is limited to {EXHAUSTIVE_MAX_CHANNELS} classical channels",
            field="classical",
        )

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        results = list(executor.map(lambda q: _best_for_core(demand, topology, q, weights), outer))

    logger.debug(f"exhaustive planner evaluated {len(outer)} quantum core candidates")
    cost, quantum_core, cores = min((cost, q, cores) for q, (cost, cores) in zip(outer, results))
    return quantum_core, cores


#### PLAN ASSEMBLY ####

def _build_plan(demand: TrafficDemand, topology: CoreTopology, grid: FrequencyGrid,
                quantum_core: int, cores: Sequence[int]) -> ChannelPlan:
    assignments = [
        ChannelAssignment(quantum_core, quantum_frequency(k, grid), Role.QUANTUM)
        for k in range(1, demand.quantum_channels + 1)
    ]
    if demand.sync_required:
        assignments.append(ChannelAssignment(quantum_core, sync_frequency(grid), Role.SYNC))
    for ch, core in zip(demand.classical_channels, cores):
        assignments.append(ChannelAssignment(core, classical_frequency(ch.ordinal, grid), Role.CLASSICAL,
                                             ch.direction, ch.launch_power_dbm))
    return ChannelPlan(topology, grid, tuple(assignments), quantum_core)


def assign_channels(demand: TrafficDemand, topology: CoreTopology, grid: FrequencyGrid,
                    model: Optional[XtalkModel] = None, background_mw: Optional[Mapping[int, float]] = None,
                    exhaustive: bool = False, workers: int = 1) -> ChannelPlan:
    """
    Build an interleave-compliant plan for the demand.

    Greedy mode picks the quantum core with choose_quantum_core (against any
    background load) and packs classical channels away from it; exhaustive
    mode searches every quantum core and every core assignment. Outer cores
    that already carry background load never host the quantum signal.
    """
    _check_capacity(demand, topology, grid)
    background = background_mw or {}
    outer = _free_outer_cores(topology, background)
    weights = _channel_weights(demand, model)

    if exhaustive:
        quantum_core, cores = _exhaustive_pack(demand, topology, weights, outer, workers)
    else:
        quantum_core = choose_quantum_core(topology, background, outer)
        cores = _greedy_pack(demand, topology, quantum_core, weights)

    plan = _build_plan(demand, topology, grid, quantum_core, cores)
    violations = validate_plan(plan)
    if violations:
        raise DomainError(f"planner produced an invalid plan: {'; '.join(violations)}", field="plan")
    return plan


def compare_planners(demand: TrafficDemand, topology: CoreTopology, grid: FrequencyGrid,
                     model: Optional[XtalkModel] = None, workers: int = 1) -> Tuple[ChannelPlan, ChannelPlan, float]:
    """Greedy plan, exhaustive plan and the cost gap between them (>= 0 up to rounding)"""
    greedy = assign_channels(demand, topology, grid, model)
    best = assign_channels(demand, topology, grid, model, exhaustive=True, workers=workers)
    gap = plan_cost(greedy, model) - plan_cost(best, model)
    if gap > 1e-9 * max(plan_cost(best, model), 1.0):
        logger.warning(f"greedy plan exceeds the exhaustive optimum by {gap:.6g}")
    return greedy, best, gap
