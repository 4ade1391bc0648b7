####################################
#   IC-XT Model : Calibrate/Predict #
####################################

import logging
import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from qkd_logic import settings
from qkd_logic.errors import DegenerateCalibrationError, DomainError
from qkd_logic.fibergrid import (ChannelPlan, CoreTopology, Direction, hexagonal_topology,
                                 nearest_neighbors, parse_direction)
from qkd_logic.units import dbm_to_mw, loss_to_transmission

logger = logging.getLogger(__name__)

# core 3 of the hexagonal layout, the quantum core of the reference measurements
DEFAULT_QUANTUM_CORE = 3


@dataclass(frozen=True)
class MeasurementRecord:
    """One averaged SPD reading with classical light on and no quantum signal"""
    launch_power_dbm: float
    pcr_cps: float
    direction: Direction
    active_cores: FrozenSet[int]
    probe_ghz: int
    length_km: float
    filter_loss_db: float

    def __post_init__(self):
        object.__setattr__(self, "direction", parse_direction(self.direction))
        object.__setattr__(self, "active_cores", frozenset(self.active_cores))
        if not self.pcr_cps >= 0:
            raise DomainError(f"pcr must be non-negative, got {self.pcr_cps}", field="pcr_cps")
        if not self.length_km > 0:
            raise DomainError(f"fiber length must be positive, got {self.length_km}", field="length_km")
        if not self.active_cores:
            raise DomainError("record needs at least one active classical core", field="cores")


@dataclass(frozen=True)
class FilterSpec:
    insertion_loss_db: float
    passband_width_nm: float
    out_of_band_isolation_db: float = 0.0

    def __post_init__(self):
        if self.insertion_loss_db < 0:
            raise DomainError(f"insertion loss must be >= 0 dB, got {self.insertion_loss_db}", field="insertion_loss_db")
        if not self.passband_width_nm > 0:
            raise DomainError(f"passband must be > 0 nm, got {self.passband_width_nm}", field="passband_width_nm")
        if self.out_of_band_isolation_db < 0:
            raise DomainError("out-of-band isolation bonus must be >= 0 dB", field="out_of_band_isolation_db")

    @property
    def noise_suppression_db(self) -> float:
        return self.insertion_loss_db + self.out_of_band_isolation_db


@dataclass(frozen=True)
class XtalkModel:
    """
    IC-XT coefficients in counts/s per mW per km per classical core, one per
    direction. The *_filtered coefficients, when present, were measured
    through an extra receiver filter and replace the insertion-loss scaling.
    """
    chi_co: float
    chi_counter: float
    reference_filter_loss_db: float = 0.0
    dark_floor_cps: float = 0.0
    chi_co_filtered: Optional[float] = None
    chi_counter_filtered: Optional[float] = None
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("chi_co", "chi_counter"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be positive, got {value}", field=name)
        for name in ("chi_co_filtered", "chi_counter_filtered"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise DomainError(f"{name} must be positive when given, got {value}", field=name)
        if self.dark_floor_cps < 0:
            raise DomainError(f"dark floor must be >= 0, got {self.dark_floor_cps}", field="dark_floor_cps")

    def chi(self, direction: Direction) -> float:
        return self.chi_co if direction is Direction.CO else self.chi_counter

    def chi_filtered(self, direction: Direction) -> Optional[float]:
        return self.chi_co_filtered if direction is Direction.CO else self.chi_counter_filtered

    def noise_chi(self, direction: Direction, extra_filter: Optional[FilterSpec] = None) -> float:
        """Coefficient seen at the SPD, with the extra filter in the noise path if given"""
        if extra_filter is None:
            return self.chi(direction)
        filtered = self.chi_filtered(direction)
        if filtered is not None:
            return filtered
        return self.chi(direction) * float(loss_to_transmission(extra_filter.noise_suppression_db))


#### WEIGHTED AVERAGE ####

_CONFIG_FIELDS = (
    ("direction", "direction"),
    ("active_cores", "cores"),
    ("length_km", "length_km"),
    ("filter_loss_db", "filter_loss_db"),
)


def _check_same_configuration(records: Sequence[MeasurementRecord]):
    first = records[0]
    for rec in records[1:]:
        for attr, label in _CONFIG_FIELDS:
            if getattr(rec, attr) != getattr(first, attr):
                raise DomainError(
                    f"records mix configurations: {label} {getattr(first, attr)!r} vs {getattr(rec, attr)!r}",
                    field=label,
                )


def weighted_avg_pcr(records: Sequence[MeasurementRecord]) -> float:
    """
    PCR normalized to 0 dBm launch power, averaged over the records:
    (1/K) * sum(PCR(t) / 10^(P(t)/10)).
    """
    if not records:
        raise DomainError("weighted average needs at least one record", field="records")
    _check_same_configuration(records)

    pcr = np.array([r.pcr_cps for r in records], dtype=float)
    power_mw = dbm_to_mw([r.launch_power_dbm for r in records])
    return float(np.mean(pcr / power_mw))


#### CALIBRATION ####

def _group_records(records: Iterable[MeasurementRecord]) -> Dict[tuple, List[MeasurementRecord]]:
    groups: Dict[tuple, List[MeasurementRecord]] = {}
    for rec in records:
        key = (rec.direction.value, tuple(sorted(rec.active_cores)), rec.filter_loss_db)
        groups.setdefault(key, []).append(rec)
    return dict(sorted(groups.items()))


def _group_chi(group: List[MeasurementRecord], dark_floor: float, flags: List[str]) -> float:
    """chi for one configuration: dark-subtracted weighted average per core per km"""
    first = group[0]
    adjusted = []
    for rec in group:
        pcr = rec.pcr_cps - dark_floor
        if pcr < 0:
            message = (f"{rec.direction.value} record at {rec.launch_power_dbm} dBm below dark floor "
                       f"({rec.pcr_cps} < {dark_floor} c/s), clamped to 0")
            logger.warning(message)
            flags.append(message)
            pcr = 0.0
        adjusted.append(MeasurementRecord(rec.launch_power_dbm, pcr, rec.direction, rec.active_cores,
                                          rec.probe_ghz, rec.length_km, rec.filter_loss_db))

    normalized = weighted_avg_pcr(adjusted)
    if normalized == 0:
        raise DegenerateCalibrationError(
            f"{first.direction.value} group on cores {sorted(first.active_cores)} has no counts above the dark floor",
            field="pcr_cps",
        )
    return normalized / (len(first.active_cores) * first.length_km)


def calibrate(records: Sequence[MeasurementRecord], dark_floor: Optional[float] = None,
              topology: Optional[CoreTopology] = None, quantum_core: int = DEFAULT_QUANTUM_CORE) -> XtalkModel:
    """
    Fit one chi per direction from photon count records.

    Records are grouped by (direction, cores, filter loss) and a group must
    share one fiber length. Groups at the lowest filter-chain loss give
    chi_co / chi_counter; groups measured through extra filtering give the
    *_filtered coefficients. Several groups of the same kind are averaged.
    """
    if not records:
        raise DomainError("calibration needs measurement records", field="records")
    if dark_floor is None:
        dark_floor = settings.dark_floor_cps()
    if dark_floor < 0:
        raise DomainError(f"dark floor must be >= 0, got {dark_floor}", field="dark_floor_cps")
    topology = topology or hexagonal_topology()

    neighbors = nearest_neighbors(topology, quantum_core)
    for rec in records:
        if not rec.active_cores <= neighbors:
            raise DomainError(
                f"cores {sorted(rec.active_cores)} are not all nearest neighbours of quantum core {quantum_core}",
                field="cores",
            )

    reference_loss = min(r.filter_loss_db for r in records)
    flags: List[str] = []
    plain = {d: [] for d in Direction}
    filtered = {d: [] for d in Direction}

    for (direction, cores, loss), group in _group_records(records).items():
        chi = _group_chi(group, dark_floor, flags)
        bucket = plain if math.isclose(loss, reference_loss, abs_tol=1e-9) else filtered
        bucket[Direction(direction)].append(chi)
        logger.debug(f"group {direction} cores={cores} L={group[0].length_km} km loss={loss} dB -> chi={chi:.6g}")

    for direction in Direction:
        if not plain[direction]:
            raise DomainError(f"no {direction.value}-propagation measurements to calibrate from", field="direction")

    def mean_or_none(values):
        return float(np.mean(values)) if values else None

    return XtalkModel(
        chi_co=float(np.mean(plain[Direction.CO])),
        chi_counter=float(np.mean(plain[Direction.COUNTER])),
        reference_filter_loss_db=float(reference_loss),
        dark_floor_cps=float(dark_floor),
        chi_co_filtered=mean_or_none(filtered[Direction.CO]),
        chi_counter_filtered=mean_or_none(filtered[Direction.COUNTER]),
        flags=tuple(flags),
    )


#### PREDICTION ####

def predict_xt_pcr(model: XtalkModel, plan: ChannelPlan, length_km: float, direction: Direction,
                   extra_filter: Optional[FilterSpec] = None) -> float:
    """
    IC-XT photon count rate in the quantum core from the classical channels of
    the given direction in its nearest neighbour cores. Linear in launch
    power (mW) and fiber length; classical frequencies do not enter.
    """
    if not length_km > 0:
        raise DomainError(f"fiber length must be positive, got {length_km}", field="length_km")
    direction = parse_direction(direction)

    neighbors = nearest_neighbors(plan.topology, plan.quantum_core)
    powers_dbm = [a.launch_power_dbm for a in plan.classical_channels
                  if a.core in neighbors and a.direction is direction]
    if not powers_dbm:
        return 0.0

    total_mw = float(np.sum(dbm_to_mw(powers_dbm)))
    pcr = model.noise_chi(direction, extra_filter) * total_mw * length_km

    if pcr > settings.pcr_warn_cps():
        logger.warning(f"predicted IC-XT {pcr:.3g} c/s beyond plausible gated SPD operation")
    return pcr


def predict_total_pcr(model: XtalkModel, plan: ChannelPlan, length_km: float,
                      extra_filter: Optional[FilterSpec] = None) -> float:
    """What the SPD counts with no quantum signal: dark floor plus IC-XT of both directions"""
    xt = sum(predict_xt_pcr(model, plan, length_km, d, extra_filter) for d in Direction)
    return model.dark_floor_cps + xt


#### LINEARITY FIT ####

def fit_linearity(records: Sequence[MeasurementRecord]) -> Tuple[float, float, float]:
    """
    Ordinary least squares of PCR against launch power in mW.
    Returns (slope, intercept, r_squared); r_squared is 0 for a flat response.
    """
    if len(records) < 3:
        raise DomainError(f"linearity fit needs at least 3 records, got {len(records)}", field="records")
    _check_same_configuration(records)

    x = dbm_to_mw([r.launch_power_dbm for r in records])
    y = np.array([r.pcr_cps for r in records], dtype=float)
    if np.var(x) == 0:
        raise DomainError("linearity fit needs distinct launch powers", field="power_dbm")

    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)

    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return float(slope), float(intercept), 0.0
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    r_squared = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return float(slope), float(intercept), r_squared


#### SYNTHETIC MEASUREMENTS ####

def synthesize_records(model: XtalkModel, powers_dbm: Sequence[float], direction: Direction,
                       cores: Iterable[int], length_km: float, probe_ghz: int = 193500,
                       filter_loss_db: Optional[float] = None) -> List[MeasurementRecord]:
    """
    Forward-generate noiseless records from a known model: dark floor plus
    chi * cores * mW * km. A filter loss above the model's reference selects
    the filtered-path coefficient.
    """
    direction = parse_direction(direction)
    cores = frozenset(cores)
    if filter_loss_db is None:
        filter_loss_db = model.reference_filter_loss_db

    extra_db = filter_loss_db - model.reference_filter_loss_db
    if extra_db > 1e-9:
        chi = model.chi_filtered(direction)
        if chi is None:
            chi = model.chi(direction) * float(loss_to_transmission(extra_db))
    else:
        chi = model.chi(direction)

    records = []
    for power in powers_dbm:
        pcr = model.dark_floor_cps + chi * len(cores) * float(dbm_to_mw(power)) * length_km
        records.append(MeasurementRecord(float(power), pcr, direction, cores, probe_ghz, length_km, filter_loss_db))
    return records
