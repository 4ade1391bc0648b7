####################################
#   Scenario : Sweeps // Baseline  #
####################################

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from qkd_logic.errors import CalibrationFailure, DomainError, McfQkdError, SweepPointError
from qkd_logic.fibergrid import Direction, parse_direction
from qkd_logic.qkdrate import DecoyParams, LinkResult, LinkScenario, secure_key_rate
from qkd_logic.units import ratio_to_db
from qkd_logic.xtmodel import FilterSpec, XtalkModel

logger = logging.getLogger(__name__)

VARIABLES = ("length_km", "power_dbm")
CONVENTIONS = ("incremental", "absolute")

E_DETECTOR_RANGE = (0.0, 0.1)
FIXED_LOSS_RANGE_DB = (0.0, 30.0)
MAX_OUTER_ITERATIONS = 100


@dataclass(frozen=True)
class Variant:
    """
    One curve of a sweep. Labels read "co", "counter", "co+filter" and may
    carry "+noxt" for the comparison run without classical traffic.
    """
    direction: Direction
    extra_filter: bool = False
    no_xt: bool = False

    def __post_init__(self):
        object.__setattr__(self, "direction", parse_direction(self.direction))

    @property
    def label(self) -> str:
        label = self.direction.value
        if self.extra_filter:
            label += "+filter"
        if self.no_xt:
            label += "+noxt"
        return label

    @classmethod
    def parse(cls, label: str) -> "Variant":
        parts = [p.strip().lower() for p in label.split("+")]
        flags = set(parts[1:])
        unknown = flags - {"filter", "noxt"}
        if unknown or len(flags) != len(parts) - 1:
            raise DomainError(f"unknown variant label: {label}", field="variants")
        try:
            direction = parse_direction(parts[0])
        except DomainError as e:
            raise DomainError(f"variant {label}: {e}", field="variants") from e
        return cls(direction, "filter" in flags, "noxt" in flags)


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    start: float
    stop: float
    step: float
    fixed: LinkScenario
    variants: Tuple[Variant, ...]
    # filter inserted for variants flagged extra_filter
    filter_spec: Optional[FilterSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        if self.variable not in VARIABLES:
            raise DomainError(f"sweep variable must be one of {VARIABLES}, got {self.variable}", field="variable")
        if not self.step > 0:
            raise DomainError(f"sweep step must be positive, got {self.step}", field="step")
        if self.start > self.stop:
            raise DomainError(f"sweep start {self.start} exceeds stop {self.stop}", field="start")
        if any(v.extra_filter for v in self.variants) and self.filter_spec is None and self.fixed.extra_filter is None:
            raise DomainError("a filtered variant needs a filter specification", field="filter")

    @property
    def xs(self) -> List[float]:
        """Grid points start + i*step up to stop, each computed from the index"""
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [self.start + i * self.step for i in range(count)]


@dataclass(frozen=True)
class Curve:
    label: str
    points: Tuple[Tuple[float, LinkResult], ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        xs = [x for x, _ in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise DomainError(f"curve {self.label} x values must be strictly increasing", field="x")

    @property
    def xs(self) -> np.ndarray:
        return np.array([x for x, _ in self.points], dtype=float)

    @property
    def skr(self) -> np.ndarray:
        return np.array([r.skr_bps for _, r in self.points], dtype=float)


#### SWEEPS ####

def point_scenario(spec: SweepSpec, variant: Variant, x: float) -> LinkScenario:
    """The LinkScenario evaluated for one (x, variant) point"""
    scenario = spec.fixed
    if spec.variable == "length_km":
        scenario = replace(scenario, length_km=float(x))
    else:
        scenario = replace(scenario, plan=scenario.plan.with_classical_power(x))

    plan = scenario.plan.without_classical() if variant.no_xt else scenario.plan
    extra_filter = (spec.filter_spec or spec.fixed.extra_filter) if variant.extra_filter else None
    return replace(scenario, plan=plan, direction=variant.direction, extra_filter=extra_filter)


def _sweep_point_worker(spec: SweepSpec, variant: Variant, x: float, model: XtalkModel, params: DecoyParams,
                        measurement_gate_hz: Optional[float]) -> LinkResult:
    label = variant.label
    try:
        scenario = point_scenario(spec, variant, x)
        result = secure_key_rate(scenario, model, params, measurement_gate_hz)
    except McfQkdError as e:
        raise SweepPointError(x, label, e) from e
    logger.debug(f"{label} x={x:g}: skr={result.skr_bps:.6g} bps qber={result.qber:.4%}")
    return result


def run_sweep(spec: SweepSpec, model: XtalkModel, params: DecoyParams, workers: int = 1,
              measurement_gate_hz: Optional[float] = None) -> List[Curve]:
    """
    One Curve per variant, in variant order, points in x order. With
    workers > 1 points are evaluated in a process pool; the assembly order
    does not depend on completion order.
    """
    if not spec.variants:
        return []

    tasks = [
        (spec, variant, x, model, params, measurement_gate_hz)
        for variant in spec.variants
        for x in spec.xs
    ]

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_sweep_point_worker, *task) for task in tasks]
            results = [fut.result() for fut in futures]
    else:
        results = [_sweep_point_worker(*task) for task in tasks]

    n = len(spec.xs)
    curves = []
    for i, variant in enumerate(spec.variants):
        chunk = results[i * n:(i + 1) * n]
        curves.append(Curve(variant.label, tuple(zip(spec.xs, chunk))))
    return curves


#### LENGTH EMULATION ####

def emulate_length(target_length: float, base_length: float, attenuation: float,
                   convention: str = "incremental") -> Tuple[float, float]:
    """
    VOA setting and launch power boost that let a base_length fiber stand in
    for target_length: the boost compensates the linear-in-length IC-XT and
    the VOA the missing attenuation. "absolute" sets the VOA to the full
    target attenuation, as done on the bench.
    """
    if convention not in CONVENTIONS:
        raise DomainError(f"convention must be one of {CONVENTIONS}, got {convention}", field="convention")
    if not base_length > 0:
        raise DomainError(f"base length must be positive, got {base_length}", field="base_length")
    if target_length < base_length:
        raise DomainError(f"target length {target_length} km below base length {base_length} km", field="target_length")

    if convention == "absolute":
        voa_db = attenuation * target_length
    else:
        voa_db = attenuation * (target_length - base_length)
    boost_db = float(ratio_to_db(target_length / base_length))
    return float(voa_db), boost_db


def emulate_scenario(scenario: LinkScenario, base_length: float, convention: str = "incremental") -> LinkScenario:
    """Stand-in scenario on base_length fiber with the VOA folded into the fixed losses"""
    voa_db, boost_db = emulate_length(scenario.length_km, base_length, scenario.attenuation_db_per_km, convention)
    return replace(
        scenario,
        length_km=base_length,
        fixed_losses_db=scenario.fixed_losses_db + voa_db,
        plan=scenario.plan.with_power_offset(boost_db),
    )


#### CURVE ANALYSIS ####

def _check_same_grid(a: Curve, b: Curve):
    if len(a.points) != len(b.points) or not np.array_equal(a.xs, b.xs):
        raise DomainError(f"curves {a.label} and {b.label} do not share an x grid", field="x")


def find_crossover(a: Curve, b: Curve) -> Optional[float]:
    """
    Smallest x where a.skr - b.skr changes sign, linearly interpolated
    between the bracketing points. Zeros are skipped over until the sign on
    the other side is known.
    """
    _check_same_grid(a, b)
    xs, diff = a.xs, a.skr - b.skr

    last = None
    for i, d in enumerate(diff):
        if d == 0:
            continue
        if last is not None and np.sign(d) != np.sign(diff[last]):
            if i - last > 1:
                # a run of exact zeros between opposite signs
                return float(xs[last + 1])
            x0, x1, d0, d1 = xs[last], xs[i], diff[last], d
            return float(x0 + (x1 - x0) * d0 / (d0 - d1))
        last = i
    return None


def max_reach(curve: Curve) -> float:
    """Largest x with a positive key rate, 0 if the curve never yields key"""
    positive = [x for x, r in curve.points if r.skr_bps > 0]
    return float(max(positive)) if positive else 0.0


def xt_penalty(a: Curve, b: Curve) -> float:
    """Largest SKR shortfall of a against b over their shared grid (bits/s)"""
    _check_same_grid(a, b)
    if not a.points:
        return 0.0
    return float(np.max(b.skr - a.skr))


def summarize(curves: Sequence[Curve], crossover_pairs: Sequence[Tuple[str, str]] = ()) -> Dict[str, Dict]:
    """
    Max reach per variant, the requested crossovers, and the XT penalty of
    every variant swept alongside its "+noxt" counterpart.
    """
    by_label = {c.label: c for c in curves}
    summary = {"reach_km": {c.label: max_reach(c) for c in curves}, "crossovers": {}, "xt_penalty_bps": {}}
    for curve in curves:
        quiet = by_label.get(f"{curve.label}+noxt")
        if quiet is not None:
            summary["xt_penalty_bps"][curve.label] = xt_penalty(curve, quiet)
    for first, second in crossover_pairs:
        if first not in by_label or second not in by_label:
            raise DomainError(f"crossover pair {first}:{second} names an unknown variant", field="summary.crossovers")
        summary["crossovers"][f"{first}:{second}"] = find_crossover(by_label[first], by_label[second])
    return summary


#### BASELINE CALIBRATION ####

def calibrate_baseline(target_skr: float, target_qber: float, scenario: LinkScenario, params: DecoyParams,
                       model: Optional[XtalkModel] = None, measurement_gate_hz: Optional[float] = None,
                       tolerance: float = 1e-3) -> Tuple[float, float]:
    """
    Solve (e_detector, fixed_losses_db) so a scenario without classical
    traffic reproduces the target SKR and QBER. Alternates bisection on
    e_detector (QBER rises with it) and on the fixed loss (SKR falls with it).
    """
    if not target_skr > 0 or not 0 < target_qber < 0.5:
        raise DomainError(f"baseline targets must be positive, got skr={target_skr}, qber={target_qber}", field="baseline")
    if scenario.plan.classical_channels:
        raise DomainError("baseline scenario must carry no classical traffic", field="plan")
    # coefficients never enter without classical channels
    model = model or XtalkModel(chi_co=1.0, chi_counter=1.0)

    def forward(e_d: float, loss_db: float) -> LinkResult:
        trial = replace(scenario, fixed_losses_db=loss_db)
        return secure_key_rate(trial, model, replace(params, e_detector=e_d), measurement_gate_hz)

    def solve(fn, bounds, what):
        lo, hi = bounds
        f_lo, f_hi = fn(lo), fn(hi)
        if f_lo == 0:
            return lo
        if f_hi == 0:
            return hi
        if np.sign(f_lo) == np.sign(f_hi):
            raise CalibrationFailure(f"no {what} in [{lo}, {hi}] reproduces the baseline targets")
        return optimize.bisect(fn, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)

    e_d = min(max(params.e_detector, E_DETECTOR_RANGE[0]), E_DETECTOR_RANGE[1])
    loss = min(max(scenario.fixed_losses_db, FIXED_LOSS_RANGE_DB[0]), FIXED_LOSS_RANGE_DB[1])

    for iteration in range(MAX_OUTER_ITERATIONS):
        previous = (e_d, loss)
        e_d = solve(lambda e: forward(e, loss).qber - target_qber, E_DETECTOR_RANGE, "detector error")
        loss = solve(lambda l: forward(e_d, l).skr_bps - target_skr, FIXED_LOSS_RANGE_DB, "fixed loss")

        result = forward(e_d, loss)
        skr_err = abs(result.skr_bps / target_skr - 1)
        qber_err = abs(result.qber / target_qber - 1)
        logger.debug(f"baseline iteration {iteration}: e_d={e_d:.6g} loss={loss:.6g} dB "
                     f"skr_err={skr_err:.2e} qber_err={qber_err:.2e}")
        if (skr_err < 1e-12 and qber_err < 1e-12) or (e_d, loss) == previous:
            break

    if skr_err > tolerance or qber_err > tolerance:
        raise CalibrationFailure(
            f"baseline did not converge: SKR off by {skr_err:.3%}, QBER off by {qber_err:.3%}"
        )
    return float(e_d), float(loss)
