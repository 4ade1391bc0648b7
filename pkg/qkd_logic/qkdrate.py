####################################
#  Decoy BB84 : Gains // Key Rate  #
####################################

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import xlogy

from qkd_logic import settings
from qkd_logic.errors import DomainError
from qkd_logic.fibergrid import ChannelPlan, Direction, parse_direction, validate_plan
from qkd_logic.units import loss_to_transmission
from qkd_logic.xtmodel import FilterSpec, XtalkModel, predict_xt_pcr

logger = logging.getLogger(__name__)

E0 = 0.5
# Y0 is taken from the noise model, not estimated from the vacuum states
DECOY_VARIANT = "vacuum+weak-decoy/known-y0"


@dataclass(frozen=True)
class DecoyParams:
    mu: float = 0.6
    nu: float = 0.2
    state_ratio: Tuple[int, int, int] = (14, 1, 1)
    f_ec: float = 1.16
    e_detector: float = 0.01
    e0: float = E0
    q: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "state_ratio", tuple(int(r) for r in self.state_ratio))
        if not 0 < self.nu < self.mu:
            raise DomainError(f"decoy needs 0 < nu < mu, got mu={self.mu}, nu={self.nu}", field="nu")
        if len(self.state_ratio) != 3 or min(self.state_ratio) <= 0:
            raise DomainError(f"state ratio must be three positive integers, got {self.state_ratio}", field="state_ratio")
        if self.f_ec < 1:
            raise DomainError(f"error-correction inefficiency must be >= 1, got {self.f_ec}", field="f_ec")
        if not 0 <= self.e_detector < 0.5:
            raise DomainError(f"detector error must be in [0, 0.5), got {self.e_detector}", field="e_detector")
        if not 0 < self.q <= 1:
            raise DomainError(f"sift factor must be in (0, 1], got {self.q}", field="q")

    @property
    def p_signal(self) -> float:
        return self.state_ratio[0] / sum(self.state_ratio)


@dataclass(frozen=True)
class DetectorSpec:
    gate_rate_hz: float = 50e6
    efficiency: float = 0.1
    dark_rate_cps: float = 10.0
    gate_width_ns: float = 2.1

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise DomainError(f"detector efficiency must be in (0, 1], got {self.efficiency}", field="efficiency")
        if not self.gate_rate_hz > 0:
            raise DomainError(f"gate rate must be positive, got {self.gate_rate_hz}", field="gate_rate_hz")
        if self.dark_rate_cps < 0:
            raise DomainError(f"dark rate must be >= 0, got {self.dark_rate_cps}", field="dark_rate_cps")
        if not self.gate_width_ns > 0:
            raise DomainError(f"gate width must be positive, got {self.gate_width_ns}", field="gate_width_ns")


@dataclass(frozen=True)
class LinkScenario:
    """
    One evaluated configuration. When direction is set it orients every
    classical channel of the plan; None keeps the per-channel directions.
    """
    length_km: float
    attenuation_db_per_km: float
    fixed_losses_db: float
    plan: ChannelPlan
    direction: Optional[Direction]
    detector: DetectorSpec
    system_clock_hz: float = 50e6
    extra_filter: Optional[FilterSpec] = None

    def __post_init__(self):
        if self.direction is not None:
            object.__setattr__(self, "direction", parse_direction(self.direction))
        if not self.length_km > 0:
            raise DomainError(f"fiber length must be positive, got {self.length_km}", field="length_km")
        if not self.attenuation_db_per_km > 0:
            raise DomainError(f"attenuation must be positive, got {self.attenuation_db_per_km}", field="attenuation_db_per_km")
        if self.fixed_losses_db < 0:
            raise DomainError(f"fixed losses must be >= 0 dB, got {self.fixed_losses_db}", field="fixed_losses_db")
        if not self.system_clock_hz > 0:
            raise DomainError(f"system clock must be positive, got {self.system_clock_hz}", field="system_clock_hz")

    @property
    def link_loss_db(self) -> float:
        """Fiber plus fixed losses, without the extra filter"""
        return self.attenuation_db_per_km * self.length_km + self.fixed_losses_db

    @property
    def total_loss_db(self) -> float:
        filter_db = self.extra_filter.insertion_loss_db if self.extra_filter else 0.0
        return self.link_loss_db + filter_db

    @property
    def oriented_plan(self) -> ChannelPlan:
        if self.direction is None:
            return self.plan
        return self.plan.with_classical_direction(self.direction)


@dataclass(frozen=True)
class LinkResult:
    eta: float
    y0: float
    q_mu: float
    e_mu: float
    q_nu: float
    e_nu: float
    y1_lower: float
    e1_upper: float
    q1: float
    key_per_pulse: float
    skr_bps: float
    xt_pcr_cps: float
    decoy_variant: str = DECOY_VARIANT

    @property
    def qber(self) -> float:
        return self.e_mu


#### BUILDING BLOCKS ####

def binary_entropy(x: float) -> float:
    """H2(x) in bits, with H2(0) = H2(1) = 0"""
    if not 0 <= x <= 1:
        raise DomainError(f"binary entropy needs x in [0, 1], got {x}", field="x")
    return float(-(xlogy(x, x) + xlogy(1 - x, 1 - x)) / math.log(2))


def transmittance(scenario: LinkScenario) -> float:
    """Channel transmission times detector efficiency"""
    return float(loss_to_transmission(scenario.total_loss_db)) * scenario.detector.efficiency


def background_yield(detector: DetectorSpec, xt_pcr: float, measurement_gate_hz: Optional[float] = None) -> float:
    """
    Y0 per gate: dark counts at the operating gate rate plus IC-XT counts
    converted at the gate rate the PCR model was calibrated with.
    """
    if xt_pcr < 0:
        raise DomainError(f"IC-XT count rate must be >= 0, got {xt_pcr}", field="xt_pcr")
    if measurement_gate_hz is None:
        measurement_gate_hz = settings.measurement_gate_hz()
    return detector.dark_rate_cps / detector.gate_rate_hz + xt_pcr / measurement_gate_hz


def gain_and_qber(mean_photon: float, eta: float, y0: float, e_detector: float, e0: float = E0) -> Tuple[float, float]:
    """
    Gain Q = Y0 + 1 - exp(-eta*m) and error rate E from
    E*Q = e0*Y0 + e_d*(1 - exp(-eta*m)).
    """
    if mean_photon < 0 or not 0 <= eta <= 1 or not 0 <= y0 <= 1 or not 0 <= e_detector <= 0.5:
        raise DomainError(
            f"gain_and_qber inputs out of range: m={mean_photon}, eta={eta}, y0={y0}, e_d={e_detector}",
            field="gain_and_qber",
        )
    signal = float(-np.expm1(-eta * mean_photon))
    gain = min(y0 + signal, 1.0)
    if gain == 0:
        return 0.0, e0
    return gain, (e0 * y0 + e_detector * signal) / gain


def y1_lower_bound(params: DecoyParams, q_mu: float, q_nu: float, y0: float) -> float:
    """Single-photon yield lower bound from one weak decoy and a known Y0, clamped at 0"""
    mu, nu = params.mu, params.nu
    denominator = mu * nu - nu ** 2
    if denominator <= 0:
        raise DomainError(f"decoy bound needs nu < mu, got mu={mu}, nu={nu}", field="nu")
    if not (0 <= q_mu <= 1 and 0 <= q_nu <= 1):
        raise DomainError(f"gains must lie in [0, 1], got q_mu={q_mu}, q_nu={q_nu}", field="gain")

    bracket = (q_nu * math.exp(nu)
               - q_mu * math.exp(mu) * nu ** 2 / mu ** 2
               - (mu ** 2 - nu ** 2) / mu ** 2 * y0)
    return max(mu / denominator * bracket, 0.0)


def e1_upper_bound(params: DecoyParams, q_nu: float, e_nu: float, y0: float, y1_lower: float) -> Optional[float]:
    """
    Single-photon error upper bound clamped to [0, 1/2].
    None when y1_lower is 0: no key can be extracted.
    """
    if y1_lower <= 0:
        return None
    nu = params.nu
    bound = (e_nu * q_nu * math.exp(nu) - params.e0 * y0) / (y1_lower * nu)
    return min(max(bound, 0.0), 0.5)


def sync_received_dbm(plan: ChannelPlan, link_loss_db: float) -> List[float]:
    powers = [a.launch_power_dbm for a in plan.sync_channels if a.launch_power_dbm is not None]
    return [float(p - link_loss_db) for p in powers]


#### SECURE KEY RATE ####

def secure_key_rate(scenario: LinkScenario, model: XtalkModel, params: DecoyParams,
                    measurement_gate_hz: Optional[float] = None) -> LinkResult:
    """
    Asymptotic decoy-state BB84 key rate with IC-XT as background noise:
    R = q * p_signal * (Q1 * (1 - H2(e1)) - f_ec * Q_mu * H2(E_mu)), in bits/s
    after multiplying by the system clock.
    """
    if model is None:
        raise DomainError("secure key rate needs a calibrated IC-XT model", field="model")
    violations = validate_plan(scenario.plan)
    if violations:
        raise DomainError(f"invalid channel plan: {'; '.join(violations)}", field="plan")

    plan = scenario.oriented_plan
    xt_pcr = sum(predict_xt_pcr(model, plan, scenario.length_km, d, scenario.extra_filter) for d in Direction)

    ceiling = settings.sync_ceiling_dbm()
    for received in sync_received_dbm(plan, scenario.link_loss_db):
        if received > ceiling:
            logger.warning(f"sync channel received at {received:.1f} dBm, above {ceiling:.1f} dBm; its noise is not modeled")

    y0 = background_yield(scenario.detector, xt_pcr, measurement_gate_hz)
    eta = transmittance(scenario)

    q_mu, e_mu = gain_and_qber(params.mu, eta, y0, params.e_detector, params.e0)
    q_nu, e_nu = gain_and_qber(params.nu, eta, y0, params.e_detector, params.e0)

    y1 = y1_lower_bound(params, q_mu, q_nu, y0)
    e1 = e1_upper_bound(params, q_nu, e_nu, y0, y1)

    if e1 is None:
        q1, key_per_pulse, e1 = 0.0, 0.0, 0.5
    else:
        q1 = y1 * params.mu * math.exp(-params.mu)
        key_per_pulse = params.q * params.p_signal * (
            q1 * (1 - binary_entropy(e1)) - q_mu * params.f_ec * binary_entropy(e_mu)
        )
        key_per_pulse = max(key_per_pulse, 0.0)

    return LinkResult(
        eta=eta, y0=y0,
        q_mu=q_mu, e_mu=e_mu, q_nu=q_nu, e_nu=e_nu,
        y1_lower=y1, e1_upper=e1, q1=q1,
        key_per_pulse=key_per_pulse,
        skr_bps=key_per_pulse * scenario.system_clock_hz,
        xt_pcr_cps=xt_pcr,
    )
