####################################
#   Run Config : one file per run  #
####################################

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import List, Optional, Tuple

from qkd_logic import fileio
from qkd_logic.errors import CalibrationFailure, ConfigParseError, DomainError
from qkd_logic.fibergrid import ChannelPlan, parse_direction
from qkd_logic.fileio import KeyValueDocument, parse_float, parse_int
from qkd_logic.planner import TrafficDemand
from qkd_logic.qkdrate import DecoyParams, DetectorSpec, LinkScenario
from qkd_logic.scenario import SweepSpec, Variant, calibrate_baseline
from qkd_logic.xtmodel import FilterSpec, XtalkModel, calibrate

logger = logging.getLogger(__name__)


def _parse_ratio(raw: str) -> Tuple[int, int, int]:
    parts = tuple(int(p) for p in raw.replace(",", ":").split(":"))
    if len(parts) != 3:
        raise ValueError("expected signal:decoy:vacuum")
    return parts


def _parse_pairs(raw: str) -> List[Tuple[str, str]]:
    pairs = []
    for item in raw.split(","):
        if not item.strip():
            continue
        first, second = item.split(":")
        pairs.append((first.strip(), second.strip()))
    return pairs


@dataclass
class RunConfig:
    """
    A run described by one key-value file. Sections are built on first use so
    each subcommand only needs the keys it reads.
    """
    doc: KeyValueDocument
    config_sha256: str

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        doc = KeyValueDocument.load(path)
        return cls(doc, fileio.file_sha256(path))

    @property
    def path(self) -> str:
        return self.doc.path

    def _section(self, key_prefix: str, build):
        try:
            return build()
        except DomainError as e:
            raise self.doc.error(f"{key_prefix}.{e.field}" if e.field else key_prefix, str(e))

    #### files ####

    def _file(self, key: str) -> str:
        return self.doc.resolve(self.doc.get(key))

    @cached_property
    def plan(self) -> ChannelPlan:
        return fileio.read_plan(self._file("plan_file"))

    @cached_property
    def demand(self) -> TrafficDemand:
        return fileio.read_demand(self._file("demand_file"))

    @property
    def has_demand(self) -> bool:
        return self.doc.has("demand_file")

    @property
    def calibration_csv(self) -> str:
        return self._file("calibration_csv")

    @cached_property
    def dark_floor_cps(self) -> Optional[float]:
        return self.doc.get("dark_floor_cps", parse_float, None)

    @cached_property
    def model(self) -> XtalkModel:
        """From model_file, else calibrated on the spot from calibration_csv"""
        if self.doc.has("model_file"):
            return fileio.read_model(self._file("model_file"))
        if self.doc.has("calibration_csv"):
            records = fileio.read_measurements(self.calibration_csv)
            try:
                return calibrate(records, self.dark_floor_cps)
            except DomainError as e:
                raise CalibrationFailure(f"calibration rejected the measurements [{e.field}]: {e}") from e
        raise self.doc.error("model_file", "need model_file or calibration_csv")

    @property
    def has_model(self) -> bool:
        return self.doc.has("model_file") or self.doc.has("calibration_csv")

    @property
    def sweep_csv(self) -> Optional[str]:
        return self._file("sweep_csv") if self.doc.has("sweep_csv") else None

    #### physics sections ####

    @cached_property
    def decoy_params(self) -> DecoyParams:
        get = self.doc.get
        defaults = DecoyParams()
        return self._section("decoy", lambda: DecoyParams(
            mu=get("decoy.mu", parse_float, defaults.mu),
            nu=get("decoy.nu", parse_float, defaults.nu),
            state_ratio=get("decoy.state_ratio", _parse_ratio, defaults.state_ratio),
            f_ec=get("decoy.f_ec", parse_float, defaults.f_ec),
            e_detector=get("decoy.e_detector", parse_float, defaults.e_detector),
            q=get("decoy.q", parse_float, defaults.q),
        ))

    @cached_property
    def detector(self) -> DetectorSpec:
        get = self.doc.get
        defaults = DetectorSpec()
        return self._section("detector", lambda: DetectorSpec(
            gate_rate_hz=get("detector.gate_rate_hz", parse_float, defaults.gate_rate_hz),
            efficiency=get("detector.efficiency", parse_float, defaults.efficiency),
            dark_rate_cps=get("detector.dark_rate_cps", parse_float, defaults.dark_rate_cps),
            gate_width_ns=get("detector.gate_width_ns", parse_float, defaults.gate_width_ns),
        ))

    @cached_property
    def filter_spec(self) -> Optional[FilterSpec]:
        if not self.doc.has("filter.insertion_loss_db"):
            return None
        get = self.doc.get
        return self._section("filter", lambda: FilterSpec(
            insertion_loss_db=get("filter.insertion_loss_db", parse_float),
            passband_width_nm=get("filter.passband_width_nm", parse_float, 0.6),
            out_of_band_isolation_db=get("filter.out_of_band_isolation_db", parse_float, 0.0),
        ))

    def _link_scenario(self) -> LinkScenario:
        get = self.doc.get
        direction = get("link.direction", parse_direction, None)
        use_filter = get("link.extra_filter", fileio.parse_bool, False)
        power = get("link.power_dbm", parse_float, None)
        plan = self.plan if power is None else self.plan.with_classical_power(power)
        if use_filter and self.filter_spec is None:
            raise self.doc.error("link.extra_filter", "needs a filter section (filter.insertion_loss_db)")
        return self._section("link", lambda: LinkScenario(
            length_km=get("link.length_km", parse_float, 1.0),
            attenuation_db_per_km=get("link.attenuation_db_per_km", parse_float, 0.23),
            fixed_losses_db=get("link.fixed_losses_db", parse_float, 0.0),
            plan=plan,
            direction=direction,
            detector=self.detector,
            system_clock_hz=get("link.system_clock_hz", parse_float, 50e6),
            extra_filter=self.filter_spec if use_filter else None,
        ))

    @property
    def has_baseline(self) -> bool:
        return self.doc.has("baseline.target_skr_bps") or self.doc.has("baseline.target_qber")

    @cached_property
    def baseline(self) -> Optional[Tuple[float, float]]:
        """(e_detector, fixed_losses_db) solved against the baseline targets, if any"""
        if not self.has_baseline:
            return None
        get = self.doc.get
        target_skr = get("baseline.target_skr_bps", parse_float)
        target_qber = get("baseline.target_qber", parse_float)
        template = self._link_scenario()
        length = get("baseline.length_km", parse_float, template.length_km)
        reference = self._section("baseline", lambda: replace(
            template, length_km=length, plan=template.plan.without_classical(), extra_filter=None,
        ))
        e_d, loss = calibrate_baseline(target_skr, target_qber, reference, self.decoy_params)
        logger.info(f"baseline calibrated: e_detector={e_d:.6g}, fixed losses={loss:.4f} dB")
        return e_d, loss

    @cached_property
    def params(self) -> DecoyParams:
        """Decoy parameters with a calibrated baseline detector error applied"""
        if self.baseline is None:
            return self.decoy_params
        return replace(self.decoy_params, e_detector=self.baseline[0])

    @cached_property
    def scenario(self) -> LinkScenario:
        scenario = self._link_scenario()
        if self.baseline is not None:
            scenario = replace(scenario, fixed_losses_db=self.baseline[1])
        return scenario

    #### sweep ####

    @cached_property
    def sweep_spec(self) -> SweepSpec:
        get = self.doc.get
        labels = get("sweep.variants", str, "counter,co")
        variants = self._section("sweep", lambda: tuple(
            Variant.parse(label) for label in labels.split(",") if label.strip()
        ))
        return self._section("sweep", lambda: SweepSpec(
            variable=get("sweep.variable", str, "length_km"),
            start=get("sweep.start", parse_float),
            stop=get("sweep.stop", parse_float),
            step=get("sweep.step", parse_float, 1.0),
            fixed=self.scenario,
            variants=variants,
            filter_spec=self.filter_spec,
        ))

    @property
    def workers(self) -> int:
        workers = self.doc.get("sweep.workers", parse_int, 1)
        if workers < 1:
            raise self.doc.error("sweep.workers", "must be >= 1")
        return workers

    @cached_property
    def crossover_pairs(self) -> List[Tuple[str, str]]:
        return self.doc.get("summary.crossovers", _parse_pairs, [])


def load_run_config(path: str) -> RunConfig:
    try:
        return RunConfig.load(path)
    except OSError as e:
        raise ConfigParseError(f"cannot read config: {e}", path=str(path))
