####################################
#   File I/O : plans / models / CSV #
####################################

# Key-value documents use dotted keys (grid.f0_ghz=193400, channel.1.core=3)
# and are read with python-dotenv, so every text format shares one parser.

import hashlib
import io
import logging
import math
import os
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from qkd_logic import __version__
from qkd_logic.errors import ConfigParseError, DomainError
from qkd_logic.fibergrid import (ChannelAssignment, ChannelPlan, CoreTopology, FrequencyGrid,
                                 hexagonal_topology)
from qkd_logic.planner import ClassicalDemand, TrafficDemand
from qkd_logic.qkdrate import DECOY_VARIANT, LinkResult
from qkd_logic.scenario import Curve
from qkd_logic.xtmodel import MeasurementRecord, XtalkModel

logger = logging.getLogger(__name__)

TOOL_NAME = "mcfqkd"
TOOL_VERSION = __version__

MEASUREMENT_COLUMNS = ["power_dbm", "pcr_cps", "direction", "cores", "freq_ghz", "length_km", "filter_loss_db"]
SWEEP_COLUMNS = ["x", "variant", "skr_bps", "qber", "q_mu", "e_mu", "y1_lower", "e1_upper", "xt_pcr_cps", "eta", "y0"]
FLOAT_FORMAT = "%.9g"

_REQUIRED = object()


#### KEY-VALUE DOCUMENTS ####

class KeyValueDocument:
    """Parsed dotted-key file with typed getters that report file, line and field on failure"""

    def __init__(self, path: str, values: Dict[str, Optional[str]], lines: Sequence[str]):
        self.path = path
        self.values = values
        self._lines = lines

    @classmethod
    def load(cls, path: str) -> "KeyValueDocument":
        try:
            with open(path, encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            raise ConfigParseError(f"cannot read file: {e.strerror or e}", path=str(path))

        values = dotenv_values(stream=io.StringIO(text), interpolate=False)
        document = cls(str(path), dict(values), text.splitlines())
        for key, value in document.values.items():
            if value is None:
                raise ConfigParseError("expected key=value", path=document.path, field=key, line=document.line_of(key))
        return document

    def line_of(self, key: str) -> Optional[int]:
        for number, line in enumerate(self._lines, start=1):
            stripped = line.strip()
            if stripped.startswith("export "):
                stripped = stripped[len("export "):].lstrip()
            if stripped.split("=", 1)[0].strip() == key:
                return number
        return None

    def error(self, key: str, message: str) -> ConfigParseError:
        return ConfigParseError(message, path=self.path, field=key, line=self.line_of(key))

    def has(self, key: str) -> bool:
        value = self.values.get(key)
        return value is not None and value.strip() != ""

    def get(self, key: str, cast: Callable = str, default=_REQUIRED):
        if not self.has(key):
            if default is _REQUIRED:
                raise self.error(key, "missing required key")
            return default
        raw = self.values[key].strip()
        try:
            return cast(raw)
        except (ValueError, DomainError) as e:
            raise self.error(key, f"invalid value {raw!r}: {e}")

    def indices(self, prefix: str) -> List[int]:
        """Sorted N of every "prefix.N.*" key"""
        found = set()
        for key in self.values:
            parts = key.split(".")
            if len(parts) >= 3 and parts[0] == prefix:
                if not parts[1].isdigit():
                    raise self.error(key, f"{prefix} entries must be numbered")
                found.add(int(parts[1]))
        return sorted(found)

    def resolve(self, relative: str) -> str:
        """Paths inside a document are relative to the document's directory"""
        if os.path.isabs(relative):
            return relative
        return os.path.join(os.path.dirname(os.path.abspath(self.path)), relative)


def parse_float(raw: str) -> float:
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError("not a finite number")
    return value


def parse_int(raw: str) -> int:
    return int(raw)


def parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def file_sha256(path: str) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def metadata_footer(config_sha256: str) -> str:
    return f"# tool={TOOL_NAME} version={TOOL_VERSION} config_sha256={config_sha256} decoy_variant={DECOY_VARIANT}\n"


def write_with_footer(path: str, body: str, config_sha256: str):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(body)
            f.write(metadata_footer(config_sha256))
    except OSError as e:
        raise ConfigParseError(f"cannot write file: {e.strerror or e}", path=str(path))


def _format_number(value: float) -> str:
    return f"{value:.9g}"


#### TOPOLOGY / GRID SECTIONS ####

def _parse_adjacency(raw: str):
    pairs = []
    for item in raw.split(","):
        a, b = item.strip().split("-")
        pairs.append((int(a), int(b)))
    return pairs


def read_topology(doc: KeyValueDocument) -> CoreTopology:
    """topology.adjacency=hexagonal (default) or explicit pairs "1-2,1-3,..." """
    adjacency = doc.get("topology.adjacency", str, "hexagonal")
    if adjacency.lower() == "hexagonal":
        topology = hexagonal_topology()
        if doc.get("topology.core_count", parse_int, 7) != 7 or doc.get("topology.center_core", parse_int, 1) != 1:
            raise doc.error("topology.adjacency", "the hexagonal layout has 7 cores with core 1 at the center")
        return topology

    core_count = doc.get("topology.core_count", parse_int)
    center_core = doc.get("topology.center_core", parse_int)
    pairs = doc.get("topology.adjacency", _parse_adjacency)
    try:
        return CoreTopology.from_pairs(core_count, center_core, pairs)
    except DomainError as e:
        raise doc.error(f"topology.{e.field or 'adjacency'}", str(e))


def read_grid(doc: KeyValueDocument) -> FrequencyGrid:
    try:
        return FrequencyGrid(
            doc.get("grid.f0_ghz", parse_int),
            doc.get("grid.delta_f_ghz", parse_int),
            doc.get("grid.channel_count", parse_int),
        )
    except DomainError as e:
        raise doc.error(f"grid.{e.field}", str(e))


def _topology_lines(topology: CoreTopology) -> List[str]:
    lines = [f"topology.core_count={topology.core_count}", f"topology.center_core={topology.center_core}"]
    if topology == hexagonal_topology():
        lines.append("topology.adjacency=hexagonal")
    else:
        pairs = sorted(tuple(sorted(p)) for p in topology.adjacency)
        lines.append("topology.adjacency=" + ",".join(f"{a}-{b}" for a, b in pairs))
    return lines


def _grid_lines(grid: FrequencyGrid) -> List[str]:
    return [f"grid.f0_ghz={grid.f0_ghz}", f"grid.delta_f_ghz={grid.delta_f_ghz}", f"grid.channel_count={grid.channel_count}"]


#### PLAN FILES ####

def read_plan(path: str) -> ChannelPlan:
    doc = KeyValueDocument.load(path)
    topology = read_topology(doc)
    grid = read_grid(doc)

    assignments = []
    for n in doc.indices("channel"):
        prefix = f"channel.{n}"
        role = doc.get(f"{prefix}.role")
        try:
            assignments.append(ChannelAssignment(
                core=doc.get(f"{prefix}.core", parse_int),
                freq_ghz=doc.get(f"{prefix}.freq_ghz", parse_int),
                role=role,
                direction=doc.get(f"{prefix}.direction", str, "co"),
                launch_power_dbm=doc.get(f"{prefix}.power_dbm", parse_float, None),
            ))
        except DomainError as e:
            raise doc.error(f"{prefix}.{e.field or 'role'}", str(e))

    return ChannelPlan(topology, grid, tuple(assignments), doc.get("quantum_core", parse_int))


def format_plan(plan: ChannelPlan) -> str:
    lines = ["# channel plan"] + _topology_lines(plan.topology) + _grid_lines(plan.grid)
    lines.append(f"quantum_core={plan.quantum_core}")
    for n, a in enumerate(plan.assignments, start=1):
        lines += [
            f"channel.{n}.core={a.core}",
            f"channel.{n}.freq_ghz={a.freq_ghz}",
            f"channel.{n}.role={a.role.value}",
            f"channel.{n}.direction={a.direction.value}",
        ]
        if a.launch_power_dbm is not None:
            lines.append(f"channel.{n}.power_dbm={_format_number(a.launch_power_dbm)}")
    return "\n".join(lines) + "\n"


def write_plan(plan: ChannelPlan, path: str, config_sha256: str):
    write_with_footer(path, format_plan(plan), config_sha256)


#### DEMAND FILES ####

def read_demand(path: str) -> TrafficDemand:
    doc = KeyValueDocument.load(path)
    channels = []
    for n in doc.indices("classical"):
        prefix = f"classical.{n}"
        try:
            channels.append(ClassicalDemand(
                ordinal=doc.get(f"{prefix}.ordinal", parse_int),
                launch_power_dbm=doc.get(f"{prefix}.power_dbm", parse_float),
                direction=doc.get(f"{prefix}.direction", str, "co"),
            ))
        except DomainError as e:
            raise doc.error(f"{prefix}.{e.field or 'direction'}", str(e))
    try:
        return TrafficDemand(tuple(channels), doc.get("quantum_count", parse_int, 1), doc.get("sync", parse_bool, True))
    except DomainError as e:
        raise doc.error("quantum_count", str(e))


#### MODEL FILES ####

_MODEL_OPTIONAL = ("chi_co_filtered", "chi_counter_filtered")


def read_model(path: str) -> XtalkModel:
    doc = KeyValueDocument.load(path)
    try:
        return XtalkModel(
            chi_co=doc.get("chi_co", parse_float),
            chi_counter=doc.get("chi_counter", parse_float),
            reference_filter_loss_db=doc.get("reference_filter_loss_db", parse_float, 0.0),
            dark_floor_cps=doc.get("dark_floor_cps", parse_float, 0.0),
            **{key: doc.get(key, parse_float, None) for key in _MODEL_OPTIONAL},
        )
    except DomainError as e:
        raise doc.error(e.field or "chi_co", str(e))


def format_model(model: XtalkModel) -> str:
    lines = [
        "# IC-XT model, counts/s per mW per km per classical core",
        f"chi_co={model.chi_co!r}",
        f"chi_counter={model.chi_counter!r}",
        f"reference_filter_loss_db={model.reference_filter_loss_db!r}",
        f"dark_floor_cps={model.dark_floor_cps!r}",
    ]
    for key in _MODEL_OPTIONAL:
        value = getattr(model, key)
        if value is not None:
            lines.append(f"{key}={value!r}")
    return "\n".join(lines) + "\n"


def write_model(model: XtalkModel, path: str, config_sha256: str):
    write_with_footer(path, format_model(model), config_sha256)


#### MEASUREMENT CSV ####

def _parse_cores(raw) -> frozenset:
    return frozenset(int(c) for c in str(raw).split("+"))


def read_measurements(path: str) -> List[MeasurementRecord]:
    """Measurement CSV -> records; line numbers in errors count the header as line 1"""
    try:
        df = pd.read_csv(path, comment="#", dtype=str, skipinitialspace=True)
    except FileNotFoundError:
        raise ConfigParseError("file not found", path=str(path))
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigParseError(f"cannot parse CSV: {e}", path=str(path))

    missing = [c for c in MEASUREMENT_COLUMNS if c not in df.columns]
    if missing:
        raise ConfigParseError(f"missing column(s) {', '.join(missing)}", path=str(path), field=missing[0], line=1)

    records = []
    for index, row in df.iterrows():
        line = index + 2
        column = "power_dbm"
        try:
            for column in MEASUREMENT_COLUMNS:
                if pd.isna(row[column]):
                    raise ValueError("empty value")
            column = "power_dbm"
            power = parse_float(row["power_dbm"])
            column = "pcr_cps"
            pcr = parse_float(row["pcr_cps"])
            column = "cores"
            cores = _parse_cores(row["cores"])
            column = "freq_ghz"
            freq = parse_int(row["freq_ghz"])
            column = "length_km"
            length = parse_float(row["length_km"])
            column = "filter_loss_db"
            loss = parse_float(row["filter_loss_db"])
            column = "direction"
            records.append(MeasurementRecord(power, pcr, row["direction"], cores, freq, length, loss))
        except DomainError as e:
            raise ConfigParseError(str(e), path=str(path), field=e.field or column, line=line)
        except ValueError as e:
            raise ConfigParseError(f"invalid value: {e}", path=str(path), field=column, line=line)

    logger.info(f"read {len(records)} measurement records from {path}")
    return records


def measurements_frame(records: Iterable[MeasurementRecord]) -> pd.DataFrame:
    rows = [{
        "power_dbm": r.launch_power_dbm,
        "pcr_cps": r.pcr_cps,
        "direction": r.direction.value,
        "cores": "+".join(str(c) for c in sorted(r.active_cores)),
        "freq_ghz": r.probe_ghz,
        "length_km": r.length_km,
        "filter_loss_db": r.filter_loss_db,
    } for r in records]
    return pd.DataFrame(rows, columns=MEASUREMENT_COLUMNS)


def write_measurements(records: Iterable[MeasurementRecord], path: str):
    measurements_frame(records).to_csv(path, index=False, float_format="%.17g")


#### SWEEP CSV ####

def curves_frame(curves: Sequence[Curve]) -> pd.DataFrame:
    """One row per (x, variant): x ascending, variants in sweep order"""
    rows = []
    for order, curve in enumerate(curves):
        for x, r in curve.points:
            rows.append({
                "x": x, "variant": curve.label, "_order": order,
                "skr_bps": r.skr_bps, "qber": r.qber, "q_mu": r.q_mu, "e_mu": r.e_mu,
                "y1_lower": r.y1_lower, "e1_upper": r.e1_upper, "xt_pcr_cps": r.xt_pcr_cps,
                "eta": r.eta, "y0": r.y0,
            })
    df = pd.DataFrame(rows, columns=SWEEP_COLUMNS + ["_order"])
    df = df.sort_values(["x", "_order"], kind="mergesort").drop(columns="_order")
    return df.reset_index(drop=True)


def link_results_frame(results: Sequence[LinkResult], xs: Sequence[float], label: str) -> pd.DataFrame:
    return curves_frame([Curve(label, tuple(zip(xs, results)))])


def format_frame(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_sweep_csv(curves: Sequence[Curve], path: str, config_sha256: str):
    write_with_footer(path, format_frame(curves_frame(curves)), config_sha256)


def read_sweep_csv(path: str) -> List[Curve]:
    """
    Curves rebuilt from a sweep CSV. Fields the CSV does not carry
    (decoy gain and QBER, Q1, key per pulse) come back as NaN.
    """
    try:
        df = pd.read_csv(path, comment="#")
    except FileNotFoundError:
        raise ConfigParseError("file not found", path=str(path))
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigParseError(f"cannot parse CSV: {e}", path=str(path))

    missing = [c for c in SWEEP_COLUMNS if c not in df.columns]
    if missing:
        raise ConfigParseError(f"missing column(s) {', '.join(missing)}", path=str(path), field=missing[0], line=1)

    curves = []
    for label in pd.unique(df["variant"]):
        group = df[df["variant"] == label].sort_values("x", kind="mergesort")
        points = []
        for _, row in group.iterrows():
            points.append((float(row["x"]), LinkResult(
                eta=row["eta"], y0=row["y0"], q_mu=row["q_mu"], e_mu=row["e_mu"],
                q_nu=np.nan, e_nu=np.nan, y1_lower=row["y1_lower"], e1_upper=row["e1_upper"],
                q1=np.nan, key_per_pulse=np.nan, skr_bps=row["skr_bps"], xt_pcr_cps=row["xt_pcr_cps"],
            )))
        try:
            curves.append(Curve(str(label), tuple(points)))
        except DomainError as e:
            raise ConfigParseError(str(e), path=str(path), field="x")
    return curves
