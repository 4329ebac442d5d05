"""Persistence: config manifests, event logs, tally summaries, results tables.

All formats are text-first and versioned:

- configs and tallies are flat ``key = value`` files (losses always in dB,
  never linear);
- event logs are CSV with a fixed header, or an equivalent packed ``.npy``
  with the same logical schema;
- results tables are CSV with one row per loss point, serialized at full
  double precision so re-reading reproduces every value exactly.

Readers report parse failures with file/line context and reject unknown or
out-of-range keys by name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .decoy_estimator import KeyRateResult, ObservedStats, ProtocolParams, ScanPoint
from .errors import ConfigError, DataFormatError, ParameterError
from .event_sim import EVENT_DTYPE, EventRecord, SimConfig, Tally
from .link_model import LinkParams, db_to_linear
from .photon_source import SourceParams

ARTIFACT_VERSION = "1"
_CONFIG_TAG = "# pdqkd:config:v1"
_TALLY_TAG = "# pdqkd:tally:v1"
_EVENTS_TAG = "# pdqkd:events:v1"
_RESULTS_TAG = "# pdqkd:results:v1"

EVENTS_HEADER = ("pulse_id,triggered,alice_basis,alice_bit,bob_basis,"
                 "bob_clicked,bob_bit,dark_origin,double_click")

RESULTS_HEADER = ("loss_db,q_n,q_t,e_n,e_t,y1_low,e1_up,r_n,r_t,r,key_bits,"
                  "clamped_y1,clamped_e1,clamped_r_n,clamped_r_t")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# config schema: key -> (python type, (low, high) range or None, default)
# dB keys hold losses (>= 0); linear transmittances never appear in files.
_SCHEMA: dict[str, tuple[type, tuple[float, float] | None, object]] = {
    "mu0": (float, (0.0, math.inf), 0.1),
    "eta_s_db": (float, (0.0, math.inf), 0.0),
    "eta_a": (float, (0.0, 1.0), 0.1),
    "y0_alice": (float, (0.0, 1.0), 0.0),
    "eta_db": (float, (0.0, math.inf), 0.0),
    "y0_bob": (float, (0.0, 1.0), 0.0),
    "e_d": (float, (0.0, 1.0), 0.0),
    "e0": (float, (0.0, 1.0), 0.5),
    "q": (float, (0.0, 1.0), 0.5),
    "f": (float, (1.0, math.inf), 1.2),
    "u_alpha": (float, (0.0, math.inf), 5.0),
    "n_pulses": (int, (1, math.inf), 1_000_000),
    "seed": (int, None, 0),
    "batch_size": (int, (1, math.inf), 1_000_000),
    "basis_bias": (float, (0.0, 1.0), 0.5),
    "record_events": (bool, None, False),
}


#: Human documentation per config key; the CLI help reproduces this verbatim.
KEY_DOCS: dict[str, str] = {
    "mu0": "mean photon-pair number per pulse (dimensionless)",
    "eta_s_db": "sender internal loss, source + encoder, in dB",
    "eta_a": "idler-arm transmittance incl. detector efficiency, linear in [0,1]",
    "y0_alice": "heralding-detector dark-count probability per pulse, linear",
    "eta_db": "total receiver-side loss incl. channel and detector, in dB",
    "y0_bob": "receiver dark-count probability per pulse, linear",
    "e_d": "intrinsic detection error rate, linear in [0,1]",
    "e0": "dark-count error rate, linear (1/2 unless doing sensitivity studies)",
    "q": "sift factor, linear in (0,1]",
    "f": "error-correction inefficiency, >= 1",
    "u_alpha": "standard deviations for the fluctuation analysis, >= 0",
    "n_pulses": "number of pulses sent (N)",
    "seed": "64-bit random seed",
    "batch_size": "pulses per Monte Carlo batch",
    "basis_bias": "probability of the X basis, linear in [0,1]",
    "record_events": "write per-pulse event records (true/false)",
}


@dataclass(frozen=True)
class RunManifest:
    """Complete, serializable description of a run.

    ``explicit`` records which keys were present in the file (everything else
    took its default), and ``created`` is a creation timestamp preserved
    verbatim across round trips.
    """

    values: dict
    explicit: frozenset = frozenset()
    version: str = ARTIFACT_VERSION
    created: str = field(default_factory=lambda: datetime.now(timezone.utc)
                         .isoformat(timespec="seconds"))

    def __post_init__(self):
        unknown = set(self.values) - set(_SCHEMA)
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
        merged = {k: self.values.get(k, default) for k, (_, _, default) in _SCHEMA.items()}
        for key, val in merged.items():
            _validate_key(key, val)
        object.__setattr__(self, "values", merged)
        object.__setattr__(self, "explicit", frozenset(self.explicit))

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def defaults_used(self) -> frozenset:
        return frozenset(set(_SCHEMA) - self.explicit)

    def with_overrides(self, overrides: dict) -> "RunManifest":
        vals = dict(self.values)
        explicit = set(self.explicit)
        for key, raw in overrides.items():
            if key not in _SCHEMA:
                raise ConfigError(f"unknown keys: {key}")
            vals[key] = _coerce(key, raw) if isinstance(raw, str) else raw
            explicit.add(key)
        return replace(self, values=vals, explicit=frozenset(explicit))

    def to_source_params(self) -> SourceParams:
        return SourceParams(mu0=self["mu0"], eta_s=db_to_linear(self["eta_s_db"]),
                            eta_a=self["eta_a"], y0_alice=self["y0_alice"])

    def to_link_params(self) -> LinkParams:
        return LinkParams(eta=db_to_linear(self["eta_db"]), y0=self["y0_bob"],
                          e_d=self["e_d"], e0=self["e0"])

    def to_protocol_params(self) -> ProtocolParams:
        return ProtocolParams(n_pulses=self["n_pulses"], q=self["q"],
                              f=self["f"], u_alpha=self["u_alpha"])

    def to_sim_config(self, **overrides) -> SimConfig:
        kw = dict(n_pulses=self["n_pulses"], seed=self["seed"],
                  batch_size=self["batch_size"], basis_bias=self["basis_bias"],
                  record_events=self["record_events"])
        kw.update(overrides)
        return SimConfig(**kw)


def _coerce(key: str, text: str):
    kind = _SCHEMA[key][0]
    try:
        if kind is bool:
            lowered = text.strip().lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind is int:
            as_float = float(text)
            if not as_float.is_integer():
                raise ValueError(f"not an integer: {text!r}")
            return int(as_float)
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"key {key}: {exc}") from exc


def _validate_key(key: str, value) -> None:
    kind, bounds, _ = _SCHEMA[key]
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"key {key}: expected a boolean, got {value!r}")
        return
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"key {key}: expected a number, got {value!r}")
    if kind is int and not float(value).is_integer():
        raise ConfigError(f"key {key}: expected an integer, got {value!r}")
    if bounds is not None:
        lo, hi = bounds
        if not (lo <= value <= hi):
            rng = f"[{lo}, {hi}]" if math.isfinite(hi) else f">= {lo}"
            raise ConfigError(f"key {key}: value {value!r} out of range {rng}")


def write_config(manifest: RunManifest, path) -> None:
    lines = [_CONFIG_TAG,
             f"# version = {manifest.version}",
             f"# created = {manifest.created}"]
    for key in _SCHEMA:
        lines.append(f"{key} = {_fmt(manifest.values[key])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_config(path) -> RunManifest:
    """Parse a flat key-value config; missing keys take schema defaults."""
    path = Path(path)
    values: dict = {}
    explicit: set[str] = set()
    version, created = ARTIFACT_VERSION, None
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if line.startswith("# version ="):
            version = line.split("=", 1)[1].strip()
            continue
        if line.startswith("# created ="):
            created = line.split("=", 1)[1].strip()
            continue
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", str(path), lineno)
        key, _, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"unknown keys: {key}", str(path), lineno)
        if key in explicit:
            raise ConfigError(f"duplicate key {key}", str(path), lineno)
        try:
            values[key] = _coerce(key, text)
            _validate_key(key, values[key])
        except ConfigError as exc:
            raise ConfigError(str(exc), str(path), lineno) from exc
        explicit.add(key)
    kwargs = {"values": values, "explicit": frozenset(explicit), "version": version}
    if created is not None:
        kwargs["created"] = created
    return RunManifest(**kwargs)


_TALLY_FIELDS = [f.name for f in fields(Tally)]
TALLY_HEADER = ",".join(_TALLY_FIELDS)


def write_tally(tally: Tally, path) -> None:
    """Write a tally as a one-row CSV (tag line, header, counts)."""
    row = ",".join(str(getattr(tally, name)) for name in _TALLY_FIELDS)
    Path(path).write_text(f"{_TALLY_TAG}\n{TALLY_HEADER}\n{row}\n")


def read_tally(path) -> Tally:
    path = Path(path)
    lines = [l for l in path.read_text().splitlines() if l.strip()]
    pos = 0
    if pos < len(lines) and lines[pos].startswith("# pdqkd:tally:"):
        if lines[pos].strip() != _TALLY_TAG:
            raise DataFormatError(f"unsupported tally version {lines[pos]!r}", str(path), 1)
        pos += 1
    if pos >= len(lines):
        raise DataFormatError("missing tally header", str(path), pos + 1)
    header = [h.strip() for h in lines[pos].split(",")]
    unknown = set(header) - set(_TALLY_FIELDS)
    missing = set(_TALLY_FIELDS) - set(header)
    if unknown or missing:
        parts = []
        if unknown:
            parts.append(f"unknown tally fields: {', '.join(sorted(unknown))}")
        if missing:
            parts.append(f"missing tally fields: {', '.join(sorted(missing))}")
        raise DataFormatError("; ".join(parts), str(path), pos + 1)
    pos += 1
    if pos >= len(lines) or len(lines) > pos + 1:
        raise DataFormatError("expected exactly one tally row", str(path), pos + 1)
    parts = lines[pos].split(",")
    if len(parts) != len(header):
        raise DataFormatError(f"expected {len(header)} fields, got {len(parts)}",
                              str(path), pos + 1)
    try:
        values = {name: int(text) for name, text in zip(header, parts)}
    except ValueError as exc:
        raise DataFormatError(str(exc), str(path), pos + 1) from exc
    try:
        return Tally(**values)
    except ParameterError as exc:
        raise DataFormatError(str(exc), str(path)) from exc


def _as_event_array(events) -> np.ndarray:
    if isinstance(events, np.ndarray):
        if events.dtype != EVENT_DTYPE:
            raise DataFormatError(f"event array dtype must be {EVENT_DTYPE}")
        return events
    records = list(events)
    arr = np.empty(len(records), dtype=EVENT_DTYPE)
    for i, r in enumerate(records):
        arr[i] = (r.pulse_id, r.triggered, r.alice_basis, r.alice_bit,
                  r.bob_basis, r.bob_clicked, r.bob_bit if r.bob_clicked else 0,
                  r.dark_origin, r.double_click)
    return arr


def _check_event_order(arr: np.ndarray, path=None) -> None:
    ids = arr["pulse_id"]
    if len(ids) > 1 and np.any(ids[1:] <= ids[:-1]):
        bad = int(np.argmax(ids[1:] <= ids[:-1])) + 1
        raise DataFormatError(f"pulse_id not strictly increasing at record {bad}",
                              None if path is None else str(path), bad + 2)


def write_events(events, path, fmt: str = "csv") -> None:
    """Write an event log; ``events`` is a structured array or EventRecord iterable.

    ``fmt="csv"`` is the auditable interchange format; ``fmt="npy"`` packs
    the same logical schema into a binary array for large logs.
    """
    arr = _as_event_array(events)
    _check_event_order(arr)
    path = Path(path)
    if fmt == "npy":
        np.save(path, arr)
        return
    if fmt != "csv":
        raise ParameterError(f"unknown event format {fmt!r}")
    with path.open("w") as fh:
        fh.write(_EVENTS_TAG + "\n")
        fh.write(EVENTS_HEADER + "\n")
        cols = [arr[name] for name in EVENT_DTYPE.names]
        for row in zip(*cols):
            fh.write(",".join(str(int(v)) for v in row) + "\n")


def read_events(path, fmt: str | None = None) -> np.ndarray:
    """Read an event log back into a structured array (order-checked)."""
    path = Path(path)
    if fmt is None:
        fmt = "npy" if path.suffix == ".npy" else "csv"
    if fmt == "npy":
        arr = np.load(path)
        if arr.dtype != EVENT_DTYPE:
            raise DataFormatError(f"unexpected event dtype {arr.dtype}", str(path))
        _check_event_order(arr, path)
        return arr
    lines = path.read_text().splitlines()
    pos = 0
    if pos < len(lines) and lines[pos].startswith("# pdqkd:events:"):
        if lines[pos].strip() != _EVENTS_TAG:
            raise DataFormatError(f"unsupported event log version {lines[pos]!r}",
                                  str(path), 1)
        pos += 1
    if pos >= len(lines) or lines[pos].strip() != EVENTS_HEADER:
        raise DataFormatError("missing or wrong event header", str(path), pos + 1)
    pos += 1
    n_cols = len(EVENT_DTYPE.names)
    arr = np.empty(len(lines) - pos, dtype=EVENT_DTYPE)
    for i, line in enumerate(lines[pos:]):
        parts = line.split(",")
        if len(parts) != n_cols:
            raise DataFormatError(f"expected {n_cols} fields, got {len(parts)}",
                                  str(path), pos + i + 1)
        try:
            arr[i] = tuple(int(p) for p in parts)
        except ValueError as exc:
            raise DataFormatError(str(exc), str(path), pos + i + 1) from exc
    _check_event_order(arr, path)
    return arr


def events_to_records(arr: np.ndarray) -> list[EventRecord]:
    return [EventRecord(pulse_id=int(r["pulse_id"]), triggered=bool(r["triggered"]),
                        alice_basis=int(r["alice_basis"]), alice_bit=int(r["alice_bit"]),
                        bob_basis=int(r["bob_basis"]), bob_clicked=bool(r["bob_clicked"]),
                        bob_bit=int(r["bob_bit"]), dark_origin=bool(r["dark_origin"]),
                        double_click=bool(r["double_click"])) for r in arr]


def tally_from_events(events) -> Tally:
    """Recount a full event log into a Tally, exactly as the engine would."""
    arr = _as_event_array(events)
    _check_event_order(arr)
    trig = arr["triggered"].astype(bool)
    clicked = arr["bob_clicked"].astype(bool)
    matched = arr["alice_basis"] == arr["bob_basis"]
    error = clicked & matched & (arr["bob_bit"] != arr["alice_bit"])
    return Tally(
        n_pulses=len(arr),
        sent_n_match=int(np.count_nonzero(~trig & matched)),
        sent_n_mismatch=int(np.count_nonzero(~trig & ~matched)),
        sent_t_match=int(np.count_nonzero(trig & matched)),
        sent_t_mismatch=int(np.count_nonzero(trig & ~matched)),
        det_n_match=int(np.count_nonzero(clicked & ~trig & matched)),
        det_n_mismatch=int(np.count_nonzero(clicked & ~trig & ~matched)),
        det_t_match=int(np.count_nonzero(clicked & trig & matched)),
        det_t_mismatch=int(np.count_nonzero(clicked & trig & ~matched)),
        err_n=int(np.count_nonzero(error & ~trig)),
        err_t=int(np.count_nonzero(error & trig)),
        double_clicks=int(np.count_nonzero(arr["double_click"].astype(bool) & clicked)),
        dark_detections=int(np.count_nonzero(arr["dark_origin"].astype(bool) & clicked)),
    )


@dataclass(frozen=True)
class ResultsRow:
    """One loss point of a rate table (plot-ready, loss in dB)."""

    loss_db: float
    q_n: float
    q_t: float
    e_n: float
    e_t: float
    y1_low: float
    e1_up: float
    r_n: float
    r_t: float
    r: float
    key_bits: float
    clamped_y1: bool = False
    clamped_e1: bool = False
    clamped_r_n: bool = False
    clamped_r_t: bool = False

    @classmethod
    def from_result(cls, loss_db: float, obs, result: KeyRateResult) -> "ResultsRow":
        return cls(loss_db=loss_db, q_n=obs.q_n, q_t=obs.q_t, e_n=obs.e_n, e_t=obs.e_t,
                   y1_low=result.y1_low, e1_up=result.single.e1_up,
                   r_n=result.r_n, r_t=result.r_t, r=result.r, key_bits=result.key_bits,
                   clamped_y1=result.single.y1_clamped,
                   clamped_e1=result.single.e1_clamped,
                   clamped_r_n=result.branch_n.clamped,
                   clamped_r_t=result.branch_t.clamped)

    @classmethod
    def from_scan_point(cls, point: ScanPoint) -> "ResultsRow":
        return cls.from_result(point.loss_db, point.observables, point.result)


_RESULTS_FLOATS = ("loss_db", "q_n", "q_t", "e_n", "e_t", "y1_low", "e1_up",
                   "r_n", "r_t", "r", "key_bits")
_RESULTS_FLAGS = ("clamped_y1", "clamped_e1", "clamped_r_n", "clamped_r_t")


def write_results(rows: Sequence[ResultsRow], path) -> None:
    """Write a rate table as CSV at full double precision."""
    if not rows:
        raise ParameterError("results table must contain at least one row")
    path = Path(path)
    with path.open("w") as fh:
        fh.write(_RESULTS_TAG + "\n")
        fh.write(RESULTS_HEADER + "\n")
        for row in rows:
            vals = [repr(float(getattr(row, name))) for name in _RESULTS_FLOATS]
            vals += [str(int(getattr(row, name))) for name in _RESULTS_FLAGS]
            fh.write(",".join(vals) + "\n")


def read_results(path) -> list[ResultsRow]:
    path = Path(path)
    lines = path.read_text().splitlines()
    pos = 0
    if pos < len(lines) and lines[pos].startswith("# pdqkd:results:"):
        if lines[pos].strip() != _RESULTS_TAG:
            raise DataFormatError(f"unsupported results version {lines[pos]!r}", str(path), 1)
        pos += 1
    if pos >= len(lines) or lines[pos].strip() != RESULTS_HEADER:
        raise DataFormatError("missing or wrong results header", str(path), pos + 1)
    pos += 1
    rows = []
    n_cols = len(_RESULTS_FLOATS) + len(_RESULTS_FLAGS)
    for i, line in enumerate(lines[pos:]):
        parts = line.split(",")
        if len(parts) != n_cols:
            raise DataFormatError(f"expected {n_cols} fields, got {len(parts)}",
                                  str(path), pos + i + 1)
        try:
            floats = {name: float(p) for name, p in zip(_RESULTS_FLOATS, parts)}
            flags = {name: bool(int(p)) for name, p
                     in zip(_RESULTS_FLAGS, parts[len(_RESULTS_FLOATS):])}
        except ValueError as exc:
            raise DataFormatError(str(exc), str(path), pos + i + 1) from exc
        rows.append(ResultsRow(**floats, **flags))
    return rows


def observed_stats_from_tally_file(path) -> ObservedStats:
    return read_tally(path).to_observed_stats()
