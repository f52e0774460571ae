"""Persistence and configuration: field cache files, report files, config
parsing, and deterministic seed streams."""

from __future__ import annotations

import configparser
import functools
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LfppError
from .field import Field, GridSpec, circle_average, mollify, sample_field

MAGIC = b"LFPPFLD1"
VERSION = 1
# little-endian: version u32, n u32, half_width f64, pad_factor u32,
# seed u64, kind_tag u8, eps f64, calibration f64  (45 bytes, no padding)
_HEADER = struct.Struct("<IIdIQBdd")

_MASK64 = (1 << 64) - 1


class StoreError(LfppError):
    """Base class for persistence errors."""


class MagicError(StoreError):
    """File does not start with the field-cache magic."""


class VersionError(StoreError):
    """Field-cache format version not supported."""


class LengthError(StoreError):
    """Payload shorter or longer than the header promises."""


class SchemaError(StoreError):
    """A report file violates the report schema."""


class ConfigError(StoreError):
    """A configuration file has unknown keys or out-of-range values."""


def derive_seed(root: int, stream: int) -> int:
    """Deterministic 64-bit seed for a numbered stream under a root seed.

    s = root XOR (stream * 0x9E3779B97F4A7C15), then the avalanche
    s ^= s >> 30; s *= 0xBF58476D1CE4E5B9; s ^= s >> 27;
    s *= 0x94D049BB133111EB; s ^= s >> 31, all modulo 2^64.
    """
    s = (int(root) ^ ((int(stream) * 0x9E3779B97F4A7C15) & _MASK64)) & _MASK64
    s ^= s >> 30
    s = (s * 0xBF58476D1CE4E5B9) & _MASK64
    s ^= s >> 27
    s = (s * 0x94D049BB133111EB) & _MASK64
    s ^= s >> 31
    return s


def save_field(fld: Field, path) -> None:
    """Write a field as magic + 45-byte header + row-major little-endian f64
    payload.  Atomic: writes to a temp file in the target directory, then
    renames.  The synthesis torus and the augmented marker are not stored."""
    path = Path(path)
    kind_tag = 1 if fld.kind == "mollified" else 0
    header = _HEADER.pack(
        VERSION,
        fld.spec.n,
        fld.spec.half_width,
        fld.spec.pad_factor,
        (fld.seed or 0) & _MASK64,
        kind_tag,
        fld.eps or 0.0,
        fld.calibration,
    )
    payload = np.ascontiguousarray(fld.values, dtype="<f8").tobytes()
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_field(path) -> Field:
    """Read a field written by :func:`save_field`; bit-exact round-trip."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise MagicError(f"{path}: bad magic {raw[:len(MAGIC)]!r}, expected {MAGIC!r}")
    off = len(MAGIC)
    if len(raw) < off + _HEADER.size:
        raise LengthError(f"{path}: truncated header ({len(raw)} bytes)")
    version, n, half_width, pad_factor, seed, kind_tag, eps, calibration = _HEADER.unpack(
        raw[off : off + _HEADER.size]
    )
    if version != VERSION:
        raise VersionError(f"{path}: version {version}, expected {VERSION}")
    expected = n * n * 8
    payload = raw[off + _HEADER.size :]
    if len(payload) != expected:
        raise LengthError(
            f"{path}: payload is {len(payload)} bytes, header promises {expected}"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(n, n).astype(np.float64)
    spec = GridSpec(n=n, half_width=half_width, pad_factor=pad_factor)
    fld = Field(
        spec=spec,
        values=values,
        seed=seed,
        kind="mollified" if kind_tag == 1 else "raw",
        eps=eps if kind_tag == 1 else None,
        calibration=calibration,
    )
    try:
        fld.normalized = abs(circle_average(fld, (0.0, 0.0), 1.0)) <= 1e-9
    except LfppError:
        fld.normalized = False
    return fld


# ---------------------------------------------------------------------------
# field cache


def cache_root() -> Path | None:
    """Cache directory from LFPP_CACHE_DIR, or None (caching disabled)."""
    root = os.environ.get("LFPP_CACHE_DIR")
    return Path(root) if root else None


def _cache_path(root: Path, spec: GridSpec, seed: int, kind: str, eps: float | None) -> Path:
    eps_tag = f"_e{eps:.10g}" if kind == "mollified" else ""
    name = (
        f"n{spec.n}_L{spec.half_width:.10g}_p{spec.pad_factor}"
        f"_s{seed & _MASK64:016x}_{kind}{eps_tag}.fld"
    )
    return root / name


@functools.lru_cache(maxsize=2)
def _raw_memo(spec: GridSpec, seed: int) -> Field:
    """Small in-process memo of raw fields, keeping the synthesis torus
    available for repeated mollification at different scales."""
    return sample_field(spec, seed)


def cached_field(spec: GridSpec, seed: int, eps: float | None = None) -> Field:
    """Sample (and optionally mollify) through the cache.

    Mollified windows are cached on disk keyed on (spec, seed, eps) when
    LFPP_CACHE_DIR is set, so repeated runs never resample; raw fields are
    memoized in-process with their synthesis torus.
    """
    if eps is None:
        return _raw_memo(spec, int(seed))
    root = cache_root()
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)
        path = _cache_path(root, spec, seed, "mollified", eps)
        if path.exists():
            return load_field(path)
    out = mollify(_raw_memo(spec, int(seed)), eps)
    if root is not None:
        save_field(out, path)
    return out


# ---------------------------------------------------------------------------
# reports

_REPORT_FORMAT = "lfpp-report-v1"
_REPORT_KEYS = {"format", "kind", "parameters", "root_seed", "grid", "replicas",
                "per_replica", "summary", "verdicts", "wall_time"}
_GRID_KEYS = {"n", "half_width", "pad_factor"}
_VERDICT_VALUES = {"pass", "fail", "statistical-warn"}


def _jsonable(obj, where: str):
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        raise SchemaError(f"{where}: non-finite number not representable")
    if isinstance(obj, dict):
        return {str(k): _jsonable(v, f"{where}.{k}") for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v, f"{where}[{i}]") for i, v in enumerate(obj)]
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise SchemaError(f"{where}: unserializable value of type {type(obj).__name__}")


def write_report(report, path) -> None:
    """Canonical JSON: sorted keys, two-space indent, shortest round-trip
    floats, trailing newline.  Byte-stable for identical reports."""
    doc = {
        "format": _REPORT_FORMAT,
        "kind": report.spec.kind,
        "parameters": _jsonable(report.spec.parameters, "parameters"),
        "root_seed": int(report.spec.root_seed),
        "grid": {
            "n": report.spec.grid.n,
            "half_width": report.spec.grid.half_width,
            "pad_factor": report.spec.grid.pad_factor,
        },
        "replicas": int(report.spec.replicas),
        "per_replica": _jsonable(report.per_replica, "per_replica"),
        "summary": _jsonable(report.summary, "summary"),
        "verdicts": _jsonable(report.verdicts, "verdicts"),
        "wall_time": float(report.wall_time),
    }
    text = json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def read_report(path):
    """Parse and validate a report file; errors name the offending field."""
    from .experiments import ExperimentSpec, Report  # local import to avoid a cycle

    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaError("report: expected a JSON object at top level")
    unknown = set(doc) - _REPORT_KEYS
    if unknown:
        raise SchemaError(f"report: unknown keys {sorted(unknown)}")
    missing = _REPORT_KEYS - set(doc)
    if missing:
        raise SchemaError(f"report: missing keys {sorted(missing)}")
    if doc["format"] != _REPORT_FORMAT:
        raise SchemaError(f"report.format: {doc['format']!r} != {_REPORT_FORMAT!r}")
    grid = doc["grid"]
    if not isinstance(grid, dict) or set(grid) != _GRID_KEYS:
        raise SchemaError("report.grid: expected keys n, half_width, pad_factor")
    if not isinstance(doc["per_replica"], list):
        raise SchemaError("report.per_replica: expected a list")
    for i, rec in enumerate(doc["per_replica"]):
        if not isinstance(rec, dict):
            raise SchemaError(f"report.per_replica[{i}]: expected an object")
    if not isinstance(doc["summary"], dict):
        raise SchemaError("report.summary: expected an object")
    if not isinstance(doc["verdicts"], dict):
        raise SchemaError("report.verdicts: expected an object")
    for name, val in doc["verdicts"].items():
        if val not in _VERDICT_VALUES:
            raise SchemaError(
                f"report.verdicts.{name}: {val!r} not in {sorted(_VERDICT_VALUES)}"
            )
    spec = ExperimentSpec(
        kind=doc["kind"],
        parameters=doc["parameters"],
        root_seed=doc["root_seed"],
        grid=GridSpec(n=grid["n"], half_width=grid["half_width"],
                      pad_factor=grid["pad_factor"]),
        replicas=doc["replicas"],
    )
    return Report(
        spec=spec,
        per_replica=doc["per_replica"],
        summary=doc["summary"],
        verdicts=doc["verdicts"],
        wall_time=doc["wall_time"],
    )


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    """Validated run settings with documented defaults."""

    n: int = 256
    half_width: float = 2.0
    pad_factor: int = 4
    replicas: int = 64
    root_seed: int = 1
    eps: float = 0.0625
    eps_ladder: tuple = (2**-3, 2**-4, 2**-5, 2**-6, 2**-7)
    p: float = 0.9
    workers: int = 0  # 0 means use all available processors
    out_dir: str = "out"
    gammas: tuple = (1.0, 1.05, 1.5)
    xis: tuple = (0.2, 0.408248, 0.8, 1.6)
    radii: tuple = (0.125, 0.25, 0.5)
    c: float = 0.7

    def grid(self) -> GridSpec:
        return GridSpec(n=self.n, half_width=self.half_width, pad_factor=self.pad_factor)

    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


def _parse_ladder(text: str) -> tuple:
    """Expand '2^-3..2^-7' into descending powers of two; also accepts a
    comma-separated list of floats."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)

        def _pow(tok: str) -> int:
            tok = tok.strip()
            if not tok.startswith("2^"):
                raise ConfigError(f"eps_ladder: bad power-of-two token {tok!r}")
            return int(tok[2:])

        a, b = _pow(lo), _pow(hi)
        step = -1 if b < a else 1
        return tuple(2.0**e for e in range(a, b + step, step))
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


_SCHEMA = {
    "grid": {"n", "half_width", "pad_factor"},
    "run": {"replicas", "root_seed", "eps", "eps_ladder", "p", "workers", "out_dir"},
    "experiment": {"gammas", "xis", "radii", "c"},
}


def read_config(path) -> RunConfig:
    """Parse an INI-style config; unknown sections/keys and out-of-range
    values are rejected with the offending name and the accepted range."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}] (accepted: {sorted(_SCHEMA)})")
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {key!r} in [{section}] (accepted: {sorted(_SCHEMA[section])})"
                )
            try:
                _apply_key(cfg, key, value)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{section}] {key} = {value!r}: {exc}") from exc
    _validate(cfg)
    return cfg


def _apply_key(cfg: RunConfig, key: str, value: str) -> None:
    if key in ("n", "pad_factor", "replicas", "workers"):
        setattr(cfg, key, int(value))
    elif key in ("half_width", "eps", "p", "c"):
        setattr(cfg, key, float(value))
    elif key == "root_seed":
        cfg.root_seed = int(value, 0)
    elif key == "eps_ladder":
        cfg.eps_ladder = _parse_ladder(value)
    elif key in ("gammas", "xis", "radii"):
        setattr(cfg, key, _parse_floats(value))
    elif key == "out_dir":
        cfg.out_dir = value
    else:  # pragma: no cover - schema and dispatch kept in sync
        raise ConfigError(f"unhandled key {key!r}")


def _validate(cfg: RunConfig) -> None:
    checks = [
        (cfg.n >= 2, "n", "integer >= 2"),
        (cfg.half_width > 0, "half_width", "positive real"),
        (2 <= cfg.pad_factor <= 64, "pad_factor", "integer in [2, 64]"),
        (cfg.replicas >= 1, "replicas", "integer >= 1"),
        (0 <= cfg.root_seed <= _MASK64, "root_seed", "u64"),
        (cfg.eps > 0, "eps", "positive real"),
        (0.0 < cfg.p < 1.0, "p", "probability in (0, 1)"),
        (cfg.workers >= 0, "workers", "integer >= 0"),
        (len(cfg.eps_ladder) >= 1 and all(e > 0 for e in cfg.eps_ladder),
         "eps_ladder", "positive reals"),
        (all(e2 < e1 for e1, e2 in zip(cfg.eps_ladder, cfg.eps_ladder[1:])),
         "eps_ladder", "strictly decreasing"),
        (all(0 < g < 2 for g in cfg.gammas), "gammas", "reals in (0, 2)"),
        (all(x > 0 for x in cfg.xis), "xis", "positive reals"),
        (all(r > 0 for r in cfg.radii), "radii", "positive reals"),
    ]
    for ok, key, accepted in checks:
        if not ok:
            raise ConfigError(f"{key}: out of range (accepted: {accepted})")
