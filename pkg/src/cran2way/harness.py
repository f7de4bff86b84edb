"""Monte Carlo sweeps over SNR or fronthaul capacity, aggregation and CSV output."""

import csv
import math
import sys
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .downlink import end_to_end_rates, ido
from .errors import ConfigError, InitializationFailed, IoError, NoFeasibleSolution
from .system import SystemConfig, sample_channel
from .uplink import INDIVIDUAL, MULTIPAIR, optimize_uplink

AXES = ("snr_db", "fronthaul_bits")
SCHEME_MULTIPAIR = "multipair"
SCHEME_INDIVIDUAL = "individual_baseline"
SCHEMES = (SCHEME_MULTIPAIR, SCHEME_INDIVIDUAL)
_SCHEME_ALIASES = {"individual": SCHEME_INDIVIDUAL}

STATUS_OK = "ok"
STATUS_NO_DL = "no_feasible_downlink"
STATUS_NO_UL = "no_feasible_uplink"

ROW_COLUMNS = ("realization", "user", "scheme", "status", "r_ul", "r_dl", "r_e2e")
AGG_COLUMNS = ("scheme", "mean_sum_rate", "stderr", "realizations")


def normalize_scheme(name):
    name = name.strip()
    name = _SCHEME_ALIASES.get(name, name)
    if name not in SCHEMES:
        raise ConfigError(f"unknown scheme {name!r}; expected one of multipair, individual")
    return name


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    realizations: int = 500
    seed: int = 0
    schemes: tuple = (SCHEME_MULTIPAIR,)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigError("sweep needs at least one value")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("sweep values must be strictly increasing")
        if self.realizations < 1:
            raise ConfigError("realizations must be at least 1")
        schemes = tuple(dict.fromkeys(normalize_scheme(s) for s in self.schemes))
        if not schemes:
            raise ConfigError("at least one scheme is required")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "schemes", schemes)


@dataclass(frozen=True)
class ResultRow:
    axis_value: float
    realization: int
    user: int
    scheme: str
    status: str
    r_ul: float
    r_dl: float
    r_e2e: float


@dataclass(frozen=True)
class AggregateRow:
    axis_value: float
    scheme: str
    mean_sum_rate: float
    stderr: float
    realizations: int


def config_at(config, axis, value):
    if axis == "snr_db":
        return config.with_snr(value)
    return config.with_fronthaul(value)


def run_realization(config, axis, value, index, seed, scheme):
    """Rows (one per user) for one channel draw under one scheme."""
    cfg = config_at(config, axis, value)
    ch = sample_channel(cfg, seed, index)
    ul_scheme = INDIVIDUAL if scheme == SCHEME_INDIVIDUAL else MULTIPAIR
    K = cfg.K
    try:
        ul = optimize_uplink(cfg, ch.H_ul, scheme=ul_scheme)
    except InitializationFailed:
        return [
            ResultRow(value, index, k, scheme, STATUS_NO_UL, 0.0, 0.0, 0.0) for k in range(K)
        ]
    try:
        dl = ido(cfg, ch.H_dl, ul, seed, index)
    except NoFeasibleSolution:
        return [
            ResultRow(value, index, k, scheme, STATUS_NO_DL, float(ul.user_rates[k]), 0.0, 0.0)
            for k in range(K)
        ]
    e2e = end_to_end_rates(ul, dl)
    return [
        ResultRow(
            value,
            index,
            k,
            scheme,
            STATUS_OK,
            float(ul.user_rates[k]),
            float(dl.user_rates[k]),
            float(e2e.per_user_rate[k]),
        )
        for k in range(K)
    ]


def _task(args):
    return run_realization(*args)


def _row_key(r):
    return (r.axis_value, r.realization, r.user, r.scheme)


def run_sweep(config, spec, workers=1):
    """Run every (axis value, realization, scheme) and return rows in canonical order.

    Each realization depends only on ``(config, value, seed, index, scheme)``,
    so the output is the same for any ``workers``.
    """
    if not isinstance(config, SystemConfig):
        raise ConfigError("config must be a SystemConfig")
    tasks = [
        (config, spec.axis, v, i, spec.seed, s)
        for v in spec.values
        for i in range(spec.realizations)
        for s in spec.schemes
    ]
    if workers > 1 and len(tasks) > 1:
        chunk = max(1, len(tasks) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_task, tasks, chunksize=chunk))
    else:
        chunks = [_task(t) for t in tasks]
    rows = [r for c in chunks for r in c]
    rows.sort(key=_row_key)
    return rows


def aggregate(rows):
    """Mean and standard error of the per-realization sum rate.

    Failed realizations count with their zero rate.
    """
    sums = defaultdict(float)
    for r in rows:
        sums[(r.axis_value, r.scheme, r.realization)] += r.r_e2e
    groups = defaultdict(list)
    for (v, s, i), total in sorted(sums.items()):
        groups[(v, s)].append(total)
    out = []
    for (v, s), vals in sorted(groups.items()):
        arr = np.array(vals)
        se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        out.append(AggregateRow(v, s, float(arr.mean()), se, int(arr.size)))
    return out


def summarize(rows):
    """Status counts per scheme, counted once per realization."""
    seen = {}
    for r in rows:
        seen[(r.axis_value, r.realization, r.scheme)] = r.status
    counts = defaultdict(Counter)
    for (_, _, s), st in seen.items():
        counts[s][st] += 1
    return {s: dict(c) for s, c in sorted(counts.items())}


def format_real(x):
    return f"{x:.9g}"


def _cell(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_real(float(v))
    return str(v)


def emit_csv(records, path, axis="snr_db"):
    """Write result or aggregate rows (header first) to ``path``.

    The first column is named after the sweep axis in both file kinds.
    An empty sequence gives a header for per-realization rows.
    """
    records = list(records)
    if records and isinstance(records[0], AggregateRow):
        cols = AGG_COLUMNS
        records.sort(key=lambda r: (r.axis_value, r.scheme))
    else:
        cols = ROW_COLUMNS
        records.sort(key=_row_key)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow((axis,) + cols)
            for r in records:
                w.writerow([_cell(r.axis_value)] + [_cell(getattr(r, c)) for c in cols])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def read_rows_csv(path):
    """Parse a per-realization CSV back into rows (values at printed precision)."""
    try:
        with open(path, newline="") as fh:
            data = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    rows = []
    for rec in data[1:]:
        rows.append(
            ResultRow(
                float(rec[0]),
                int(rec[1]),
                int(rec[2]),
                rec[3],
                rec[4],
                float(rec[5]),
                float(rec[6]),
                float(rec[7]),
            )
        )
    return rows


# --------------------------------------------------------------------------
# Config files
# --------------------------------------------------------------------------

_CONFIG_DEFAULTS = {"L": 2, "K": 4, "snr_db": 35.0, "fronthaul": (4.0,)}
_INT_KEYS = {"L", "K", "max_outer_iters", "dl_restarts", "dl_max_iter"}
_LIST_KEYS = {"fronthaul", "uplink_power_limits", "downlink_power_limits"}
_CONFIG_KEYS = {f.name for f in fields(SystemConfig)}


def _parse_number(text, key, line, integer=False):
    try:
        if integer:
            return int(text)
        return float(text)
    except ValueError:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"{key}: {text!r} is not {kind}", line) from None


def parse_config(text):
    """Build a :class:`SystemConfig` from ``key = value`` lines.

    ``#`` starts a comment, lists are comma separated, unknown or repeated
    keys are errors. Unset keys take the two-RRH, four-user defaults.
    """
    values = dict(_CONFIG_DEFAULTS)
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        seen.add(key)
        if not val:
            raise ConfigError(f"{key}: missing value", lineno)
        if key in _LIST_KEYS:
            values[key] = tuple(
                _parse_number(v.strip(), key, lineno) for v in val.split(",")
            )
        else:
            values[key] = _parse_number(val, key, lineno, integer=key in _INT_KEYS)
    try:
        return SystemConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


def parse_values(text):
    """``a:b:step`` (inclusive of ``b``) or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            a, b, step = parts
            if not step > 0 or b < a:
                raise ConfigError(f"bad range {text!r}: need a <= b and step > 0")
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            return tuple(round(a + i * step, 12) for i in range(n))
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"cannot parse values {text!r}") from None


def run_and_write(config, spec, prefix, workers=1, stream=None):
    """Run a sweep, write ``PREFIX.rows.csv`` and ``PREFIX.agg.csv``, log a summary."""
    stream = sys.stderr if stream is None else stream
    t0 = time.perf_counter()
    rows = run_sweep(config, spec, workers=workers)
    agg = aggregate(rows)
    rows_path = emit_csv(rows, f"{prefix}.rows.csv", axis=spec.axis)
    agg_path = emit_csv(agg, f"{prefix}.agg.csv", axis=spec.axis)
    elapsed = time.perf_counter() - t0
    n_real = len(spec.values) * spec.realizations
    print(f"{len(rows)} rows, {n_real} realizations per scheme, {elapsed:.1f} s", file=stream)
    for scheme, counts in summarize(rows).items():
        total = sum(counts.values())
        no_dl = counts.get(STATUS_NO_DL, 0)
        parts = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
        print(
            f"{scheme}: {parts}; no_feasible_downlink {no_dl}/{total} ({100.0 * no_dl / total:.2f}%)",
            file=stream,
        )
    return rows_path, agg_path
