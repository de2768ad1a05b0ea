"""Seeded Monte-Carlo sweeps: spec parsing, execution, CSV and SVG output.

A spec is flat ``key = value`` text with ``#`` comments, for example::

    sweep_axis = SNR_DB
    sweep_values = -20, -10, 0, 10, 20
    n_elements = 32
    n_tx = 8
    n_rx = 8
    n_streams = 8
    algorithms = SCF, RANDOM_RIS, NO_RIS
    num_seeds = 50

Every ``(axis value, seed index)`` cell draws one channel realization that
all algorithms share, so algorithm comparisons are paired.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import ChannelDrawConfig, ChannelSet, draw_channels, near_square_upa
from .optimizer import AlgorithmOptions, AlgorithmVariant, OuterIterationError, run_joint_optimization
from .wmmse import SystemConfig

__all__ = [
    "SweepAxis",
    "SpecError",
    "ExperimentSpec",
    "ResultRow",
    "CSV_HEADER",
    "parse_spec",
    "channel_seed",
    "cell_channels",
    "run_sweep",
    "write_csv",
    "read_csv",
    "render_plot",
    "with_overrides",
]

CSV_HEADER = ("axis", "value", "algorithm", "seed", "rate_bps_hz", "nmse",
              "channel_power", "iterations", "wall_time_ms", "status")


class SweepAxis(str, enum.Enum):
    SNR_DB = "SNR_DB"
    N_ELEMENTS = "N_ELEMENTS"
    N_TX = "N_TX"
    N_STREAMS = "N_STREAMS"
    QUANT_BITS = "QUANT_BITS"


class SpecError(ValueError):
    """Invalid experiment spec; ``line`` is 1-based or None, ``key`` the field."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


@dataclass(frozen=True)
class ExperimentSpec:
    sweep_axis: SweepAxis
    sweep_values: tuple[float, ...]
    n_elements: int = 16
    n_tx: int = 4
    n_rx: int = 4
    n_streams: int = 4
    snr_db: float = 0.0
    power: float = 1.0
    n_clusters: int = 8
    n_paths: int = 10
    spacing_ratio: float = 0.5
    algorithms: tuple[AlgorithmVariant, ...] = (
        AlgorithmVariant.SCF, AlgorithmVariant.RANDOM_RIS, AlgorithmVariant.NO_RIS)
    num_seeds: int = 10
    base_seed: int = 0
    outer_tol: float = 1e-4
    max_outer: int = 100
    scf_eps: float = 1e-4
    scf_max_iter: int = 500
    sdr_tol: float = 1e-6
    sdr_trials: int = 500
    quant_bits: int = 0  # 0 = continuous phases
    output_path: str = "results.csv"
    record_timing: bool = False
    oracle_points: int = 720

    def cell_params(self, value: float) -> dict:
        """Base parameters with the swept one replaced by ``value``."""
        p = {"n_elements": self.n_elements, "n_tx": self.n_tx, "n_rx": self.n_rx,
             "n_streams": self.n_streams, "snr_db": self.snr_db, "quant_bits": self.quant_bits}
        key = _AXIS_FIELD[self.sweep_axis]
        p[key] = value if key == "snr_db" else int(value)
        return p

    def system(self, value: float) -> SystemConfig:
        p = self.cell_params(value)
        return SystemConfig.from_snr_db(p["n_streams"], p["snr_db"], self.power)

    def options(self, variant: AlgorithmVariant, value: float, seed: int) -> AlgorithmOptions:
        bits = self.cell_params(value)["quant_bits"]
        return AlgorithmOptions(variant, outer_tol=self.outer_tol, max_outer=self.max_outer,
                                scf_eps=self.scf_eps, scf_max_iter=self.scf_max_iter,
                                sdr_tol=self.sdr_tol, sdr_trials=self.sdr_trials, seed=seed,
                                quant_bits=bits or None)


_AXIS_FIELD = {
    SweepAxis.SNR_DB: "snr_db",
    SweepAxis.N_ELEMENTS: "n_elements",
    SweepAxis.N_TX: "n_tx",
    SweepAxis.N_STREAMS: "n_streams",
    SweepAxis.QUANT_BITS: "quant_bits",
}

_INT_KEYS = {"n_elements", "n_tx", "n_rx", "n_streams", "n_clusters", "n_paths", "num_seeds",
             "base_seed", "max_outer", "scf_max_iter", "sdr_trials", "quant_bits",
             "oracle_points"}
_FLOAT_KEYS = {"snr_db", "power", "spacing_ratio", "outer_tol", "scf_eps", "sdr_tol"}
_KEYS = _INT_KEYS | _FLOAT_KEYS | {"sweep_axis", "sweep_values", "algorithms",
                                   "output_path", "record_timing"}


def _convert(key: str, raw: str, line: int):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError
            return val
        if key == "sweep_axis":
            return SweepAxis(raw.strip().upper())
        if key == "sweep_values":
            vals = tuple(float(v) for v in raw.split(",") if v.strip())
            if not vals or not all(math.isfinite(v) for v in vals):
                raise ValueError
            return vals
        if key == "algorithms":
            algs = tuple(AlgorithmVariant(a.strip().upper()) for a in raw.split(",") if a.strip())
            if not algs:
                raise ValueError
            return algs
        if key == "record_timing":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        return raw.strip()
    except ValueError:
        raise SpecError(f"invalid value {raw!r}", line, key) from None


def parse_spec(source: str | os.PathLike) -> ExperimentSpec:
    """Parse and validate a spec from a path or from spec text.

    A ``str`` containing a newline or ``=`` is treated as spec text.

    Raises
    ------
    SpecError
        Unknown or duplicate key, malformed line, bad value, missing
        required field, or inconsistent dimensions.
    """
    if isinstance(source, str) and ("\n" in source or "=" in source):
        text = source
    else:
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise SpecError(f"cannot read spec file {os.fspath(source)!r}: {exc.strerror}") from None

    values: dict = {}
    lines: dict[str, int] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in _KEYS:
            raise SpecError("unknown key", lineno, key)
        if key in values:
            raise SpecError(f"duplicate key (first set on line {lines[key]})", lineno, key)
        values[key] = _convert(key, raw, lineno)
        lines[key] = lineno

    for req in ("sweep_axis", "sweep_values"):
        if req not in values:
            raise SpecError("missing required field", None, req)
    vals = values["sweep_values"]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise SpecError("sweep values must be strictly increasing", lines["sweep_values"],
                        "sweep_values")
    spec = ExperimentSpec(**values)
    _validate(spec, lines)
    return spec


def _validate(spec: ExperimentSpec, lines: dict[str, int]) -> None:
    def fail(msg, key):
        raise SpecError(msg, lines.get(key), key)

    for key in ("n_elements", "n_tx", "n_rx", "n_streams", "n_clusters", "n_paths",
                "num_seeds", "max_outer", "scf_max_iter", "sdr_trials", "oracle_points"):
        if getattr(spec, key) < 1:
            fail("must be >= 1", key)
    for key in ("power", "spacing_ratio", "outer_tol", "scf_eps", "sdr_tol"):
        if not getattr(spec, key) > 0:
            fail("must be positive", key)
    if not 0 <= spec.base_seed < 2 ** 64:
        fail("must be a 64-bit unsigned integer", "base_seed")
    if spec.quant_bits < 0:
        fail("must be >= 0 (0 = continuous)", "quant_bits")
    if len(set(spec.algorithms)) != len(spec.algorithms):
        fail("duplicate algorithm", "algorithms")

    axis_key = _AXIS_FIELD[spec.sweep_axis]
    for v in spec.sweep_values:
        if axis_key != "snr_db" and v != int(v):
            fail(f"value {v:g} must be an integer for axis {spec.sweep_axis.value}",
                 "sweep_values")
        p = spec.cell_params(v)
        lo = 0 if axis_key == "quant_bits" else 1
        if axis_key != "snr_db" and p[axis_key] < lo:
            fail(f"value {v:g} out of range for axis {spec.sweep_axis.value}", "sweep_values")
        if p["n_streams"] > min(p["n_tx"], p["n_rx"]):
            key = "sweep_values" if axis_key in ("n_tx", "n_streams") else "n_streams"
            fail(f"n_streams={p['n_streams']} exceeds min(n_tx, n_rx)="
                 f"{min(p['n_tx'], p['n_rx'])}", key)


@dataclass(frozen=True)
class ResultRow:
    axis: str
    value: float
    algorithm: str
    seed: int  # seed index k within the sweep
    rate: float
    nmse: float
    channel_power: float
    outer_iterations: int
    wall_time_ms: float
    status: str  # "ok", "maxiter" (hit max_outer) or "failed"
    # not written to CSV
    channel_seed: int = 0
    channel_checksum: str = ""
    error: str = field(default="", compare=False)


def channel_seed(base_seed: int, axis: SweepAxis, value: float, k: int) -> int:
    """``base_seed XOR hash(value, k)``.

    On the quantization axis the hash ignores the value so every bit width
    sees the same channels (matched seeds).
    """
    key = f"*|{k}" if axis == SweepAxis.QUANT_BITS else f"{float(value)!r}|{k}"
    digest = hashlib.blake2b(key.encode("ascii"), digest_size=8).digest()
    return base_seed ^ int.from_bytes(digest, "little")


def cell_channels(spec: ExperimentSpec, value: float, k: int) -> tuple[int, ChannelSet]:
    p = spec.cell_params(value)
    seed = channel_seed(spec.base_seed, spec.sweep_axis, value, k)
    cfg = ChannelDrawConfig(p["n_tx"], p["n_rx"],
                            near_square_upa(p["n_elements"], spec.spacing_ratio),
                            n_clusters=spec.n_clusters, n_paths=spec.n_paths, seed=seed,
                            spacing_ratio=spec.spacing_ratio)
    return seed, draw_channels(cfg)


def _run_cell(spec: ExperimentSpec, value: float, k: int) -> list[ResultRow]:
    seed, ch = cell_channels(spec, value, k)
    checksum = ch.checksum()
    sys = spec.system(value)
    rows = []
    for alg in spec.algorithms:
        base = dict(axis=spec.sweep_axis.value, value=value, algorithm=alg.value, seed=k,
                    channel_seed=seed, channel_checksum=checksum)
        try:
            res = run_joint_optimization(ch, sys, spec.options(alg, value, seed))
        except (OuterIterationError, np.linalg.LinAlgError, ValueError) as exc:
            rows.append(ResultRow(rate=math.nan, nmse=math.nan, channel_power=math.nan,
                                  outer_iterations=getattr(exc, "iteration", 0),
                                  wall_time_ms=0.0, status="failed", error=str(exc), **base))
            continue
        wall = res.wall_time * 1e3 if spec.record_timing else 0.0
        rows.append(ResultRow(rate=res.rate, nmse=res.nmse, channel_power=res.channel_power,
                              outer_iterations=res.outer_iterations, wall_time_ms=wall,
                              status="ok" if res.converged else "maxiter", **base))
    return rows


def _sort_key(spec: ExperimentSpec):
    order = {a.value: i for i, a in enumerate(spec.algorithms)}
    return lambda r: (r.value, order[r.algorithm], r.seed)


def run_sweep(spec: ExperimentSpec, jobs: int = 1) -> list[ResultRow]:
    """Run every ``(value, algorithm, seed)`` combination.

    Solver failures become rows with status ``failed``.  With ``jobs > 1``
    cells run in worker processes; the output order is canonical either way.
    """
    cells = [(v, k) for v in spec.sweep_values for k in range(spec.num_seeds)]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_cell, [spec] * len(cells), *zip(*cells)))
    else:
        parts = [_run_cell(spec, v, k) for v, k in cells]
    rows = [r for part in parts for r in part]
    rows.sort(key=_sort_key(spec))
    return rows


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(rows, path) -> None:
    """Write rows with the fixed header; floats with 17 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r.axis, _fmt(r.value), r.algorithm, _fmt(r.seed), _fmt(r.rate),
                         _fmt(r.nmse), _fmt(r.channel_power), _fmt(r.outer_iterations),
                         _fmt(r.wall_time_ms), r.status])
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write CSV: {exc.strerror}", os.fspath(path)) from None


def read_csv(path) -> list[ResultRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"{os.fspath(path)}: unexpected header {header}")
        return [ResultRow(axis=a, value=float(v), algorithm=alg, seed=int(s), rate=float(r),
                          nmse=float(n), channel_power=float(c), outer_iterations=int(i),
                          wall_time_ms=float(w), status=st)
                for a, v, alg, s, r, n, c, i, w, st in reader]


_METRIC_LABEL = {"rate": "Achievable rate (bit/s/Hz)", "nmse": "NMSE",
                 "channel_power": "Channel power ||H_eq||_F^2"}
_AXIS_LABEL = {"SNR_DB": "SNR (dB)", "N_ELEMENTS": "RIS elements N",
               "N_TX": "Transmit antennas N_t", "N_STREAMS": "Data streams N_s",
               "QUANT_BITS": "Phase quantization bits B (0 = continuous)"}


def render_plot(rows, path, metric: str = "rate") -> None:
    """Seed-mean ``metric`` against the axis value, one series per algorithm,
    with standard-error bars.  Failed rows are skipped.

    Raises
    ------
    ValueError
        If the rows mix axes or are empty.
    """
    from matplotlib.backends.backend_svg import FigureCanvasSVG
    from matplotlib.figure import Figure
    import matplotlib

    if metric not in _METRIC_LABEL:
        raise ValueError(f"unknown metric {metric!r}")
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to plot")
    axes = {r.axis for r in rows}
    if len(axes) != 1:
        raise ValueError(f"rows mix axes: {sorted(axes)}")
    axis = axes.pop()

    algorithms = list(dict.fromkeys(r.algorithm for r in rows))
    with matplotlib.rc_context({"svg.hashsalt": "ris-sim", "svg.fonttype": "path"}):
        fig = Figure(figsize=(6.0, 4.0))
        FigureCanvasSVG(fig)
        ax = fig.add_subplot()
        for alg in algorithms:
            xs, ys, es = [], [], []
            for v in sorted({r.value for r in rows if r.algorithm == alg}):
                data = np.array([getattr(r, metric) for r in rows
                                 if r.algorithm == alg and r.value == v and r.status != "failed"])
                data = data[np.isfinite(data)]
                if data.size == 0:
                    continue
                xs.append(v)
                ys.append(data.mean())
                es.append(data.std(ddof=1) / np.sqrt(data.size) if data.size > 1 else 0.0)
            ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=alg)
        ax.set_xlabel(_AXIS_LABEL.get(axis, axis))
        ax.set_ylabel(_METRIC_LABEL[metric])
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})


def with_overrides(spec: ExperimentSpec, **changes) -> ExperimentSpec:
    """Copy of ``spec`` with fields replaced and re-validated."""
    new = replace(spec, **changes)
    _validate(new, {})
    return new
