"""Spectrum-occupancy analytics over measured (or synthetic) sweep traces.

Ingests time-by-frequency power matrices, computes threshold-relative
per-channel duty cycles, sorts channels into the three canonical
utilization cases (persistently on, intermittently on, sporadically
on), detects daily periodicity via circular autocorrelation, and
renders sub-band summary tables.  Every derived statistic is relative
to an explicit threshold rule, which is surfaced in report headers.
"""

import csv
import re
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CoverageError, InsufficientDataError, ParseError

DEFAULT_NOISE_PERCENTILE = 10.0
DEFAULT_THRESHOLD_MARGIN_DB = 6.0
DEFAULT_DELTA_ON_DB = 10.0
DEFAULT_GAMMA_SPREAD_DB = 5.0


class ChannelClass(Enum):
    PERSISTENT = "Persistent"
    INTERMITTENT = "Intermittent"
    SPORADIC = "Sporadic"


@dataclass(frozen=True)
class OccupancyMatrix:
    """Time x frequency power samples with their axes and site metadata."""

    timestamps_ms: np.ndarray
    freqs_mhz: np.ndarray
    power_dbm: np.ndarray
    site: str = ""
    rbw_khz: float = 200.0
    latlon: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.timestamps_ms, dtype=float)
        f = np.asarray(self.freqs_mhz, dtype=float)
        p = np.asarray(self.power_dbm, dtype=float)
        if p.shape != (t.size, f.size):
            raise ValueError(f"matrix shape {p.shape} does not match axes "
                             f"({t.size} x {f.size})")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be ascending")
        if np.any(np.isnan(p)):
            raise ValueError("power matrix contains NaN cells")
        object.__setattr__(self, "timestamps_ms", t)
        object.__setattr__(self, "freqs_mhz", f)
        object.__setattr__(self, "power_dbm", p)

    def channel_columns(self, grid, channel_index):
        lo = grid.low_edge_mhz(channel_index)
        hi = grid.high_edge_mhz(channel_index)
        cols = np.nonzero((self.freqs_mhz >= lo) & (self.freqs_mhz < hi))[0]
        if cols.size == 0:
            raise CoverageError(f"channel {channel_index} ({lo}-{hi} MHz) has no "
                                "bins inside the trace")
        return cols

    def band_columns(self, low_mhz, high_mhz):
        cols = np.nonzero((self.freqs_mhz >= low_mhz) & (self.freqs_mhz < high_mhz))[0]
        if cols.size == 0:
            raise CoverageError(f"sub-band {low_mhz}-{high_mhz} MHz has no bins "
                                "inside the trace")
        return cols


_FREQ_COL = re.compile(r"^p_(\d+(?:\.\d+)?)$")


def ingest_trace(path, site="", rbw_khz=200.0):
    """Parse a sweep-trace CSV into a validated matrix.

    Header is ``t_ms[,lat,lon],p_<f1>,p_<f2>,...`` with bin-center
    frequencies in MHz.  Ragged rows, NaN cells, and non-monotone
    timestamps are rejected with the offending line number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "t_ms":
            raise ParseError("first column must be t_ms", line=1, path=path)
        has_pos = len(header) > 2 and header[1] == "lat" and header[2] == "lon"
        first_p = 3 if has_pos else 1
        freqs = []
        for name in header[first_p:]:
            m = _FREQ_COL.match(name)
            if not m:
                raise ParseError(f"bad frequency column {name!r}", line=1, path=path)
            freqs.append(float(m.group(1)))
        if not freqs:
            raise ParseError("no frequency columns", line=1, path=path)
        times, rows, latlon = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"ragged row ({len(row)} of {len(header)} columns)",
                                 line=lineno, path=path)
            try:
                times.append(float(row[0]))
                if has_pos:
                    latlon.append((float(row[1]), float(row[2])))
                vals = np.array([float(v) for v in row[first_p:]], dtype=float)
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from exc
            if np.any(np.isnan(vals)):
                raise ParseError("NaN power cell", line=lineno, path=path)
            rows.append(vals)
        if len(times) > 1 and np.any(np.diff(np.asarray(times)) <= 0):
            raise ParseError("timestamps not strictly increasing", path=path)
    try:
        return OccupancyMatrix(
            timestamps_ms=np.asarray(times), freqs_mhz=np.asarray(freqs),
            power_dbm=np.vstack(rows) if rows else np.empty((0, len(freqs))),
            site=site, rbw_khz=rbw_khz,
            latlon=np.asarray(latlon) if has_pos else None)
    except ValueError as exc:
        raise ParseError(str(exc), path=path) from exc


@dataclass(frozen=True)
class ThresholdRule:
    """Occupancy threshold: a fixed level, or noise percentile + margin."""

    fixed_dbm: float | None = None
    noise_percentile: float = DEFAULT_NOISE_PERCENTILE
    margin_db: float = DEFAULT_THRESHOLD_MARGIN_DB

    def threshold_for(self, samples_dbm):
        if self.fixed_dbm is not None:
            return self.fixed_dbm
        return float(np.percentile(samples_dbm, self.noise_percentile)) + self.margin_db

    def describe(self):
        if self.fixed_dbm is not None:
            return f"fixed {self.fixed_dbm:g} dBm"
        return (f"p{self.noise_percentile:g} noise estimate + "
                f"{self.margin_db:g} dB margin")


def duty_cycle(matrix, grid, rule=ThresholdRule()):
    """Fraction of time-frequency cells above threshold, per channel."""
    out = np.empty(grid.n_channels)
    for ch in range(grid.n_channels):
        cells = matrix.power_dbm[:, matrix.channel_columns(grid, ch)]
        out[ch] = float(np.mean(cells > rule.threshold_for(cells)))
    return out


def band_average(grid, per_channel):
    """Bandwidth-weighted mean occupancy (equal widths: plain mean)."""
    widths = np.full(grid.n_channels, grid.channel_width_mhz)
    return float(np.average(np.asarray(per_channel), weights=widths))


@dataclass(frozen=True)
class ChannelClassification:
    label: ChannelClass
    never_seen: bool = False


def classify_channel(matrix, grid, channel_index, noise_floor_dbm,
                     delta_on_db=DEFAULT_DELTA_ON_DB,
                     gamma_spread_db=DEFAULT_GAMMA_SPREAD_DB):
    """Three-case utilization classification of one channel.

    Statistics are taken over the channel's dB cells: Persistent when
    the average sits above the noise floor and close to the maximum;
    Intermittent when both are high but spread apart; Sporadic when
    only the maximum is high (never-active channels flag ``never_seen``).
    """
    cells = matrix.power_dbm[:, matrix.channel_columns(grid, channel_index)]
    avg = float(np.mean(cells))
    peak = float(np.max(cells))
    on_level = noise_floor_dbm + delta_on_db
    if peak < on_level:
        return ChannelClassification(ChannelClass.SPORADIC, never_seen=True)
    if avg >= on_level:
        if peak - avg <= gamma_spread_db:
            return ChannelClassification(ChannelClass.PERSISTENT)
        return ChannelClassification(ChannelClass.INTERMITTENT)
    return ChannelClassification(ChannelClass.SPORADIC)


@dataclass(frozen=True)
class PeriodicityResult:
    period_hours: float | None
    strength: float
    significant: bool


def detect_periodicity(occupancy_series, interval_ms, lag_range_h=(12.0, 36.0),
                       strength_floor=0.2):
    """Dominant period of a band-occupancy series via circular autocorrelation.

    Searches lags between 12 and 36 hours and returns the peak lag in
    hours with its normalized autocorrelation as the strength; flat
    series come back insignificant with strength 0.
    """
    x = np.asarray(occupancy_series, dtype=float)
    interval_h = interval_ms / 3.6e6
    span_h = x.size * interval_h
    if span_h < 2 * lag_range_h[1]:
        raise InsufficientDataError(
            f"series spans {span_h:.1f} h; need >= {2 * lag_range_h[1]:.0f} h")
    lo = max(1, int(round(lag_range_h[0] / interval_h)))
    hi = min(x.size - 1, int(round(lag_range_h[1] / interval_h)))
    centered = x - x.mean()
    denom = float(np.dot(centered, centered))
    if denom <= 0:
        return PeriodicityResult(period_hours=None, strength=0.0, significant=False)
    lags = np.arange(lo, hi + 1)
    corr = np.array([np.dot(centered, np.roll(centered, -lag)) / denom for lag in lags])
    best = int(np.argmax(corr))
    strength = float(corr[best])
    period = float(lags[best] * interval_h)
    return PeriodicityResult(period_hours=period, strength=strength,
                             significant=strength >= strength_floor)


def band_occupancy_series(matrix, rule=ThresholdRule(), bucket_ms=3.6e6):
    """Per-bucket occupancy of the whole trace (default: hourly buckets)."""
    thr = rule.threshold_for(matrix.power_dbm)
    above = matrix.power_dbm > thr
    buckets = np.floor(matrix.timestamps_ms / bucket_ms).astype(int)
    series = [above[buckets == b].mean() for b in np.unique(buckets)]
    return np.asarray(series)


@dataclass(frozen=True)
class SubbandRow:
    low_mhz: float
    high_mhz: float
    label: str
    occupancy: float

    @property
    def bandwidth_mhz(self):
        return self.high_mhz - self.low_mhz


def load_subband_table(path):
    """Sub-band definition CSV: ``low_mhz,high_mhz,label``."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["low_mhz", "high_mhz", "label"]:
            raise ParseError("expected header low_mhz,high_mhz,label", line=1, path=path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((float(row[0]), float(row[1]), row[2]))
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line=lineno, path=path) from exc
    return rows


def summarize_band(matrix, subbands, rule=ThresholdRule()):
    """Per-sub-band duty cycles plus the bandwidth-weighted overall row."""
    ordered = sorted(subbands)
    for (lo1, hi1, _), (lo2, _, _) in zip(ordered, ordered[1:]):
        if lo2 < hi1:
            raise ValueError(f"sub-bands overlap at {lo2} MHz")
    rows = []
    for lo, hi, label in subbands:
        cells = matrix.power_dbm[:, matrix.band_columns(lo, hi)]
        occ = float(np.mean(cells > rule.threshold_for(cells)))
        rows.append(SubbandRow(low_mhz=lo, high_mhz=hi, label=label, occupancy=occ))
    total_bw = sum(r.bandwidth_mhz for r in rows)
    overall = sum(r.occupancy * r.bandwidth_mhz for r in rows) / total_bw
    return rows, overall


def render_report(rows, overall, rule):
    """Aligned-column text table for the terminal."""
    lines = [f"threshold rule: {rule.describe()}",
             f"{'sub-band (MHz)':>18}  {'bandwidth':>9}  {'occupancy':>9}  label"]
    for r in rows:
        lines.append(f"{r.low_mhz:>8g}-{r.high_mhz:<9g} {r.bandwidth_mhz:>8g}M "
                     f"{r.occupancy:>10.4f}  {r.label}")
    lines.append(f"{'overall':>18}  {sum(r.bandwidth_mhz for r in rows):>8g}M "
                 f"{overall:>10.4f}")
    return "\n".join(lines)


def report_to_csv(rows, overall, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["low_mhz", "high_mhz", "bandwidth_mhz", "occupancy", "label"])
        for r in rows:
            writer.writerow([f"{r.low_mhz:.10g}", f"{r.high_mhz:.10g}",
                             f"{r.bandwidth_mhz:.10g}", f"{r.occupancy:.10g}", r.label])
        total_bw = sum(r.bandwidth_mhz for r in rows)
        writer.writerow(["overall", "", f"{total_bw:.10g}", f"{overall:.10g}", ""])
