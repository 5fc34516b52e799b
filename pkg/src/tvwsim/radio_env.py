"""TV-band radio environment: channel grid, analog TV spectra, propagation.

Models the terrestrial TV channelization (8 MHz channels, 470-806 MHz
with the 566-606 MHz carve-out in the default grid), the narrowband
carrier structure of analog TV signals, log-distance propagation with
optional log-normal shadowing, and thermal noise, producing received
power spectra at arbitrary planar points.
"""

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import AlignmentError, ParseError, ResolutionError

SPEED_OF_LIGHT = 299792458.0

# Analog TV (PAL-D) narrowband carriers, as offsets from the channel low
# edge: vision, chroma subcarrier, sound FM carrier.
PAL_D_CARRIER_OFFSETS_MHZ = (1.25, 5.68, 7.75)

# Fraction of total channel power in each carrier; the remainder
# (residual broadband content) is spread evenly over the non-carrier
# bins of the channel.
DEFAULT_CARRIER_SPLIT = (0.80, 0.05, 0.10)

DEFAULT_RBW_KHZ = 200.0
DEFAULT_NOISE_FIGURE_DB = 6.0
OFF_POWER_DBM = float("-inf")


class TvStandard(Enum):
    ANALOG_PAL_D = "AnalogPalD"
    DIGITAL_DTMB = "DigitalDtmb"


@dataclass(frozen=True)
class FrequencyBand:
    """Closed frequency interval in MHz."""

    low_mhz: float
    high_mhz: float

    def __post_init__(self):
        if not (0 < self.low_mhz < self.high_mhz):
            raise ValueError(f"invalid band {self.low_mhz}-{self.high_mhz} MHz")

    @property
    def width_mhz(self):
        return self.high_mhz - self.low_mhz

    def overlaps(self, other):
        return self.low_mhz < other.high_mhz and other.low_mhz < self.high_mhz


@dataclass(frozen=True)
class ChannelGrid:
    """Numbered, disjoint channels of equal width inside a band.

    Channels are ascending in frequency with stable zero-based indices.
    Adjacency is defined in frequency: two channels are adjacent only if
    they share an edge, so an exclusion gap breaks contiguity even
    though indices remain consecutive.
    """

    band: FrequencyBand
    channel_width_mhz: float
    low_edges_mhz: tuple
    excluded: tuple = ()

    @property
    def n_channels(self):
        return len(self.low_edges_mhz)

    def low_edge_mhz(self, index):
        return self.low_edges_mhz[index]

    def high_edge_mhz(self, index):
        return self.low_edges_mhz[index] + self.channel_width_mhz

    def center_mhz(self, index):
        return self.low_edges_mhz[index] + 0.5 * self.channel_width_mhz

    def valid_index(self, index):
        return 0 <= index < self.n_channels

    def adjacent(self, i, j):
        """True when channels i < j share an edge in frequency."""
        if j < i:
            i, j = j, i
        return j == i + 1 and self.high_edge_mhz(i) == self.low_edges_mhz[j]

    def contiguous_runs(self, indices):
        """Group sorted channel indices into frequency-contiguous runs."""
        runs = []
        for idx in sorted(set(indices)):
            if runs and runs[-1][-1] == idx - 1 and self.adjacent(idx - 1, idx):
                runs[-1].append(idx)
            else:
                runs.append([idx])
        return runs


def build_channel_grid(band, width_mhz=8.0, excluded=()):
    """Slice a band into whole channels, skipping excluded sub-bands.

    Exclusion boundaries must coincide with channel edges, and the band
    must divide into whole channels outside the exclusions; anything
    else raises AlignmentError.
    """
    excluded = tuple(excluded)
    for excl in excluded:
        for edge in (excl.low_mhz, excl.high_mhz):
            offset = (edge - band.low_mhz) / width_mhz
            if band.low_mhz < edge < band.high_mhz and abs(offset - round(offset)) > 1e-9:
                raise AlignmentError(
                    f"exclusion edge {edge} MHz not aligned to {width_mhz} MHz grid")
    n_steps = (band.high_mhz - band.low_mhz) / width_mhz
    if abs(n_steps - round(n_steps)) > 1e-9:
        raise AlignmentError(
            f"band width {band.width_mhz} MHz is not a whole number of "
            f"{width_mhz} MHz channels")
    edges = []
    for k in range(int(round(n_steps))):
        lo = band.low_mhz + k * width_mhz
        ch = FrequencyBand(lo, lo + width_mhz)
        if not any(ch.overlaps(e) for e in excluded):
            edges.append(lo)
    return ChannelGrid(band=band, channel_width_mhz=width_mhz,
                       low_edges_mhz=tuple(edges), excluded=excluded)


def china_tv_grid():
    """Default 37-channel grid: 470-806 MHz minus the 566-606 MHz carve-out."""
    return build_channel_grid(FrequencyBand(470.0, 806.0), 8.0,
                              (FrequencyBand(566.0, 606.0),))


@dataclass(frozen=True)
class TvTransmitter:
    """A broadcast service: spectral standard, channel, location, schedule.

    ``schedule`` is a tuple of (on_ms, off_ms) activity intervals,
    sorted and non-overlapping; an empty schedule means always on.
    """

    id: str
    standard: TvStandard
    channel_index: int
    location: tuple
    eirp_dbm: float
    antenna_height_m: float = 10.0
    schedule: tuple = ()

    def __post_init__(self):
        prev_end = None
        for on_ms, off_ms in self.schedule:
            if off_ms <= on_ms:
                raise ValueError(f"transmitter {self.id}: empty schedule interval")
            if prev_end is not None and on_ms < prev_end:
                raise ValueError(f"transmitter {self.id}: overlapping schedule intervals")
            prev_end = off_ms

    def active_at(self, t_ms):
        if not self.schedule:
            return True
        return any(on <= t_ms < off for on, off in self.schedule)


@dataclass
class PowerSpectrum:
    """Binned power-vs-frequency snapshot, dBm per RBW bin.

    Bin i covers [start + i*rbw, start + (i+1)*rbw); -inf marks a bin
    with zero linear power.
    """

    start_mhz: float
    rbw_khz: float
    bins_dbm: np.ndarray

    def __post_init__(self):
        self.bins_dbm = np.asarray(self.bins_dbm, dtype=float)
        if self.bins_dbm.size < 1:
            raise ValueError("spectrum needs at least one bin")
        if self.rbw_khz <= 0:
            raise ValueError("rbw must be positive")
        if not np.isfinite(self.total_power_mw()):
            raise ValueError("total spectrum power must be finite")

    @property
    def rbw_mhz(self):
        return self.rbw_khz / 1000.0

    @property
    def stop_mhz(self):
        return self.start_mhz + self.bins_dbm.size * self.rbw_mhz

    def bin_centers_mhz(self):
        return self.start_mhz + (np.arange(self.bins_dbm.size) + 0.5) * self.rbw_mhz

    def covers(self, low_mhz, high_mhz):
        return self.start_mhz <= low_mhz + 1e-9 and high_mhz <= self.stop_mhz + 1e-9

    def bins_mw(self):
        return 10.0 ** (self.bins_dbm / 10.0)

    def total_power_mw(self):
        return float(np.sum(10.0 ** (self.bins_dbm / 10.0)))

    def window_indices(self, center_mhz, width_mhz):
        """Indices of bins whose centers fall within width/2 of center."""
        centers = self.bin_centers_mhz()
        return np.nonzero(np.abs(centers - center_mhz) <= width_mhz / 2 + 1e-9)[0]


def mw_to_dbm(mw):
    mw = np.asarray(mw, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(mw > 0, 10.0 * np.log10(np.maximum(mw, 1e-300)), -np.inf)


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def thermal_noise_dbm(bandwidth_khz, noise_figure_db=DEFAULT_NOISE_FIGURE_DB):
    """Thermal floor over a bandwidth: -174 dBm/Hz + 10 log10(B) + NF."""
    return -174.0 + 10.0 * np.log10(bandwidth_khz * 1e3) + noise_figure_db


def free_space_ref_loss_db(freq_mhz, distance_m=1.0):
    """Friis free-space loss 20 log10(4 pi d f / c)."""
    return 20.0 * np.log10(4.0 * np.pi * distance_m * freq_mhz * 1e6 / SPEED_OF_LIGHT)


@dataclass
class PropagationConfig:
    """Log-distance path loss with optional seeded log-normal shadowing.

    ``ref_loss_db=None`` means free-space loss at the carrier frequency
    and reference distance is used.  The shadowing stream is owned by
    this config; identical seeds and call orders reproduce identical
    draws.
    """

    exponent: float = 3.5
    ref_distance_m: float = 1.0
    ref_loss_db: float | None = None
    shadowing_sigma_db: float = 0.0
    seed: int | None = None
    _rng: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.exponent < 2.0:
            raise ValueError("path-loss exponent must be >= 2")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing sigma must be >= 0")

    def ref_loss(self, freq_mhz):
        if self.ref_loss_db is not None:
            return self.ref_loss_db
        return free_space_ref_loss_db(freq_mhz, self.ref_distance_m)

    def rng(self):
        if self._rng is None:
            self._rng = np.random.default_rng(self.seed)
        return self._rng

    def median_loss_db(self, distance_m, freq_mhz):
        """Deterministic (median) part of the path loss."""
        distance_m = np.asarray(distance_m, dtype=float)
        if np.any(distance_m <= 0):
            raise ValueError("distance must be positive")
        return self.ref_loss(freq_mhz) + 10.0 * self.exponent * np.log10(
            distance_m / self.ref_distance_m)


def path_loss(cfg, distance_m, freq_mhz):
    """Path loss in dB at one distance, including a shadowing draw if enabled."""
    loss = float(cfg.median_loss_db(distance_m, freq_mhz))
    if cfg.shadowing_sigma_db > 0:
        loss += float(cfg.rng().normal(0.0, cfg.shadowing_sigma_db))
    return loss


def synthesize_tv_spectrum(tx, grid, rbw_khz=DEFAULT_RBW_KHZ, total_power_dbm=0.0,
                           carrier_split=DEFAULT_CARRIER_SPLIT):
    """Noise-free transmit spectrum of one TV service over the grid band.

    PAL-D places narrowband carriers at the configured offsets from the
    channel low edge with the given power split; the residual fraction
    spreads evenly over the remaining in-channel bins, so the linear sum
    over the channel equals ``total_power_dbm`` exactly.  DTMB renders
    as flat in-channel power.  A transmitter that is off
    (``total_power_dbm=-inf``) yields an all--inf spectrum.
    """
    rbw_mhz = rbw_khz / 1000.0
    offsets = np.asarray(PAL_D_CARRIER_OFFSETS_MHZ)
    min_spacing = float(np.min(np.diff(offsets)))
    if tx.standard is TvStandard.ANALOG_PAL_D and rbw_mhz > min_spacing:
        raise ResolutionError(
            f"rbw {rbw_khz} kHz exceeds minimum carrier spacing {min_spacing*1e3:.0f} kHz")
    n_bins = int(round(grid.band.width_mhz / rbw_mhz))
    power_mw = np.zeros(n_bins)
    if total_power_dbm != OFF_POWER_DBM:
        total_mw = 10.0 ** (total_power_dbm / 10.0)
        ch_lo = grid.low_edge_mhz(tx.channel_index)
        first = int(np.floor((ch_lo - grid.band.low_mhz) / rbw_mhz + 1e-9))
        n_ch = int(round(grid.channel_width_mhz / rbw_mhz))
        if tx.standard is TvStandard.DIGITAL_DTMB:
            power_mw[first:first + n_ch] = total_mw / n_ch
        else:
            carrier_bins = [first + int(np.floor(off / rbw_mhz + 1e-9)) for off in offsets]
            residual = 1.0 - sum(carrier_split)
            if residual < -1e-9:
                raise ValueError("carrier split fractions exceed 1")
            plain = [b for b in range(first, first + n_ch) if b not in carrier_bins]
            if plain:
                power_mw[plain] = residual * total_mw / len(plain)
            for b, frac in zip(carrier_bins, carrier_split):
                power_mw[b] += frac * total_mw
    return PowerSpectrum(start_mhz=grid.band.low_mhz, rbw_khz=rbw_khz,
                         bins_dbm=mw_to_dbm(power_mw))


def received_spectrum(point, txs, t_ms, cfg, grid, rbw_khz=DEFAULT_RBW_KHZ,
                      noise_figure_db=DEFAULT_NOISE_FIGURE_DB, snapshots=1, rng=None):
    """Received spectrum at a point: attenuated transmitters plus noise.

    The signal part is the linear sum of each schedule-active
    transmitter's synthesized spectrum attenuated by its path loss.
    ``noise_figure_db=None`` omits the thermal floor entirely.  With
    ``rng=None`` the mean spectrum is returned; with a Generator each
    bin is drawn as the average of ``snapshots`` independent
    exponential-power snapshots (a Gamma(snapshots) variate around the
    bin mean).
    """
    point = np.asarray(point, dtype=float)
    n_bins = int(round(grid.band.width_mhz / (rbw_khz / 1000.0)))
    mean_mw = np.zeros(n_bins)
    for tx in txs:
        if not tx.active_at(t_ms):
            continue
        d = float(np.hypot(point[0] - tx.location[0], point[1] - tx.location[1]))
        loss = path_loss(cfg, max(d, cfg.ref_distance_m), grid.center_mhz(tx.channel_index))
        spec = synthesize_tv_spectrum(tx, grid, rbw_khz, tx.eirp_dbm - loss)
        mean_mw += spec.bins_mw()
    if noise_figure_db is not None:
        mean_mw += 10.0 ** (thermal_noise_dbm(rbw_khz, noise_figure_db) / 10.0)
    if rng is not None and snapshots >= 1:
        mean_mw = rng.gamma(snapshots, 1.0 / snapshots, size=n_bins) * mean_mw
    return PowerSpectrum(start_mhz=grid.band.low_mhz, rbw_khz=rbw_khz,
                         bins_dbm=mw_to_dbm(mean_mw))


def _parse_schedule(text):
    if not text:
        return ()
    out = []
    for part in text.split(";"):
        on, off = part.split(":")
        out.append((float(on), float(off)))
    return tuple(out)


def format_schedule(schedule):
    return ";".join(f"{on:g}:{off:g}" for on, off in schedule)


TRANSMITTER_FIELDS = ["id", "standard", "channel", "x_m", "y_m", "eirp_dbm",
                      "height_m", "schedule"]


def transmitters_from_csv(path):
    """Load transmitter fixtures from CSV (see TRANSMITTER_FIELDS)."""
    txs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRANSMITTER_FIELDS:
            raise ParseError(f"expected header {','.join(TRANSMITTER_FIELDS)}",
                             line=1, path=path)
        for lineno, row in enumerate(reader, start=2):
            try:
                txs.append(TvTransmitter(
                    id=row["id"],
                    standard=TvStandard(row["standard"]),
                    channel_index=int(row["channel"]),
                    location=(float(row["x_m"]), float(row["y_m"])),
                    eirp_dbm=float(row["eirp_dbm"]),
                    antenna_height_m=float(row["height_m"]),
                    schedule=_parse_schedule(row["schedule"].strip()),
                ))
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(str(exc), line=lineno, path=path) from exc
    return txs


def transmitters_to_csv(txs, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRANSMITTER_FIELDS)
        for tx in txs:
            writer.writerow([tx.id, tx.standard.value, tx.channel_index,
                             f"{tx.location[0]:g}", f"{tx.location[1]:g}",
                             f"{tx.eirp_dbm:g}", f"{tx.antenna_height_m:g}",
                             format_schedule(tx.schedule)])
