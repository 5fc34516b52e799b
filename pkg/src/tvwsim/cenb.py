"""Cognitive base-station logic: frame schedule, spectrum decisions, handover.

A CeNB runs a TDD frame extended for cognition: the guard period of
special subframe #1 hosts in-band sensing, the adjacent uplink subframe
#2 is borrowed for wide scans, decisions ride the downlink pilot slot
as broadcast messages, and the dedicated band keeps control alive while
the data block retunes.  Inter-CeNB coordination is message passing
only: cooperative report fusion over X2 and epoch-granularity channel
allocation by the global spectrum manager.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import AggregationError, ConfigError, StaleSensingError
from .geodb import Region
from .radio_env import FrequencyBand
from .sensing import Decision, SensingReport

FRAME_MS = 10.0
SUBFRAME_MS = 1.0
MAX_SENSING_MS = 2.0
MAX_BLOCK_CHANNELS = 3          # 3 x 8 MHz carries the 20 MHz system bandwidth

BANDWIDTH_BY_RUN = {0: None, 1: 5, 2: 15}


class Subframe(Enum):
    DOWNLINK = "D"
    SPECIAL = "S"
    UPLINK = "U"


FRAME_PATTERNS = {
    "tdd-1": "DSUUDDSUUD",
    "tdd-2": "DSUDDDSUDD",
}


@dataclass(frozen=True)
class FrameSchedule:
    """10-subframe TDD pattern with the sensing windows marked."""

    pattern: tuple
    special_split: tuple  # (dwpts_ms, gp_ms, uppts_ms), sums to 1 ms
    sensing_subframes: tuple
    wide_scan: bool

    @property
    def gp_ms(self):
        return self.special_split[1]

    @property
    def dwpts_ms(self):
        return self.special_split[0]

    @property
    def sensing_time_ms(self):
        """Per-frame sensing budget: the GP plus any full uplink subframes."""
        full = sum(1 for i in self.sensing_subframes if self.pattern[i] is Subframe.UPLINK)
        return self.gp_ms + SUBFRAME_MS * full

    def downlink_subframes(self):
        return tuple(i for i, sf in enumerate(self.pattern) if sf is Subframe.DOWNLINK)


def build_frame_schedule(config_id="tdd-2", special_split=(0.2, 0.7, 0.1),
                         wide_scan=True, min_uppts_ms=0.0):
    """Validate and build the CR frame schedule.

    ``config_id`` names a known pattern or is itself a ten-letter D/S/U
    string.  Wide-scan mode adds uplink subframe #2 to the sensing
    windows ("the adjacent vacant uplink subframe").
    """
    text = FRAME_PATTERNS.get(config_id, config_id)
    if len(text) != 10 or any(c not in "DSU" for c in text):
        raise ConfigError(f"unknown frame pattern {config_id!r}")
    pattern = tuple(Subframe(c) for c in text)
    if pattern[1] is not Subframe.SPECIAL:
        raise ConfigError("subframe #1 must be the special subframe")
    dwpts, gp, uppts = special_split
    if min(dwpts, gp, uppts) < 0 or abs(dwpts + gp + uppts - SUBFRAME_MS) > 1e-9:
        raise ConfigError("special split must be non-negative and sum to 1 ms")
    if uppts < min_uppts_ms:
        raise ConfigError(f"UpPTS {uppts} ms below required minimum {min_uppts_ms} ms")
    sensing = (1,)
    if wide_scan:
        if pattern[2] is not Subframe.UPLINK:
            raise ConfigError("wide-scan mode needs an uplink subframe #2")
        sensing = (1, 2)
    sched = FrameSchedule(pattern=pattern, special_split=tuple(special_split),
                          sensing_subframes=sensing, wide_scan=wide_scan)
    if sched.sensing_time_ms > MAX_SENSING_MS + 1e-9:
        raise ConfigError(f"sensing budget {sched.sensing_time_ms} ms exceeds "
                          f"{MAX_SENSING_MS} ms per frame")
    return sched


def select_bandwidth(vacant_run_length):
    """System bandwidth (MHz) supported by a contiguous vacant run.

    Three or more vacant channels carry 20 MHz, two carry 15, one
    carries 5, none means falling back to the dedicated band.
    """
    if vacant_run_length < 0:
        raise ValueError("run length must be >= 0")
    if vacant_run_length >= 3:
        return 20
    return BANDWIDTH_BY_RUN[vacant_run_length]


class MsgKind(Enum):
    COG_CCH_RRC = "CogCchRrc"
    PCOGCH_DECISION = "PCogChDecision"


@dataclass(frozen=True)
class CogMessage:
    """CR control message (RRC report on CogCCH, or decision on PCogCH)."""

    kind: MsgKind
    target_block: tuple
    bandwidth_mhz: int | None
    activation_frame: int
    origin: str
    frame_no: int

    def __post_init__(self):
        if self.kind is MsgKind.PCOGCH_DECISION and self.activation_frame <= self.frame_no:
            raise ValueError("activation frame must follow the decision frame")


@dataclass
class CenbState:
    """Mutable state of one cognitive base station."""

    id: str
    location: tuple
    dedicated_band: FrequencyBand
    tx_power_dbm: float = 20.0
    active_block: tuple | None = None
    bandwidth_mhz: int | None = None
    region_cache: dict = field(default_factory=dict)
    pending_handover: CogMessage | None = None
    last_reports: dict = field(default_factory=dict)
    report_ring: deque = field(default_factory=lambda: deque(maxlen=256))
    retune_until_ms: float = 0.0

    def record_report(self, report):
        self.last_reports[report.channel_index] = report
        self.report_ring.append(report)

    def region(self, channel_index):
        return self.region_cache.get(channel_index, Region.WHITE)

    def retuning_at(self, t_ms):
        return t_ms < self.retune_until_ms


def vacant_runs(grid, vacant):
    """Frequency-contiguous runs of the given vacant channel indices."""
    return grid.contiguous_runs(vacant)


def best_vacant_run(grid, vacant):
    """Longest vacant run; ties break to the lowest channel index."""
    runs = vacant_runs(grid, vacant)
    if not runs:
        return []
    return max(runs, key=lambda r: (len(r), -r[0]))


def spectrum_decision(state, reports, regions, grid, frame_no):
    """Evaluate the active block and emit a handover decision if needed.

    ``reports`` are this decision round's fresh sensing results and are
    merged into the state.  A decision fires when any active channel is
    detected occupied or has turned black in the database view; the
    target is the best vacant contiguous run (longest, ties to the
    lowest index), capped at three channels, activating next frame.
    Returns None in the all-clear steady state.
    """
    for rep in reports:
        state.record_report(rep)
    state.region_cache.update(regions)
    if state.pending_handover is not None:
        return None

    active = state.active_block or ()
    frame_start = frame_no * FRAME_MS
    for ch in active:
        if state.region(ch) is Region.GREY:
            rep = state.last_reports.get(ch)
            if rep is None or rep.t_ms < frame_start - FRAME_MS:
                raise StaleSensingError(
                    f"no fresh sensing report for grey channel {ch}")

    def occupied(ch):
        rep = state.last_reports.get(ch)
        return rep is not None and rep.decision is Decision.OCCUPIED

    triggered = (state.active_block is None
                 or any(state.region(ch) is Region.BLACK for ch in active)
                 or any(occupied(ch) for ch in active))
    if not triggered:
        return None

    def usable(ch):
        # Grey channels count as vacant only once sensing has cleared them.
        region = state.region(ch)
        if region is Region.BLACK or occupied(ch):
            return False
        return region is not Region.GREY or ch in state.last_reports

    run = best_vacant_run(grid, [ch for ch in range(grid.n_channels) if usable(ch)])
    block = tuple(run[:MAX_BLOCK_CHANNELS])
    if state.active_block is None and not block:
        return None
    if state.active_block is not None and block == state.active_block:
        return None
    msg = CogMessage(kind=MsgKind.PCOGCH_DECISION, target_block=block,
                     bandwidth_mhz=select_bandwidth(len(run)),
                     activation_frame=frame_no + 1, origin=state.id,
                     frame_no=frame_no)
    state.pending_handover = msg
    return msg


@dataclass(frozen=True)
class HandoverEvent:
    """Timing record of one executed (or aborted) spectrum handover."""

    cenb_id: str
    t_decision_ms: float
    t_activation_ms: float
    t_restored_ms: float
    from_block: tuple
    to_block: tuple
    aborted: bool = False

    @property
    def latency_ms(self):
        return self.t_restored_ms - self.t_decision_ms


def execute_handover(state, msg, now_ms, retune_ms=10.0):
    """Retune to the decided block at its activation boundary.

    The data path is down for ``retune_ms`` (control continuity rides
    the dedicated band); if the target meanwhile turned occupied or
    black the handover aborts, leaving the state untouched apart from
    the cleared pending decision so the next frame can re-decide.
    """
    if msg.origin != state.id:
        raise ValueError(f"message addressed to {msg.origin!r}, not {state.id!r}")
    if state.pending_handover is not msg:
        raise ValueError("message is not this CeNB's pending decision")
    if abs(now_ms - msg.activation_frame * FRAME_MS) > 1e-9:
        raise ValueError(f"handover must execute at the activation boundary "
                         f"({msg.activation_frame * FRAME_MS} ms), not {now_ms} ms")
    state.pending_handover = None
    from_block = state.active_block or ()

    def bad(ch):
        rep = state.last_reports.get(ch)
        return (state.region(ch) is Region.BLACK
                or (rep is not None and rep.decision is Decision.OCCUPIED))

    if any(bad(ch) for ch in msg.target_block):
        event = HandoverEvent(cenb_id=state.id, t_decision_ms=msg.frame_no * FRAME_MS,
                              t_activation_ms=now_ms, t_restored_ms=now_ms,
                              from_block=from_block, to_block=(), aborted=True)
        return state, event
    state.active_block = msg.target_block or None
    state.bandwidth_mhz = msg.bandwidth_mhz
    state.retune_until_ms = now_ms + retune_ms
    event = HandoverEvent(cenb_id=state.id, t_decision_ms=msg.frame_no * FRAME_MS,
                          t_activation_ms=now_ms, t_restored_ms=now_ms + retune_ms,
                          from_block=from_block, to_block=msg.target_block)
    return state, event


def fuse_cooperative(own, neighbors, rule="OR"):
    """Combine same-channel reports exchanged over X2 into one verdict.

    OR (default): occupied if any report says occupied.  MAJORITY:
    occupied on a strict majority.  Reports must cover one channel
    within one frame period.
    """
    reports = [own, *neighbors]
    channels = {r.channel_index for r in reports}
    if len(channels) != 1:
        raise AggregationError(f"cannot fuse mixed channels {sorted(channels)}")
    times = [r.t_ms for r in reports]
    if max(times) - min(times) > FRAME_MS + 1e-9:
        raise AggregationError("reports span more than one frame period")
    n_occ = sum(r.decision is Decision.OCCUPIED for r in reports)
    if rule == "OR":
        fused = Decision.OCCUPIED if n_occ > 0 else Decision.VACANT
    elif rule == "MAJORITY":
        fused = Decision.OCCUPIED if 2 * n_occ > len(reports) else Decision.VACANT
    else:
        raise ValueError(f"unknown fusion rule {rule!r}")
    return SensingReport(cenb_id=own.cenb_id, channel_index=own.channel_index,
                         decision=fused, carrier_stats_dbm=own.carrier_stats_dbm,
                         t_ms=own.t_ms)


@dataclass(frozen=True)
class AsmAssignment:
    """Global allocator output: per-CeNB channel blocks for one epoch."""

    blocks: dict
    epoch: int


def asm_allocate(cenbs, availability, reuse_distance_m, grid, epoch=0):
    """Greedy conflict-free channel allocation across CeNBs.

    CeNBs closer than ``reuse_distance_m`` share a conflict edge and
    never share channels within an epoch.  Allocation proceeds in
    descending demand (longest available run; ties by id) and gives
    each CeNB its best remaining run, possibly empty.
    """
    def longest(cenb):
        runs = vacant_runs(grid, availability.get(cenb.id, ()))
        return max((len(r) for r in runs), default=0)

    order = sorted(cenbs, key=lambda c: (-longest(c), c.id))
    pos = {c.id: np.asarray(c.location, dtype=float) for c in cenbs}
    blocks = {}
    for cenb in order:
        taken = set()
        for other_id, blk in blocks.items():
            d = float(np.linalg.norm(pos[cenb.id] - pos[other_id]))
            if d < reuse_distance_m:
                taken.update(blk)
        usable = [ch for ch in availability.get(cenb.id, ()) if ch not in taken]
        run = best_vacant_run(grid, usable)
        blocks[cenb.id] = tuple(run[:MAX_BLOCK_CHANNELS])
    return AsmAssignment(blocks=blocks, epoch=epoch)
