"""Simplified downlink PHY abstraction.

Log-distance path loss with per-link shadowing, a Shannon-derived MCS
table, a sigmoid CBG error model with Chase combining and classic outer-loop
link adaptation driven by per-CBG acknowledgements.
"""

from __future__ import annotations

import bisect
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SUBCARRIERS_PER_PRB = 12
# 14 symbols per slot minus one PDCCH symbol
DATA_SYMBOLS_PER_SLOT = 13
RES_PER_PRB = SUBCARRIERS_PER_PRB * DATA_SYMBOLS_PER_SLOT
NUM_CBG = 8


@dataclass(frozen=True)
class McsEntry:
    index: int
    spectral_efficiency: float
    sinr_threshold_db: float


def shannon_threshold_db(spectral_efficiency: float) -> float:
    return 10 * math.log10(2 ** spectral_efficiency - 1)


def default_mcs_table(num_entries: int = 15, min_se: float = 0.2, max_se: float = 7.4) -> tuple[McsEntry, ...]:
    """QPSK-to-256QAM table with thresholds from the inverse Shannon bound."""
    ses = np.linspace(min_se, max_se, num_entries)
    return tuple(McsEntry(i, float(round(se, 6)), shannon_threshold_db(se)) for i, se in enumerate(ses))


@dataclass(frozen=True)
class LinkConfig:
    tx_power_dbm: float = 31.0
    pl0_db: float = 38.0
    pl_exponent: float = 2.0
    shadowing_std_db: float = 4.0
    # 32-element gNB panel (15.05 dB) plus 2-Rx UE combining (3.01 dB) on the
    # serving link only; interference arrives without beam gain
    serving_beam_gain_db: float = 18.0
    noise_figure_db: float = 9.0
    bandwidth_hz: float = 100e6
    max_layers: int = 2
    bler_slope_db: float = 0.5
    # puts the CBG error probability at the OLLA target when SINR sits on the threshold
    bler_bias_db: float = -0.5 * math.log(7.0)
    olla_step_db: float = 0.5
    olla_target: float = 0.125
    olla_bound_db: float = 10.0
    cqi_period_slots: int = 5
    cqi_delay_slots: int = 2
    harq_rtt_slots: int = 5
    max_harq_tx: int = 4
    mcs_table: tuple[McsEntry, ...] = field(default_factory=default_mcs_table)

    def __post_init__(self):
        if not self.mcs_table:
            raise ConfigError("MCS table must not be empty")
        ses = [m.spectral_efficiency for m in self.mcs_table]
        if any(b <= a for a, b in zip(ses, ses[1:])):
            raise ConfigError("MCS spectral efficiencies must be strictly increasing")
        if not 0 < self.olla_target < 1:
            raise ConfigError(f"olla_target must be in (0, 1), got {self.olla_target}")
        if self.max_harq_tx < 1:
            raise ConfigError("max_harq_tx must be >= 1")
        if self.max_layers < 1:
            raise ConfigError("max_layers must be >= 1")
        if self.bler_slope_db <= 0:
            raise ConfigError("bler_slope_db must be > 0")
        if self.harq_rtt_slots < 1 or self.cqi_period_slots < 1 or self.cqi_delay_slots < 0:
            raise ConfigError("HARQ RTT and CQI period must be >= 1 slot, CQI delay >= 0")

    @property
    def noise_dbm(self) -> float:
        return -174.0 + 10 * math.log10(self.bandwidth_hz) + self.noise_figure_db


@dataclass(slots=True)
class UeChannelState:
    distance_m: float
    pathloss_db: float
    shadowing_db: float
    avg_sinr_db: float
    last_cqi_sinr_db: float
    olla_offset_db: float = 0.0


@dataclass(slots=True, eq=False)
class TransportBlock:
    ue_id: int
    size_bits: int
    mcs: McsEntry
    layers: int
    prb_count: int
    # (pdu_set, pdu, bits), contiguous in TB bit order
    carried_segments: list = field(default_factory=list)
    cbg_states: list = field(default_factory=lambda: [False] * NUM_CBG)
    # per-segment (XR) or per-CBG (eMBB) flags of bits already credited to the UE
    credited: list | None = None
    _segment_map: list | None = field(default=None, repr=False)

    def __post_init__(self):
        # tiny TBs leave some CBGs empty; those carry nothing and count as decoded
        for c in range(NUM_CBG):
            lo, hi = self.cbg_bounds(c)
            if lo == hi:
                self.cbg_states[c] = True

    def cbg_bounds(self, cbg: int) -> tuple[int, int]:
        return cbg * self.size_bits // NUM_CBG, (cbg + 1) * self.size_bits // NUM_CBG

    def segment_cbgs(self) -> list:
        """``(segment, first_cbg, last_cbg)`` for every carried segment."""
        if self._segment_map is None:
            starts = [c * self.size_bits // NUM_CBG for c in range(NUM_CBG)]
            out = []
            offset = 0
            for seg in self.carried_segments:
                bits = seg[2]
                first = bisect.bisect_right(starts, offset) - 1
                last = bisect.bisect_right(starts, offset + bits - 1) - 1
                out.append((seg, first, last))
                offset += bits
            self._segment_map = out
        return self._segment_map

    @property
    def failed_cbgs(self) -> int:
        return self.cbg_states.count(False)

    @property
    def all_decoded(self) -> bool:
        return all(self.cbg_states)


@dataclass(slots=True, eq=False)
class HarqProcess:
    tb: TransportBlock
    num_transmissions: int
    feedback_due_slot: int
    prb_count: int
    first_tx_slot: int = 0
    # CBG decode flags from the first transmission, consumed by OLLA at feedback
    first_tx_results: list | None = None
    # feedback received with failed CBGs, waiting for a retransmission grant
    retx_ready: bool = False


def pathloss_db(distance_m: float, config: LinkConfig = LinkConfig()) -> float:
    return config.pl0_db + 10 * config.pl_exponent * math.log10(max(distance_m, 1.0))


def compute_avg_sinr(ue_position, serving_cell: int, all_cells, shadowing_db=None,
                     config: LinkConfig = LinkConfig()) -> float:
    """Wideband SINR in dB; every cell transmits at full power."""
    cells = np.asarray(all_cells, dtype=float)
    pos = np.asarray(ue_position, dtype=float)
    d = np.maximum(np.hypot(cells[:, 0] - pos[0], cells[:, 1] - pos[1]), 1.0)
    pl = config.pl0_db + 10 * config.pl_exponent * np.log10(d)
    if shadowing_db is not None:
        pl = pl + np.asarray(shadowing_db, dtype=float)
    rx_dbm = config.tx_power_dbm - pl
    rx_mw = 10 ** (rx_dbm / 10)
    signal = rx_mw[serving_cell] * 10 ** (config.serving_beam_gain_db / 10)
    interference = rx_mw.sum() - rx_mw[serving_cell]
    noise = 10 ** (config.noise_dbm / 10)
    return float(10 * math.log10(signal / (interference + noise)))


def bits_per_prb(mcs: McsEntry) -> int:
    # small epsilon keeps exact products like 4.0 * 156 from flooring down
    return int(math.floor(mcs.spectral_efficiency * RES_PER_PRB + 1e-9))


@functools.lru_cache(maxsize=32)
def _thresholds(table) -> list[float]:
    return [m.sinr_threshold_db for m in table]


def select_mcs(reported_sinr_db: float, olla_offset_db: float, table) -> McsEntry:
    thresholds = _thresholds(tuple(table))
    idx = bisect.bisect_right(thresholds, reported_sinr_db + olla_offset_db) - 1
    return table[max(idx, 0)]


def select_link(reported_sinr_db: float, olla_offset_db: float, config: LinkConfig) -> tuple[McsEntry, int]:
    """Pick (MCS, layers) maximizing layers x SE; the per-layer SINR drops by 10log10(layers).

    Extra layers are only considered when some MCS clears its threshold on
    every layer, so a UE below the table floor stays single-layer.
    """
    best = (select_mcs(reported_sinr_db, olla_offset_db, config.mcs_table), 1)
    floor = config.mcs_table[0].sinr_threshold_db
    for layers in range(2, config.max_layers + 1):
        per_layer = reported_sinr_db - 10 * math.log10(layers) + olla_offset_db
        if per_layer < floor:
            break
        mcs = select_mcs(per_layer, 0.0, config.mcs_table)
        if layers * mcs.spectral_efficiency > best[1] * best[0].spectral_efficiency:
            best = (mcs, layers)
    return best


def cbg_failure_probability(sinr_db: float, mcs: McsEntry, num_transmissions: int,
                            config: LinkConfig = LinkConfig()) -> float:
    sinr_eff = sinr_db + 10 * math.log10(num_transmissions)
    x = (sinr_eff - mcs.sinr_threshold_db - config.bler_bias_db) / config.bler_slope_db
    if x > 700:
        return 0.0
    return 1.0 / (1.0 + math.exp(x))


def draw_cbg_outcomes(tb: TransportBlock, instantaneous_sinr_db: float, mcs: McsEntry,
                      num_transmissions: int, rng: np.random.Generator,
                      config: LinkConfig = LinkConfig()) -> list[bool]:
    if num_transmissions < 1:
        raise ValueError("num_transmissions must be >= 1")
    p_fail = cbg_failure_probability(instantaneous_sinr_db, mcs, num_transmissions, config)
    u = rng.random(NUM_CBG)
    return [bool(done or u[c] >= p_fail) for c, done in enumerate(tb.cbg_states)]


def olla_update(offset_db: float, first_tx_cbg_results, step_db: float = 0.5, target: float = 0.125,
                bound_db: float = 10.0) -> float:
    """Classic OLLA over per-CBG acks (True = decoded)."""
    up = step_db * target / (1 - target)
    for ok in first_tx_cbg_results:
        offset_db += up if ok else -step_db
    return min(bound_db, max(-bound_db, offset_db))
