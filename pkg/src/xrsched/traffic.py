"""XR PDU-set traffic generation and the eMBB full-buffer source."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, GenerationError


@dataclass(frozen=True)
class TruncatedGaussianParams:
    """Gaussian(mean, std) conditioned on [lower, upper]."""

    mean: float
    std: float
    lower: float
    upper: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.mean, self.std, self.lower, self.upper)):
            raise ConfigError(f"non-finite truncated gaussian parameter: {self}")
        if self.std < 0:
            raise ConfigError(f"std must be >= 0, got {self.std}")
        if not self.lower <= self.mean <= self.upper:
            raise ConfigError(
                f"mean {self.mean} outside truncation interval [{self.lower}, {self.upper}]"
            )
        if self.std > 0 and not self.lower < self.upper:
            raise ConfigError("lower must be < upper when std > 0")


@dataclass(frozen=True)
class XrTrafficConfig:
    frame_rate: float = 60.0
    # kB (1 kB = 1000 bytes)
    frame_size_dist: TruncatedGaussianParams = TruncatedGaussianParams(93.0, 10.0, 46.0, 141.0)
    # ms
    jitter_dist: TruncatedGaussianParams = TruncatedGaussianParams(0.0, 2.0, -4.0, 4.0)
    psdb_ms: float = 15.0
    pdu_payload_bytes: int = 1500

    def __post_init__(self):
        if not self.frame_rate > 0:
            raise ConfigError(f"frame_rate must be > 0, got {self.frame_rate}")
        if not self.psdb_ms > 0:
            raise ConfigError(f"psdb_ms must be > 0, got {self.psdb_ms}")
        if not (isinstance(self.pdu_payload_bytes, int) and self.pdu_payload_bytes > 0):
            raise ConfigError(f"pdu_payload_bytes must be a positive int, got {self.pdu_payload_bytes}")

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.frame_rate

    @property
    def mean_rate_bps(self) -> float:
        return self.frame_size_dist.mean * 1000 * 8 * self.frame_rate


@dataclass(slots=True)
class Pdu:
    pdu_index: int
    size_bits: int
    arrival_time_ms: float
    # bits not yet handed to a transport block
    remaining_bits: int = -1

    def __post_init__(self):
        if self.remaining_bits < 0:
            self.remaining_bits = self.size_bits


@dataclass(slots=True, eq=False)
class PduSet:
    """One XR frame as seen by the gNB.

    ``served_bits`` counts bits already placed in transport blocks (the
    scheduler's view of transmitted data); ``decoded_bits`` counts bits the
    UE has actually decoded. A set is delivered once every bit is decoded.
    """

    ue_id: int
    set_index: int
    first_arrival_ms: float
    deadline_ms: float
    total_size_bits: int
    pdus: list[Pdu]
    served_bits: int = 0
    decoded_bits: int = 0
    delivered_at_ms: float | None = None
    # index of the first PDU that may still hold unsent bits
    cursor: int = field(default=0, repr=False)

    @property
    def psdb_ms(self) -> float:
        return self.deadline_ms - self.first_arrival_ms

    @property
    def unsent_bits(self) -> int:
        return self.total_size_bits - self.served_bits

    @property
    def delivered(self) -> bool:
        return self.delivered_at_ms is not None

    def hol_delay_ms(self, now_ms: float) -> float:
        return now_ms - self.first_arrival_ms


def sample_truncated_gaussian(params: TruncatedGaussianParams, rng: np.random.Generator) -> float:
    if params.std == 0:
        return float(params.mean)
    while True:
        x = rng.normal(params.mean, params.std)
        if params.lower <= x <= params.upper:
            return float(x)


def generate_frame_arrivals(config: XrTrafficConfig, duration_ms: float, rng: np.random.Generator,
                            offset_ms: float = 0.0) -> list[tuple[float, int]]:
    """Frame arrival instants and sizes over ``[0, duration_ms)``.

    Frame ``n`` is nominally at ``offset_ms + n * period``; each arrival adds an
    independent jitter draw. Arrivals before 0 are clamped to 0 and arrivals at
    or after ``duration_ms`` are dropped.
    """
    if not duration_ms > 0:
        raise ConfigError(f"duration_ms must be > 0, got {duration_ms}")
    period = config.period_ms
    frames = []
    n = 0
    while True:
        nominal = offset_ms + n * period
        if nominal + config.jitter_dist.lower >= duration_ms:
            break
        jitter = sample_truncated_gaussian(config.jitter_dist, rng)
        size_kb = sample_truncated_gaussian(config.frame_size_dist, rng)
        arrival = max(0.0, nominal + jitter)
        if arrival < duration_ms:
            frames.append((arrival, int(round(size_kb * 1000))))
        n += 1
    frames.sort(key=lambda f: f[0])
    return frames


def segment_frame(frame_bytes: int, pdu_payload_bytes: int, arrival_ms: float = 0.0) -> list[Pdu]:
    if frame_bytes <= 0:
        raise GenerationError(f"frame size must be positive, got {frame_bytes} bytes")
    full, rest = divmod(frame_bytes, pdu_payload_bytes)
    sizes = [pdu_payload_bytes] * full + ([rest] if rest else [])
    return [Pdu(j, 8 * b, arrival_ms) for j, b in enumerate(sizes)]


def make_pdu_set(ue_id: int, set_index: int, arrival_ms: float, frame_bytes: int,
                 config: XrTrafficConfig) -> PduSet:
    # every PDU of the frame reaches the gNB at the frame arrival instant
    pdus = segment_frame(frame_bytes, config.pdu_payload_bytes, arrival_ms)
    return PduSet(
        ue_id=ue_id,
        set_index=set_index,
        first_arrival_ms=arrival_ms,
        deadline_ms=arrival_ms + config.psdb_ms,
        total_size_bits=8 * frame_bytes,
        pdus=pdus,
    )


def embb_has_data(ue) -> bool:
    """Full-buffer eMBB sources always hold data."""
    if not ue.is_embb:
        raise ContractError(f"UE {ue.ue_id} is not an eMBB UE")
    return True
