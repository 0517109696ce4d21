"""Simplified clustered mmWave channel between the BS and each UE.

Each link carries a handful of clusters placed around the geometric direction
(a dominant specular one when in LOS). Average cluster power is normalised to 1
so pathloss and shadowing live only in :class:`Pathloss`.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .array_geometry import BS_ARRAY, TWO_PI, UE_ARRAY, ArrayConfig, array_responses, geometric_angles
from .phy import PhyConfig

SPEED_OF_LIGHT = 299_792_458.0

# spawn-key tags of the per-link random streams
_DROP_STREAM = 0
_GAIN_STREAM = 1


@dataclass(frozen=True)
class ChannelParams:
    carrier_hz: float = 28e9
    n_clusters: int = 8
    k_factor_db: float = 10.0
    azimuth_spread_deg: float = 10.0
    elevation_spread_deg: float = 5.0
    max_delay_s: float = 200e-9
    ue_speed_kmh: float = 3.0
    regen_period_s: float = 100e-3
    shadowing_los_db: float = 4.0
    shadowing_nlos_db: float = 7.8
    los_exponent: float = 21.0
    nlos_exponent: float = 30.0

    @property
    def max_doppler_hz(self) -> float:
        return self.ue_speed_kmh / 3.6 * self.carrier_hz / SPEED_OF_LIGHT


@dataclass(frozen=True)
class LinkGeometry:
    bs_pos: tuple[float, float, float]
    ue_pos: tuple[float, float, float]
    los: bool

    @property
    def distance_3d(self) -> float:
        return float(np.linalg.norm(np.subtract(self.ue_pos, self.bs_pos)))

    @property
    def distance_2d(self) -> float:
        d = np.subtract(self.ue_pos, self.bs_pos)
        return float(math.hypot(d[0], d[1]))


@dataclass(frozen=True)
class Pathloss:
    db: float  # attenuation in dB (positive)

    @property
    def linear(self) -> float:
        """Linear power gain L_u."""
        return 10.0 ** (-self.db / 10.0)

    @classmethod
    def from_linear(cls, gain: float) -> "Pathloss":
        return cls(-10.0 * math.log10(gain))


def los_probability(distance_2d: float) -> float:
    d = max(distance_2d, 1e-9)
    return min(18.0 / d, 1.0) * (1.0 - math.exp(-d / 63.0)) + math.exp(-d / 63.0)


def pathloss_db(distance_3d: float, los: bool, params: ChannelParams = ChannelParams()) -> float:
    exponent = params.los_exponent if los else params.nlos_exponent
    return 32.4 + exponent * math.log10(distance_3d) + 20.0 * math.log10(params.carrier_hz / 1e9)


@dataclass(frozen=True)
class MultipathChannel:
    """Cluster set of one link. ``time`` is the instant the stored phases refer to."""

    seed: int
    tx_array: ArrayConfig
    rx_array: ArrayConfig
    params: ChannelParams
    los: bool
    mean_power: np.ndarray  # (C,) average cluster powers, sum 1
    gains: np.ndarray  # (C,) complex gains at ``time`` (doppler rotation included)
    departure: np.ndarray  # (C, 2) azimuth, elevation at the BS
    arrival: np.ndarray  # (C, 2) azimuth, elevation at the UE
    delays: np.ndarray  # (C,) seconds
    doppler: np.ndarray  # (C,) rad/s
    time: float = 0.0
    epoch: int = 0
    a_tx: np.ndarray = field(default=None, repr=False, compare=False)
    a_rx: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.a_tx is None:
            object.__setattr__(
                self, "a_tx", array_responses(self.tx_array, self.departure[:, 0], self.departure[:, 1])
            )
            object.__setattr__(
                self, "a_rx", array_responses(self.rx_array, self.arrival[:, 0], self.arrival[:, 1])
            )

    @property
    def cluster_count(self) -> int:
        return len(self.gains)

    @property
    def array_gain(self) -> float:
        return math.sqrt(self.tx_array.size * self.rx_array.size)

    def gains_at(self, t: float) -> np.ndarray:
        """Cluster gains at ``t`` assuming no regeneration between ``self.time`` and ``t``."""
        return self.gains * np.exp(1j * self.doppler * (t - self.time))

    def frequency_response(self, frequencies) -> np.ndarray:
        """Per-cluster delay phase, shape ``(len(frequencies), C)``."""
        f = np.asarray(frequencies, dtype=float)
        return np.exp(-2j * np.pi * f[:, None] * self.delays[None, :])


def _draw_gains(seed: int, epoch: int, mean_power: np.ndarray, los: bool) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_GAIN_STREAM, epoch)))
    c = len(mean_power)
    gains = (rng.standard_normal(c) + 1j * rng.standard_normal(c)) * np.sqrt(mean_power / 2.0)
    if los:
        # specular cluster keeps its power, only its phase is random
        gains[0] = math.sqrt(mean_power[0]) * np.exp(1j * rng.uniform(0.0, TWO_PI))
    return gains


def drop_link(
    seed: int,
    bs_pos,
    ue_pos,
    params: ChannelParams = ChannelParams(),
    tx_array: ArrayConfig | None = None,
    rx_array: ArrayConfig | None = None,
) -> tuple[LinkGeometry, Pathloss, MultipathChannel]:
    """Draw LOS state, pathloss (with shadowing) and clusters of one BS-UE link."""
    tx_array = tx_array or BS_ARRAY
    rx_array = rx_array or UE_ARRAY
    bs = tuple(float(x) for x in bs_pos)
    ue = tuple(float(x) for x in ue_pos)
    departure, arrival = geometric_angles(bs, ue)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_DROP_STREAM,)))

    d2d = math.hypot(ue[0] - bs[0], ue[1] - bs[1])
    los = bool(rng.uniform() < los_probability(d2d))
    geometry = LinkGeometry(bs, ue, los)
    sigma = params.shadowing_los_db if los else params.shadowing_nlos_db
    pl = Pathloss(pathloss_db(geometry.distance_3d, los, params) + sigma * rng.standard_normal())

    n = params.n_clusters
    if los:
        k = 10 ** (params.k_factor_db / 10.0)
        scattered = np.full(n, 1.0 / (n * (k + 1.0)))
        mean_power = np.concatenate([[k / (k + 1.0)], scattered])
    else:
        mean_power = np.full(n, 1.0 / n)
    c = len(mean_power)

    az_spread = math.radians(params.azimuth_spread_deg)
    el_spread = math.radians(params.elevation_spread_deg)
    # Laplacian with standard deviation = spread has scale spread / sqrt(2)
    offsets = rng.laplace(0.0, 1.0, size=(c, 4)) / math.sqrt(2.0)
    offsets[:, 0:3:2] *= az_spread
    offsets[:, 1:4:2] *= el_spread
    if los:
        offsets[0] = 0.0
    dep = np.column_stack(
        [departure.azimuth + offsets[:, 0], np.clip(departure.elevation + offsets[:, 1], -np.pi / 2, np.pi / 2)]
    )
    arr = np.column_stack(
        [arrival.azimuth + offsets[:, 2], np.clip(arrival.elevation + offsets[:, 3], -np.pi / 2, np.pi / 2)]
    )
    dep[:, 0] %= TWO_PI
    arr[:, 0] %= TWO_PI
    delays = rng.uniform(0.0, params.max_delay_s, size=c)
    if los:
        delays[0] = 0.0
    doppler = TWO_PI * params.max_doppler_hz * np.cos(rng.uniform(0.0, TWO_PI, size=c))

    channel = MultipathChannel(
        seed=seed,
        tx_array=tx_array,
        rx_array=rx_array,
        params=params,
        los=los,
        mean_power=mean_power,
        gains=_draw_gains(seed, 0, mean_power, los),
        departure=dep,
        arrival=arr,
        delays=delays,
        doppler=doppler,
    )
    return geometry, pl, channel


def evolve(ch: MultipathChannel, dt: float) -> MultipathChannel:
    """Advance the channel by ``dt`` seconds.

    Phases rotate at each cluster's doppler rate; crossing a regeneration boundary
    redraws the gains from that epoch's stream while angles and delays persist.
    """
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0:
        return ch
    t = ch.time + dt
    period = ch.params.regen_period_s
    epoch = int(math.floor(t / period + 1e-12)) if period > 0 else 0
    if epoch == ch.epoch:
        return dataclasses.replace(ch, gains=ch.gains_at(t), time=t)
    start = epoch * period
    gains = _draw_gains(ch.seed, epoch, ch.mean_power, ch.los) * np.exp(1j * ch.doppler * (t - start))
    return dataclasses.replace(ch, gains=gains, time=t, epoch=epoch)


def channel_matrix(ch: MultipathChannel, symbol_time: float, subcarrier: int, phy: PhyConfig) -> np.ndarray:
    """H[n, k] of shape (N_rx, N_tx) so that ``w.T @ H @ v`` is the effective gain.

    The transmit response enters transposed (not conjugated), which makes the
    conjugate steering vector ``conj(a(theta, phi))`` the matched beam on both ends.
    """
    if not 0 <= subcarrier < phy.n_subcarriers:
        raise IndexError(f"subcarrier {subcarrier} out of range [0, {phy.n_subcarriers})")
    ch_t = evolve(ch, symbol_time - ch.time) if symbol_time >= ch.time else ch
    weights = ch_t.gains * ch_t.frequency_response([phy.subcarrier_frequencies(subcarrier)])[0]
    return ch.array_gain * np.einsum("c,ci,cj->ij", weights, ch.a_rx, ch.a_tx)


def effective_gain(w: np.ndarray, H: np.ndarray, v: np.ndarray) -> complex:
    """Scalar ``w^T H v``; for uplink pass ``H.T`` with the beams swapped."""
    w = np.asarray(w)
    v = np.asarray(v)
    if H.shape != (w.shape[0], v.shape[0]):
        raise ValueError(f"dimension mismatch: w {w.shape}, H {H.shape}, v {v.shape}")
    return complex(w @ H @ v)


def port_gains(ch: MultipathChannel, t: float, w: np.ndarray, ports: np.ndarray, freq_response: np.ndarray) -> np.ndarray:
    """Effective gains ``w^T H[k] v_p`` for every evaluated subcarrier and port.

    ``ports`` holds BS beams as columns (N_tx, P); ``freq_response`` comes from
    :meth:`MultipathChannel.frequency_response`. Returns shape (K_eval, P) without
    ever forming H.
    """
    rx = ch.a_rx @ w  # (C,)
    tx = ch.a_tx @ ports  # (C, P)
    weights = ch.gains_at(t) * rx * ch.array_gain
    return freq_response @ (weights[:, None] * tx)


def write_trace(path, rows) -> None:
    """Channel-trace CSV: one row per (link, slot, cluster)."""
    header = ["seed", "link", "slot", "cluster", "gain_re", "gain_im", "dep_az", "dep_el", "arr_az", "arr_el", "delay_s"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for link, slot, ch in rows:
            for c in range(ch.cluster_count):
                g = ch.gains[c]
                writer.writerow(
                    [ch.seed, link, slot, c, f"{g.real:.9g}", f"{g.imag:.9g}",
                     f"{ch.departure[c, 0]:.9g}", f"{ch.departure[c, 1]:.9g}",
                     f"{ch.arrival[c, 0]:.9g}", f"{ch.arrival[c, 1]:.9g}", f"{ch.delays[c]:.9g}"]
                )
