"""NR numerology, SINR evaluation and the CQI -> MCS -> BLER link abstraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .array_geometry import BS_ARRAY, UE_ARRAY, ArrayConfig

BOLTZMANN_PSD_DBM_HZ = -174.0


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def linear_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class PhyConfig:
    carrier_hz: float = 28e9
    bandwidth_hz: float = 198e6
    numerology: int = 2
    n_rb: int = 275
    bs_power_dbm: float = 30.0
    ue_power_dbm: float = 30.0
    noise_figure_db: float = 5.0
    n_layers: int = 1
    bs_array: ArrayConfig = BS_ARRAY
    ue_array: ArrayConfig = UE_ARRAY
    # SINR is evaluated on every ``subcarrier_stride``-th subcarrier (RB centres by
    # default); 1 evaluates all K subcarriers.
    subcarrier_stride: int = 12

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.subcarrier_stride < 1:
            raise ValueError("subcarrier_stride must be >= 1")

    @property
    def subcarrier_spacing(self) -> float:
        return 15e3 * 2**self.numerology

    @property
    def n_subcarriers(self) -> int:
        return 12 * self.n_rb

    @property
    def symbol_duration(self) -> float:
        return 1e-3 / (14 * 2**self.numerology)

    @property
    def slot_duration(self) -> float:
        return 1e-3 / 2**self.numerology

    @property
    def slots_per_subframe(self) -> int:
        return 2**self.numerology

    @property
    def reference_subcarrier(self) -> int:
        return self.n_subcarriers // 2

    @property
    def noise_power(self) -> float:
        """Thermal noise per subcarrier, Delta f * N_o, in watts."""
        psd_dbm = BOLTZMANN_PSD_DBM_HZ + self.noise_figure_db
        return 10 ** ((psd_dbm - 30.0) / 10.0) * self.subcarrier_spacing

    def power_per_subcarrier(self, direction: str) -> float:
        dbm = self.bs_power_dbm if direction == "DL" else self.ue_power_dbm
        return 10 ** ((dbm - 30.0) / 10.0) / self.n_subcarriers

    def noise_over_power(self, direction: str = "DL") -> float:
        """Regulariser N_o * Delta f / P of the MMSE mapping (P = total transmit power)."""
        dbm = self.bs_power_dbm if direction == "DL" else self.ue_power_dbm
        return self.noise_power / 10 ** ((dbm - 30.0) / 10.0)

    def subcarrier_frequencies(self, subcarriers) -> np.ndarray:
        """Baseband frequency of each subcarrier index (centred on the carrier)."""
        k = np.asarray(subcarriers)
        return (k - self.n_subcarriers / 2) * self.subcarrier_spacing

    def evaluation_subcarriers(self) -> np.ndarray:
        s = self.subcarrier_stride
        return np.arange(s // 2, self.n_subcarriers, s)


@dataclass(frozen=True)
class SlotStructure:
    symbols_per_slot: int = 14
    dl_control_symbol: int = 0
    ul_control_symbol: int = 13

    @property
    def data_symbols(self) -> range:
        return range(self.dl_control_symbol + 1, self.ul_control_symbol)

    @property
    def n_data_symbols(self) -> int:
        return len(self.data_symbols)

    @property
    def first_data_symbol(self) -> int:
        return self.data_symbols[0]


SLOT = SlotStructure()

DEFAULT_EFFICIENCIES = (0.2, 0.5, 0.8, 1.2, 1.6, 1.82, 2.2, 2.6, 3.0, 3.64, 4.0, 4.4, 4.8, 5.2, 5.5)


def gap_threshold_db(efficiency, gap_db: float = 3.0):
    """SINR needed for ``efficiency`` bits/subcarrier/symbol under a Shannon gap."""
    return 10.0 * np.log10(10 ** (gap_db / 10.0) * (2.0 ** np.asarray(efficiency, dtype=float) - 1.0))


@dataclass(frozen=True)
class McsTable:
    efficiencies: tuple[float, ...] = DEFAULT_EFFICIENCIES
    gap_db: float = 3.0
    thresholds_db: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.thresholds_db:
            object.__setattr__(
                self, "thresholds_db", tuple(float(t) for t in gap_threshold_db(self.efficiencies, self.gap_db))
            )
        eff = np.asarray(self.efficiencies)
        thr = np.asarray(self.thresholds_db)
        if len(eff) != len(thr) or len(eff) == 0:
            raise ValueError("efficiency and threshold tables must be non-empty and equally long")
        if np.any(np.diff(eff) <= 0) or np.any(np.diff(thr) <= 0):
            raise ValueError("MCS tables must be strictly increasing")

    def __len__(self) -> int:
        return len(self.efficiencies)

    def efficiency(self, mcs: int) -> float:
        return self.efficiencies[mcs]

    def threshold(self, mcs: int) -> float:
        return self.thresholds_db[mcs]


MCS_TABLE = McsTable()


def select_mcs(sinr_db: float, table: McsTable = MCS_TABLE) -> int:
    """Highest MCS whose threshold does not exceed ``sinr_db``; 0 below the table."""
    idx = int(np.searchsorted(table.thresholds_db, sinr_db, side="right")) - 1
    return max(idx, 0)


@dataclass(frozen=True)
class BlerCurve:
    """Logistic BLER(SINR) anchored at 1e-2 on the MCS threshold.

    ``transition_db`` is how far below threshold the BLER reaches 0.99.
    """

    anchor_bler: float = 1e-2
    transition_db: float = 2.0

    @property
    def slope(self) -> float:
        logit = math.log((1.0 - self.anchor_bler) / self.anchor_bler)
        return self.transition_db / (2.0 * logit)

    @property
    def offset(self) -> float:
        return self.transition_db / 2.0

    def __call__(self, sinr_db, threshold_db):
        z = (np.asarray(sinr_db, dtype=float) - threshold_db + self.offset) / self.slope
        return 0.5 * (1.0 - np.tanh(0.5 * z))  # == 1 / (1 + exp(z)) without overflow


BLER_CURVE = BlerCurve()


def bler(sinr_db, mcs: int, table: McsTable = MCS_TABLE, curve: BlerCurve = BLER_CURVE):
    return curve(sinr_db, table.threshold(mcs))


def transport_block_bits(mcs: int, n_symbols: int, n_subcarriers: int, table: McsTable = MCS_TABLE) -> int:
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    return int(math.floor(table.efficiency(mcs) * n_subcarriers * n_symbols + 1e-9))


def sinr_dl(cross: np.ndarray, pathloss: np.ndarray, target: int, power: float, noise: float) -> np.ndarray:
    """Downlink SINR of layer ``target`` per subcarrier.

    ``cross[a, b, k]`` is the effective gain seen through user ``a``'s channel and
    receive beam when the BS transmits with the vector of ``b``'s layer. Interference
    reaches the target through its own channel and pathloss.
    """
    own = np.abs(cross[target]) ** 2  # (n, K)
    others = np.arange(own.shape[0]) != target
    signal = pathloss[target] * own[target] * power
    interference = pathloss[target] * own[others].sum(axis=0) * power
    return signal / (interference + noise)


def sinr_ul(cross: np.ndarray, pathloss: np.ndarray, target: int, power: float, noise: float) -> np.ndarray:
    """Uplink SINR of layer ``target``: each interferer arrives with its own pathloss."""
    col = np.abs(cross[:, target]) ** 2 * np.asarray(pathloss)[:, None]  # (n, K)
    others = np.arange(col.shape[0]) != target
    signal = col[target] * power
    interference = col[others].sum(axis=0) * power
    return signal / (interference + noise)


def wideband(sinr_linear) -> float:
    """Arithmetic mean of per-subcarrier linear SINR."""
    return float(np.mean(sinr_linear))
