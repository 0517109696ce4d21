"""Analog beam selection (GBF, CBF) and the hybrid MMSE layer-to-port mappings (FMBF, SMBF)."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .array_geometry import ArrayConfig, Codebook, array_response, geometric_angles


class Scheme(str, enum.Enum):
    GBF = "GBF"
    CBF = "CBF"
    FMBF = "FMBF"
    SMBF = "SMBF"

    @property
    def is_mmse(self) -> bool:
        return self in (Scheme.FMBF, Scheme.SMBF)


@dataclass(frozen=True)
class BfScheme:
    kind: Scheme
    k_ref: int

    @classmethod
    def default(cls, kind, n_subcarriers: int) -> "BfScheme":
        return cls(Scheme(kind), n_subcarriers // 2)


class RankDeficientError(np.linalg.LinAlgError):
    pass


class NullBeamError(ValueError):
    pass


class MissingMeasurementError(KeyError):
    pass


@dataclass(frozen=True)
class EquivalentChannel:
    """Pathloss-scaled effective gains between users (rows) and analog ports (columns)."""

    matrix: np.ndarray
    users: tuple = ()


@dataclass(frozen=True)
class PrecodingMatrix:
    matrix: np.ndarray  # (N_p, N_u) or (K, N_p, N_u)
    per_subcarrier: bool = False


@dataclass
class BfDecision:
    """Beams actually used by one co-scheduled group."""

    scheme: Scheme
    transmit: np.ndarray  # (N_tx, n) or (K, N_tx, n) unit-norm columns
    receive: list = field(default_factory=list)  # one UE beam per member
    fallback: bool = False
    per_subcarrier: bool = False


def gbf_pair(bs_pos, ue_pos, bs_array: ArrayConfig, ue_array: ArrayConfig) -> tuple[np.ndarray, np.ndarray]:
    """Beams pointed along the geometric BS-UE direction."""
    departure, arrival = geometric_angles(bs_pos, ue_pos)
    v = np.conj(array_response(bs_array, departure))
    w = np.conj(array_response(ue_array, arrival))
    return v, w


def _argmax_lexicographic(power: np.ndarray, rtol: float = 1e-12) -> tuple[int, int]:
    """Index (d, a) of the maximum of ``power[a, d]``, lowest d then a among ties."""
    flat = power.T.ravel()  # d-major, so the first hit has the lowest (d, a)
    first = int(np.flatnonzero(flat >= flat.max() * (1.0 - rtol))[0])
    d, a = divmod(first, power.shape[0])
    return d, a


def cbf_select(H_ref: np.ndarray, tx_book: Codebook, rx_book: Codebook):
    """Exhaustive max-|w^T H v|^2 search over the codebook product.

    Returns ``(v, w, (tx_index, rx_index))``.
    """
    if len(tx_book) == 0 or len(rx_book) == 0:
        raise ValueError("codebooks must be non-empty")
    gains = rx_book.vectors @ H_ref @ tx_book.matrix  # (|B_A|, |B_D|)
    d, a = _argmax_lexicographic(np.abs(gains) ** 2)
    return tx_book.vectors[d], rx_book.vectors[a], (d, a)


def cbf_select_projected(tx_proj: np.ndarray, rx_proj: np.ndarray, weights: np.ndarray) -> tuple[int, int]:
    """Codebook search on a clustered channel without forming H.

    ``tx_proj[c, d] = a_tx_c^T v_d`` and ``rx_proj[c, a] = w_a^T a_rx_c``; ``weights``
    are the per-cluster gains at the reference subcarrier.
    """
    gains = rx_proj.T @ (weights[:, None] * tx_proj)
    return _argmax_lexicographic(np.abs(gains) ** 2)


def build_equivalent(measurements, sqrt_pathloss, users=None) -> EquivalentChannel:
    """Assemble the users x ports matrix of ``sqrt(L_u) h_eq[u, p]``.

    ``measurements`` is either a square array ``[u, p]`` or a mapping ``(u, p) -> h``
    with users and ports numbered 0..N_u-1.
    """
    scale = np.asarray(sqrt_pathloss, dtype=float)
    n = len(scale)
    if isinstance(measurements, dict):
        H = np.empty((n, n), dtype=complex)
        for u in range(n):
            for p in range(n):
                if (u, p) not in measurements:
                    raise MissingMeasurementError(f"missing measurement for user {u}, port {p}")
                H[u, p] = measurements[(u, p)]
    else:
        H = np.asarray(measurements, dtype=complex)
        if H.shape[-2:] != (n, n):
            raise ValueError(f"expected {n}x{n} measurements, got {H.shape}")
    return EquivalentChannel(scale[:, None] * H, tuple(users if users is not None else range(n)))


def _mmse(H: np.ndarray, noise_over_power: float) -> np.ndarray:
    n = H.shape[-1 if H.ndim == 1 else -2]
    gram = H @ np.conj(np.swapaxes(H, -1, -2)) + noise_over_power * np.eye(n)
    if noise_over_power == 0.0:
        cond = np.linalg.cond(gram)
        if np.any(~np.isfinite(cond)) or np.any(cond > 1e12):
            raise RankDeficientError("rank-deficient zero-noise MMSE")
    # V = H^H G^{-1}  <=>  V^T = G^{-T} conj(H); G is hermitian so solve against it directly
    try:
        x = np.linalg.solve(gram, H)  # G^{-1} H
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError("rank-deficient zero-noise MMSE") from exc
    # (G^{-1} H)^H = H^H G^{-1}
    return np.conj(np.swapaxes(x, -1, -2))


def mmse_precoder(H_eq, noise_over_power: float) -> PrecodingMatrix:
    """``V = H^H (H H^H + sigma I)^{-1}`` for one matrix or a stack of them."""
    if noise_over_power < 0:
        raise ValueError("noise_over_power must be >= 0")
    H = H_eq.matrix if isinstance(H_eq, EquivalentChannel) else np.asarray(H_eq, dtype=complex)
    return PrecodingMatrix(_mmse(H, float(noise_over_power)), per_subcarrier=H.ndim == 3)


def ul_combiner(H_ul, noise_over_power: float) -> PrecodingMatrix:
    """MMSE combiner for the uplink, written in the transposed form.

    ``H_ul[p, u] = sqrt(L_u) h_eq[u, p]`` (ports x users). Returns ``U`` such that the
    layer of user ``u`` is recovered with ``U[:, u]^T`` applied to the port signals:
    ``U^T = (H_ul^H H_ul + sigma I)^{-1} H_ul^H`` transposed.
    """
    G = np.asarray(H_ul, dtype=complex)
    n = G.shape[-1]
    GhG = np.conj(np.swapaxes(G, -1, -2)) @ G + noise_over_power * np.eye(n)
    Ut = np.linalg.solve(GhG, np.conj(np.swapaxes(G, -1, -2)))
    return PrecodingMatrix(np.swapaxes(Ut, -1, -2), per_subcarrier=G.ndim == 3)


def normalized_weights(V: np.ndarray, gram: np.ndarray) -> np.ndarray:
    """Scale columns of ``V`` so that ``analog @ V`` has unit-norm columns.

    ``gram`` is ``analog^H analog``; works on (P, U) or stacked (K, P, U) inputs.
    """
    if V.ndim == 3:
        # one (P, P) x (P, K*U) product instead of K broadcast ones
        K, P, U = V.shape
        GV = (gram @ V.transpose(1, 0, 2).reshape(P, K * U)).reshape(P, K, U).transpose(1, 0, 2)
    else:
        GV = gram @ V
    power = np.real(np.sum(np.conj(V) * GV, axis=-2))
    if np.any(power <= 1e-300):
        raise NullBeamError("null effective beam")
    return V / np.sqrt(power)[..., None, :]


def effective_vectors(analog, V) -> np.ndarray:
    """Per-layer transmit vectors ``(v_1..v_U) = (v^CB_1..v^CB_P) V`` normalised to unit norm.

    ``analog`` holds the port beams as columns (N, P); returns (N, U) or (K, N, U).
    """
    A = np.asarray(analog)
    M = V.matrix if isinstance(V, PrecodingMatrix) else np.asarray(V)
    if A.shape[1] != M.shape[-2]:
        raise ValueError(f"analog has {A.shape[1]} ports but V has {M.shape[-2]} rows")
    tilde = A @ M
    norms = np.linalg.norm(tilde, axis=-2)
    if np.any(norms <= 1e-150):
        raise NullBeamError("null effective beam")
    return tilde / norms[..., None, :]


def smbf_precoders(per_subcarrier_measurements, sqrt_pathloss, noise_over_power: float, analog=None):
    """One MMSE mapping per subcarrier.

    ``per_subcarrier_measurements`` has shape (K, N_u, N_p). Returns the stacked
    :class:`PrecodingMatrix` and, when ``analog`` is given, the (K, N, N_u) effective
    vectors.
    """
    H = build_equivalent(per_subcarrier_measurements, sqrt_pathloss).matrix
    V = mmse_precoder(H, noise_over_power)
    if analog is None:
        return V
    return V, effective_vectors(analog, V)


@dataclass(frozen=True)
class FeedbackBudget:
    """``n_bit`` quantises each real component, so a complex scalar costs ``2 * n_bit`` bits."""

    n_bit: int
    n_users: int
    n_subcarriers: int
    codebook_size: int = 64

    def __post_init__(self):
        if self.n_bit < 1:
            raise ValueError("n_bit must be >= 1")


def feedback_bits(budget: FeedbackBudget, scheme) -> int:
    """Bits each scheme needs to report per co-scheduled group."""
    kind = Scheme(scheme.kind if isinstance(scheme, BfScheme) else scheme)
    if kind is Scheme.GBF:
        return 0
    if kind is Scheme.CBF:
        return budget.n_users * math.ceil(math.log2(budget.codebook_size)) if budget.codebook_size > 1 else 0
    per_matrix = budget.n_users**2 * 2 * budget.n_bit
    if kind is Scheme.FMBF:
        return per_matrix
    return budget.n_subcarriers * per_matrix
