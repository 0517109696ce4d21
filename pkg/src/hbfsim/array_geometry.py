"""Uniform planar arrays: response vectors, pointing angles and beam codebooks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi

# Phase constant of the element-to-element progression. Half-wavelength spacing
# conventionally gives pi; the default follows the reference formula (pi/2).
DEFAULT_PHASE_CONSTANT = math.pi / 2


class DegenerateGeometryError(ValueError):
    """Raised when transmitter and receiver positions coincide."""


@dataclass(frozen=True)
class ArrayConfig:
    """UPA with ``n1`` horizontal and ``n2`` vertical elements."""

    n1: int = 8
    n2: int = 8
    phase_constant: float = DEFAULT_PHASE_CONSTANT

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError(f"array dimensions must be >= 1, got {self.n1}x{self.n2}")

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @property
    def horizontal_index(self) -> np.ndarray:
        return np.arange(self.size) % self.n1

    @property
    def vertical_index(self) -> np.ndarray:
        return np.arange(self.size) // self.n1


BS_ARRAY = ArrayConfig(8, 8)
UE_ARRAY = ArrayConfig(4, 4)


@dataclass(frozen=True)
class AnglePair:
    azimuth: float
    elevation: float

    def __post_init__(self):
        # frozen dataclass: normalise through object.__setattr__
        object.__setattr__(self, "azimuth", float(self.azimuth) % TWO_PI)
        if not -math.pi / 2 - 1e-12 <= self.elevation <= math.pi / 2 + 1e-12:
            raise ValueError(f"elevation {self.elevation} outside [-pi/2, pi/2]")


def array_response(cfg: ArrayConfig, angles: AnglePair | tuple[float, float]) -> np.ndarray:
    """Unit-norm response of ``cfg`` towards ``angles`` (azimuth, elevation).

    Coefficient ``i`` is ``exp(-j c ((i mod n1) sin az + (i // n1) sin el)) / sqrt(N)``
    with ``c = cfg.phase_constant``.
    """
    if isinstance(angles, AnglePair):
        az, el = angles.azimuth, angles.elevation
    else:
        az, el = angles
    return array_responses(cfg, np.asarray([az]), np.asarray([el]))[0]


def array_responses(cfg: ArrayConfig, azimuths, elevations) -> np.ndarray:
    """Vectorised :func:`array_response`; returns shape ``(len(azimuths), N)``."""
    az = np.atleast_1d(np.asarray(azimuths, dtype=float))
    el = np.atleast_1d(np.asarray(elevations, dtype=float))
    phase = cfg.phase_constant * (
        np.sin(az)[:, None] * cfg.horizontal_index[None, :]
        + np.sin(el)[:, None] * cfg.vertical_index[None, :]
    )
    return np.exp(-1j * phase) / math.sqrt(cfg.size)


def geometric_angles(tx_pos, rx_pos) -> tuple[AnglePair, AnglePair]:
    """Departure angles at ``tx_pos`` and arrival angles at ``rx_pos`` of the direct path."""
    tx = np.asarray(tx_pos, dtype=float)
    rx = np.asarray(rx_pos, dtype=float)
    dx, dy, dz = rx - tx
    horizontal = math.hypot(dx, dy)
    if horizontal == 0.0 and dz == 0.0:
        raise DegenerateGeometryError("degenerate geometry: coincident positions")
    if dx == 0.0:
        theta = math.copysign(math.pi / 2, dy) if dy != 0.0 else 0.0
    else:
        theta = math.atan(dy / dx) + (math.pi if dx < 0 else 0.0)
    theta %= TWO_PI
    if horizontal == 0.0:
        phi = math.copysign(math.pi / 2, dz)
    else:
        phi = math.atan(dz / horizontal)
    return AnglePair(theta, phi), AnglePair(theta + math.pi, -phi)


@dataclass(frozen=True)
class Codebook:
    """Ordered set of analog beams. The position in ``vectors`` is the beam indicator."""

    cfg: ArrayConfig
    azimuth_count: int
    elevation_count: int
    angles: tuple[AnglePair, ...]
    vectors: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.angles)

    @property
    def matrix(self) -> np.ndarray:
        """Beams as columns, shape ``(N, len(self))``."""
        return self.vectors.T

    def to_json(self) -> str:
        doc = {
            "n1": self.cfg.n1,
            "n2": self.cfg.n2,
            "phase_constant": float(f"{self.cfg.phase_constant:.12g}"),
            "azimuth_count": self.azimuth_count,
            "elevation_count": self.elevation_count,
            "beams": [
                {
                    "azimuth": float(f"{a.azimuth:.12g}"),
                    "elevation": float(f"{a.elevation:.12g}"),
                    "coefficients": [
                        [float(f"{c.real:.12g}"), float(f"{c.imag:.12g}")] for c in vec
                    ],
                }
                for a, vec in zip(self.angles, self.vectors)
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Codebook":
        doc = json.loads(text)
        cfg = ArrayConfig(doc["n1"], doc["n2"], doc["phase_constant"])
        beams = doc["beams"]
        angles = tuple(AnglePair(b["azimuth"], b["elevation"]) for b in beams)
        vectors = np.array(
            [[complex(re, im) for re, im in b["coefficients"]] for b in beams], dtype=complex
        )
        if vectors.shape[1] != cfg.size:
            raise ValueError("coefficient count does not match array size")
        return cls(cfg, doc["azimuth_count"], doc["elevation_count"], angles, vectors)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Codebook":
        return cls.from_json(Path(path).read_text())


def build_codebook(
    cfg: ArrayConfig,
    azimuth_count: int,
    elevation_count: int,
    azimuth_span: tuple[float, float] = (0.0, TWO_PI),
    elevation_span: tuple[float, float] = (-math.pi / 4, math.pi / 4),
) -> Codebook:
    """Array responses over a uniform azimuth x elevation grid.

    Azimuths are spaced uniformly over the half-open ``azimuth_span``; elevations
    cover the closed ``elevation_span`` (a single elevation sits at its centre).
    Order is azimuth-major.
    """
    if azimuth_count < 1 or elevation_count < 1:
        raise ValueError("grid counts must be >= 1")
    lo, hi = azimuth_span
    azimuths = lo + (hi - lo) * np.arange(azimuth_count) / azimuth_count
    if elevation_count == 1:
        elevations = np.array([0.5 * sum(elevation_span)])
    else:
        elevations = np.linspace(elevation_span[0], elevation_span[1], elevation_count)
    az_grid, el_grid = np.meshgrid(azimuths, elevations, indexing="ij")
    az_flat, el_flat = az_grid.ravel(), el_grid.ravel()
    angles = tuple(AnglePair(a, e) for a, e in zip(az_flat, el_flat))
    vectors = array_responses(cfg, [a.azimuth for a in angles], el_flat)
    return Codebook(cfg, azimuth_count, elevation_count, angles, vectors)


def bs_codebook(cfg: ArrayConfig = BS_ARRAY, azimuth_count: int = 16, elevation_count: int = 4) -> Codebook:
    return build_codebook(cfg, azimuth_count, elevation_count)


def ue_codebook(cfg: ArrayConfig = UE_ARRAY, azimuth_count: int = 8, elevation_count: int = 2) -> Codebook:
    # the response depends on sin(azimuth) only, so a half circle covers every beam
    return build_codebook(cfg, azimuth_count, elevation_count, azimuth_span=(-math.pi / 2, math.pi / 2))
