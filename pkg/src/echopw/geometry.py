"""Transducer, imaging grid, and plane-wave sequence geometry.

Conventions used throughout the package:

* The linear array is centered at lateral coordinate 0: element ``k`` sits at
  ``x_e(k) = (k - (N_c - 1) / 2) * pitch``.
* Grid pixel ``(i, j)`` maps to the physical point
  ``x = (j - (N_x - 1) / 2) * dx``, ``z = z0 + i * dz`` (axial index grows
  with depth), so the grid's lateral origin coincides with the array center.
* A steered plane wave with angle ``theta`` is timed so that the wavefront
  leaves the first-fired edge element at t = 0; the transmit delay to a point
  therefore carries the extra term ``A / (2c) * |sin(theta)|`` with
  ``A = (N_c - 1) * pitch`` the aperture width, which keeps delays
  nonnegative over the aperture footprint.

All geometry math is done in float64; image/RF payloads elsewhere in the
package are float32.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

DEFAULT_SOUND_SPEED = 1540.0  # m/s
DEFAULT_PITCH = 0.0003  # m


@dataclass(frozen=True)
class TransducerConfig:
    """Linear-array transducer and sampling parameters.

    Attributes:
        num_elements: Number of array elements (>= 2).
        pitch: Center-to-center element spacing in meters.
        sampling_rate: RF sampling rate in Hz.
        num_samples: Samples recorded per channel.
        sound_speed: Speed of sound in m/s.
        t0_offset: Acquisition start time relative to the transmit
            reference, in seconds.
    """

    num_elements: int
    pitch: float = DEFAULT_PITCH
    sampling_rate: float = 25e6
    num_samples: int = 1300
    sound_speed: float = DEFAULT_SOUND_SPEED
    t0_offset: float = 0.0

    def __post_init__(self):
        if self.num_elements < 2:
            raise ConfigError(f"num_elements must be >= 2, got {self.num_elements}")
        if self.pitch <= 0:
            raise ConfigError(f"pitch must be > 0, got {self.pitch}")
        if self.sampling_rate <= 0:
            raise ConfigError(f"sampling_rate must be > 0, got {self.sampling_rate}")
        if self.num_samples < 1:
            raise ConfigError(f"num_samples must be >= 1, got {self.num_samples}")
        if self.sound_speed <= 0:
            raise ConfigError(f"sound_speed must be > 0, got {self.sound_speed}")

    @property
    def aperture_width(self) -> float:
        """Distance between the first and last element centers, in meters."""
        return (self.num_elements - 1) * self.pitch

    def element_positions(self) -> np.ndarray:
        """Lateral element coordinates in meters, centered at 0 (float64)."""
        k = np.arange(self.num_elements, dtype=np.float64)
        return (k - (self.num_elements - 1) / 2.0) * self.pitch


@dataclass(frozen=True)
class ImagingGrid:
    """Rectangular image grid in physical units.

    ``num_axial`` rows (depth) by ``num_lateral`` columns; row-major flat
    indexing ``i * num_lateral + j`` is used for image vectors everywhere.
    """

    num_axial: int
    num_lateral: int
    dz: float
    dx: float
    z0: float = 0.0

    def __post_init__(self):
        if self.num_axial < 1 or self.num_lateral < 1:
            raise ConfigError(
                f"grid must be at least 1x1, got {self.num_axial}x{self.num_lateral}"
            )
        if self.dz <= 0 or self.dx <= 0:
            raise ConfigError(f"grid spacing must be > 0, got dz={self.dz}, dx={self.dx}")
        if self.z0 < 0:
            raise ConfigError(f"z0 must be >= 0, got {self.z0}")

    @property
    def num_pixels(self) -> int:
        return self.num_axial * self.num_lateral

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_axial, self.num_lateral)

    def axial_coords(self) -> np.ndarray:
        """Depth coordinate of each row, in meters (float64)."""
        return self.z0 + np.arange(self.num_axial, dtype=np.float64) * self.dz

    def lateral_coords(self) -> np.ndarray:
        """Lateral coordinate of each column, in meters (float64)."""
        j = np.arange(self.num_lateral, dtype=np.float64)
        return (j - (self.num_lateral - 1) / 2.0) * self.dx

    def pixel_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """(x, z) coordinates of all pixels as flat row-major float64 arrays."""
        z = self.axial_coords()
        x = self.lateral_coords()
        xx, zz = np.meshgrid(x, z)
        return xx.ravel(), zz.ravel()


def _validate_angles(angles: np.ndarray) -> np.ndarray:
    angles = np.asarray(angles, dtype=np.float64)
    if angles.ndim != 1 or angles.size == 0:
        raise ConfigError("angle sequence must be a nonempty 1-D array")
    if not np.all(np.abs(angles) < math.pi / 2):
        raise ConfigError("steering angles must lie strictly within (-pi/2, pi/2)")
    return angles


@dataclass(frozen=True)
class PlaneWaveSequence:
    """Ordered steering angles, in radians."""

    angles: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angles", _validate_angles(self.angles))

    def __len__(self) -> int:
        return self.angles.size

    @classmethod
    def uniform(cls, num_angles: int = 75, span_deg: float = 16.0) -> "PlaneWaveSequence":
        """Angles uniformly spaced over [-span_deg, +span_deg], inclusive."""
        if num_angles < 1:
            raise ConfigError(f"num_angles must be >= 1, got {num_angles}")
        if num_angles == 1:
            deg = np.array([0.0])
        else:
            deg = np.linspace(-span_deg, span_deg, num_angles)
        return cls(np.deg2rad(deg))


@dataclass(frozen=True)
class AcquisitionConfig:
    """Complete acquisition description: transducer + grid + angle sequence."""

    transducer: TransducerConfig
    grid: ImagingGrid
    sequence: PlaneWaveSequence = field(
        default_factory=lambda: PlaneWaveSequence.uniform()
    )

    @classmethod
    def default(
        cls,
        num_elements: int = 128,
        num_samples: int = 1300,
        num_axial: int = 1000,
        num_lateral: int = 256,
        num_angles: int = 75,
        pitch: float = DEFAULT_PITCH,
        sampling_rate: float = 25e6,
        sound_speed: float = DEFAULT_SOUND_SPEED,
    ) -> "AcquisitionConfig":
        """Stock configuration: dx = pitch and dz chosen so that the grid
        depth spans the full acquisition depth ``c * N_s / (2 f_s)``."""
        xdcr = TransducerConfig(
            num_elements=num_elements,
            pitch=pitch,
            sampling_rate=sampling_rate,
            num_samples=num_samples,
            sound_speed=sound_speed,
        )
        dz = sound_speed / (2.0 * sampling_rate) * (num_samples / num_axial)
        grid = ImagingGrid(num_axial=num_axial, num_lateral=num_lateral, dz=dz, dx=pitch)
        return cls(xdcr, grid, PlaneWaveSequence.uniform(num_angles))

    # -- JSON round trip ---------------------------------------------------

    def to_dict(self) -> dict:
        """Plain-dict form with explicit units in the field names."""
        return {
            "transducer": {
                "num_elements": self.transducer.num_elements,
                "pitch_m": self.transducer.pitch,
                "sampling_rate_hz": self.transducer.sampling_rate,
                "num_samples": self.transducer.num_samples,
                "sound_speed_m_per_s": self.transducer.sound_speed,
                "t0_offset_s": self.transducer.t0_offset,
            },
            "grid": {
                "num_axial": self.grid.num_axial,
                "num_lateral": self.grid.num_lateral,
                "dz_m": self.grid.dz,
                "dx_m": self.grid.dx,
                "z0_m": self.grid.z0,
            },
            "angles_deg": [float(a) for a in np.rad2deg(self.sequence.angles)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AcquisitionConfig":
        try:
            t = doc["transducer"]
            g = doc["grid"]
            xdcr = TransducerConfig(
                num_elements=int(t["num_elements"]),
                pitch=float(t["pitch_m"]),
                sampling_rate=float(t["sampling_rate_hz"]),
                num_samples=int(t["num_samples"]),
                sound_speed=float(t["sound_speed_m_per_s"]),
                t0_offset=float(t.get("t0_offset_s", 0.0)),
            )
            grid = ImagingGrid(
                num_axial=int(g["num_axial"]),
                num_lateral=int(g["num_lateral"]),
                dz=float(g["dz_m"]),
                dx=float(g["dx_m"]),
                z0=float(g.get("z0_m", 0.0)),
            )
            seq = PlaneWaveSequence(np.deg2rad(np.asarray(doc["angles_deg"], dtype=np.float64)))
        except KeyError as err:
            raise ConfigError(f"acquisition document is missing field {err}") from err
        return cls(xdcr, grid, seq)

    def to_json(self) -> str:
        """Canonical JSON text (sorted keys, compact separators)."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "AcquisitionConfig":
        return cls.from_dict(json.loads(text))


def acquisition_fingerprint(acq: AcquisitionConfig) -> bytes:
    """32-byte SHA-256 of the canonical JSON form of a configuration.

    Data files carry this value so that RF frames and operators can be
    checked against the geometry they were produced with.
    """
    return hashlib.sha256(acq.to_json().encode("utf-8")).digest()


# -- Times of flight -------------------------------------------------------


def tx_delay(angle, pixel_pos, transducer: TransducerConfig):
    """Transmit time of flight from the steered plane wave to a point.

    ``t_tx = (x sin(theta) + z cos(theta)) / c + A / (2c) * |sin(theta)|``
    where ``A`` is the aperture width; the additive term aligns t = 0 with
    the wavefront leaving the first-fired edge element.

    Args:
        angle: Steering angle in radians, |angle| < pi/2.
        pixel_pos: ``(x, z)`` point in meters; z must be >= 0. Arrays
            broadcast elementwise.
        transducer: Array geometry supplying pitch, element count and c.

    Returns:
        Delay in seconds (float64, scalar or array).
    """
    x, z = pixel_pos
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if not abs(angle) < math.pi / 2:
        raise ConfigError(f"|angle| must be < pi/2, got {angle}")
    if np.any(z < 0):
        raise ConfigError("pixel depth z must be >= 0")
    c = transducer.sound_speed
    half_aperture = transducer.aperture_width / 2.0
    t = (x * math.sin(angle) + z * math.cos(angle)) / c
    t = t + half_aperture * abs(math.sin(angle)) / c
    return t if t.shape else float(t)


def rx_delay(pixel_pos, element_x, sound_speed: float):
    """Receive time of flight from a point back to one element.

    Args:
        pixel_pos: ``(x, z)`` point in meters.
        element_x: Lateral element coordinate in meters.
        sound_speed: Speed of sound in m/s.

    Returns:
        ``sqrt((x - x_e)^2 + z^2) / c`` in seconds (float64).
    """
    x, z = pixel_pos
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    t = np.hypot(x - element_x, z) / sound_speed
    return t if t.shape else float(t)


def sample_index(total_delay, transducer: TransducerConfig):
    """Fractional RF sample index for a round-trip delay.

    Returns ``(total_delay - t0_offset) * f_s`` without range checking;
    interpolation and clipping are the caller's business.
    """
    total_delay = np.asarray(total_delay, dtype=np.float64)
    s = (total_delay - transducer.t0_offset) * transducer.sampling_rate
    return s if s.shape else float(s)
