"""Envelope detection, B-mode compression, and image-quality metrics.

The envelope is the magnitude of the per-column analytic signal (FFT-based
Hilbert transform with one-sided spectrum doubling, columns zero-padded to
the next power of two and truncated back). Contrast metrics operate on the
linear envelope; ``cnr`` reports decibels via ``20 log10``. ``gcnr`` is the
histogram-overlap contrast measure in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .errors import (
    ConfigError,
    DegenerateInputError,
    MeasurementUndefinedError,
    ShapeError,
)
from .geometry import ImagingGrid
from .operator import ImageVec

# Returned by cnr() when the two ROI means coincide but variance is nonzero
# (a true -inf in dB); callers can test against it explicitly.
CNR_FLOOR = float(np.finfo(np.float64).min)


@dataclass(frozen=True)
class Roi:
    """A set of flat pixel indices over a specific grid."""

    grid: ImagingGrid
    indices: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size == 0:
            raise ConfigError("ROI must be nonempty")
        if idx.min() < 0 or idx.max() >= self.grid.num_pixels:
            raise ConfigError("ROI indices outside the grid")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def rect(cls, grid: ImagingGrid, x_min: float, x_max: float,
             z_min: float, z_max: float) -> "Roi":
        """Axis-aligned rectangle in physical meters (inclusive bounds)."""
        x = grid.lateral_coords()
        z = grid.axial_coords()
        jj = np.nonzero((x >= x_min) & (x <= x_max))[0]
        ii = np.nonzero((z >= z_min) & (z <= z_max))[0]
        if jj.size == 0 or ii.size == 0:
            raise ConfigError("rectangle contains no pixels")
        idx = (ii[:, None] * grid.num_lateral + jj[None, :]).ravel()
        return cls(grid, idx)

    @classmethod
    def ellipse(cls, grid: ImagingGrid, center_x: float, center_z: float,
                radius_x: float, radius_z: float) -> "Roi":
        """Axis-aligned ellipse in physical meters."""
        if radius_x <= 0 or radius_z <= 0:
            raise ConfigError("ellipse radii must be > 0")
        x = grid.lateral_coords()
        z = grid.axial_coords()
        xx, zz = np.meshgrid(x, z)
        inside = ((xx - center_x) / radius_x) ** 2 + ((zz - center_z) / radius_z) ** 2 <= 1.0
        idx = np.nonzero(inside.ravel())[0]
        if idx.size == 0:
            raise ConfigError("ellipse contains no pixels")
        return cls(grid, idx)

    @classmethod
    def from_dict(cls, grid: ImagingGrid, doc: dict) -> "Roi":
        """Build from a JSON primitive: rect, ellipse, or explicit indices."""
        shape = doc.get("shape")
        if shape == "rect":
            return cls.rect(grid, doc["x_min_m"], doc["x_max_m"],
                            doc["z_min_m"], doc["z_max_m"])
        if shape == "ellipse":
            return cls.ellipse(grid, doc["center_x_m"], doc["center_z_m"],
                               doc["radius_x_m"], doc["radius_z_m"])
        if shape == "indices":
            return cls(grid, np.asarray(doc["indices"], dtype=np.int64))
        raise ConfigError(f"unknown ROI shape {shape!r}")


@dataclass
class BmodeImage:
    """Log-compressed image: per-pixel dB in [-dynamic_range, 0], max 0."""

    grid: ImagingGrid
    data_db: np.ndarray
    dynamic_range_db: float

    def __post_init__(self):
        self.data_db = np.asarray(self.data_db, dtype=np.float32).ravel()
        if self.data_db.size != self.grid.num_pixels:
            raise ShapeError("data_db length does not match grid")
        if self.dynamic_range_db <= 0:
            raise ConfigError("dynamic range must be > 0")
        top = float(self.data_db.max())
        if abs(top) > 1e-4:
            raise ConfigError(f"B-mode maximum must be 0 dB, got {top}")
        if float(self.data_db.min()) < -self.dynamic_range_db - 1e-4:
            raise ConfigError("B-mode values below -dynamic_range")

    def as_image(self) -> np.ndarray:
        return self.data_db.reshape(self.grid.shape)


def envelope(x: ImageVec) -> ImageVec:
    """Per-column magnitude of the analytic signal along the axial axis."""
    grid = x.grid
    if grid.num_axial < 4:
        raise ConfigError(f"envelope needs num_axial >= 4, got {grid.num_axial}")
    img = x.as_image().astype(np.float64)
    n_fft = 1 << (grid.num_axial - 1).bit_length()
    analytic = scipy.signal.hilbert(img, N=n_fft, axis=0)[: grid.num_axial]
    return ImageVec(grid, np.abs(analytic).ravel().astype(np.float32))


def bmode(env: ImageVec, dynamic_range_db: float) -> BmodeImage:
    """Normalize to the envelope peak and log-compress, clipping at
    ``-dynamic_range_db``."""
    if dynamic_range_db <= 0:
        raise ConfigError(f"dynamic range must be > 0, got {dynamic_range_db}")
    data = np.asarray(env.data, dtype=np.float64)
    if np.any(data < 0):
        raise ConfigError("envelope must be nonnegative")
    peak = data.max()
    if peak <= 0:
        raise DegenerateInputError("all-zero envelope cannot be log-compressed")
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(data / peak)
    db = np.maximum(db, -dynamic_range_db)
    return BmodeImage(env.grid, db.astype(np.float32), float(dynamic_range_db))


def _half_crossing_distance(profile: np.ndarray, peak: int, step: int) -> float:
    """Distance (in samples) from ``peak`` to the half-max crossing when
    walking in direction ``step``; raises if the profile never drops below."""
    half = profile[peak] / 2.0
    i = peak
    while 0 <= i + step < profile.size:
        i += step
        if profile[i] < half:
            prev = i - step
            # Linear interpolation between the bracketing samples.
            frac = (profile[prev] - half) / (profile[prev] - profile[i])
            return abs(prev - peak) + frac
    raise MeasurementUndefinedError(
        "profile does not fall below half maximum on one side of the peak"
    )


def fwhm(env: ImageVec, peak_pixel: tuple[int, int], axis: str, grid: ImagingGrid) -> float:
    """Full width at half maximum through a peak, in meters.

    ``axis`` is ``"axial"`` (profile down the peak's column, spacing ``dz``)
    or ``"lateral"`` (profile along the peak's row, spacing ``dx``). The two
    crossings nearest the peak are located by linear interpolation.
    """
    img = env.as_image()
    i, j = peak_pixel
    if not (0 <= i < grid.num_axial and 0 <= j < grid.num_lateral):
        raise ConfigError(f"peak pixel {peak_pixel} outside the grid")
    if axis == "axial":
        profile, peak, spacing = img[:, j].astype(np.float64), i, grid.dz
    elif axis == "lateral":
        profile, peak, spacing = img[i, :].astype(np.float64), j, grid.dx
    else:
        raise ConfigError(f"axis must be 'axial' or 'lateral', got {axis!r}")
    if profile[peak] <= 0:
        raise MeasurementUndefinedError("peak amplitude is not positive")
    left = _half_crossing_distance(profile, peak, -1)
    right = _half_crossing_distance(profile, peak, +1)
    return (left + right) * spacing


def _roi_samples(env: ImageVec, roi: Roi) -> np.ndarray:
    if roi.grid.num_pixels != env.grid.num_pixels:
        raise ShapeError("ROI grid does not match image grid")
    return np.asarray(env.data, dtype=np.float64)[roi.indices]


def cnr(env: ImageVec, roi_a: Roi, roi_b: Roi) -> float:
    """Contrast-to-noise ratio in dB on the linear envelope.

    ``20 log10(|mean_a - mean_b| / sqrt(var_a + var_b))`` with population
    (biased) variances. Zero contrast with nonzero variance returns
    :data:`CNR_FLOOR` (the most negative finite float, standing in for
    -inf dB); zero pooled variance raises.
    """
    a = _roi_samples(env, roi_a)
    b = _roi_samples(env, roi_b)
    pooled = a.var() + b.var()
    if pooled <= 0:
        raise DegenerateInputError("both ROIs are constant; CNR undefined")
    contrast = abs(a.mean() - b.mean())
    if contrast == 0:
        return CNR_FLOOR
    return float(20.0 * np.log10(contrast / np.sqrt(pooled)))


def max_sidelobe_db(env: ImageVec, peaks: list[tuple[int, int]],
                    exclude_radius_px: int = 3) -> float:
    """Highest envelope level outside the peak neighborhoods, in dB below
    the image peak.

    Square neighborhoods of ``+-exclude_radius_px`` pixels around each peak
    are excluded; more negative results mean better sidelobe suppression.
    """
    img = env.as_image().astype(np.float64)
    peak_val = img.max()
    if peak_val <= 0:
        raise DegenerateInputError("all-zero envelope has no sidelobes")
    mask = np.ones_like(img, dtype=bool)
    r = int(exclude_radius_px)
    for i, j in peaks:
        mask[max(0, i - r) : i + r + 1, max(0, j - r) : j + r + 1] = False
    if not mask.any():
        raise ConfigError("peak neighborhoods cover the whole image")
    return float(20.0 * np.log10(img[mask].max() / peak_val))


def gcnr(env: ImageVec, roi_a: Roi, roi_b: Roi, bins: int = 256) -> float:
    """Generalized CNR: 1 minus the histogram overlap of the two ROIs.

    Histograms share ``bins`` equal-width bins spanning the min..max of the
    pooled samples and are each normalized to sum to 1.
    """
    if bins < 2:
        raise ConfigError(f"bins must be >= 2, got {bins}")
    a = _roi_samples(env, roi_a)
    b = _roi_samples(env, roi_b)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    pa, _ = np.histogram(a, bins=bins, range=(lo, hi))
    pb, _ = np.histogram(b, bins=bins, range=(lo, hi))
    pa = pa / pa.sum()
    pb = pb / pb.sum()
    return float(1.0 - np.minimum(pa, pb).sum())
