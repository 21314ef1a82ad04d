"""Delay-and-sum reconstruction from RF frames.

``das_single`` gathers each channel at the round-trip delay of every pixel
with linear interpolation and sums over elements, with no apodization by
default, which makes it numerically identical to applying the transpose of
the measurement matrix built under the same conventions.
``das_compound`` averages the per-angle results before envelope detection
(spatially coherent compounding).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError, ShapeError
from .geometry import AcquisitionConfig, rx_delay, sample_index, tx_delay
from .operator import ImageVec, RfFrame


def _thread_cap() -> int:
    """Worker cap from ECHOPW_THREADS (0 or unset = auto)."""
    raw = os.environ.get("ECHOPW_THREADS", "0")
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"ECHOPW_THREADS must be an integer, got {raw!r}")
    if cap < 0:
        raise ConfigError(f"ECHOPW_THREADS must be >= 0, got {cap}")
    if cap == 0:
        cap = os.cpu_count() or 1
    return cap


def das_single(
    rf: RfFrame,
    acq: AcquisitionConfig,
    angle: float,
    f_number: float = 0.0,
) -> ImageVec:
    """Beamform one plane-wave frame onto the acquisition grid.

    Out-of-range delays contribute zero. ``f_number > 0`` restricts each
    pixel's receive aperture to ``|x - x_e| <= z / (2 f_number)``; the
    default 0 disables masking (full aperture, matches the measurement
    matrix transpose).
    """
    xdcr = acq.transducer
    grid = acq.grid
    n_el, n_samp = xdcr.num_elements, xdcr.num_samples
    if rf.transducer_shape != (n_el, n_samp):
        raise ShapeError(
            f"rf shape {rf.transducer_shape} != transducer ({n_el}, {n_samp})"
        )
    channels = rf.as_matrix()
    px, pz = grid.pixel_positions()
    t_tx = tx_delay(angle, (px, pz), xdcr)
    element_x = xdcr.element_positions()

    acc = np.zeros(grid.num_pixels, dtype=np.float64)
    for k in range(n_el):
        s = sample_index(t_tx + rx_delay((px, pz), element_x[k], xdcr.sound_speed), xdcr)
        valid = (s >= 0.0) & (s <= n_samp - 1)
        if f_number > 0.0:
            valid &= np.abs(px - element_x[k]) <= pz / (2.0 * f_number)
        s_val = s[valid]
        s0 = np.floor(s_val).astype(np.int64)
        s1 = np.minimum(s0 + 1, n_samp - 1)
        frac = s_val - s0
        row = channels[k].astype(np.float64, copy=False)
        acc[valid] += (1.0 - frac) * row[s0] + frac * row[s1]
    return ImageVec(grid, acc.astype(np.float32))


def das_compound(
    rfs: list[RfFrame],
    acq: AcquisitionConfig,
    f_number: float = 0.0,
) -> ImageVec:
    """Coherent compounding: mean of ``das_single`` over the angle sequence.

    Expects one frame per angle in ``acq.sequence``, in order. The mean (not
    the sum) keeps amplitudes comparable across different angle counts.
    """
    angles = acq.sequence.angles
    if len(rfs) != angles.size:
        raise ShapeError(f"got {len(rfs)} frames for {angles.size} angles")

    cap = _thread_cap()
    if cap > 1 and len(rfs) > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            images = list(
                pool.map(lambda ia: das_single(rfs[ia], acq, angles[ia], f_number),
                         range(len(rfs)))
            )
    else:
        images = [das_single(rfs[i], acq, angles[i], f_number) for i in range(len(rfs))]

    # Fixed-order reduction in float64 keeps the result bit-stable.
    acc = np.zeros(acq.grid.num_pixels, dtype=np.float64)
    for img in images:
        acc += img.data
    acc /= len(images)
    return ImageVec(acq.grid, acc.astype(np.float32))
