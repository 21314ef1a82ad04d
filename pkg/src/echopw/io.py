"""Bit-exact binary containers for RF frames, tensors, and operators.

All formats are little-endian. Byte layouts:

``PWRF`` (RF container)
    magic ``b"PWRF"``, version u16 (currently 1), num_angles u32,
    num_elements u32, num_samples u32, sampling_rate f64,
    angles (num_angles x f64, radians), fingerprint (32 bytes),
    payload (num_angles x num_elements x num_samples, f32,
    angle-major / element-major / sample-minor).

``TNSR`` (tensor; also the wire format of the external denoiser)
    magic ``b"TNSR"``, rank u32, dims (rank x u64), sigma f64,
    payload (prod(dims) f32, row-major). The magic doubles as the
    version tag.

``PWH1`` (sparse operator)
    magic ``b"PWH1"``, rows u64, cols u64, nnz u64, angle f64,
    fingerprint (32 bytes), row_offsets ((rows + 1) x u64),
    col_indices (nnz x u32), values (nnz x f32). The magic doubles as
    the version tag.

``P5`` portable graymap export maps B-mode decibels linearly from
[-dynamic_range, 0] onto [0, 255] with round-half-up.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError
from .geometry import AcquisitionConfig, ImagingGrid, acquisition_fingerprint
from .metrics import BmodeImage
from .operator import ImageVec, RfFrame, SparseOperator

RF_MAGIC = b"PWRF"
RF_VERSION = 1
TENSOR_MAGIC = b"TNSR"
OPERATOR_MAGIC = b"PWH1"
FINGERPRINT_LEN = 32


def _take(buf: bytes, offset: int, count: int, what: str) -> tuple[bytes, int]:
    if offset + count > len(buf):
        raise FormatError(f"truncated while reading {what}", offset=offset)
    return buf[offset : offset + count], offset + count


# -- RF container -----------------------------------------------------------


@dataclass(frozen=True)
class RfMeta:
    """Header fields of a PWRF file."""

    num_elements: int
    num_samples: int
    sampling_rate: float
    angles: np.ndarray
    fingerprint: bytes


def write_rf(path, frames: list[RfFrame], acq: AcquisitionConfig) -> None:
    xdcr = acq.transducer
    shape = (xdcr.num_elements, xdcr.num_samples)
    for f in frames:
        if f.transducer_shape != shape:
            raise ShapeError(f"frame shape {f.transducer_shape} != {shape}")
    angles = np.array([f.angle for f in frames], dtype="<f8")
    header = RF_MAGIC + struct.pack(
        "<HIII d",
        RF_VERSION,
        len(frames),
        xdcr.num_elements,
        xdcr.num_samples,
        xdcr.sampling_rate,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(angles.tobytes())
        fh.write(acquisition_fingerprint(acq))
        for f in frames:
            fh.write(np.ascontiguousarray(f.data, dtype="<f4").tobytes())


def read_rf(path) -> tuple[list[RfFrame], RfMeta]:
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, off = _take(buf, 0, 4, "magic")
    if magic != RF_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {RF_MAGIC!r}", offset=0)
    raw, off = _take(buf, off, struct.calcsize("<HIII d"), "header")
    version, num_angles, n_el, n_samp, fs = struct.unpack("<HIII d", raw)
    if version != RF_VERSION:
        raise FormatError(f"unsupported PWRF version {version}", offset=4)
    raw, off = _take(buf, off, 8 * num_angles, "angle table")
    angles = np.frombuffer(raw, dtype="<f8")
    fingerprint, off = _take(buf, off, FINGERPRINT_LEN, "fingerprint")
    frames = []
    frame_len = n_el * n_samp
    for idx in range(num_angles):
        raw, off = _take(buf, off, 4 * frame_len, f"frame {idx} payload")
        data = np.frombuffer(raw, dtype="<f4").copy()
        frames.append(RfFrame((n_el, n_samp), float(angles[idx]), data))
    if off != len(buf):
        raise FormatError("trailing bytes after payload", offset=off)
    meta = RfMeta(n_el, n_samp, fs, angles.copy(), fingerprint)
    return frames, meta


# -- Tensor container / wire format ------------------------------------------


def encode_tensor(array: np.ndarray, sigma: float = 0.0) -> bytes:
    """Serialize an ndarray into a TNSR message."""
    array = np.asarray(array)
    parts = [TENSOR_MAGIC, struct.pack("<I", array.ndim)]
    parts.append(np.asarray(array.shape, dtype="<u8").tobytes())
    parts.append(struct.pack("<d", float(sigma)))
    parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_tensor(buf: bytes) -> tuple[np.ndarray, float]:
    """Parse a TNSR message into (float32 ndarray, sigma)."""
    magic, off = _take(buf, 0, 4, "magic")
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {TENSOR_MAGIC!r}", offset=0)
    raw, off = _take(buf, off, 4, "rank")
    (rank,) = struct.unpack("<I", raw)
    raw, off = _take(buf, off, 8 * rank, "dims")
    dims = np.frombuffer(raw, dtype="<u8").astype(np.int64)
    raw, off = _take(buf, off, 8, "sigma")
    (sigma,) = struct.unpack("<d", raw)
    count = int(np.prod(dims)) if rank else 1
    raw, off = _take(buf, off, 4 * count, "payload")
    data = np.frombuffer(raw, dtype="<f4").copy().reshape(tuple(dims))
    if off != len(buf):
        raise FormatError("trailing bytes after payload", offset=off)
    return data, sigma


def write_tensor(path, image: ImageVec, sigma: float = 0.0) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(image.as_image(), sigma))


def read_tensor(path, grid: ImagingGrid | None = None) -> ImageVec:
    """Load a rank-2 TNSR file.

    Without ``grid`` a unit-spacing grid is attached; pass the real grid
    when physical coordinates matter downstream.
    """
    with open(path, "rb") as fh:
        data, _sigma = decode_tensor(fh.read())
    if data.ndim != 2:
        raise FormatError(f"expected a rank-2 tensor, got rank {data.ndim}")
    if grid is None:
        grid = ImagingGrid(num_axial=data.shape[0], num_lateral=data.shape[1], dz=1.0, dx=1.0)
    elif grid.shape != data.shape:
        raise ShapeError(f"tensor shape {data.shape} != grid {grid.shape}")
    return ImageVec(grid, data.ravel())


# -- Sparse operator --------------------------------------------------------


def write_operator(path, op: SparseOperator) -> None:
    header = OPERATOR_MAGIC + struct.pack("<QQQd", op.rows, op.cols, op.nnz, op.angle)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(op.acquisition_fingerprint)
        fh.write(op.row_offsets.astype("<u8").tobytes())
        fh.write(op.col_indices.astype("<u4").tobytes())
        fh.write(op.values.astype("<f4").tobytes())


def read_operator(path, acq: AcquisitionConfig | None = None) -> SparseOperator:
    """Load a PWH1 operator; attaches ``acq`` after checking its fingerprint."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, off = _take(buf, 0, 4, "magic")
    if magic != OPERATOR_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {OPERATOR_MAGIC!r}", offset=0)
    raw, off = _take(buf, off, struct.calcsize("<QQQd"), "header")
    rows, cols, nnz, angle = struct.unpack("<QQQd", raw)
    fingerprint, off = _take(buf, off, FINGERPRINT_LEN, "fingerprint")
    raw, off = _take(buf, off, 8 * (rows + 1), "row_offsets")
    row_offsets = np.frombuffer(raw, dtype="<u8").astype(np.int64)
    raw, off = _take(buf, off, 4 * nnz, "col_indices")
    col_indices = np.frombuffer(raw, dtype="<u4").astype(np.int32)
    raw, off = _take(buf, off, 4 * nnz, "values")
    values = np.frombuffer(raw, dtype="<f4").copy()
    if off != len(buf):
        raise FormatError("trailing bytes after payload", offset=off)
    if acq is not None and acquisition_fingerprint(acq) != fingerprint:
        raise FormatError("operator fingerprint does not match the acquisition")
    return SparseOperator(
        rows=int(rows),
        cols=int(cols),
        row_offsets=row_offsets,
        col_indices=col_indices,
        values=values,
        angle=angle,
        acquisition_fingerprint=fingerprint,
        acquisition=acq,
    )


# -- Image export -------------------------------------------------------------


def export_pgm(bimg: BmodeImage, path) -> None:
    """8-bit binary P5 graymap; [-dynamic_range, 0] dB maps to [0, 255]."""
    db = bimg.as_image().astype(np.float64)
    dr = bimg.dynamic_range_db
    scaled = (db + dr) / dr * 255.0
    pixels = np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
