"""Noise schedule, denoiser interface, and the Heun probability-flow sampler.

The sampler integrates the variance-exploding probability-flow ODE
``dx/dsigma = (x - D(x; sigma)) / sigma`` (zero drift, unit scaling) from
``sigma_max`` down to 0 along a rho-warped noise ladder, taking Heun
(predictor-corrector) steps everywhere except the final step to zero, which
is plain Euler. A denoiser is anything with
``evaluate(x, sigma) -> denoised x``; the score follows as
``(D(x; sigma) - x) / sigma**2``.

Analytic Gaussian and Gaussian-mixture denoisers are provided as exact
references; a trained model can plug in through :class:`ExternalDenoiser`.
"""

from __future__ import annotations

import os
import selectors
import shlex
import subprocess
import time
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, ExternalDenoiserError, ShapeError
from .geometry import ImagingGrid
from .guidance import GuidanceConfig, guidance_step
from .io import TENSOR_MAGIC, decode_tensor, encode_tensor
from .operator import ImageVec

DEFAULT_SIGMA_MIN = 0.002
DEFAULT_SIGMA_MAX = 80.0
DEFAULT_RHO = 7.0
DEFAULT_NUM_STEPS = 50


@runtime_checkable
class Denoiser(Protocol):
    """Minimum-MSE denoiser contract: ``evaluate(x, 0)`` must return ``x``."""

    def evaluate(self, x: ImageVec, sigma: float) -> ImageVec: ...


@dataclass(frozen=True)
class SigmaSchedule:
    """Decreasing noise ladder ``sigma_0 .. sigma_N`` with ``sigma_N = 0``."""

    levels: np.ndarray
    rho: float
    sigma_min: float
    sigma_max: float

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        object.__setattr__(self, "levels", levels)
        if levels.ndim != 1 or levels.size < 2:
            raise ConfigError("schedule needs at least two levels")
        if levels[-1] != 0.0:
            raise ConfigError("last level must be exactly 0")
        if not np.all(np.isfinite(levels)):
            raise ConfigError("levels must be finite")
        if np.any(np.diff(levels) >= 0):
            raise ConfigError("levels must be strictly decreasing")

    @property
    def num_steps(self) -> int:
        return self.levels.size - 1


def sigma_schedule(
    n_steps: int,
    sigma_min: float = DEFAULT_SIGMA_MIN,
    sigma_max: float = DEFAULT_SIGMA_MAX,
    rho: float = DEFAULT_RHO,
) -> SigmaSchedule:
    """Rho-warped ladder from ``sigma_max`` down to ``sigma_min``, plus a
    terminal zero.

    ``levels[i] = (sigma_max^(1/rho)
                   + i/(N-1) * (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho``
    for ``i in [0, N)``; the endpoints are pinned to ``sigma_max`` and
    ``sigma_min`` exactly. ``n_steps == 1`` degenerates to
    ``[sigma_max, 0]``.
    """
    if n_steps < 1:
        raise ConfigError(f"n_steps must be >= 1, got {n_steps}")
    if not (0 < sigma_min < sigma_max):
        raise ConfigError(
            f"need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}"
        )
    if rho <= 0:
        raise ConfigError(f"rho must be > 0, got {rho}")
    if n_steps == 1:
        levels = np.array([sigma_max, 0.0])
    else:
        i = np.arange(n_steps, dtype=np.float64)
        hi = sigma_max ** (1.0 / rho)
        lo = sigma_min ** (1.0 / rho)
        levels = (hi + i / (n_steps - 1) * (lo - hi)) ** rho
        levels[0] = sigma_max
        levels[-1] = sigma_min
        levels = np.append(levels, 0.0)
    return SigmaSchedule(levels, float(rho), float(sigma_min), float(sigma_max))


# -- Analytic priors ---------------------------------------------------------


def _broadcast_variance(variance, n: int) -> np.ndarray:
    v = np.asarray(variance, dtype=np.float64)
    if v.ndim == 0:
        v = np.full(n, float(v))
    if v.shape != (n,):
        raise ShapeError(f"variance has shape {v.shape}, expected ({n},)")
    if np.any(v < 0):
        raise ConfigError("variance must be >= 0 everywhere")
    return v


@dataclass
class GaussianPrior:
    """Diagonal Gaussian prior; its posterior-mean denoiser is closed form."""

    mean: ImageVec
    variance: np.ndarray

    def __post_init__(self):
        self.variance = _broadcast_variance(self.variance, self.mean.grid.num_pixels)

    def evaluate(self, x: ImageVec, sigma: float) -> ImageVec:
        return denoise_gaussian(x, sigma, self)


@dataclass
class GmmPrior:
    """Pixel-wise Gaussian mixture prior: list of (weight, mean, variance)."""

    components: list[tuple[float, ImageVec, np.ndarray]]

    def __post_init__(self):
        if not self.components:
            raise ConfigError("mixture needs at least one component")
        n = self.components[0][1].grid.num_pixels
        weights = np.array([w for w, _, _ in self.components], dtype=np.float64)
        if np.any(weights <= 0):
            raise ConfigError("mixture weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigError(f"mixture weights sum to {weights.sum()}, expected 1")
        normalized = []
        for w, mean, var in self.components:
            if mean.grid.num_pixels != n:
                raise ShapeError("mixture component grids disagree")
            normalized.append((float(w), mean, _broadcast_variance(var, n)))
        self.components = normalized

    def evaluate(self, x: ImageVec, sigma: float) -> ImageVec:
        return denoise_gmm(x, sigma, self)


def denoise_gaussian(x: ImageVec, sigma: float, prior: GaussianPrior) -> ImageVec:
    """Exact posterior mean under a diagonal Gaussian prior:
    ``mu + v / (v + sigma^2) * (x - mu)``."""
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    if x.grid.num_pixels != prior.mean.grid.num_pixels:
        raise ShapeError("image and prior grids disagree")
    if sigma == 0:
        return ImageVec(x.grid, x.data.copy())
    mu = prior.mean.data.astype(np.float64)
    v = prior.variance
    out = mu + v / (v + sigma**2) * (x.data - mu)
    return ImageVec(x.grid, out.astype(x.data.dtype, copy=False))


def denoise_gmm(x: ImageVec, sigma: float, prior: GmmPrior) -> ImageVec:
    """Exact posterior mean under a pixel-wise Gaussian mixture.

    Responsibilities are computed per pixel in log space (log-sum-exp), so
    far-out inputs never underflow to an error.
    """
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return ImageVec(x.grid, x.data.copy())
    xd = x.data.astype(np.float64)
    n_comp = len(prior.components)
    log_post = np.empty((n_comp, xd.size))
    cond_mean = np.empty((n_comp, xd.size))
    for k, (w, mean, v) in enumerate(prior.components):
        mu = mean.data.astype(np.float64)
        s2 = v + sigma**2
        log_post[k] = np.log(w) - 0.5 * (np.log(2.0 * np.pi * s2) + (xd - mu) ** 2 / s2)
        cond_mean[k] = mu + v / s2 * (xd - mu)
    log_post -= logsumexp(log_post, axis=0, keepdims=True)
    out = np.sum(np.exp(log_post) * cond_mean, axis=0)
    return ImageVec(x.grid, out.astype(x.data.dtype, copy=False))


def score(x: ImageVec, sigma: float, d: Denoiser) -> ImageVec:
    """Noise-level score estimate ``(D(x; sigma) - x) / sigma^2``."""
    if sigma <= 0:
        raise ConfigError(f"score requires sigma > 0, got {sigma}")
    denoised = d.evaluate(x, sigma)
    out = (denoised.data.astype(np.float64) - x.data) / sigma**2
    return ImageVec(x.grid, out.astype(x.data.dtype, copy=False))


# -- Sampler ------------------------------------------------------------------


@dataclass
class SamplerConfig:
    """Schedule + seed, with optional data-consistency guidance."""

    schedule: SigmaSchedule
    seed: int = 0
    guidance: GuidanceConfig | None = None


def heun_sample(denoiser: Denoiser, cfg: SamplerConfig, grid: ImagingGrid) -> ImageVec:
    """Draw one image by integrating the probability-flow ODE.

    Starts from ``N(0, sigma_0^2 I)`` noise keyed by ``cfg.seed`` (Philox
    counter-based stream, row-major order) and walks the schedule with Heun
    steps, falling back to Euler on the final step to sigma = 0. When
    guidance is configured, the consistency correction runs after each
    completed step. Integration is float64 internally; the result is cast
    to float32. Fixed seed means bit-identical output.
    """
    levels = cfg.schedule.levels
    n_steps = cfg.schedule.num_steps
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    x = rng.standard_normal(grid.num_pixels) * levels[0]

    for i in range(n_steps):
        sig_cur, sig_nxt = levels[i], levels[i + 1]
        denoised = denoiser.evaluate(ImageVec(grid, x), sig_cur)
        d_cur = (x - denoised.data.astype(np.float64)) / sig_cur
        x_euler = x + (sig_nxt - sig_cur) * d_cur
        if sig_nxt > 0:
            denoised = denoiser.evaluate(ImageVec(grid, x_euler), sig_nxt)
            d_prime = (x_euler - denoised.data.astype(np.float64)) / sig_nxt
            x = x + (sig_nxt - sig_cur) * 0.5 * (d_cur + d_prime)
        else:
            x = x_euler
        if cfg.guidance is not None:
            x = guidance_step(ImageVec(grid, x), cfg.guidance, i, n_steps).data

    return ImageVec(grid, x.astype(np.float32))


# -- External denoiser seam ----------------------------------------------------


class ExternalDenoiser:
    """Denoiser backed by a child process speaking the TNSR wire format.

    Each ``evaluate`` writes one TNSR request (image + sigma) to the child's
    stdin and expects one TNSR reply of the same shape on its stdout.
    Timeouts, early exits, and malformed replies raise
    :class:`ExternalDenoiserError`. Use as a context manager or call
    :meth:`close` to reap the child.
    """

    def __init__(self, command, timeout: float = 30.0):
        if isinstance(command, str):
            command = shlex.split(command)
        if not command:
            raise ConfigError("external denoiser command is empty")
        self.command = list(command)
        self.timeout = float(timeout)
        self._proc: subprocess.Popen | None = None

    def _ensure_running(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                )
            except OSError as err:
                raise ExternalDenoiserError(f"cannot launch {self.command}: {err}") from err
        return self._proc

    def _fail(self, message: str) -> ExternalDenoiserError:
        proc = self._proc
        self.close()
        detail = ""
        if proc is not None and proc.returncode not in (None, 0):
            detail = f" (exit code {proc.returncode})"
        return ExternalDenoiserError(message + detail)

    def _read_exact(self, count: int, deadline: float) -> bytes:
        proc = self._proc
        assert proc is not None and proc.stdout is not None
        fd = proc.stdout.fileno()
        out = bytearray()
        with selectors.DefaultSelector() as sel:
            sel.register(fd, selectors.EVENT_READ)
            while len(out) < count:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    proc.kill()
                    raise self._fail("external denoiser timed out")
                if not sel.select(remaining):
                    continue
                chunk = os.read(fd, count - len(out))
                if not chunk:
                    proc.wait(timeout=1.0)
                    raise self._fail("external denoiser closed its output early")
                out.extend(chunk)
        return bytes(out)

    def evaluate(self, x: ImageVec, sigma: float) -> ImageVec:
        proc = self._ensure_running()
        request = encode_tensor(x.as_image(), sigma)
        try:
            proc.stdin.write(request)
            proc.stdin.flush()
        except (BrokenPipeError, OSError):
            proc.wait(timeout=1.0)
            raise self._fail("external denoiser closed its input")

        deadline = time.monotonic() + self.timeout
        head = self._read_exact(8, deadline)
        if head[:4] != TENSOR_MAGIC:
            raise self._fail(f"bad reply magic {head[:4]!r}")
        rank = int.from_bytes(head[4:8], "little")
        dims_raw = self._read_exact(8 * rank, deadline)
        dims = np.frombuffer(dims_raw, dtype="<u8")
        payload_len = 8 + 4 * int(np.prod(dims)) if rank else 12
        tail = self._read_exact(payload_len, deadline)
        arr, _sigma = decode_tensor(head + dims_raw + tail)
        if arr.shape != x.grid.shape:
            raise self._fail(f"reply shape {arr.shape} != image shape {x.grid.shape}")
        return ImageVec(x.grid, arr.ravel())

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        for stream in (proc.stdin, proc.stdout):
            if stream is not None:
                try:
                    stream.close()
                except OSError:
                    pass
        if proc.poll() is None:
            proc.kill()
        proc.wait()

    def __enter__(self) -> "ExternalDenoiser":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
