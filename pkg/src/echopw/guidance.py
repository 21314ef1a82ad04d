"""Data-consistency guidance for the diffusion sampler.

After each sampler step the current image is nudged down the gradient of a
residual objective against the observed RF frame,

    x <- x - lambda_i * (grad_residual(x) + alpha * grad_tv(x)),

where ``lambda_i`` follows a sine schedule that vanishes at both ends of the
sampling trajectory (the early iterates are nearly pure noise, so a strong
pull there would only amplify solver error). Residual modes:

* ``"norm"``: objective ||Hx - y||_2, gradient ``H^T r / ||r||``.
* ``"squared"``: objective (1/2) ||Hx - y||_2^2, gradient ``H^T r``
  (the 1/2 is absorbed into lambda).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .operator import ImageVec, RfFrame, SparseOperator

RESIDUAL_MODES = ("norm", "squared")
REGULARIZERS = ("none", "total_variation")

# Residual norms below this are treated as exactly consistent in norm mode.
_NORM_FLOOR = 1e-12


@dataclass
class GuidanceConfig:
    """Weights and choices for the per-step data-consistency correction."""

    operator: SparseOperator
    observed: RfFrame
    lambda_max: float = 1.0
    lambda_min: float = 0.0
    alpha: float = 0.0
    residual_mode: str = "norm"
    regularizer: str = "none"
    tv_epsilon: float = 1e-6

    def __post_init__(self):
        if self.lambda_max < 0 or self.lambda_min < 0:
            raise ConfigError("lambda bounds must be nonnegative")
        if self.lambda_min > self.lambda_max:
            raise ConfigError(
                f"lambda_min ({self.lambda_min}) must be <= lambda_max ({self.lambda_max})"
            )
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.tv_epsilon <= 0:
            raise ConfigError(f"tv_epsilon must be > 0, got {self.tv_epsilon}")
        if self.residual_mode not in RESIDUAL_MODES:
            raise ConfigError(f"residual_mode must be one of {RESIDUAL_MODES}")
        if self.regularizer not in REGULARIZERS:
            raise ConfigError(f"regularizer must be one of {REGULARIZERS}")
        if self.observed.data.size != self.operator.rows:
            raise ShapeError(
                f"observed rf has {self.observed.data.size} samples, "
                f"operator expects {self.operator.rows}"
            )


def lambda_schedule(step: int, n_steps: int, cfg: GuidanceConfig) -> float:
    """Sine-varying consistency weight, zero-anchored at both ends.

    ``lambda_i = lambda_min + (lambda_max - lambda_min) * sin(pi * i / (N - 1))``;
    a single-step schedule returns ``lambda_max``.
    """
    if not 0 <= step < n_steps:
        raise ConfigError(f"step {step} outside [0, {n_steps})")
    if n_steps == 1:
        return cfg.lambda_max
    s = math.sin(math.pi * step / (n_steps - 1))
    return cfg.lambda_min + (cfg.lambda_max - cfg.lambda_min) * s


def dc_gradient(cfg: GuidanceConfig, x: ImageVec) -> tuple[ImageVec, float]:
    """Gradient of the residual objective at ``x`` and the residual norm."""
    if x.grid.num_pixels != cfg.operator.cols:
        raise ShapeError(
            f"image has {x.grid.num_pixels} pixels, operator expects {cfg.operator.cols}"
        )
    csr = cfg.operator.to_csr()
    r = csr @ x.data - cfg.observed.data
    rnorm = float(np.linalg.norm(r))
    if cfg.residual_mode == "norm":
        if rnorm < _NORM_FLOOR:
            return ImageVec(x.grid, np.zeros_like(x.data)), rnorm
        g = (csr.T @ r) / rnorm
    else:
        g = csr.T @ r
    return ImageVec(x.grid, g.astype(x.data.dtype, copy=False)), rnorm


def tv_value_grad(x: ImageVec, epsilon: float) -> tuple[float, ImageVec]:
    """Smoothed isotropic total variation and its exact gradient.

    ``R(x) = sum_p sqrt(dx_p^2 + dz_p^2 + eps^2)`` with forward differences
    and Neumann boundaries (differences past an edge are zero). The gradient
    is the exact derivative of this functional, so it sums to zero.
    """
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    img = x.as_image().astype(np.float64)
    dz = np.zeros_like(img)
    dx = np.zeros_like(img)
    dz[:-1, :] = img[1:, :] - img[:-1, :]
    dx[:, :-1] = img[:, 1:] - img[:, :-1]
    t = np.sqrt(dz**2 + dx**2 + epsilon**2)
    value = float(t.sum())

    grad = -(dz + dx) / t
    grad[1:, :] += dz[:-1, :] / t[:-1, :]
    grad[:, 1:] += dx[:, :-1] / t[:, :-1]
    return value, ImageVec(x.grid, grad.ravel().astype(x.data.dtype, copy=False))


def guidance_step(x: ImageVec, cfg: GuidanceConfig, step: int, n_steps: int) -> ImageVec:
    """One explicit gradient step against the consistency objective."""
    lam = lambda_schedule(step, n_steps, cfg)
    if lam == 0.0:
        return x
    g, _ = dc_gradient(cfg, x)
    total = g.data
    if cfg.regularizer == "total_variation" and cfg.alpha > 0:
        _, tv_g = tv_value_grad(x, cfg.tv_epsilon)
        total = total + cfg.alpha * tv_g.data
    return ImageVec(x.grid, (x.data - lam * total).astype(x.data.dtype, copy=False))
