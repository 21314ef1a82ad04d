"""Plane-wave ultrasound toolkit.

Builds sparse time-of-flight measurement operators for steered plane-wave
transmits, simulates RF channel data from synthetic phantoms, reconstructs
images by delay-and-sum (single transmit or coherent compounding) or by a
Heun probability-flow diffusion sampler with optional data-consistency
guidance, and scores results with FWHM / CNR / gCNR.
"""

from .beamform import das_compound, das_single
from .edm import (
    Denoiser,
    ExternalDenoiser,
    GaussianPrior,
    GmmPrior,
    SamplerConfig,
    SigmaSchedule,
    denoise_gaussian,
    denoise_gmm,
    heun_sample,
    score,
    sigma_schedule,
)
from .errors import (
    ConfigError,
    DegenerateInputError,
    EchoPwError,
    ExternalDenoiserError,
    FormatError,
    MeasurementUndefinedError,
    ShapeError,
)
from .geometry import (
    AcquisitionConfig,
    ImagingGrid,
    PlaneWaveSequence,
    TransducerConfig,
    acquisition_fingerprint,
    rx_delay,
    sample_index,
    tx_delay,
)
from .guidance import GuidanceConfig, dc_gradient, guidance_step, lambda_schedule, tv_value_grad
from .io import (
    export_pgm,
    read_operator,
    read_rf,
    read_tensor,
    write_operator,
    write_rf,
    write_tensor,
)
from .metrics import CNR_FLOOR, BmodeImage, Roi, bmode, cnr, envelope, fwhm, gcnr
from .operator import (
    ImageVec,
    RfFrame,
    SparseOperator,
    apply_adjoint,
    apply_forward,
    build_measurement_matrix,
)
from .phantom import (
    NoiseModel,
    Scene,
    make_cyst_phantom,
    make_point_phantom,
    scene_from_description,
    simulate_rf,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionConfig",
    "BmodeImage",
    "CNR_FLOOR",
    "ConfigError",
    "DegenerateInputError",
    "Denoiser",
    "EchoPwError",
    "ExternalDenoiser",
    "ExternalDenoiserError",
    "FormatError",
    "GaussianPrior",
    "GmmPrior",
    "GuidanceConfig",
    "ImageVec",
    "ImagingGrid",
    "MeasurementUndefinedError",
    "NoiseModel",
    "PlaneWaveSequence",
    "RfFrame",
    "SamplerConfig",
    "Scene",
    "ShapeError",
    "SigmaSchedule",
    "SparseOperator",
    "TransducerConfig",
    "acquisition_fingerprint",
    "apply_adjoint",
    "apply_forward",
    "bmode",
    "build_measurement_matrix",
    "cnr",
    "das_compound",
    "das_single",
    "dc_gradient",
    "denoise_gaussian",
    "denoise_gmm",
    "envelope",
    "export_pgm",
    "fwhm",
    "gcnr",
    "guidance_step",
    "heun_sample",
    "lambda_schedule",
    "make_cyst_phantom",
    "make_point_phantom",
    "read_operator",
    "read_rf",
    "read_tensor",
    "rx_delay",
    "sample_index",
    "scene_from_description",
    "score",
    "sigma_schedule",
    "simulate_rf",
    "tx_delay",
    "write_operator",
    "write_rf",
    "write_tensor",
]
