"""Distortion-invariant feature training and multibit zero-watermarking.

Thin wrapper around the native module. Images are (128, 128, 3) float32
numpy arrays with values in [0, 1].
"""

from _zerowm import (  # noqa: F401
    FeatureExtractor,
    IntegrityError,
    NotFoundError,
    ParameterError,
    PreconditionError,
    RegistrationError,
    apply_distortion,
    bit_error_rate,
    cosine_similarity,
    extract_bits,
    init_checkpoint,
    photometric_suite,
    psnr,
    psnr_from_mse,
    register_image,
    sample_training_distortion,
    ssim,
    synth_dataset,
    synth_image,
    train_features,
)

__all__ = [
    "FeatureExtractor",
    "IntegrityError",
    "NotFoundError",
    "ParameterError",
    "PreconditionError",
    "RegistrationError",
    "apply_distortion",
    "bit_error_rate",
    "cosine_similarity",
    "extract_bits",
    "init_checkpoint",
    "photometric_suite",
    "psnr",
    "psnr_from_mse",
    "register_image",
    "sample_training_distortion",
    "ssim",
    "synth_dataset",
    "synth_image",
    "train_features",
]
