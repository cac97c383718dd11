from .denoiser import Denoiser, DenoiserConfig
from .process import NoiseSchedule, build_schedule, forward_noise, posterior_mean, sample_members
from .training import diffusion_loss, infer, magnitude_tokens, sample_residuals, train_stage2

__all__ = [
    "Denoiser",
    "DenoiserConfig",
    "NoiseSchedule",
    "build_schedule",
    "diffusion_loss",
    "forward_noise",
    "infer",
    "magnitude_tokens",
    "posterior_mean",
    "sample_members",
    "sample_residuals",
    "train_stage2",
]
