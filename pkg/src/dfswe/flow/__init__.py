from .model import (
    GlowModel,
    GlowNet,
    LatentStack,
    identity_model,
    random_model,
    sample_latents,
    validate_parameters,
)

__all__ = [
    "GlowModel",
    "GlowNet",
    "LatentStack",
    "identity_model",
    "random_model",
    "sample_latents",
    "validate_parameters",
]
