"""The multi-scale invertible model and its public, numpy-facing surface.

A `GlowNet` is the torch module (used directly by training); a `GlowModel`
wraps a frozen net and exposes pure forward/inverse/likelihood/generate
calls over numpy arrays. Latent stacks are plain lists of float32 arrays,
one per level, shaped as `latent_shapes(config)` dictates.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from ..config import GlowConfig, latent_shapes
from ..errors import DataError, ModelError
from ..images import MODEL, ImageTensor, quantize
from .layers import SCALE_SATURATION, FlowStep, squeeze2d, unsqueeze2d

LatentStack = list[np.ndarray]

LOG2PI = math.log(2.0 * math.pi)


class GlowNet(nn.Module):
    """Squeeze -> K flow steps -> split, repeated over `levels` scales."""

    def __init__(self, config: GlowConfig, seed: int = 0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        levels = []
        c = config.channels
        for level in range(config.levels):
            c *= 4
            steps = nn.ModuleList(
                FlowStep(c, config.hidden_width, rng)
                for _ in range(config.steps_per_level))
            levels.append(steps)
            if level < config.levels - 1:
                c //= 2
        self.levels = nn.ModuleList(levels)

    def encode(self, x: torch.Tensor,
               check_finite: bool = False) -> tuple[list[torch.Tensor], torch.Tensor]:
        zs: list[torch.Tensor] = []
        logdet = torch.zeros(x.shape[0], dtype=x.dtype, device=x.device)
        h = x
        for i, steps in enumerate(self.levels):
            h = squeeze2d(h)
            for j, step in enumerate(steps):
                h, ld = step(h)
                logdet = logdet + ld
                if check_finite and not torch.isfinite(h).all():
                    raise ModelError(
                        f"non-finite activations after level {i + 1} step {j + 1}")
            if i < len(self.levels) - 1:
                z, h = h.chunk(2, dim=1)
                zs.append(z)
            else:
                zs.append(h)
        if check_finite and not torch.isfinite(logdet).all():
            raise ModelError("non-finite log-determinant")
        return zs, logdet

    @torch.no_grad()
    def initialize_actnorm(self, x: torch.Tensor) -> None:
        """Data-dependent init: give each actnorm the per-channel moments of
        its actual input on this batch. No-op for already-initialized layers."""
        h = x
        for i, steps in enumerate(self.levels):
            h = squeeze2d(h)
            for step in steps:
                if not bool(step.actnorm.initialized.item()):
                    step.actnorm.initialize_from(h)
                h, _ = step(h)
            if i < len(self.levels) - 1:
                _, h = h.chunk(2, dim=1)

    def decode(self, zs: list[torch.Tensor]) -> torch.Tensor:
        h = zs[-1]
        for i in reversed(range(len(self.levels))):
            if i < len(self.levels) - 1:
                h = torch.cat([zs[i], h], dim=1)
            for step in reversed(self.levels[i]):
                h = step.inverse(h)
            h = unsqueeze2d(h)
        return h

    def log_likelihood(self, x: torch.Tensor,
                       check_finite: bool = False) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-sample (nats, bits-per-dim) under the standard-normal prior.

        bits/dim folds in the 1/2^n_bits input scaling so values are
        comparable across bit depths.
        """
        zs, logdet = self.encode(x, check_finite=check_finite)
        b = x.shape[0]
        log_pz = torch.zeros_like(logdet)
        for z in zs:
            flat = z.reshape(b, -1)
            log_pz = log_pz - 0.5 * (flat ** 2 + LOG2PI).sum(dim=1)
        nats = log_pz + logdet
        d = self.config.num_elements
        bpd = -nats / (d * math.log(2.0)) + self.config.n_bits
        return nats, bpd


class GlowModel:
    """An immutable, loaded flow. All methods are pure and thread-safe."""

    def __init__(self, net: GlowNet):
        net.eval()
        for p in net.parameters():
            p.requires_grad_(False)
        self._net = net
        self.config = net.config
        validate_parameters(net)

    @classmethod
    def create(cls, config: GlowConfig, seed: int = 0) -> "GlowModel":
        return cls(GlowNet(config, seed))

    @property
    def net(self) -> GlowNet:
        return self._net

    def _check_image(self, img: ImageTensor) -> torch.Tensor:
        if img.domain != MODEL:
            raise DataError("flow input must be a model-space image")
        expected = (self.config.channels, self.config.height, self.config.width)
        if img.shape != expected:
            raise DataError(f"image shape {img.shape} does not match model {expected}")
        if not np.isfinite(img.pixels).all():
            raise DataError("non-finite pixels in flow input")
        return torch.from_numpy(np.ascontiguousarray(img.pixels, dtype=np.float32)).unsqueeze(0)

    def _check_stack(self, zs: LatentStack) -> list[torch.Tensor]:
        shapes = latent_shapes(self.config)
        if len(zs) != len(shapes):
            raise DataError(f"expected {len(shapes)} latent blocks, got {len(zs)}")
        out = []
        for i, (z, shape) in enumerate(zip(zs, shapes)):
            if tuple(z.shape) != shape:
                raise DataError(f"latent block {i} has shape {tuple(z.shape)}, expected {shape}")
            out.append(torch.from_numpy(np.ascontiguousarray(z, dtype=np.float32)).unsqueeze(0))
        return out

    def forward(self, img: ImageTensor) -> tuple[LatentStack, float]:
        """Image (model space) -> latent stack plus accumulated log|det df/dx|."""
        x = self._check_image(img)
        with torch.no_grad():
            zs, logdet = self._net.encode(x)
        return [z.squeeze(0).numpy() for z in zs], float(logdet.item())

    def inverse(self, zs: LatentStack) -> ImageTensor:
        """Latent stack -> model-space image (exact inverse of forward)."""
        ts = self._check_stack(zs)
        with torch.no_grad():
            x = self._net.decode(ts)
        return ImageTensor(x.squeeze(0).numpy(), MODEL)

    def log_likelihood(self, img: ImageTensor) -> tuple[float, float]:
        x = self._check_image(img)
        with torch.no_grad():
            nats, bpd = self._net.log_likelihood(x, check_finite=True)
        return float(nats.item()), float(bpd.item())

    def generate(self, zs: LatentStack, bit_depth: int | None = None) -> ImageTensor:
        """Decode latents and quantize to an output image."""
        if bit_depth is None:
            bit_depth = self.config.n_bits
        return quantize(self.inverse(zs), bit_depth)


def sample_latents(config: GlowConfig, temperature: float, seed: int) -> LatentStack:
    """A latent stack with every element i.i.d. N(0, temperature^2)."""
    if temperature < 0:
        raise DataError(f"temperature must be >= 0, got {temperature}")
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(shape, dtype=np.float32) * np.float32(temperature)
            for shape in latent_shapes(config)]


def validate_parameters(net: GlowNet) -> None:
    """Reject corrupt model state before it can break invertibility."""
    for name, p in net.state_dict().items():
        if not torch.isfinite(p).all():
            raise ModelError(f"model corruption: non-finite values in {name}")
        if name.endswith("actnorm.log_scale") and (p.exp() == 0).any():
            raise ModelError(f"model corruption: zero actnorm scale in {name}")
        if name.endswith("mix.log_s") and (p.exp() == 0).any():
            raise ModelError(f"model corruption: singular channel mixing in {name}")


def identity_model(config: GlowConfig) -> GlowModel:
    """A model whose every layer is the exact identity (logdet 0).

    The coupling scale bias is pushed into sigmoid saturation so the scale
    is exactly 1.0 in float32.
    """
    net = GlowNet(config, seed=0)
    with torch.no_grad():
        for steps in net.levels:
            for step in steps:
                step.actnorm.bias.zero_()
                step.actnorm.log_scale.zero_()
                c = step.mix.perm.shape[0]
                step.mix.perm.copy_(torch.eye(c))
                step.mix.sign_s.fill_(1.0)
                step.mix.lower.zero_()
                step.mix.upper.zero_()
                step.mix.log_s.zero_()
                for conv in (step.coupling.net.conv1,
                             step.coupling.net.conv2,
                             step.coupling.net.conv3):
                    conv.weight.zero_()
                    conv.bias.zero_()
                half = step.coupling.net.conv3.out_channels // 2
                step.coupling.net.conv3.bias[half:].fill_(SCALE_SATURATION)
    return GlowModel(net)


def random_model(config: GlowConfig, seed: int) -> GlowModel:
    """A model with random (non-identity) parameters everywhere; used to
    exercise log-det and persistence on non-trivial weights."""
    net = GlowNet(config, seed=seed)
    rng = np.random.default_rng(seed + 1)

    def randomize(t: torch.Tensor, scale: float) -> None:
        t.copy_(torch.from_numpy(rng.normal(0.0, scale, size=tuple(t.shape))).float())

    with torch.no_grad():
        for steps in net.levels:
            for step in steps:
                randomize(step.actnorm.bias, 0.2)
                randomize(step.actnorm.log_scale, 0.2)
                randomize(step.coupling.net.conv3.weight, 0.05)
                randomize(step.coupling.net.conv3.bias, 0.1)
    return GlowModel(net)
