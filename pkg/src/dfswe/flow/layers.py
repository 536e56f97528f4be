"""Invertible layers: actnorm, LU-parameterized 1x1 channel mixing, affine
coupling, and the checkerboard squeeze. Follows the standard Glow recipe
(Kingma & Dhariwal, 2018), with the channel-mixing matrix kept in LU form so
its log-determinant is a sum of log diagonals.

Every layer is exactly invertible; `forward` returns (y, per-sample logdet)
and `inverse` undoes it. Parameters are initialized from an explicit numpy
Generator so construction is reproducible without ambient RNG state.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import torch
from torch import nn
from torch.nn import functional as F

# Bias offset that saturates sigmoid(x + 2) to exactly 1.0 in float32; used
# to build exact-identity couplings.
SCALE_SATURATION = 30.0


def squeeze2d(x: torch.Tensor) -> torch.Tensor:
    """(B, C, H, W) -> (B, 4C, H/2, W/2), grouping each 2x2 patch into channels."""
    b, c, h, w = x.shape
    x = x.view(b, c, h // 2, 2, w // 2, 2)
    x = x.permute(0, 1, 3, 5, 2, 4).contiguous()
    return x.view(b, 4 * c, h // 2, w // 2)


def unsqueeze2d(x: torch.Tensor) -> torch.Tensor:
    b, c, h, w = x.shape
    x = x.view(b, c // 4, 2, 2, h, w)
    x = x.permute(0, 1, 4, 2, 5, 3).contiguous()
    return x.view(b, c // 4, 2 * h, 2 * w)


class ActNorm(nn.Module):
    """Per-channel affine normalization: y = (x - bias) * exp(log_scale).

    Scales are stored in log space so they can never reach zero. The
    data-dependent initialization is an explicit training-time call, not a
    side effect of forward, so loaded models stay pure.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.bias = nn.Parameter(torch.zeros(1, channels, 1, 1))
        self.log_scale = nn.Parameter(torch.zeros(1, channels, 1, 1))
        self.register_buffer("initialized", torch.zeros((), dtype=torch.uint8))

    @torch.no_grad()
    def initialize_from(self, x: torch.Tensor) -> None:
        mean = x.mean(dim=(0, 2, 3), keepdim=True)
        std = x.std(dim=(0, 2, 3), keepdim=True, unbiased=False).clamp_min(1e-6)
        self.bias.copy_(mean)
        self.log_scale.copy_(-torch.log(std))
        self.initialized.fill_(1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        y = (x - self.bias) * torch.exp(self.log_scale)
        ld = self.log_scale.sum() * x.shape[2] * x.shape[3]
        return y, ld.expand(x.shape[0])

    def inverse(self, y: torch.Tensor) -> torch.Tensor:
        return y * torch.exp(-self.log_scale) + self.bias


class Invertible1x1Conv(nn.Module):
    """Channel mixing by an invertible matrix W = P L (U + diag(sign * e^s)).

    P is a fixed permutation; L and U hold the free triangular entries. The
    diagonal is sign * exp(log_s), so invertibility cannot be lost during
    training and log|det W| = sum(log_s).
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        q, _ = np.linalg.qr(rng.standard_normal((channels, channels)))
        p, lower, upper = scipy.linalg.lu(q.astype(np.float64))
        s = np.diag(upper).copy()
        upper = np.triu(upper, k=1)

        self.register_buffer("perm", torch.from_numpy(p).float())
        self.register_buffer("sign_s", torch.from_numpy(np.sign(s)).float())
        self.lower = nn.Parameter(torch.from_numpy(np.tril(lower, k=-1)).float())
        self.upper = nn.Parameter(torch.from_numpy(upper).float())
        self.log_s = nn.Parameter(torch.from_numpy(np.log(np.abs(s))).float())
        eye = torch.eye(channels)
        self.register_buffer("l_mask", torch.tril(torch.ones(channels, channels), -1))
        self.register_buffer("eye", eye)

    def _weight(self) -> torch.Tensor:
        lower = self.lower * self.l_mask + self.eye
        upper = self.upper * self.l_mask.t() + torch.diag(self.sign_s * torch.exp(self.log_s))
        return self.perm @ lower @ upper

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        w = self._weight()
        y = F.conv2d(x, w.unsqueeze(-1).unsqueeze(-1))
        ld = self.log_s.sum() * x.shape[2] * x.shape[3]
        return y, ld.expand(x.shape[0])

    def inverse(self, y: torch.Tensor) -> torch.Tensor:
        w_inv = torch.linalg.inv(self._weight().double()).to(y.dtype)
        return F.conv2d(y, w_inv.unsqueeze(-1).unsqueeze(-1))


class CouplingNet(nn.Module):
    """3x3 / 1x1 / 3x3 conv stack; the last layer starts at zero so a fresh
    coupling is a near-identity map."""

    def __init__(self, in_channels: int, hidden_width: int, out_channels: int,
                 rng: np.random.Generator):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, hidden_width, 3, padding=1)
        self.conv2 = nn.Conv2d(hidden_width, hidden_width, 1)
        self.conv3 = nn.Conv2d(hidden_width, out_channels, 3, padding=1)
        for conv in (self.conv1, self.conv2):
            w = rng.normal(0.0, 0.05, size=conv.weight.shape)
            with torch.no_grad():
                conv.weight.copy_(torch.from_numpy(w).float())
                conv.bias.zero_()
        with torch.no_grad():
            self.conv3.weight.zero_()
            self.conv3.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.conv1(x))
        h = F.relu(self.conv2(h))
        return self.conv3(h)


class AffineCoupling(nn.Module):
    """Affine coupling over a channel split.

    The first half passes through and parameterizes shift and scale for the
    second half; scale = sigmoid(raw + 2) keeps the map contractive and well
    away from zero.
    """

    def __init__(self, channels: int, hidden_width: int, rng: np.random.Generator):
        super().__init__()
        self.net = CouplingNet(channels // 2, hidden_width, channels, rng)

    def _shift_scale(self, xa: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        shift, raw = self.net(xa).chunk(2, dim=1)
        return shift, torch.sigmoid(raw + 2.0)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        xa, xb = x.chunk(2, dim=1)
        shift, scale = self._shift_scale(xa)
        yb = (xb + shift) * scale
        ld = torch.log(scale).flatten(1).sum(dim=1)
        return torch.cat([xa, yb], dim=1), ld

    def inverse(self, y: torch.Tensor) -> torch.Tensor:
        ya, yb = y.chunk(2, dim=1)
        shift, scale = self._shift_scale(ya)
        xb = yb / scale - shift
        return torch.cat([ya, xb], dim=1)


class FlowStep(nn.Module):
    """One flow step: actnorm -> channel mixing -> affine coupling."""

    def __init__(self, channels: int, hidden_width: int, rng: np.random.Generator):
        super().__init__()
        self.actnorm = ActNorm(channels)
        self.mix = Invertible1x1Conv(channels, rng)
        self.coupling = AffineCoupling(channels, hidden_width, rng)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x, ld1 = self.actnorm(x)
        x, ld2 = self.mix(x)
        x, ld3 = self.coupling(x)
        return x, ld1 + ld2 + ld3

    def inverse(self, y: torch.Tensor) -> torch.Tensor:
        y = self.coupling.inverse(y)
        y = self.mix.inverse(y)
        return self.actnorm.inverse(y)
