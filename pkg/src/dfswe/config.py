"""Model configuration and latent-shape arithmetic for the multi-scale flow."""

from __future__ import annotations

from dataclasses import dataclass, asdict

from .errors import ConfigError

# Desk-scale reference configuration: small enough that CPU-only smoke
# training finishes in minutes.
DESK_IMAGE_SIZE = 32
DESK_LEVELS = 3
DESK_STEPS = 8
DESK_HIDDEN = 256


@dataclass(frozen=True)
class GlowConfig:
    """Architecture of one multi-scale invertible flow.

    channels/height/width describe the image the model consumes; `levels`
    is the number of squeeze/split scales, `steps_per_level` the number of
    flow steps between squeezes, `hidden_width` the channel width of the
    coupling networks, and `n_bits` the pixel bit depth the likelihood is
    referenced to.
    """

    channels: int
    height: int
    width: int
    levels: int = DESK_LEVELS
    steps_per_level: int = DESK_STEPS
    hidden_width: int = DESK_HIDDEN
    n_bits: int = 8

    def __post_init__(self) -> None:
        if self.channels < 1 or self.height < 1 or self.width < 1:
            raise ConfigError(f"image dims must be positive, got "
                              f"{self.channels}x{self.height}x{self.width}")
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if self.steps_per_level < 1:
            raise ConfigError(f"steps_per_level must be >= 1, got {self.steps_per_level}")
        if self.hidden_width < 1:
            raise ConfigError(f"hidden_width must be >= 1, got {self.hidden_width}")
        if not 1 <= self.n_bits <= 16:
            raise ConfigError(f"n_bits must be in [1, 16], got {self.n_bits}")
        factor = 2 ** self.levels
        if self.height % factor or self.width % factor:
            raise ConfigError(
                f"height and width must be divisible by 2^levels={factor}, "
                f"got {self.height}x{self.width}")

    @property
    def num_elements(self) -> int:
        return self.channels * self.height * self.width

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GlowConfig":
        return cls(**d)


def latent_shapes(config: GlowConfig) -> list[tuple[int, int, int]]:
    """Shapes of the latent blocks emitted by each level of the flow.

    Level i (< levels) has seen i squeezes (x4 channels, /2 per spatial
    side) and i-1 splits, and emits half its channels; the last level
    emits everything.  Element counts are D/2^i for i < levels and
    D/2^(levels-1) for the last block, D = channels*height*width.
    """
    shapes = []
    c, h, w = config.channels, config.height, config.width
    for level in range(1, config.levels + 1):
        c, h, w = c * 4, h // 2, w // 2
        if level < config.levels:
            shapes.append((c // 2, h, w))
            c //= 2
        else:
            shapes.append((c, h, w))
    return shapes
