"""Declarative 3D U-Net architecture and its layer inventory."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

from ..errors import DescriptorError

NORMS = ("instance", "none")


@dataclass(frozen=True)
class ArchDescriptor:
    """Encoder/decoder U-Net with max-pool downsampling and 2x2x2 transposed-conv upsampling.

    Each stage runs ``convs_per_stage`` blocks of conv -> norm -> leaky ReLU;
    channel width doubles at every stage.
    """

    channels: tuple
    in_channels: int = 2
    out_channels: int = 2
    kernel: int = 3
    convs_per_stage: int = 2
    norm: str = "instance"
    negative_slope: float = 0.01

    def __post_init__(self):
        ch = tuple(int(c) for c in self.channels)
        object.__setattr__(self, "channels", ch)
        if len(ch) < 2:
            raise DescriptorError(f"a U-Net needs at least 2 stages, got {len(ch)}")
        if ch[0] < 1:
            raise DescriptorError(f"channel counts must be positive, got {ch}")
        for a, b in zip(ch, ch[1:]):
            if b != 2 * a:
                raise DescriptorError(f"channels must double at each stage, got {ch}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise DescriptorError("in_channels and out_channels must be >= 1")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise DescriptorError(f"kernel must be odd and positive, got {self.kernel}")
        if self.convs_per_stage < 1:
            raise DescriptorError("convs_per_stage must be >= 1")
        if self.norm not in NORMS:
            raise DescriptorError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if not (math.isfinite(self.negative_slope) and self.negative_slope >= 0):
            raise DescriptorError(f"negative_slope must be finite and >= 0, got {self.negative_slope}")

    @property
    def num_stages(self):
        return len(self.channels)

    @property
    def divisor(self):
        """Spatial sizes must be multiples of this."""
        return 2 ** (self.num_stages - 1)

    def to_text(self):
        return ";".join(
            [
                "unet3d",
                f"stages={self.num_stages}",
                "channels=" + ",".join(str(c) for c in self.channels),
                f"in={self.in_channels}",
                f"out={self.out_channels}",
                f"kernel={self.kernel}",
                f"convs={self.convs_per_stage}",
                f"norm={self.norm}",
                f"slope={self.negative_slope!r}",
            ]
        )

    @classmethod
    def from_text(cls, text):
        parts = text.strip().split(";")
        if not parts or parts[0] != "unet3d":
            raise DescriptorError(f"not a unet3d descriptor: {text!r}")
        try:
            fields = dict(p.split("=", 1) for p in parts[1:])
            desc = cls(
                channels=tuple(int(c) for c in fields["channels"].split(",")),
                in_channels=int(fields["in"]),
                out_channels=int(fields["out"]),
                kernel=int(fields["kernel"]),
                convs_per_stage=int(fields["convs"]),
                norm=fields["norm"],
                negative_slope=float(fields["slope"]),
            )
            stages = int(fields["stages"])
        except (KeyError, ValueError) as exc:
            raise DescriptorError(f"malformed descriptor {text!r}: {exc}") from None
        if stages != desc.num_stages:
            raise DescriptorError(f"descriptor says {stages} stages but lists {desc.num_stages} channel counts")
        return desc

    @property
    def fingerprint(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


SHALLOW = ArchDescriptor(channels=(16, 32, 64, 128))
VANILLA = ArchDescriptor(channels=(32, 64, 128, 256, 512))
DEEPER = ArchDescriptor(channels=(32, 64, 128, 256, 512, 1024))
PRESETS = {"shallow": SHALLOW, "vanilla": VANILLA, "deeper": DEEPER}


def _conv_block(prefix, cin, cout, desc):
    k = desc.kernel
    out = []
    for j in range(desc.convs_per_stage):
        ci = cin if j == 0 else cout
        out.append((f"{prefix}.conv{j}.weight", (cout, ci, k, k, k)))
        out.append((f"{prefix}.conv{j}.bias", (cout,)))
        if desc.norm == "instance":
            out.append((f"{prefix}.norm{j}.weight", (cout,)))
            out.append((f"{prefix}.norm{j}.bias", (cout,)))
    return out


def layer_inventory(desc: ArchDescriptor):
    """Ordered ``(name, shape)`` list of every tensor the network needs.

    Transposed-conv weights use the ``(in, out, 2, 2, 2)`` layout.
    """
    ch = desc.channels
    layers = []
    prev = desc.in_channels
    for s, c in enumerate(ch):
        layers += _conv_block(f"enc{s}", prev, c, desc)
        prev = c
    for s in range(len(ch) - 2, -1, -1):
        layers.append((f"dec{s}.up.weight", (ch[s + 1], ch[s], 2, 2, 2)))
        layers.append((f"dec{s}.up.bias", (ch[s],)))
        layers += _conv_block(f"dec{s}", 2 * ch[s], ch[s], desc)
    layers.append(("head.weight", (desc.out_channels, ch[0], 1, 1, 1)))
    layers.append(("head.bias", (desc.out_channels,)))
    return layers


def param_count(desc: ArchDescriptor) -> int:
    return sum(math.prod(shape) for _, shape in layer_inventory(desc))


def format_millions(n: int) -> str:
    return f"{n / 1e6:.1f}M"


def peak_activation_bytes(desc: ArchDescriptor, patch_shape, backend: str = "numba") -> int:
    """Estimated float32 activation memory at the peak of one forward pass.

    Includes the input patch; small per-channel temporaries are ignored, so
    measured peaks run a few percent above this figure.

    The peak is the first convolution of the last decoder stage, where the
    concatenated skip and upsampled maps (``2*c0`` channels), their zero-padded
    copy and the ``c0``-channel output are live at once. The numpy kernel adds
    a gathered tap slab and a product slab (see ``ops._conv3d_numpy``).
    """
    vox = math.prod(patch_shape)
    c0, pad = desc.channels[0], desc.kernel - 1
    padded = math.prod(n + pad for n in patch_shape)
    elems = desc.in_channels * vox + 2 * c0 * vox + 2 * c0 * padded + c0 * vox
    if backend == "numpy":
        from .ops import _CHUNK_ELEMS

        d, h, w = patch_shape
        dz = max(1, min(d, _CHUNK_ELEMS // (2 * c0 * h * w)))
        elems += 3 * c0 * dz * h * w
    return 4 * elems
