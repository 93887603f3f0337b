"""Inference-only forward pass of the U-Net described by an :class:`ArchDescriptor`."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..volume import MultiChannelVolume
from . import ops
from .descriptor import ArchDescriptor
from .weights import WeightStore


class UNet:
    """Callable wrapper binding a weight store; ``net(patch)`` returns logits.

    Stateless between calls, so one instance may serve several threads.
    """

    def __init__(self, weights: WeightStore, descriptor: ArchDescriptor | None = None):
        if descriptor is not None:
            weights.check(descriptor)
        self.weights = weights
        self.descriptor = weights.descriptor

    @property
    def fingerprint(self):
        return self.weights.fingerprint

    def _block(self, prefix, h):
        d, w = self.descriptor, self.weights
        for j in range(d.convs_per_stage):
            # rebinding h drops the previous activation before the next op allocates
            h = ops.conv3d(h, w[f"{prefix}.conv{j}.weight"], w[f"{prefix}.conv{j}.bias"])
            if d.norm == "instance":
                h = ops.instance_norm(h, w[f"{prefix}.norm{j}.weight"], w[f"{prefix}.norm{j}.bias"])
            h = ops.leaky_relu(h, d.negative_slope)
        return h

    def __call__(self, patch):
        if isinstance(patch, MultiChannelVolume):
            patch = patch.stack()
        x = np.asarray(patch, dtype=np.float32)
        d, w = self.descriptor, self.weights
        if x.ndim != 4 or x.shape[0] != d.in_channels:
            raise ShapeError(f"expected input of shape ({d.in_channels}, z, y, x), got {x.shape}")
        if any(s % d.divisor for s in x.shape[1:]):
            raise ShapeError(
                f"patch shape {x.shape[1:]} must be divisible by {d.divisor} (2^{d.num_stages - 1}) per axis"
            )
        skips = []
        h = x
        for s in range(d.num_stages):
            h = self._block(f"enc{s}", h)
            if s < d.num_stages - 1:
                skips.append(h)
                h = ops.max_pool2(h)
        for s in range(d.num_stages - 2, -1, -1):
            up = ops.conv_transpose3d(h, w[f"dec{s}.up.weight"], w[f"dec{s}.up.bias"])
            h = np.concatenate([skips.pop(), up])
            del up
            h = self._block(f"dec{s}", h)
        return ops.conv3d(h, w["head.weight"], w["head.bias"])


def forward(weights: WeightStore, patch) -> np.ndarray:
    """Logits of shape ``(out_channels, z, y, x)`` for one ``(in_channels, z, y, x)`` patch."""
    return UNet(weights)(patch)
