"""Toy supernet with one shared parameter store for the whole grid.

Every connection slot owns a transform per operation name, built exactly
once at construction, so the parameter count never depends on which child
runs.  A child selects a subset of those transforms; node features are
plain sums of the incoming edge outputs, and edges the child does not
list never execute.

Scales halve the spatial resolution: a feature at scale ``s`` is
``base_size >> (s - 1)`` pixels square.  An edge transform always emits
at its target's resolution, pooling down or interpolating up as needed,
so the resampling direction follows the scale change.  The operation
named ``identity`` is that resampling alone and owns no parameters;
every other name owns a two-convolution block per slot.
"""
from __future__ import annotations

from torch import Tensor, nn
from torch.nn import functional as F

from .records import HEAD, ChildRecord, Edge, GridSpec

IDENTITY_OP = "identity"


def _resample(x: Tensor, size: int) -> Tensor:
    if x.shape[-1] == size:
        return x
    if x.shape[-1] > size:
        return F.adaptive_avg_pool2d(x, size)
    return F.interpolate(x, size=(size, size), mode="nearest")


class _ConvTransform(nn.Module):
    """Two stacked 3x3 convolutions, then resampling to the target size."""

    def __init__(self, channels: int, out_size: int):
        super().__init__()
        self.out_size = out_size
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
        )

    def forward(self, x: Tensor) -> Tensor:
        return _resample(self.body(x), self.out_size)


class _ResampleOnly(nn.Module):
    """Parameter-free connection that only matches the target size."""

    def __init__(self, out_size: int):
        super().__init__()
        self.out_size = out_size

    def forward(self, x: Tensor) -> Tensor:
        return _resample(x, self.out_size)


class ToySupernet(nn.Module):
    """Shared weights for every edge of a grid, runnable one child at a time."""

    def __init__(self, grid: GridSpec, channels: int = 8, base_size: int = 32):
        super().__init__()
        if base_size >> (grid.scales - 1) < 1:
            raise ValueError(
                f"base size {base_size} cannot be halved {grid.scales - 1} times"
            )
        self.grid = grid
        self.channels = channels
        self.base_size = base_size
        self.stem = nn.Conv2d(1, channels, 3, padding=1)
        transforms: dict[str, nn.Module] = {}
        for layer, source, target in grid.edge_slots():
            out_size = self.scale_size(1 if target == HEAD else target)
            for op in grid.op_alphabet:
                key = self._slot_key(layer, source, target, op)
                if op == IDENTITY_OP:
                    transforms[key] = _ResampleOnly(out_size)
                else:
                    transforms[key] = _ConvTransform(channels, out_size)
        self.transforms = nn.ModuleDict(transforms)
        self.head = nn.Conv2d(channels, 2, 1)

    def scale_size(self, scale: int) -> int:
        return self.base_size >> (scale - 1)

    def _slot_key(self, layer: int, source: int, target: int, op: str) -> str:
        return f"l{layer}_f{source}_t{target}_o{self.grid.op_alphabet.index(op)}"

    def edge_transform(self, edge: Edge) -> nn.Module:
        """The shared transform one edge runs (parameter-free for identity)."""
        return self.transforms[self._slot_key(*edge)]

    def node_features(self, child: ChildRecord, images: Tensor) -> dict:
        """Features of every node the child feeds, keyed by (layer, scale).

        The summed input of the output head appears under the key
        ``(grid.layers + 1, HEAD)``.  Only the child's edges execute, so
        parameters of absent edges cannot influence any value here.
        """
        if child.grid != self.grid:
            raise ValueError(
                f"grid mismatch: child is for {child.grid.describe()}, "
                f"supernet was built for {self.grid.describe()}"
            )
        features: dict[tuple[int, int], Tensor] = {(1, 1): self.stem(images)}
        for edge in sorted(child.edges):
            source = features.get((edge.layer, edge.from_scale))
            if source is None:
                raise ValueError(
                    f"edge at layer {edge.layer} reads from scale "
                    f"{edge.from_scale}, which is never fed"
                )
            out = self.edge_transform(edge)(source)
            target = (edge.layer + 1, edge.to_scale)
            existing = features.get(target)
            features[target] = out if existing is None else existing + out
        return features

    def forward(self, child: ChildRecord, images: Tensor) -> Tensor:
        """Regress the position map of ``images`` through one child."""
        features = self.node_features(child, images)
        gathered = features.get((self.grid.layers + 1, HEAD))
        if gathered is None:
            raise ValueError("no edge feeds the output head")
        return self.head(gathered)
