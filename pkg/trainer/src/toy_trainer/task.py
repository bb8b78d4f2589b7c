"""Synthetic position-map regression task.

Each example is a single-channel image holding one soft blob; the target
is a two-channel map giving, at every pixel, the offset from that pixel
to the blob centre in image-width units.  Targets follow analytically
from the sampled centre, so losses are meaningful without external data
and an all-zero prediction sets a natural baseline to improve on.
"""
from __future__ import annotations

import torch
from torch import Tensor

BLOB_SIGMA = 3.0
HOLDOUT_SEED = 8191
HOLDOUT_COUNT = 16


def make_examples(
    count: int, generator: torch.Generator, size: int = 32
) -> tuple[Tensor, Tensor]:
    """Sample ``count`` blob images and their exact offset-map targets.

    Returns images of shape (count, 1, size, size) and targets of shape
    (count, 2, size, size); channel 0 holds horizontal offsets, channel 1
    vertical ones.  Centres fall in the middle half of the image.
    """
    low = size / 4.0
    span = size / 2.0
    centres = low + span * torch.rand((count, 2), generator=generator)
    coords = torch.arange(size, dtype=torch.float32)
    ys, xs = torch.meshgrid(coords, coords, indexing="ij")
    cx = centres[:, 0].view(-1, 1, 1)
    cy = centres[:, 1].view(-1, 1, 1)
    squared = (xs - cx) ** 2 + (ys - cy) ** 2
    images = torch.exp(-squared / (2.0 * BLOB_SIGMA**2)).unsqueeze(1)
    targets = torch.stack(((xs - cx) / size, (ys - cy) / size), dim=1)
    return images, targets


def holdout_examples(size: int = 32) -> tuple[Tensor, Tensor]:
    """The fixed held-out set every served penalty is measured on."""
    generator = torch.Generator().manual_seed(HOLDOUT_SEED)
    return make_examples(HOLDOUT_COUNT, generator, size)
