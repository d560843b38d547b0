"""Semantic map to state vector, plus a segmentation-noise model."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from bayesdrive.core import N_CLASSES

ROAD_LINE_WEIGHT = 20.0
DEFAULT_WIDTH = 84
DEFAULT_HEIGHT = 60


class SemanticClass(enum.IntEnum):
    """Histogram slot order; the values double as the grayscale palette."""

    ROAD = 0
    ROAD_LINE = 1
    OFF_ROAD = 2
    STATIC_OBJECT = 3
    DYNAMIC_OBJECT = 4


_CLASS_WEIGHTS = np.ones(N_CLASSES)
_CLASS_WEIGHTS[SemanticClass.ROAD_LINE] = ROAD_LINE_WEIGHT


@dataclass(frozen=True)
class NoiseConfig:
    flip_prob: float = 0.0
    blob_rate: float = 0.0
    blob_size: int = 9

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")
        if not self.blob_rate >= 0.0:
            raise ValueError(f"blob_rate must be non-negative, got {self.blob_rate}")
        if int(self.blob_size) != self.blob_size or self.blob_size < 1:
            raise ValueError(f"blob_size must be a positive integer, got {self.blob_size}")

    @property
    def is_clean(self) -> bool:
        return self.flip_prob == 0.0 and self.blob_rate == 0.0


def check_map(cells: np.ndarray) -> np.ndarray:
    cells = np.asarray(cells)
    if cells.ndim != 2 or cells.size == 0:
        raise ValueError(f"semantic map must be a non-empty 2-D grid, got shape {cells.shape}")
    if cells.min() < 0 or cells.max() >= N_CLASSES:
        raise ValueError("semantic map contains labels outside the 5 classes")
    return cells


def extract_state(cells: np.ndarray) -> np.ndarray:
    """Six-region weighted class histogram, normalised to unit l1 norm.

    ``cells`` is a (height, width) grid of class labels with row 0 at the far
    edge of the view. Regions are ordered near-left, near-centre, near-right,
    far-left, far-centre, far-right; within a region the slots follow
    :class:`SemanticClass`. Road-line counts are multiplied by 20.
    """
    cells = check_map(cells)
    h, w = cells.shape
    if w % 3 or h % 2:
        raise ValueError(f"map of {w}x{h} does not split into a 3x2 region grid")
    rh, cw = h // 2, w // 3
    # region index per pixel: near (bottom half) first
    row_band = np.where(np.arange(h) >= rh, 0, 1)
    col_band = np.arange(w) // cw
    region = row_band[:, None] * 3 + col_band[None, :]
    counts = np.bincount((region * N_CLASSES + cells).ravel(), minlength=6 * N_CLASSES)
    hist = counts.reshape(6, N_CLASSES) * _CLASS_WEIGHTS[None, :]
    vec = hist.ravel()
    total = vec.sum()
    assert total > 0
    return vec / total


def road_view(cells: np.ndarray) -> float:
    """Fraction of pixels labelled road."""
    cells = check_map(cells)
    return float(np.count_nonzero(cells == SemanticClass.ROAD)) / cells.size


def corrupt(cells: np.ndarray, cfg: NoiseConfig, rng: np.random.Generator) -> np.ndarray:
    """Emulate an imperfect segmentation network.

    Each pixel flips to a uniformly chosen *different* class with probability
    ``flip_prob``; then a Poisson(``blob_rate``) number of square object blobs
    of side ``round(sqrt(blob_size))`` are stamped at random positions.
    """
    cells = check_map(cells)
    if cfg.is_clean:
        return cells.copy()
    out = cells.copy()
    h, w = out.shape
    if cfg.flip_prob > 0:
        flip = rng.random(out.shape) < cfg.flip_prob
        shift = rng.integers(1, N_CLASSES, size=out.shape)
        out[flip] = (out[flip] + shift[flip]) % N_CLASSES
    if cfg.blob_rate > 0:
        side = max(1, int(round(np.sqrt(cfg.blob_size))))
        for _ in range(rng.poisson(cfg.blob_rate)):
            r0 = rng.integers(0, max(1, h - side + 1))
            c0 = rng.integers(0, max(1, w - side + 1))
            label = SemanticClass.STATIC_OBJECT if rng.random() < 0.5 else SemanticClass.DYNAMIC_OBJECT
            out[r0:r0 + side, c0:c0 + side] = label
    return out


def to_text(cells: np.ndarray) -> str:
    """Flat text grid, one row per line, palette digits 0-4."""
    return "\n".join("".join(str(int(v)) for v in row) for row in check_map(cells))


def from_text(text: str) -> np.ndarray:
    rows = [line.strip() for line in text.strip().splitlines() if line.strip()]
    return check_map(np.array([[int(ch) for ch in row] for row in rows], dtype=np.int8))
