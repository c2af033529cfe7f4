"""Promptable-segmentation backend contract and the synthetic oracle.

All foundation-model behavior is isolated behind :class:`SegmentationBackend`.
The :class:`SyntheticOracleBackend` is a deterministic, brute-force-checkable
stand-in that ships with the package so every downstream stage can be
verified without model weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidPrompt
from .geometry import BinaryMask, PointPrompt, ScoreGrid, resample_score_grid

# Oracle semantics: binarize at INTENSITY_THRESHOLD, flood fill (4-conn)
# from foreground seeds, subtract flood regions of background points.
INTENSITY_THRESHOLD = 0.5
CONFIDENCE_INTENSITY = 0.75
ORACLE_LOGITS_THRESHOLD = 0.75

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class PromptSet:
    """Point prompts plus an optional low-resolution mask prior."""

    points: tuple = ()
    mask_prior: ScoreGrid | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if self.mask_prior is None and not any(p.is_foreground for p in self.points):
            raise InvalidPrompt("need at least one foreground point or a mask prior")

    def validate_bounds(self, shape: tuple[int, int]):
        h, w = shape
        for p in self.points:
            if not (0 <= p.x < w and 0 <= p.y < h):
                raise InvalidPrompt(f"point ({p.x}, {p.y}) outside {w}x{h} image")

    def foreground(self) -> list[PointPrompt]:
        return [p for p in self.points if p.is_foreground]

    def background(self) -> list[PointPrompt]:
        return [p for p in self.points if not p.is_foreground]


@dataclass(frozen=True)
class SegmentationResult:
    mask: BinaryMask
    logits: ScoreGrid
    confidence: float


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    native_grid: tuple[int, int]
    logits_threshold: float
    tensor_names: dict = field(default_factory=dict)

    def __post_init__(self):
        gw, gh = self.native_grid
        if gw <= 0 or gh <= 0:
            raise ValueError("native grid dims must be positive")


class SegmentationBackend:
    """Interface every backend implements; instances are immutable."""

    descriptor: BackendDescriptor

    def segment_with_prompts(self, channel: np.ndarray, prompts: PromptSet) -> SegmentationResult:
        raise NotImplementedError

    def generate_masks_auto(self, channel: np.ndarray) -> list[SegmentationResult]:
        raise NotImplementedError


class SyntheticOracleBackend(SegmentationBackend):
    """Deterministic promptable segmenter over synthetic imagery.

    Flood fill (4-connectivity) over pixels brighter than 0.5, seeded by
    foreground points; connected regions claimed by background points are
    subtracted. Mask-prior cells with calibrated probability >= 0.5 act as
    additional foreground seeds. Logits are emitted at image resolution:
    1.0 inside the mask, 0.9 * (intensity - 0.5) outside, so thresholding
    at 0.75 reproduces the mask exactly and calibrated outside scores stay
    strictly below the seed level.
    """

    def __init__(self):
        self.descriptor = BackendDescriptor(
            name="synthetic-oracle",
            native_grid=(64, 64),
            logits_threshold=ORACLE_LOGITS_THRESHOLD,
        )

    def segment_with_prompts(self, channel, prompts: PromptSet) -> SegmentationResult:
        channel = np.asarray(channel, dtype=np.float64)
        prompts.validate_bounds(channel.shape)
        binary = channel > INTENSITY_THRESHOLD
        labels, _ = ndimage.label(binary, structure=_FOUR_CONN)

        seed_labels = set()
        for p in prompts.foreground():
            lab = labels[p.y, p.x]
            if lab:
                seed_labels.add(int(lab))
        if prompts.mask_prior is not None:
            prior = resample_score_grid(prompts.mask_prior, channel.shape)
            seeded = (prior.calibrated() >= 0.5) & binary
            seed_labels.update(int(v) for v in np.unique(labels[seeded]) if v)

        kill_labels = set()
        for p in prompts.background():
            lab = labels[p.y, p.x]
            if lab:
                kill_labels.add(int(lab))

        keep = seed_labels - kill_labels
        mask = np.isin(labels, sorted(keep)) if keep else np.zeros_like(binary)
        return self._result(channel, mask)

    def generate_masks_auto(self, channel) -> list[SegmentationResult]:
        channel = np.asarray(channel, dtype=np.float64)
        binary = channel > INTENSITY_THRESHOLD
        labels, count = ndimage.label(binary, structure=_FOUR_CONN)
        return [self._result(channel, labels == k) for k in range(1, count + 1)]

    def _result(self, channel, mask) -> SegmentationResult:
        logits = np.where(mask, 1.0, 0.9 * (channel - INTENSITY_THRESHOLD))
        area = int(mask.sum())
        if area:
            confidence = float((channel[mask] > CONFIDENCE_INTENSITY).sum()) / area
        else:
            confidence = 0.0
        return SegmentationResult(
            mask=BinaryMask(mask),
            logits=ScoreGrid(logits),
            confidence=confidence,
        )
