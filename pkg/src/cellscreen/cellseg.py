"""Per-nucleus recursive self-prompting for cell body segmentation.

Each cell is grown from its nucleus over a fixed number of prompting
iterations. Foreground prompts combine nucleus anchor points, hotspot
points just outside the current mask, and stabilizing points where the
last two predictions disagree; neighboring nuclei centers act as
background (repulsive) prompts. The mean of the last two logit grids is
passed along as a mask prior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import PromptSet, SegmentationBackend
from .errors import CellLost
from .geometry import (
    BinaryMask,
    BoundingBox,
    PointPrompt,
    ScoreGrid,
    mask_to_bbox,
    resample_score_grid,
    scale_bbox,
)
from .nuclei import NucleusRecord

# RNG stream tags, keyed per (seed, cell id, iteration, sampler kind) so
# results are independent of scheduling order.
_KIND_INITIAL = 0
_KIND_HOTSPOT = 1
_KIND_STABILIZING = 2
_KIND_ANCHOR = 3

NEIGHBOR_BBOX_SCALE = 3.0


@dataclass(frozen=True)
class SamplingConfig:
    num_prompts_per_cell: int = 8
    num_hotpoints: int = 4
    max_bbox_area_to_sample: float = 1.5
    init_bbox_scale: float = 1.25
    num_initial_foreground: int = 4
    num_anchor_points: int = 2
    num_stabilizing_points: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        counts = (
            self.num_prompts_per_cell,
            self.num_hotpoints,
            self.num_initial_foreground,
            self.num_anchor_points,
            self.num_stabilizing_points,
        )
        if any(c < 1 for c in counts):
            raise ValueError("all point/iteration counts must be >= 1")
        if self.max_bbox_area_to_sample <= 1.0 or self.init_bbox_scale <= 1.0:
            raise ValueError("bbox scales must exceed 1")


@dataclass
class IterationState:
    iteration: int
    current_mask: BinaryMask
    logits_t: ScoreGrid
    logits_t_minus_1: ScoreGrid
    mask_history: list = field(default_factory=list)


def _rng(cfg: SamplingConfig, cell_id: int, iteration: int, kind: int):
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(cfg.rng_seed, cell_id, iteration, kind))
    )


def _pick_pixels(rng, ys, xs, count, weights=None):
    n = len(ys)
    count = min(count, n)
    if count == 0:
        return []
    if weights is None:
        idx = rng.choice(n, size=count, replace=False)
    else:
        p = weights / weights.sum()
        idx = rng.choice(n, size=count, replace=False, p=p)
    return [PointPrompt(int(xs[i]), int(ys[i]), "foreground") for i in idx]


def sample_initial_points(nucleus: NucleusRecord, channel, cfg: SamplingConfig) -> PromptSet:
    """Uniform foreground seeds in the scaled nucleus box, above-median only.

    Falls back to a single point at the nucleus centroid when no pixel in
    the region clears the channel median.
    """
    channel = np.asarray(channel, dtype=np.float64)
    region = scale_bbox(mask_to_bbox(nucleus.mask), cfg.init_bbox_scale, channel.shape)
    sub = channel[region.y0 : region.y1, region.x0 : region.x1]
    eligible = sub > np.median(channel)
    ys, xs = np.nonzero(eligible)
    if len(ys) == 0:
        cx, cy = nucleus.center
        return PromptSet(points=(PointPrompt(int(round(cx)), int(round(cy)), "foreground"),))
    rng = _rng(cfg, nucleus.id, 0, _KIND_INITIAL)
    points = _pick_pixels(rng, ys + region.y0, xs + region.x0, cfg.num_initial_foreground)
    return PromptSet(points=tuple(points))


def sample_hotspot_points(state: IterationState, sampling_region: BoundingBox,
                          cfg: SamplingConfig, cell_id: int) -> list[PointPrompt]:
    """Expansion prompts weighted by positive mean logits outside the mask."""
    mean_logits = ScoreGrid((state.logits_t.raster + state.logits_t_minus_1.raster) / 2.0)
    prob = resample_score_grid(mean_logits, state.current_mask.shape).calibrated()
    h, w = state.current_mask.shape
    in_region = np.zeros((h, w), dtype=bool)
    in_region[sampling_region.y0 : sampling_region.y1, sampling_region.x0 : sampling_region.x1] = True
    weights = np.where(in_region & ~state.current_mask.raster, prob, 0.0)
    ys, xs = np.nonzero(weights > 0)
    if len(ys) == 0:
        return []
    rng = _rng(cfg, cell_id, state.iteration, _KIND_HOTSPOT)
    return _pick_pixels(rng, ys, xs, cfg.num_hotpoints, weights=weights[ys, xs])


def sample_stabilizing_points(state: IterationState, cfg: SamplingConfig,
                              cell_id: int) -> list[PointPrompt]:
    """Re-assert pixels the previous mask claimed but the current one dropped."""
    if len(state.mask_history) < 2:
        return []
    earlier = state.mask_history[-2].raster
    latest = state.mask_history[-1].raster
    dropped = earlier & ~latest
    ys, xs = np.nonzero(dropped)
    if len(ys) == 0:
        return []
    rng = _rng(cfg, cell_id, state.iteration, _KIND_STABILIZING)
    return _pick_pixels(rng, ys, xs, cfg.num_stabilizing_points)


def sample_anchor_points(nucleus: NucleusRecord, cfg: SamplingConfig,
                         iteration: int) -> list[PointPrompt]:
    """Foreground points uniform over the nucleus mask."""
    ys, xs = np.nonzero(nucleus.mask.raster)
    rng = _rng(cfg, nucleus.id, iteration, _KIND_ANCHOR)
    return _pick_pixels(rng, ys, xs, cfg.num_anchor_points)


def sample_background_points(nucleus: NucleusRecord, all_nuclei) -> list[PointPrompt]:
    """Centers of neighboring nuclei, used as repulsive prompts.

    Neighbors are nuclei whose centers fall inside three times the nucleus
    bounding box; farther nuclei add no useful context.
    """
    bounds = nucleus.mask.shape
    region = scale_bbox(mask_to_bbox(nucleus.mask), NEIGHBOR_BBOX_SCALE, bounds)
    points = []
    for other in sorted(all_nuclei, key=lambda n: n.id):
        if other.id == nucleus.id:
            continue
        cx, cy = other.center
        if region.contains_point(cx, cy):
            points.append(PointPrompt(int(round(cx)), int(round(cy)), "background"))
    return points


def segment_cell(channel, nucleus: NucleusRecord, all_nuclei,
                 backend: SegmentationBackend, cfg: SamplingConfig):
    """Run the full prompting loop for one cell.

    Returns one binary mask and one confidence value per iteration
    (``cfg.num_prompts_per_cell`` of each). Raises :class:`CellLost` when
    every iteration comes back empty.
    """
    channel = np.asarray(channel, dtype=np.float64)
    result = backend.segment_with_prompts(channel, sample_initial_points(nucleus, channel, cfg))
    masks = [result.mask]
    confidences = [result.confidence]
    logits_t = result.logits
    logits_t_minus_1 = result.logits

    background = sample_background_points(nucleus, all_nuclei)
    for iteration in range(1, cfg.num_prompts_per_cell):
        prior = ScoreGrid((logits_t.raster + logits_t_minus_1.raster) / 2.0)
        state = IterationState(
            iteration=iteration,
            current_mask=masks[-1],
            logits_t=logits_t,
            logits_t_minus_1=logits_t_minus_1,
            mask_history=list(masks),
        )
        core = masks[-1].union(nucleus.mask)
        sampling_region = scale_bbox(mask_to_bbox(core), cfg.max_bbox_area_to_sample, channel.shape)
        foreground = (
            sample_anchor_points(nucleus, cfg, iteration)
            + sample_hotspot_points(state, sampling_region, cfg, nucleus.id)
            + sample_stabilizing_points(state, cfg, nucleus.id)
        )
        prompts = PromptSet(points=tuple(foreground + background), mask_prior=prior)
        result = backend.segment_with_prompts(channel, prompts)
        logits_t_minus_1 = logits_t
        logits_t = result.logits
        masks.append(result.mask)
        confidences.append(result.confidence)

    if all(m.area == 0 for m in masks):
        raise CellLost(f"cell {nucleus.id}: every iteration produced an empty mask")
    return masks, confidences


def combine_channels(per_channel) -> list[BinaryMask]:
    """Confidence-weighted fusion of per-channel iteration masks.

    ``per_channel`` is a list of (masks, confidences) pairs with equal
    iteration counts. Per iteration, the fused soft map is the
    confidence-weighted average of the channel masks, binarized at 0.5.
    """
    if not per_channel:
        raise ValueError("need at least one channel result")
    if len(per_channel) == 1:
        return list(per_channel[0][0])
    n_iter = len(per_channel[0][0])
    if any(len(masks) != n_iter for masks, _ in per_channel):
        raise ValueError("channel results disagree on iteration count")
    fused = []
    for i in range(n_iter):
        weights = np.array([confs[i] for _, confs in per_channel], dtype=np.float64)
        stack = np.stack([masks[i].raster.astype(np.float64) for masks, _ in per_channel])
        if weights.sum() == 0.0:
            soft = stack.mean(axis=0)
        else:
            soft = np.tensordot(weights, stack, axes=1) / weights.sum()
        fused.append(BinaryMask(soft >= 0.5))
    return fused
