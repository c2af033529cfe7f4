"""Portable inference-graph container and its numpy executor.

The container is a framed binary file: an 8-byte magic, a little-endian
uint32 opset, a uint32 manifest length, a canonical JSON manifest, then all
weight tensors as concatenated little-endian float32 data. The manifest
records the native grid, logits threshold, and per-tensor offsets/shapes,
so the file is writable and readable from any language.

The executed model mirrors the promptable-segmentation contract: an image
encoder (pooling to the native grid + a 3x3 convolution), a prompt encoder
(Gaussian point splats plus a weighted mask prior), and a mask decoder
(3x3 convolution producing low-res logits and a confidence score).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from scipy import ndimage

from .backend import (
    BackendDescriptor,
    PromptSet,
    SegmentationBackend,
    SegmentationResult,
)
from .errors import FormatError, UnsupportedOpset
from .geometry import BinaryMask, ScoreGrid, resample_score_grid

MAGIC = b"PSEGRAPH"
SUPPORTED_OPSET = 1

REQUIRED_TENSORS = (
    "enc.kernel",
    "enc.bias",
    "prompt.point_weight",
    "prompt.sigma",
    "prompt.mask_weight",
    "dec.kernel",
    "dec.bias",
)

DEFAULT_TENSOR_NAMES = {
    "image": "image",
    "point_coords": "point_coords",
    "point_labels": "point_labels",
    "mask_input": "mask_input",
    "logits": "low_res_logits",
    "confidence": "confidence",
}


def write_graph_container(path, name, native_grid, logits_threshold, tensors,
                          tensor_names=None) -> bytes:
    """Serialize a graph file; returns the written bytes.

    Byte output is fully determined by the arguments, so repeated exports
    of the same model produce identical files.
    """
    for key in REQUIRED_TENSORS:
        if key not in tensors:
            raise ValueError(f"missing tensor {key!r}")
    blobs, offsets = [], {}
    cursor = 0
    for key in REQUIRED_TENSORS:
        arr = np.asarray(tensors[key], dtype=np.float32)
        offsets[key] = {"offset": cursor, "shape": list(arr.shape)}
        blobs.append(arr.tobytes(order="C"))
        cursor += arr.size
    manifest = {
        "name": name,
        "native_grid": [int(native_grid[0]), int(native_grid[1])],
        "logits_threshold": float(logits_threshold),
        "tensors": offsets,
        "tensor_names": dict(tensor_names or DEFAULT_TENSOR_NAMES),
        "graphs": ["image_encoder", "prompt_decoder"],
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = (
        MAGIC
        + struct.pack("<II", SUPPORTED_OPSET, len(manifest_bytes))
        + manifest_bytes
        + b"".join(blobs)
    )
    Path(path).write_bytes(payload)
    return payload


def _read_container(path):
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 8 or data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a graph container")
    opset, manifest_len = struct.unpack_from("<II", data, len(MAGIC))
    if opset != SUPPORTED_OPSET:
        raise UnsupportedOpset(f"{path}: opset {opset} not supported")
    start = len(MAGIC) + 8
    if len(data) < start + manifest_len:
        raise FormatError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[start : start + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad manifest ({exc})") from exc
    weights_raw = data[start + manifest_len :]
    tensors = {}
    for key, meta in manifest.get("tensors", {}).items():
        shape = tuple(meta["shape"])
        size = int(np.prod(shape)) if shape else 1
        begin = meta["offset"] * 4
        end = begin + size * 4
        if end > len(weights_raw):
            raise FormatError(f"{path}: truncated weights for {key!r}")
        tensors[key] = np.frombuffer(weights_raw[begin:end], dtype="<f4").reshape(shape).astype(np.float64)
    for key in REQUIRED_TENSORS:
        if key not in tensors:
            raise FormatError(f"{path}: manifest missing tensor {key!r}")
    return manifest, tensors


class GraphBackend(SegmentationBackend):
    """Executes a portable graph file with numpy."""

    def __init__(self, path):
        manifest, tensors = _read_container(path)
        gw, gh = manifest["native_grid"]
        self._grid = (int(gh), int(gw))
        self._threshold = float(manifest["logits_threshold"])
        self._t = tensors
        self.descriptor = BackendDescriptor(
            name=str(manifest.get("name", "graph")),
            native_grid=(int(gw), int(gh)),
            logits_threshold=self._threshold,
            tensor_names=dict(manifest.get("tensor_names", {})),
        )

    # -- graph 1: image encoder -------------------------------------------
    def _encode_image(self, channel):
        pooled = resample_score_grid(ScoreGrid(channel), self._grid).raster
        return self._conv(pooled, self._t["enc.kernel"]) + float(self._t["enc.bias"])

    # -- graph 2: prompt encoder + mask decoder ---------------------------
    def _decode(self, z, channel_shape, prompts: PromptSet):
        gh, gw = self._grid
        h, w = channel_shape
        prompt_map = np.zeros((gh, gw))
        sigma = float(self._t["prompt.sigma"])
        w_pt = float(self._t["prompt.point_weight"])
        if prompts.points:
            gy, gx = np.mgrid[0:gh, 0:gw]
            for p in prompts.points:
                px = p.x * (gw - 1) / max(w - 1, 1)
                py = p.y * (gh - 1) / max(h - 1, 1)
                sign = 1.0 if p.is_foreground else -1.0
                d2 = (gx - px) ** 2 + (gy - py) ** 2
                prompt_map += sign * w_pt * np.exp(-d2 / (2.0 * sigma * sigma))
        if prompts.mask_prior is not None:
            prior = resample_score_grid(prompts.mask_prior, (gh, gw)).raster
            prompt_map += float(self._t["prompt.mask_weight"]) * prior
        logits = self._conv(z + prompt_map, self._t["dec.kernel"]) + float(self._t["dec.bias"])
        confidence = 1.0 / (1.0 + np.exp(-float(logits.max())))
        return logits, confidence

    @staticmethod
    def _conv(grid, kernel):
        return ndimage.correlate(grid, kernel, mode="constant", cval=0.0)

    def segment_with_prompts(self, channel, prompts: PromptSet) -> SegmentationResult:
        channel = np.asarray(channel, dtype=np.float64)
        prompts.validate_bounds(channel.shape)
        z = self._encode_image(channel)
        logits, confidence = self._decode(z, channel.shape, prompts)
        grid = ScoreGrid(logits)
        full = resample_score_grid(grid, channel.shape).raster
        return SegmentationResult(
            mask=BinaryMask(full >= self._threshold),
            logits=grid,
            confidence=float(confidence),
        )

    def generate_masks_auto(self, channel, seed_stride: int = 16) -> list[SegmentationResult]:
        """Prompt a uniform seed grid, keep deduplicated nonempty masks."""
        channel = np.asarray(channel, dtype=np.float64)
        h, w = channel.shape
        from .geometry import PointPrompt  # local to avoid cycle at import time

        results: list[SegmentationResult] = []
        for y in range(seed_stride // 2, h, seed_stride):
            for x in range(seed_stride // 2, w, seed_stride):
                res = self.segment_with_prompts(
                    channel, PromptSet(points=(PointPrompt(x, y, "foreground"),))
                )
                if res.mask.area == 0:
                    continue
                if any(_iou(res.mask, kept.mask) > 0.9 for kept in results):
                    continue
                results.append(res)
        return results


def _iou(a: BinaryMask, b: BinaryMask) -> float:
    inter = int((a.raster & b.raster).sum())
    union = int((a.raster | b.raster).sum())
    return inter / union if union else 1.0


def load_backend(graph_path) -> GraphBackend:
    """Load a portable graph file; the descriptor reflects its metadata."""
    path = Path(graph_path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    return GraphBackend(path)
