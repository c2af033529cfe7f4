"""End-to-end run orchestration: configuration, batch execution, artifacts.

A run reads a YAML config, segments every image (nuclei, per-channel cell
prompting with confidence fusion, coverage integration, subcellular
entities), and writes label maps plus a manifest with the config hash and
artifact checksums. Per-image failures are recorded without aborting the
batch.
"""

from __future__ import annotations

import glob as globlib
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import imageio
from .analytics import (
    PlateLayout,
    aggregate_per_well,
    best_feature_by_zprime,
    build_dose_response,
    fit_hill,
    lda_weighted_feature,
    zprime_of_well_scores,
)
from .backend import SegmentationBackend, SyntheticOracleBackend
from .cellseg import SamplingConfig, combine_channels, segment_cell
from .errors import (
    CellLost,
    ConfigError,
    DegenerateControls,
    NotEnoughPoints,
)
from .features import FeatureTable, extract_all, merge_tables
from .geometry import BinaryMask, InstanceLabelMap, MultiChannelImage
from .integration import IntegrationConfig, build_coverage_map, integrate_instances
from .metrics import evaluate_dataset
from .nuclei import NucleusRecord, compute_center, detect_nuclei, shape_stats
from .plots import dose_response_svg
from .subcellular import segment_subcellular

ROLE_NAMES = {"nucleus", "cell_marker", "subcellular_marker", "other"}


@dataclass
class RunConfig:
    images: str = ""
    channel_roles: dict = field(default_factory=dict)
    backend: str = "oracle"
    nuclei_backend: str = ""  # defaults to `backend`
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    layout_path: str = ""
    out_dir: str = "out"
    workers: int = 1
    eval_mode: str = "whole_mask"

    @classmethod
    def from_file(cls, path, overrides=None) -> "RunConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, overrides)

    @classmethod
    def from_dict(cls, raw, overrides=None) -> "RunConfig":
        raw = dict(raw or {})
        for key, value in (overrides or {}).items():
            if value is not None:
                raw[key] = value
        try:
            roles = {int(k): str(v) for k, v in dict(raw.get("channels", {})).items()}
            sampling_kwargs = dict(raw.get("sampling", {}))
            if "seed" in raw:
                sampling_kwargs["rng_seed"] = int(raw["seed"])
            cfg = cls(
                images=str(raw.get("images", "")),
                channel_roles=roles,
                backend=str(raw.get("backend", "oracle")),
                nuclei_backend=str(raw.get("nuclei_backend", "")),
                sampling=SamplingConfig(**sampling_kwargs),
                integration=IntegrationConfig(**dict(raw.get("integration", {}))),
                layout_path=str(raw.get("layout", "")),
                out_dir=str(raw.get("output", "out")),
                workers=int(raw.get("workers", 1)),
                eval_mode=str(raw.get("eval_mode", "whole_mask")),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self):
        bad_roles = set(self.channel_roles.values()) - ROLE_NAMES
        if bad_roles:
            raise ConfigError(f"unknown channel roles {sorted(bad_roles)}")
        roles = list(self.channel_roles.values())
        if roles.count("nucleus") != 1:
            raise ConfigError("exactly one channel must carry the nucleus role")
        if roles.count("subcellular_marker") > 1:
            raise ConfigError("at most one subcellular marker channel allowed")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for spec in (self.backend, self.nuclei_backend):
            if spec and spec != "oracle" and not spec.startswith("graph:"):
                raise ConfigError(f"backend must be 'oracle' or 'graph:PATH', got {spec!r}")

    def config_hash(self) -> str:
        payload = {
            "images": self.images,
            "channels": {str(k): v for k, v in sorted(self.channel_roles.items())},
            "backend": self.backend,
            "nuclei_backend": self.nuclei_backend,
            "sampling": vars(self.sampling).copy(),
            "integration": {"coverage_fraction_min": self.integration.coverage_fraction_min},
            "layout": self.layout_path,
            "eval_mode": self.eval_mode,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def make_backend(spec: str) -> SegmentationBackend:
    if spec in ("", "oracle"):
        return SyntheticOracleBackend()
    if spec.startswith("graph:"):
        from .graph_backend import load_backend

        return load_backend(spec[len("graph:"):])
    raise ConfigError(f"unknown backend spec {spec!r}")


@dataclass
class SegmentationArtifacts:
    image_id: str
    nuclei: list
    nuclei_labels: InstanceLabelMap
    cell_labels: InstanceLabelMap
    entities: list
    diagnostics: dict


def _nuclei_label_map(nuclei, shape) -> InstanceLabelMap:
    out = np.zeros(shape, dtype=np.int32)
    for record in nuclei:
        out[record.mask.raster] = record.id
    return InstanceLabelMap(out)


def segment_image(image: MultiChannelImage, nuclei_backend, cell_backend,
                  sampling: SamplingConfig, integration: IntegrationConfig,
                  workers: int = 1) -> SegmentationArtifacts:
    """Run the full segmentation cascade for one image."""
    nuclei = detect_nuclei(image, nuclei_backend)
    cell_channels = [image.channels[i] for i in image.channels_with_role("cell_marker")]
    diagnostics = {"nuclei_detected": len(nuclei), "cells_lost": 0}

    def run_cell(nucleus):
        per_channel = []
        try:
            for channel in cell_channels:
                per_channel.append(segment_cell(channel, nucleus, nuclei, cell_backend, sampling))
            return nucleus.id, combine_channels(per_channel)
        except CellLost:
            return nucleus.id, None

    if cell_channels and nuclei:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                cell_results = list(pool.map(run_cell, nuclei))
        else:
            cell_results = [run_cell(n) for n in nuclei]
    else:
        cell_results = []

    maps = []
    for cell_id, fused_masks in cell_results:
        if fused_masks is None:
            diagnostics["cells_lost"] += 1
            continue
        maps.append(build_coverage_map(fused_masks, cell_id))
    cell_labels = integrate_instances(maps, integration, image.shape)
    diagnostics["cells_retained"] = len(cell_labels.labels())

    entities = []
    ssm = image.subcellular_channel()
    if ssm is not None:
        for label in cell_labels.labels():
            entities.extend(
                segment_subcellular(ssm, cell_labels.mask_for(label), label, cell_backend)
            )
    diagnostics["entities"] = len(entities)

    return SegmentationArtifacts(
        image_id=image.image_id,
        nuclei=nuclei,
        nuclei_labels=_nuclei_label_map(nuclei, image.shape),
        cell_labels=cell_labels,
        entities=entities,
        diagnostics=diagnostics,
    )


def _entity_label_map(entities, shape) -> tuple[InstanceLabelMap, dict]:
    out = np.zeros(shape, dtype=np.int32)
    parents = {}
    for idx, entity in enumerate(entities, start=1):
        out[entity.mask.raster] = idx
        parents[str(idx)] = entity.cell_id
    return InstanceLabelMap(out), parents


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def resolve_images(config: RunConfig) -> list[Path]:
    paths = sorted(Path(p) for p in globlib.glob(config.images))
    return paths


def run_segment(config: RunConfig, images=None) -> dict:
    """Segment a batch and write artifacts plus the run manifest.

    ``images`` may carry preloaded :class:`MultiChannelImage` objects;
    otherwise files are resolved from the config glob.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nuclei_backend = make_backend(config.nuclei_backend or config.backend)
    cell_backend = make_backend(config.backend)

    if images is None:
        images = [
            imageio.load_multichannel_image(path, config.channel_roles)
            for path in resolve_images(config)
        ]

    manifest = {
        "config_hash": config.config_hash(),
        "seed": config.sampling.rng_seed,
        "images": [],
    }
    for image in images:
        entry = {"image_id": image.image_id, "status": "ok", "artifacts": {}}
        try:
            artifacts = segment_image(
                image, nuclei_backend, cell_backend,
                config.sampling, config.integration, config.workers,
            )
            written = {
                f"{image.image_id}_nuclei.png": artifacts.nuclei_labels,
                f"{image.image_id}_cells.png": artifacts.cell_labels,
            }
            entity_map, parents = _entity_label_map(artifacts.entities, image.shape)
            written[f"{image.image_id}_entities.png"] = entity_map
            for name, labels in written.items():
                path = out_dir / name
                imageio.save_label_map(labels, path)
                entry["artifacts"][name] = _sha256(path)
            meta_path = out_dir / f"{image.image_id}_diagnostics.json"
            meta_path.write_text(json.dumps(
                {"diagnostics": artifacts.diagnostics, "entity_parents": parents},
                sort_keys=True, indent=1,
            ) + "\n")
            entry["artifacts"][meta_path.name] = _sha256(meta_path)
        except Exception as exc:  # batch semantics: record and continue
            entry["status"] = "error"
            entry["error"] = f"{type(exc).__name__}: {exc}"
        manifest["images"].append(entry)

    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest


def _nuclei_from_label_map(labels: InstanceLabelMap) -> list[NucleusRecord]:
    records = []
    for label in labels.labels():
        mask = labels.mask_for(label)
        records.append(NucleusRecord(
            id=label, mask=mask, center=compute_center(mask), stats=shape_stats(mask),
        ))
    return records


def run_features(config: RunConfig, images=None) -> FeatureTable:
    """Extract the feature table from existing segmentation artifacts."""
    out_dir = Path(config.out_dir)
    layout = None
    if config.layout_path:
        layout = PlateLayout.from_csv(Path(config.layout_path).read_text())

    if images is None:
        images = [
            imageio.load_multichannel_image(path, config.channel_roles)
            for path in resolve_images(config)
        ]

    from .subcellular import SubcellularEntity

    tables = []
    for image in images:
        cells_path = out_dir / f"{image.image_id}_cells.png"
        nuclei_path = out_dir / f"{image.image_id}_nuclei.png"
        if not cells_path.exists() or not nuclei_path.exists():
            raise FileNotFoundError(f"missing segmentation artifacts for {image.image_id}")
        cell_labels = imageio.load_label_map(cells_path)
        nuclei = _nuclei_from_label_map(imageio.load_label_map(nuclei_path))

        entities = []
        entity_path = out_dir / f"{image.image_id}_entities.png"
        meta_path = out_dir / f"{image.image_id}_diagnostics.json"
        if entity_path.exists() and meta_path.exists():
            entity_labels = imageio.load_label_map(entity_path)
            parents = json.loads(meta_path.read_text()).get("entity_parents", {})
            for label in entity_labels.labels():
                mask = entity_labels.mask_for(label)
                entities.append(SubcellularEntity(
                    cell_id=int(parents.get(str(label), 0)), mask=mask, area=mask.area,
                ))
        tables.append(extract_all(image, cell_labels, nuclei, entities, layout))

    merged = merge_tables(tables)
    (out_dir / "features.csv").write_text(merged.to_csv())
    return merged


def run_hitval(config: RunConfig, table: FeatureTable | None = None) -> dict:
    """Z'-factor report, LDA composite, and per-compound EC50 fits."""
    out_dir = Path(config.out_dir)
    if not config.layout_path:
        raise ConfigError("hit validation requires a plate layout")
    layout = PlateLayout.from_csv(Path(config.layout_path).read_text())
    if table is None:
        features_path = out_dir / "features.csv"
        if not features_path.exists():
            raise FileNotFoundError("features.csv not found; run features first")
        table = FeatureTable.from_csv(features_path.read_text())

    best_name, best_z = best_feature_by_zprime(table, layout)
    if best_name == "lda_composite":
        well_scores = lda_weighted_feature(table, layout)
    else:
        well_scores = aggregate_per_well(table, best_name)

    report = {"best_feature": best_name, "best_zprime": best_z, "compounds": {}}
    zprime_rows = [f"feature,zprime", f"{best_name},{best_z!r}"]
    try:
        lda_scores = lda_weighted_feature(table, layout)
        zprime_rows.append(f"lda_composite,{zprime_of_well_scores(lda_scores, layout)!r}")
    except DegenerateControls:
        pass
    (out_dir / "zprime.csv").write_text("\n".join(zprime_rows) + "\n")

    ec50_rows = ["compound_id,ec50_molar,hill_n,s0,s_inf,converged,error"]
    for compound_id in layout.compound_ids():
        dr = build_dose_response(well_scores, layout, compound_id)
        try:
            fit = fit_hill(dr)
        except NotEnoughPoints as exc:
            report["compounds"][compound_id] = {"error": str(exc)}
            ec50_rows.append(f"{compound_id},,,,,,{type(exc).__name__}")
            continue
        report["compounds"][compound_id] = {
            "ec50": fit.ec50, "n": fit.n, "s0": fit.s0, "s_inf": fit.s_inf,
            "converged": fit.converged,
        }
        ec50_rows.append(
            f"{compound_id},{fit.ec50!r},{fit.n!r},{fit.s0!r},{fit.s_inf!r},{fit.converged},"
        )
        (out_dir / f"dose_response_{compound_id}.svg").write_text(dose_response_svg(dr, fit))
    (out_dir / "ec50.csv").write_text("\n".join(ec50_rows) + "\n")
    return report


def run_eval(config: RunConfig, pred_paths, gt_paths) -> "EvalReport":
    """Compare prediction label maps against ground-truth masks."""
    pred_paths, gt_paths = sorted(pred_paths), sorted(gt_paths)
    predictions = [imageio.load_label_map(p) for p in pred_paths]
    ground_truth = [imageio.load_label_map(p) for p in gt_paths]
    report = evaluate_dataset(
        predictions, ground_truth, mode=config.eval_mode,
        image_ids=[Path(p).stem for p in pred_paths],
    )
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ["image_id,dsc,iou"]
    rows += [f"{image_id},{d!r},{i!r}" for image_id, d, i in report.per_image]
    rows.append(f"MEAN,{report.mean_dsc!r},{report.mean_iou!r}")
    (out_dir / "eval.csv").write_text("\n".join(rows) + "\n")
    return report
