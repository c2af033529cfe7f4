"""Zero-shot (sub)cellular segmentation with hit-validation analytics."""

from .backend import (
    BackendDescriptor,
    PromptSet,
    SegmentationBackend,
    SegmentationResult,
    SyntheticOracleBackend,
)
from .cellseg import SamplingConfig, combine_channels, segment_cell
from .estimators import CellInstanceSegmenter, NucleiDetector
from .features import FeatureTable, extract_all, intensity_stats, region_props
from .geometry import (
    BinaryMask,
    BoundingBox,
    InstanceLabelMap,
    MultiChannelImage,
    PointPrompt,
    ScoreGrid,
    mask_to_bbox,
    pixels_on_border,
    resample_score_grid,
    scale_bbox,
)
from .graph_backend import GraphBackend, load_backend, write_graph_container
from .integration import (
    CoverageMap,
    IntegrationConfig,
    build_coverage_map,
    exclude_border_cells,
    integrate_instances,
)
from .metrics import EvalReport, dice, evaluate_dataset, iou
from .analytics import (
    DoseResponse,
    HillFit,
    PlateLayout,
    Well,
    best_feature_by_zprime,
    fit_hill,
    hill_curve,
    lda_weighted_feature,
    z_prime,
)
from .nuclei import NucleusRecord, ShapeStats, compute_center, detect_nuclei, filter_by_shape
from .pipeline import RunConfig, run_eval, run_features, run_hitval, run_segment, segment_image
from .subcellular import SubcellularEntity, entities_per_cell, segment_subcellular

__version__ = "0.1.0"
