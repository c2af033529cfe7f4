"""scikit-learn style estimator wrappers around the segmentation pipeline.

The segmenters are zero-shot, so ``fit`` only validates parameters and
returns ``self``; ``predict`` maps images to label maps. Parameters follow
the sklearn convention (constructor args mirrored as attributes), so the
estimators compose with ``get_params``/``set_params`` and pipelines.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .cellseg import SamplingConfig
from .integration import IntegrationConfig
from .nuclei import detect_nuclei
from .pipeline import make_backend, segment_image
from .validation import as_multichannel_image

_DEFAULT_ROLES = {0: "nucleus", 1: "cell_marker"}


class NucleiDetector(BaseEstimator):
    """Detects validated nuclei and returns them as records per image."""

    def __init__(self, backend="oracle", channel_roles=None):
        self.backend = backend
        self.channel_roles = channel_roles

    def fit(self, X=None, y=None):
        self._backend = make_backend(self.backend)
        return self

    def predict(self, X):
        """List of :class:`NucleusRecord` lists, one per input image."""
        if not hasattr(self, "_backend"):
            self.fit()
        roles = self.channel_roles or _DEFAULT_ROLES
        images = X if isinstance(X, (list, tuple)) else [X]
        return [detect_nuclei(as_multichannel_image(img, roles), self._backend)
                for img in images]


class CellInstanceSegmenter(BaseEstimator):
    """Full-cascade instance segmenter (nuclei, cells, integration).

    ``predict`` returns one :class:`InstanceLabelMap` per image;
    ``predict_artifacts`` exposes nuclei and subcellular entities too.
    """

    def __init__(self, backend="oracle", nuclei_backend=None, channel_roles=None,
                 num_prompts_per_cell=8, num_hotpoints=4, max_bbox_area_to_sample=1.5,
                 init_bbox_scale=1.25, num_initial_foreground=4, num_anchor_points=2,
                 num_stabilizing_points=2, coverage_fraction_min=0.33, rng_seed=0,
                 workers=1):
        self.backend = backend
        self.nuclei_backend = nuclei_backend
        self.channel_roles = channel_roles
        self.num_prompts_per_cell = num_prompts_per_cell
        self.num_hotpoints = num_hotpoints
        self.max_bbox_area_to_sample = max_bbox_area_to_sample
        self.init_bbox_scale = init_bbox_scale
        self.num_initial_foreground = num_initial_foreground
        self.num_anchor_points = num_anchor_points
        self.num_stabilizing_points = num_stabilizing_points
        self.coverage_fraction_min = coverage_fraction_min
        self.rng_seed = rng_seed
        self.workers = workers

    def _configs(self):
        sampling = SamplingConfig(
            num_prompts_per_cell=self.num_prompts_per_cell,
            num_hotpoints=self.num_hotpoints,
            max_bbox_area_to_sample=self.max_bbox_area_to_sample,
            init_bbox_scale=self.init_bbox_scale,
            num_initial_foreground=self.num_initial_foreground,
            num_anchor_points=self.num_anchor_points,
            num_stabilizing_points=self.num_stabilizing_points,
            rng_seed=self.rng_seed,
        )
        return sampling, IntegrationConfig(coverage_fraction_min=self.coverage_fraction_min)

    def fit(self, X=None, y=None):
        self._sampling, self._integration = self._configs()
        self._cell_backend = make_backend(self.backend)
        self._nuclei_backend = make_backend(self.nuclei_backend or self.backend)
        return self

    def predict_artifacts(self, X):
        if not hasattr(self, "_cell_backend"):
            self.fit()
        roles = self.channel_roles or _DEFAULT_ROLES
        images = X if isinstance(X, (list, tuple)) else [X]
        return [
            segment_image(
                as_multichannel_image(img, roles), self._nuclei_backend,
                self._cell_backend, self._sampling, self._integration, self.workers,
            )
            for img in images
        ]

    def predict(self, X):
        return [a.cell_labels for a in self.predict_artifacts(X)]
