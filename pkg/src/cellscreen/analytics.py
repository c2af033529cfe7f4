"""Hit-validation analytics: Z'-factor, Hill/EC50 fits, LDA composite.

Feature names used here are level-prefixed table columns, e.g.
``cell_extent`` or ``nucleus_mean_intensity``; nucleus and cell rows join
on (image_id, object_id).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateControls, LayoutMismatch, NotEnoughPoints
from .features import FeatureTable

LN10 = math.log(10.0)
HILL_N_BOUNDS = (0.1, 10.0)

DEFAULT_LDA_FEATURES = [
    "nucleus_mean_intensity",
    "cell_mean_intensity",
    "cell_extent",
    "cell_perimeter",
    "cell_major_axis_length",
    "cell_minor_axis_length",
    "nucleus_protein_correlation",
]

ROLES = ("neutral_control", "positive_control", "compound")


@dataclass(frozen=True)
class Well:
    well_id: str
    role: str
    compound_id: str = ""
    concentration: float | None = None  # molar
    image_ids: tuple = ()

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown well role {self.role!r}")
        if self.role == "compound":
            if self.concentration is None or self.concentration <= 0:
                raise ValueError(f"compound well {self.well_id} needs concentration > 0")
        elif self.concentration is not None:
            raise ValueError(f"control well {self.well_id} must not carry a concentration")


class PlateLayout:
    """Well roles, compound concentrations, and image-to-well assignment."""

    def __init__(self, wells):
        self._wells = {w.well_id: w for w in wells}
        self._image_to_well = {}
        for w in self._wells.values():
            for image_id in w.image_ids:
                self._image_to_well[image_id] = w.well_id

    def __len__(self):
        return len(self._wells)

    @property
    def wells(self) -> dict[str, Well]:
        return dict(self._wells)

    def well_for_image(self, image_id) -> str | None:
        return self._image_to_well.get(image_id)

    def wells_by_role(self, role: str) -> list[Well]:
        return sorted((w for w in self._wells.values() if w.role == role),
                      key=lambda w: w.well_id)

    def compound_ids(self) -> list[str]:
        return sorted({w.compound_id for w in self._wells.values() if w.role == "compound"})

    @classmethod
    def from_csv(cls, text: str) -> "PlateLayout":
        """Columns: well_id, role, compound_id, concentration_molar, image_files.

        ``image_files`` is a semicolon-separated list.
        """
        wells = []
        for raw in csv.DictReader(io.StringIO(text)):
            conc = raw.get("concentration_molar", "").strip()
            images = tuple(s.strip() for s in raw.get("image_files", "").split(";") if s.strip())
            wells.append(Well(
                well_id=raw["well_id"].strip(),
                role=raw["role"].strip(),
                compound_id=raw.get("compound_id", "").strip(),
                concentration=float(conc) if conc else None,
                image_ids=images,
            ))
        return cls(wells)


@dataclass(frozen=True)
class DoseResponse:
    compound_id: str
    points: tuple  # (concentration_molar, response, n_wells), ascending

    def __post_init__(self):
        points = tuple(self.points)
        concs = [p[0] for p in points]
        if any(c <= 0 for c in concs):
            raise ValueError("concentrations must be strictly positive")
        if sorted(concs) != concs:
            raise ValueError("points must be sorted by ascending concentration")
        object.__setattr__(self, "points", points)


@dataclass(frozen=True)
class HillFit:
    s0: float
    s_inf: float
    ec50: float
    n: float
    residual_sse: float
    converged: bool


def hill_curve(concentration, s0, s_inf, ec50, n):
    """Four-parameter Hill response at the given concentration(s)."""
    c = np.asarray(concentration, dtype=np.float64)
    return s0 + (s_inf - s0) / (1.0 + (ec50 / c) ** n)


def z_prime(neutral, positive, denominator: str = "sum") -> float:
    """Assay-quality statistic from control means and standard deviations.

    ``denominator='sum'`` uses |mu_p + mu_n|; ``'difference'`` selects the
    conventional |mu_p - mu_n| variant.
    """
    neutral = np.asarray(neutral, dtype=np.float64)
    positive = np.asarray(positive, dtype=np.float64)
    if len(neutral) < 2 or len(positive) < 2:
        raise DegenerateControls("need at least two samples per control group")
    if denominator not in ("sum", "difference"):
        raise ValueError(f"unknown denominator {denominator!r}")
    mu_n, mu_p = neutral.mean(), positive.mean()
    denom = abs(mu_p + mu_n) if denominator == "sum" else abs(mu_p - mu_n)
    if denom == 0.0:
        raise DegenerateControls("control means cancel; Z' undefined")
    sigma_n = neutral.std(ddof=1)
    sigma_p = positive.std(ddof=1)
    return 1.0 - 3.0 * (sigma_p + sigma_n) / denom


def _hill_residual_jacobian(theta, log_c, y):
    s0, s_inf, log_ec50, n = theta
    r = np.power(10.0, n * (log_ec50 - log_c))
    d = 1.0 + r
    model = s0 + (s_inf - s0) / d
    res = model - y
    span = s_inf - s0
    jac = np.column_stack([
        r / d,
        1.0 / d,
        -span * r * n * LN10 / d**2,
        -span * r * LN10 * (log_ec50 - log_c) / d**2,
    ])
    return res, jac


def fit_hill(dr: DoseResponse, max_iter: int = 200, rel_tol: float = 1e-10) -> HillFit:
    """Least-squares Hill fit via damped Gauss-Newton in log10(EC50) space."""
    concs = np.array([p[0] for p in dr.points], dtype=np.float64)
    responses = np.array([p[1] for p in dr.points], dtype=np.float64)
    if len(np.unique(concs)) < 4:
        raise NotEnoughPoints(
            f"{dr.compound_id}: need >=4 distinct concentrations, got {len(np.unique(concs))}"
        )
    log_c = np.log10(concs)
    if np.ptp(responses) == 0.0:
        # Flat response: S_inf == S0 and the EC50 is unidentifiable.
        mid = 10.0 ** float(log_c.mean())
        return HillFit(float(responses[0]), float(responses[0]), mid, 1.0, 0.0, False)

    theta = np.array([
        responses[0],
        responses[-1],
        float((log_c.min() + log_c.max()) / 2.0),
        1.0,
    ])
    res, jac = _hill_residual_jacobian(theta, log_c, responses)
    sse = float(res @ res)
    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        accepted = False
        for _ in range(25):
            lhs = jac.T @ jac + lam * np.eye(4)
            rhs = jac.T @ res
            try:
                step = np.linalg.solve(lhs, rhs)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta - step
            trial[3] = min(max(trial[3], HILL_N_BOUNDS[0]), HILL_N_BOUNDS[1])
            trial_res, trial_jac = _hill_residual_jacobian(trial, log_c, responses)
            trial_sse = float(trial_res @ trial_res)
            if trial_sse <= sse:
                accepted = True
                rel_change = abs(sse - trial_sse) / max(sse, 1e-300)
                theta, res, jac, sse = trial, trial_res, trial_jac, trial_sse
                lam = max(lam * 0.3, 1e-12)
                if rel_change < rel_tol:
                    converged = True
                break
            lam *= 10.0
        if converged or not accepted:
            break
    return HillFit(
        s0=float(theta[0]),
        s_inf=float(theta[1]),
        ec50=float(10.0 ** theta[2]),
        n=float(theta[3]),
        residual_sse=sse,
        converged=converged,
    )


def cell_feature_matrix(table: FeatureTable, feature_names) -> tuple:
    """Per-cell rows of level-prefixed features.

    Returns (matrix, well_ids); cells missing any requested value are
    dropped.
    """
    def split(name):
        for prefix in ("nucleus", "cell", "subcellular"):
            if name.startswith(prefix + "_"):
                return prefix, name[len(prefix) + 1:]
        raise ValueError(f"feature name {name!r} lacks a level prefix")

    wanted = [split(name) for name in feature_names]
    by_key = {}
    for row in table.rows():
        by_key[(row["image_id"], row["object_level"], row["object_id"])] = row

    rows, wells = [], []
    for row in table.rows("cell"):
        values = []
        for level, column in wanted:
            source = row if level == "cell" else by_key.get(
                (row["image_id"], level, row["object_id"])
            )
            values.append(None if source is None else source.get(column))
        if any(v is None for v in values):
            continue
        rows.append([float(v) for v in values])
        wells.append(row["well_id"])
    return np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names)), wells


def _roles_for_wells(wells, layout: PlateLayout):
    roles = []
    for well_id in wells:
        well = layout.wells.get(well_id)
        if well is None:
            raise LayoutMismatch(f"well {well_id!r} missing from layout")
        roles.append(well.role)
    return np.array(roles)


def lda_weighted_feature(table: FeatureTable, layout: PlateLayout,
                         feature_names=None) -> dict[str, float]:
    """Per-well composite score from a Fisher discriminant on control cells.

    Features are standardized by control-population statistics; the
    discriminant is fit on cell-level control rows, applied to every cell,
    oriented so positive controls score higher, and averaged per well.
    """
    feature_names = list(feature_names or DEFAULT_LDA_FEATURES)
    x, wells = cell_feature_matrix(table, feature_names)
    if len(wells) == 0:
        raise DegenerateControls("no cells with complete feature values")
    roles = _roles_for_wells(wells, layout)
    neutral = x[roles == "neutral_control"]
    positive = x[roles == "positive_control"]
    if len(neutral) == 0 or len(positive) == 0:
        raise DegenerateControls("both control groups must contain cells")

    controls = np.vstack([neutral, positive])
    mu = controls.mean(axis=0)
    sd = controls.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    xs = (x - mu) / sd
    neu_s = (neutral - mu) / sd
    pos_s = (positive - mu) / sd

    scatter = _within_scatter(neu_s) + _within_scatter(pos_s)
    delta = pos_s.mean(axis=0) - neu_s.mean(axis=0)
    dim = scatter.shape[0]
    cond = np.linalg.cond(scatter)
    if not np.isfinite(cond) or cond > 1e12:
        scatter = scatter + np.eye(dim) * (1e-6 * np.trace(scatter) / dim)
    try:
        w = np.linalg.solve(scatter, delta)
    except np.linalg.LinAlgError:
        scatter = scatter + np.eye(dim) * (1e-6 * np.trace(scatter) / dim)
        w = np.linalg.solve(scatter, delta)

    scores = xs @ w
    if scores[roles == "positive_control"].mean() < scores[roles == "neutral_control"].mean():
        scores = -scores

    per_well: dict[str, list] = {}
    for well_id, score in zip(wells, scores):
        per_well.setdefault(well_id, []).append(score)
    return {well_id: float(np.mean(v)) for well_id, v in sorted(per_well.items())}


def _within_scatter(xs) -> np.ndarray:
    centered = xs - xs.mean(axis=0)
    return centered.T @ centered


def aggregate_per_well(table: FeatureTable, feature_name: str) -> dict[str, float]:
    """Mean of one level-prefixed feature over the cells of each well."""
    x, wells = cell_feature_matrix(table, [feature_name])
    per_well: dict[str, list] = {}
    for well_id, value in zip(wells, x[:, 0]):
        per_well.setdefault(well_id, []).append(value)
    return {well_id: float(np.mean(v)) for well_id, v in sorted(per_well.items())}


def zprime_of_well_scores(scores: dict[str, float], layout: PlateLayout,
                          denominator: str = "sum") -> float:
    neutral = [scores[w.well_id] for w in layout.wells_by_role("neutral_control")
               if w.well_id in scores]
    positive = [scores[w.well_id] for w in layout.wells_by_role("positive_control")
                if w.well_id in scores]
    return z_prime(neutral, positive, denominator=denominator)


def candidate_feature_names(table: FeatureTable) -> list[str]:
    """All level-prefixed numeric features present in the table."""
    from .features import FEATURE_COLUMNS

    names = []
    for level in ("nucleus", "cell"):
        for column in FEATURE_COLUMNS:
            if column == "parent_cell_id":
                continue
            if any(r[column] is not None for r in table.rows(level)):
                names.append(f"{level}_{column}")
    return sorted(names)


def best_feature_by_zprime(table: FeatureTable, layout: PlateLayout,
                           denominator: str = "sum",
                           include_lda: bool = True) -> tuple[str, float]:
    """Feature (or LDA composite) with the highest control Z'-factor."""
    results = {}
    for name in candidate_feature_names(table):
        try:
            results[name] = zprime_of_well_scores(aggregate_per_well(table, name),
                                                  layout, denominator)
        except DegenerateControls:
            continue
    if include_lda:
        try:
            results["lda_composite"] = zprime_of_well_scores(
                lda_weighted_feature(table, layout), layout, denominator
            )
        except DegenerateControls:
            pass
    if not results:
        raise DegenerateControls("no feature yields a computable Z'-factor")
    best = min(results.items(), key=lambda kv: (-kv[1], kv[0]))
    return best


def build_dose_response(scores: dict[str, float], layout: PlateLayout,
                        compound_id: str) -> DoseResponse:
    """Collect per-well scores of one compound into a titration series."""
    by_conc: dict[float, list] = {}
    for well in layout.wells_by_role("compound"):
        if well.compound_id != compound_id or well.well_id not in scores:
            continue
        by_conc.setdefault(well.concentration, []).append(scores[well.well_id])
    points = tuple(
        (conc, float(np.mean(values)), len(values))
        for conc, values in sorted(by_conc.items())
    )
    return DoseResponse(compound_id=compound_id, points=points)
