"""Detection maps, ROC scoring and the exhaustive 2-D grid search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from .background import BackgroundModel, MatchedFilter
from .bags import BagSet
from .errors import InputError
from .objective import BagObjective, ObjectiveConfig
from .synth import GroundTruth, Scene

__all__ = [
    "DetectionMap",
    "RocCurve",
    "GridSearchResult",
    "detection_map",
    "roc",
    "grid_search_2d",
]


@dataclass(frozen=True)
class DetectionMap:
    rows: int
    cols: int
    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if s.size != self.rows * self.cols:
            raise InputError("score map size does not match extent")
        if not np.all(np.isfinite(s)):
            raise InputError("detection scores must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    @property
    def image(self) -> np.ndarray:
        return self.scores.reshape(self.rows, self.cols)


def detection_map(scene: Scene, model: BackgroundModel, signature) -> DetectionMap:
    """Matched-filter response of every scene pixel."""
    scores = MatchedFilter(model)(signature, scene.pixels)
    return DetectionMap(scene.rows, scene.cols, scores)


@dataclass(frozen=True)
class RocCurve:
    """Thresholded operating points, ordered by decreasing threshold.

    ``far`` is false alarms per unit area (false-alarm pixels divided by
    background pixel count times ``area_per_pixel``).
    """

    threshold: np.ndarray
    far: np.ndarray
    pd: np.ndarray
    area_per_pixel: float

    @property
    def points(self):
        return list(zip(self.threshold.tolist(), self.far.tolist(), self.pd.tolist()))

    def pd_at(self, far) -> np.ndarray:
        """Best detection rate achievable with false-alarm rate <= ``far``.

        Returns 0 where no operating point qualifies.
        """
        far = np.atleast_1d(np.asarray(far, dtype=np.float64))
        idx = np.searchsorted(self.far, far, side="right") - 1
        out = np.zeros(far.shape)
        ok = idx >= 0
        out[ok] = np.maximum.accumulate(self.pd)[idx[ok]]
        return out


def roc(dmap: DetectionMap, truth: GroundTruth, area_per_pixel: float = 1.0,
        max_far: Optional[float] = None, halo: Optional[int] = None) -> RocCurve:
    """Sweep a threshold over every distinct score.

    A pixel counts at threshold ``t`` when its score is ``>= t``.  Target
    pixels are those with non-zero abundance; they are excluded from the
    false-alarm pool.  With ``halo`` (a pixel radius) each target is scored
    by the maximum within its square neighbourhood and background pixels in
    any target halo are ignored, a coarse stand-in for object-level scoring.
    """
    if (dmap.rows, dmap.cols) != (truth.rows, truth.cols):
        raise InputError("detection map and ground truth extents differ")
    if not area_per_pixel > 0:
        raise InputError("area_per_pixel must be positive")
    is_target = truth.is_target
    if not is_target.any():
        raise InputError("ground truth contains no target pixels")
    scores = dmap.scores
    background = ~is_target
    target_scores = scores[is_target]
    if halo:
        size = 2 * int(halo) + 1
        img = dmap.image
        target_scores = ndimage.maximum_filter(img, size=size, mode="nearest").reshape(-1)[is_target]
        near = ndimage.binary_dilation(is_target.reshape(img.shape), np.ones((size, size), bool))
        background = ~near.reshape(-1)
    bg_scores = scores[background]
    n_bg = bg_scores.size
    if n_bg == 0:
        raise InputError("no background pixels left to count false alarms")

    thresholds = np.unique(np.concatenate([target_scores, bg_scores]))[::-1]
    # Counts of scores >= t for each threshold, via sorted ascending arrays.
    t_sorted = np.sort(target_scores)
    b_sorted = np.sort(bg_scores)
    detected = t_sorted.size - np.searchsorted(t_sorted, thresholds, side="left")
    alarms = b_sorted.size - np.searchsorted(b_sorted, thresholds, side="left")
    pd = detected / t_sorted.size
    far = alarms / (n_bg * area_per_pixel)
    if max_far is not None:
        keep = far <= max_far
        thresholds, far, pd = thresholds[keep], far[keep], pd[keep]
    return RocCurve(thresholds, far.astype(np.float64), pd.astype(np.float64), float(area_per_pixel))


@dataclass(frozen=True)
class GridSearchResult:
    """Objective on a regular 2-D lattice.

    ``values[i, j]`` is the objective at ``(axes[0][i], axes[1][j])``.
    """

    bounds: Tuple[Tuple[float, float], Tuple[float, float]]
    step: float
    axes: Tuple[np.ndarray, np.ndarray]
    values: np.ndarray
    argmax: np.ndarray
    argmax_value: float

    @property
    def evaluations(self) -> int:
        return int(self.values.size)


def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    if not hi >= lo:
        raise InputError(f"bad bounds ({lo}, {hi})")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def grid_search_2d(model: BackgroundModel, bags: BagSet, obj_cfg: ObjectiveConfig = ObjectiveConfig(),
                   bounds=((0.0, 11.0), (0.0, 11.0)), step: float = 0.01,
                   chunk: int = 8192) -> GridSearchResult:
    """Evaluate the objective at every lattice point of a 2-D box.

    Lattice points equal to the background mean get ``-inf``.  The argmax
    is the lexicographically first maximizer (first coordinate major).
    """
    if model.bands != 2 or bags.bands != 2:
        raise InputError("the grid search is only defined for 2-band data")
    if not step > 0:
        raise InputError("step must be positive")
    bounds = np.asarray(bounds, dtype=np.float64)
    if bounds.shape == (2,):
        bounds = np.stack([bounds, bounds])
    ax0 = _axis(bounds[0, 0], bounds[0, 1], step)
    ax1 = _axis(bounds[1, 0], bounds[1, 1], step)
    obj = BagObjective.matched_filter(model, bags, obj_cfg)

    X0, X1 = np.meshgrid(ax0, ax1, indexing="ij")
    points = np.column_stack([X0.ravel(), X1.ravel()])
    values = np.empty(len(points))
    for start in range(0, len(points), chunk):
        values[start:start + chunk] = obj.values(points[start:start + chunk])
    k = int(np.argmax(values))
    values = values.reshape(len(ax0), len(ax1))
    return GridSearchResult(
        bounds=(tuple(bounds[0]), tuple(bounds[1])),
        step=float(step),
        axes=(ax0, ax1),
        values=values,
        argmax=points[k].copy(),
        argmax_value=float(values.flat[k]),
    )
