"""Synthetic scenes with sub-pixel targets and their training bags.

The defaults reproduce the two-band toy experiment: a 100 x 100 Gaussian
background with mean (5, 5) and unit variances correlated at 0.5, a target
at (10, 3) linearly mixed at 25-50 % abundance into the pixels of a
10 x 10 grid (rows and cols 5, 15, ..., 95), three positive bags of 30
pixels with one mixed pixel each and three negative bags of 80 background
pixels.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as la

from .bags import Bag, BagSet, Label, Pixel, as_spectrum
from .errors import InputError, NumericError

__all__ = [
    "SyntheticConfig",
    "Scene",
    "GroundTruth",
    "mix_pixel",
    "generate_scene",
    "sample_bags",
    "grid_locations",
]


@dataclass(frozen=True)
class Scene:
    """Image cube stored as row-major (rows * cols, bands) pixels."""

    rows: int
    cols: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 1:
            px = px[:, None]
        if px.shape[0] != self.rows * self.cols:
            raise InputError(
                f"scene has {px.shape[0]} pixels, expected {self.rows} x {self.cols}"
            )
        if px.shape[1] < 1:
            raise InputError("scene has no bands")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def bands(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def cube(self) -> np.ndarray:
        return self.pixels.reshape(self.rows, self.cols, self.bands)

    def index(self, row: int, col: int) -> int:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise InputError(f"location ({row}, {col}) outside {self.rows} x {self.cols} scene")
        return row * self.cols + col

    def pixel(self, row: int, col: int) -> Pixel:
        return Pixel(self.pixels[self.index(row, col)], (row, col))


@dataclass(frozen=True)
class GroundTruth:
    rows: int
    cols: int
    abundance: np.ndarray
    target: Optional[np.ndarray] = None

    def __post_init__(self):
        ab = np.asarray(self.abundance, dtype=np.float64).reshape(-1)
        if ab.size != self.rows * self.cols:
            raise InputError("abundance map size does not match extent")
        if np.any(~((ab >= 0) & (ab <= 1))):
            raise InputError("abundances must lie in [0, 1]")
        ab.setflags(write=False)
        object.__setattr__(self, "abundance", ab)
        if self.target is not None:
            object.__setattr__(self, "target", as_spectrum(self.target, name="target"))

    @property
    def is_target(self) -> np.ndarray:
        return self.abundance > 0


def grid_locations(rows: int, cols: int, offset: int = 5, spacing: int = 10):
    return [(r, c) for r in range(offset, rows, spacing) for c in range(offset, cols, spacing)]


@dataclass(frozen=True)
class SyntheticConfig:
    rows: int = 100
    cols: int = 100
    bg_mean: Tuple[float, ...] = (5.0, 5.0)
    bg_cov: Tuple[Tuple[float, ...], ...] = ((1.0, 0.5), (0.5, 1.0))
    target: Tuple[float, ...] = (10.0, 3.0)
    # None selects the regular grid.
    target_locations: Optional[Tuple[Tuple[int, int], ...]] = None
    proportion_range: Tuple[float, float] = (0.25, 0.5)
    n_pos_bags: int = 3
    pos_bag_size: int = 30
    n_neg_bags: int = 3
    neg_bag_size: int = 80
    seed: int = 0
    cov_regularization: float = 0.0

    def __post_init__(self):
        mean = np.asarray(self.bg_mean, dtype=np.float64)
        cov = np.asarray(self.bg_cov, dtype=np.float64)
        d = mean.size
        if cov.shape != (d, d) or np.asarray(self.target).size != d:
            raise InputError("bg_mean, bg_cov and target disagree on the band count")
        lo, hi = self.proportion_range
        if not 0 < lo <= hi <= 1:
            raise InputError(f"proportion range must satisfy 0 < lo <= hi <= 1, got {(lo, hi)}")
        for name in ("rows", "cols", "n_pos_bags", "pos_bag_size", "n_neg_bags", "neg_bag_size"):
            if int(getattr(self, name)) < 1:
                raise InputError(f"{name} must be a positive integer")
        for r, c in self.locations():
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise InputError(f"target location ({r}, {c}) outside the scene")

    def locations(self):
        if self.target_locations is None:
            return grid_locations(self.rows, self.cols)
        return [tuple(int(v) for v in loc) for loc in self.target_locations]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = np.asarray(v).tolist()
        return d

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "SyntheticConfig":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown synthetic config keys: {sorted(unknown)}")
        for k in ("bg_mean", "target", "proportion_range"):
            if k in d:
                d[k] = tuple(float(v) for v in d[k])
        if "bg_cov" in d:
            d["bg_cov"] = tuple(tuple(float(v) for v in row) for row in d["bg_cov"])
        if d.get("target_locations") is not None:
            d["target_locations"] = tuple(tuple(int(v) for v in loc) for loc in d["target_locations"])
        return cls(**d)


def mix_pixel(background, target, proportion: float) -> np.ndarray:
    """Linear mixture ``proportion * target + (1 - proportion) * background``."""
    if not 0.0 <= proportion <= 1.0:
        raise InputError(f"proportion must lie in [0, 1], got {proportion}")
    background = np.asarray(background, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if background.shape != target.shape:
        raise InputError("background and target spectra differ in length")
    return proportion * target + (1.0 - proportion) * background


def _streams(seed: int):
    scene_ss, bags_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(scene_ss), np.random.default_rng(bags_ss)


def generate_scene(cfg: SyntheticConfig = SyntheticConfig()) -> Tuple[Scene, GroundTruth]:
    rng, _ = _streams(cfg.seed)
    mean = np.asarray(cfg.bg_mean, dtype=np.float64)
    cov = np.asarray(cfg.bg_cov, dtype=np.float64)
    d = mean.size
    try:
        L = la.cholesky(cov + cfg.cov_regularization * np.eye(d), lower=True)
    except la.LinAlgError as exc:
        raise NumericError("background covariance is not positive definite") from exc
    n = cfg.rows * cfg.cols
    pixels = mean + rng.standard_normal((n, d)) @ L.T

    target = np.asarray(cfg.target, dtype=np.float64)
    abundance = np.zeros(n)
    lo, hi = cfg.proportion_range
    for r, c in cfg.locations():
        i = r * cfg.cols + c
        p = rng.uniform(lo, hi)
        abundance[i] = p
        pixels[i] = mix_pixel(pixels[i], target, p)
    scene = Scene(cfg.rows, cfg.cols, pixels)
    return scene, GroundTruth(cfg.rows, cfg.cols, abundance, target)


def sample_bags(scene: Scene, truth: GroundTruth, cfg: SyntheticConfig = SyntheticConfig()) -> BagSet:
    """Draw disjoint positive and negative bags honouring the label semantics.

    Every positive bag gets exactly one target pixel; everything else is
    drawn without replacement from the zero-abundance pixels.
    """
    _, rng = _streams(cfg.seed)
    targets = np.flatnonzero(truth.abundance > 0)
    clean = np.flatnonzero(truth.abundance == 0)
    n_clean = cfg.n_pos_bags * (cfg.pos_bag_size - 1) + cfg.n_neg_bags * cfg.neg_bag_size
    if len(targets) < cfg.n_pos_bags:
        raise InputError(f"need {cfg.n_pos_bags} target pixels, scene has {len(targets)}")
    if len(clean) < n_clean:
        raise InputError(f"need {n_clean} background pixels, scene has {len(clean)}")
    chosen_targets = rng.choice(targets, size=cfg.n_pos_bags, replace=False)
    pool = iter(rng.permutation(clean)[:n_clean])

    def bag(label, idx, name):
        pix = tuple(Pixel(scene.pixels[i], divmod(int(i), scene.cols)) for i in idx)
        return Bag(label, pix, name)

    positive = []
    for j, t in enumerate(chosen_targets):
        # Target pixel goes to a random slot so it is not always first.
        members = [next(pool) for _ in range(cfg.pos_bag_size - 1)]
        members.insert(int(rng.integers(cfg.pos_bag_size)), t)
        positive.append(bag(Label.POSITIVE, members, f"pos-{j}"))
    negative = [
        bag(Label.NEGATIVE, [next(pool) for _ in range(cfg.neg_bag_size)], f"neg-{j}")
        for j in range(cfg.n_neg_bags)
    ]
    return BagSet(tuple(positive), tuple(negative))
