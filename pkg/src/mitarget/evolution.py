"""Elitist evolutionary search for the target signature.

Each generation mutates every member once (one randomly chosen band gets
additive noise from a two-component zero-mean Gaussian mixture), pools
parents and children, and keeps the ``n_pop`` best.  Parents are listed
before children in the pool and the sort is stable, so ties favour
incumbents and then lower indices.

All random draws for a generation are made in member order from one
``numpy.random.Generator`` seeded from ``EAConfig.seed``; a run is therefore
bit-reproducible on a given platform.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .bags import BagSet
from .errors import InitializationError, InputError
from .objective import BagObjective

__all__ = [
    "MutationParams",
    "EAConfig",
    "Population",
    "EstimationResult",
    "init_population",
    "mutate",
    "step",
    "run",
]

log = logging.getLogger(__name__)

Sigma = Union[float, np.ndarray]


@dataclass(frozen=True)
class MutationParams:
    """Narrow/wide mixture for additive mutation noise.

    ``sigma_n`` and ``sigma_w`` are scalars or per-band arrays.
    """

    w_n: float = 0.8
    sigma_n: Sigma = 0.01
    sigma_w: Sigma = 0.1

    def __post_init__(self):
        if not 0.0 <= self.w_n <= 1.0:
            raise InputError(f"w_n must lie in [0, 1], got {self.w_n}")
        sn = np.asarray(self.sigma_n, dtype=np.float64)
        sw = np.asarray(self.sigma_w, dtype=np.float64)
        if np.any(~(sn > 0)) or np.any(~(sw > 0)):
            raise InputError("mutation standard deviations must be positive")
        if np.any(~(sn < sw)):
            raise InputError("sigma_n must be smaller than sigma_w")

    @classmethod
    def from_data(cls, positive_pixels: np.ndarray, w_n: float = 0.8,
                  narrow: float = 0.01, ratio: float = 10.0) -> "MutationParams":
        """Scale the noise to the per-band spread of the positive pixels."""
        std = np.std(np.atleast_2d(positive_pixels), axis=0)
        # Constant bands would give zero noise; fall back to the mean spread.
        fallback = std[std > 0].mean() if np.any(std > 0) else 1.0
        std = np.where(std > 0, std, fallback)
        sigma_n = narrow * std
        return cls(w_n, sigma_n, ratio * sigma_n)

    def sigmas(self, bands: int) -> Tuple[np.ndarray, np.ndarray]:
        sn = np.broadcast_to(np.asarray(self.sigma_n, dtype=np.float64), (bands,))
        sw = np.broadcast_to(np.asarray(self.sigma_w, dtype=np.float64), (bands,))
        return sn, sw

    def to_dict(self) -> dict:
        def plain(v):
            a = np.asarray(v, dtype=np.float64)
            return float(a) if a.ndim == 0 else a.tolist()
        return {"w_n": self.w_n, "sigma_n": plain(self.sigma_n), "sigma_w": plain(self.sigma_w)}


@dataclass(frozen=True)
class EAConfig:
    n_pop: int = 50
    n_iter: int = 500
    mutation: Optional[MutationParams] = None
    seed: int = 0
    init: Optional[Sequence] = None
    patience: Optional[int] = None

    def __post_init__(self):
        if int(self.n_pop) < 2:
            raise InputError(f"n_pop must be >= 2, got {self.n_pop}")
        if int(self.n_iter) < 1:
            raise InputError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.patience is not None and int(self.patience) < 1:
            raise InputError("patience must be a positive integer")


@dataclass
class Population:
    """Candidates sorted by descending objective."""

    signatures: np.ndarray
    objectives: np.ndarray

    def __len__(self) -> int:
        return len(self.objectives)

    @property
    def best(self) -> Tuple[np.ndarray, float]:
        return self.signatures[0], float(self.objectives[0])

    @classmethod
    def sorted(cls, signatures: np.ndarray, objectives: np.ndarray, size: Optional[int] = None):
        order = np.argsort(-objectives, kind="stable")
        if size is not None:
            order = order[:size]
        return cls(signatures[order].copy(), objectives[order].copy())


@dataclass
class EstimationResult:
    best_signature: np.ndarray
    best_objective: float
    trace: np.ndarray
    evaluations: int
    mutation: MutationParams = field(default_factory=MutationParams)

    def to_dict(self) -> dict:
        return {
            "best_signature": [float(v) for v in self.best_signature],
            "best_objective": float(self.best_objective),
            "evaluations": int(self.evaluations),
            "trace": [float(v) for v in self.trace],
            "mutation": self.mutation.to_dict(),
        }


def _evaluate(objective: BagObjective, signatures: np.ndarray) -> np.ndarray:
    # One signature at a time, so each stored objective is exactly what
    # BagObjective.value / breakdown would report for it.
    return np.array([objective.value(s) for s in signatures])


def init_population(objective: BagObjective, bags: BagSet, cfg: EAConfig,
                    rng: np.random.Generator) -> Population:
    """Seed the population from positive-bag pixels.

    Default: the positive-bag pixel with the highest objective plus
    ``n_pop - 1`` positive pixels drawn uniformly with replacement.  With
    ``cfg.init`` the given spectra are used instead, truncated to
    ``n_pop`` or padded with random positive pixels.
    """
    candidates = bags.positive_pixels()
    n_pop = int(cfg.n_pop)
    if cfg.init is None:
        scores = _evaluate(objective, candidates)
        if not np.any(np.isfinite(scores)):
            raise InitializationError("every positive-bag pixel equals the background mean")
        first = candidates[int(np.argmax(scores))][None, :]
    else:
        first = np.atleast_2d(np.asarray(cfg.init, dtype=np.float64))
        if first.shape[1] != candidates.shape[1]:
            raise InputError(
                f"initial spectra have {first.shape[1]} bands, data has {candidates.shape[1]}"
            )
        first = first[:n_pop]
    picks = rng.integers(0, len(candidates), size=n_pop - len(first))
    members = np.concatenate([first, candidates[picks]])
    values = _evaluate(objective, members)
    if not np.any(np.isfinite(values)):
        raise InitializationError("initial population is entirely degenerate")
    return Population.sorted(members, values)


def mutate(parent, params: MutationParams, rng: np.random.Generator) -> np.ndarray:
    """Copy of ``parent`` with one uniformly chosen band perturbed."""
    child = np.array(parent, dtype=np.float64, copy=True)
    sn, sw = params.sigmas(child.size)
    k = int(rng.integers(child.size))
    narrow = rng.random() < params.w_n
    child[k] += rng.normal(0.0, sn[k] if narrow else sw[k])
    return child


def step(pop: Population, objective: BagObjective, params: MutationParams,
         rng: np.random.Generator) -> Population:
    """One mutation + (mu + lambda) selection generation."""
    children = np.stack([mutate(s, params, rng) for s in pop.signatures])
    child_values = _evaluate(objective, children)
    return Population.sorted(
        np.concatenate([pop.signatures, children]),
        np.concatenate([pop.objectives, child_values]),
        size=len(pop),
    )


def run(objective: BagObjective, bags: BagSet, cfg: EAConfig = EAConfig()) -> EstimationResult:
    """Run the full search and return the best signature with its trace."""
    rng = np.random.default_rng(cfg.seed)
    params = cfg.mutation or MutationParams.from_data(bags.positive_pixels())
    pop = init_population(objective, bags, cfg, rng)
    evaluations = len(pop) if cfg.init is not None else len(pop) + len(bags.positive_pixels())
    trace = [float(pop.objectives[0])]
    stale = 0
    for it in range(int(cfg.n_iter)):
        pop = step(pop, objective, params, rng)
        evaluations += len(pop)
        trace.append(float(pop.objectives[0]))
        if cfg.patience is not None:
            stale = stale + 1 if trace[-1] - trace[-2] <= 1e-12 else 0
            if stale >= cfg.patience:
                log.info("stopping after %d iterations without improvement", stale)
                break
    best, value = pop.best
    return EstimationResult(best.copy(), value, np.array(trace), evaluations, params)
