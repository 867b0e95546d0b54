"""Diverse-density style objective over bag-labelled pixels.

For a candidate signature ``x``::

    J(x) = alpha * sum_j max_i f(x, P_ji) - beta * sum_j mean_i f(x, N_ji)

where ``P_j`` are the positive bags, ``N_j`` the negative bags and ``f`` is
any bigger-is-better instance scorer (the matched filter by default).  The
default weights average over bags, ``alpha = 1/Np`` and ``beta = 1/Nn``.
With no negative bags the second term is zero.

Sums over pixels and over bags are taken over *sorted* values, which makes
the result bit-for-bit independent of the order of pixels within bags and
of bags within the bag set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .background import BackgroundModel, InstanceScorer, MatchedFilter
from .bags import Bag, BagSet, Label
from .errors import DegenerateSignatureError, InputError

__all__ = [
    "ObjectiveConfig",
    "ObjectiveBreakdown",
    "BagObjective",
    "positive_bag_term",
    "negative_bag_term",
    "objective",
]


@dataclass(frozen=True)
class ObjectiveConfig:
    """Bag weights.  ``None`` means "mean over bags" (1/Np, 1/Nn)."""

    alpha: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if value is not None and not np.isfinite(value):
                raise InputError(f"{name} must be finite, got {value}")

    def weights(self, n_positive: int, n_negative: int) -> Tuple[float, float]:
        if self.alpha is None:
            if n_positive < 1:
                raise InputError("mean weighting needs at least one positive bag")
            alpha = 1.0 / n_positive
        else:
            alpha = float(self.alpha)
        if self.beta is None:
            beta = 1.0 / n_negative if n_negative else 0.0
        else:
            beta = float(self.beta)
        return alpha, beta

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta}

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "ObjectiveConfig":
        d = d or {}
        unknown = set(d) - {"alpha", "beta"}
        if unknown:
            raise InputError(f"unknown objective config keys: {sorted(unknown)}")
        return cls(d.get("alpha"), d.get("beta"))


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Objective value with its per-bag parts.

    ``negative_terms`` hold the *mean* response of each negative bag, so
    ``total == alpha * sum(positive_terms) - beta * sum(negative_terms)``.
    """

    total: float
    positive_terms: Tuple[float, ...]
    negative_terms: Tuple[float, ...]
    argmax_pixels: Tuple[int, ...]
    alpha: float
    beta: float


def _sorted_sum(values: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.sort(values, axis=axis).sum(axis=axis)


def _bag_scores(model: BackgroundModel, signature, bag: Bag) -> np.ndarray:
    # Unit whitened signature is computed once so degenerate input raises
    # here, before any pixel is touched.
    return MatchedFilter(model)(signature, bag.spectra)


def positive_bag_term(model: BackgroundModel, signature, bag: Bag) -> Tuple[float, int]:
    """Max matched-filter response over ``bag`` and the first index attaining it."""
    if bag.label is not Label.POSITIVE:
        raise InputError(f"bag {bag.id!r} is not positive")
    scores = _bag_scores(model, signature, bag)
    idx = int(np.argmax(scores))
    return float(scores[idx]), idx


def negative_bag_term(model: BackgroundModel, signature, bag: Bag) -> float:
    """Negated mean matched-filter response over ``bag``."""
    if bag.label is not Label.NEGATIVE:
        raise InputError(f"bag {bag.id!r} is not negative")
    scores = _bag_scores(model, signature, bag)
    return -float(_sorted_sum(scores) / scores.size)


class BagObjective:
    """Objective bound to one bag set and scorer, for repeated evaluation.

    All bag pixels are handed to the scorer once (for the matched filter
    that means they are whitened once); each evaluation then only costs a
    dot product per pixel.
    """

    def __init__(self, bags: BagSet, scorer: InstanceScorer, cfg: ObjectiveConfig = ObjectiveConfig()):
        if bags.n_positive < 1:
            raise InputError("objective needs at least one positive bag")
        self.bags = bags
        self.cfg = cfg
        self.alpha, self.beta = cfg.weights(bags.n_positive, bags.n_negative)
        sizes = [len(b) for b in bags.positive] + [len(b) for b in bags.negative]
        if min(sizes) < 1:
            raise InputError("bags must be non-empty")
        self._bounds = np.concatenate([[0], np.cumsum(sizes)])
        self._n_pos = bags.n_positive
        pixels = np.concatenate([b.spectra for b in bags.bags])
        self._score = scorer.prepare(pixels)
        self.bands = pixels.shape[1]

    @classmethod
    def matched_filter(cls, model: BackgroundModel, bags: BagSet, cfg: ObjectiveConfig = ObjectiveConfig()):
        return cls(bags, MatchedFilter(model), cfg)

    def _parts(self, signatures: np.ndarray):
        S = self._score(signatures)
        b = self._bounds
        pos = [S[:, b[j]:b[j + 1]] for j in range(self._n_pos)]
        neg = [S[:, b[j]:b[j + 1]] for j in range(self._n_pos, len(b) - 1)]
        pos_max = np.stack([p.max(axis=1) for p in pos], axis=1)
        pos_arg = np.stack([p.argmax(axis=1) for p in pos], axis=1)
        if neg:
            neg_mean = np.stack([_sorted_sum(n) / n.shape[1] for n in neg], axis=1)
        else:
            neg_mean = np.zeros((S.shape[0], 0))
        total = self.alpha * _sorted_sum(pos_max)
        if neg:
            total = total - self.beta * _sorted_sum(neg_mean)
        bad = np.isnan(S).any(axis=1)
        return total, pos_max, pos_arg, neg_mean, bad

    def values(self, signatures) -> np.ndarray:
        """Objective for each row of ``signatures``; degenerate rows get -inf."""
        sig = np.atleast_2d(np.asarray(signatures, dtype=np.float64))
        if sig.shape[1] != self.bands:
            raise InputError(f"expected {self.bands} bands, got {sig.shape[1]}")
        total, *_, bad = self._parts(sig)
        total[bad] = -np.inf
        return total

    def value(self, signature) -> float:
        """Scalar objective; -inf for a degenerate signature."""
        return float(self.values(np.asarray(signature, dtype=np.float64)[None, :])[0])

    def breakdown(self, signature) -> ObjectiveBreakdown:
        sig = np.asarray(signature, dtype=np.float64)
        if sig.ndim != 1 or sig.size != self.bands:
            raise InputError(f"signature must have {self.bands} bands")
        total, pos_max, pos_arg, neg_mean, bad = self._parts(sig[None, :])
        if bad[0]:
            raise DegenerateSignatureError("signature coincides with the background mean")
        return ObjectiveBreakdown(
            total=float(total[0]),
            positive_terms=tuple(float(v) for v in pos_max[0]),
            negative_terms=tuple(float(v) for v in neg_mean[0]),
            argmax_pixels=tuple(int(v) for v in pos_arg[0]),
            alpha=self.alpha,
            beta=self.beta,
        )


def objective(model: BackgroundModel, signature, bags: BagSet,
              cfg: ObjectiveConfig = ObjectiveConfig(),
              scorer: Optional[InstanceScorer] = None) -> ObjectiveBreakdown:
    """Evaluate the objective at ``signature`` and return the per-bag breakdown.

    Raises :class:`DegenerateSignatureError` when the signature equals the
    background mean in whitened space.
    """
    scorer = MatchedFilter(model) if scorer is None else scorer
    return BagObjective(bags, scorer, cfg).breakdown(signature)
