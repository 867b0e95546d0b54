"""Spectra, pixels and bag-labelled training data.

A *bag* is a set of pixels that shares a single binary label.  A positive
bag holds at least one pixel with a non-zero target abundance; a negative
bag holds none.  Which pixels carry target is never known, so nothing here
attempts to verify the label against the spectra.  That contract is the
responsibility of whoever builds the bags (the synthetic generator or the
bag-spec loader).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Tuple

import numpy as np

from .errors import InputError

__all__ = [
    "Label",
    "Pixel",
    "Bag",
    "BagSet",
    "ValidationReport",
    "as_spectrum",
    "validate",
]


def as_spectrum(values, *, name: str = "spectrum") -> np.ndarray:
    """Return ``values`` as a read-only, finite, 1-D float64 array."""
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.size < 1:
        raise InputError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


class Label(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True, eq=False)
class Pixel:
    """A spectrum plus, optionally, the (row, col) it came from."""

    spectrum: np.ndarray
    location: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        # Kept lenient so that validate() can report bad data instead of
        # construction failing half way through a load.
        arr = np.array(self.spectrum, dtype=np.float64).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "spectrum", arr)
        if self.location is not None:
            row, col = self.location
            object.__setattr__(self, "location", (int(row), int(col)))

    @property
    def bands(self) -> int:
        return int(self.spectrum.size)

    def __eq__(self, other):
        if not isinstance(other, Pixel):
            return NotImplemented
        return self.location == other.location and np.array_equal(self.spectrum, other.spectrum)

    __hash__ = None


@dataclass(frozen=True)
class Bag:
    label: Label
    pixels: Tuple[Pixel, ...]
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        pixels = tuple(p if isinstance(p, Pixel) else Pixel(p) for p in self.pixels)
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "id", str(self.id))

    def __len__(self) -> int:
        return len(self.pixels)

    @property
    def spectra(self) -> np.ndarray:
        """(N, D) array of member spectra.  Requires a uniform band count."""
        if not self.pixels:
            raise InputError(f"bag {self.id!r} is empty")
        dims = {p.bands for p in self.pixels}
        if len(dims) != 1:
            raise InputError(f"bag {self.id!r} mixes band counts {sorted(dims)}")
        out = np.stack([p.spectrum for p in self.pixels])
        out.setflags(write=False)
        return out

    @classmethod
    def from_array(cls, label, spectra, id: str = "", locations=None) -> "Bag":
        spectra = np.atleast_2d(np.asarray(spectra, dtype=np.float64))
        if locations is None:
            locations = [None] * len(spectra)
        return cls(label, tuple(Pixel(s, loc) for s, loc in zip(spectra, locations)), id)


@dataclass(frozen=True)
class BagSet:
    positive: Tuple[Bag, ...] = ()
    negative: Tuple[Bag, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "positive", tuple(self.positive))
        object.__setattr__(self, "negative", tuple(self.negative))

    @property
    def n_positive(self) -> int:
        return len(self.positive)

    @property
    def n_negative(self) -> int:
        return len(self.negative)

    @property
    def bags(self) -> Tuple[Bag, ...]:
        return self.positive + self.negative

    @property
    def bands(self) -> int:
        for bag in self.bags:
            for p in bag.pixels:
                return p.bands
        raise InputError("bag set contains no pixels")

    def positive_pixels(self) -> np.ndarray:
        """All positive-bag spectra stacked in (bag, pixel) order."""
        return np.concatenate([b.spectra for b in self.positive])

    def negative_pixels(self) -> np.ndarray:
        return np.concatenate([b.spectra for b in self.negative])

    @classmethod
    def from_bags(cls, bags: Iterable[Bag]) -> "BagSet":
        bags = list(bags)
        return cls(
            tuple(b for b in bags if b.label is Label.POSITIVE),
            tuple(b for b in bags if b.label is Label.NEGATIVE),
        )

    def checked(self) -> "BagSet":
        """Return self, raising :class:`InputError` if validation finds problems."""
        report = validate(self)
        if not report.valid:
            raise InputError("invalid bag set: " + "; ".join(report.issues))
        return self


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.issues

    def __str__(self) -> str:
        return "valid" if self.valid else "\n".join(self.issues)


def validate(bagset: BagSet) -> ValidationReport:
    """Collect every structural problem in ``bagset`` without raising."""
    report = ValidationReport()
    issues = report.issues
    if bagset.n_positive == 0:
        issues.append("no positive bags")

    reference: Optional[int] = None
    seen = set()
    for expected, group in ((Label.POSITIVE, bagset.positive), (Label.NEGATIVE, bagset.negative)):
        for bag in group:
            if bag.id in seen:
                issues.append(f"duplicate bag id {bag.id!r}")
            seen.add(bag.id)
            if bag.label is not expected:
                issues.append(f"bag {bag.id!r}: label {bag.label.value} filed under {expected.value}")
            if not bag.pixels:
                issues.append(f"bag {bag.id!r}: empty bag")
                continue
            dims = sorted({p.bands for p in bag.pixels})
            if len(dims) > 1:
                issues.append(f"bag {bag.id!r}: dimension mismatch {dims}")
            elif reference is None:
                reference = dims[0]
            elif dims[0] != reference:
                issues.append(
                    f"bag {bag.id!r}: dimension mismatch, {dims[0]} bands vs {reference}"
                )
            if dims[0] < 1:
                issues.append(f"bag {bag.id!r}: zero-length spectrum")
            if any(not np.all(np.isfinite(p.spectrum)) for p in bag.pixels):
                issues.append(f"bag {bag.id!r}: non-finite (NaN/Inf) entries")
    return report
