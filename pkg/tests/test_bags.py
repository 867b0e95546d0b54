import numpy as np
import pytest

from mitarget.bags import Bag, BagSet, Label, Pixel, as_spectrum, validate
from mitarget.errors import InputError


def test_valid_bagset():
    bs = BagSet(
        (Bag(Label.POSITIVE, (Pixel([1.0, 2.0]), Pixel([3.0, 4.0])), "p"),),
        (Bag(Label.NEGATIVE, (Pixel([0.0, 0.0]),), "n"),),
    )
    report = validate(bs)
    assert report.valid
    assert str(report) == "valid"


def test_dimension_mismatch_reported_with_bag_id():
    bs = BagSet((Bag(Label.POSITIVE, (Pixel([1.0, 2.0]), Pixel([1.0, 2.0, 3.0])), "odd"),))
    report = validate(bs)
    assert not report.valid
    assert any("odd" in s and "dimension mismatch" in s for s in report.issues)


def test_no_positive_bags():
    bs = BagSet((), (Bag(Label.NEGATIVE, (Pixel([0.0]),), "n"),))
    assert "no positive bags" in validate(bs).issues


def test_empty_and_nan_and_duplicates_reported():
    bs = BagSet(
        (Bag(Label.POSITIVE, (Pixel([np.nan, 1.0]),), "a"),),
        (Bag(Label.NEGATIVE, (), "a"),),
    )
    issues = " | ".join(validate(bs).issues)
    assert "non-finite" in issues
    assert "empty" in issues
    assert "duplicate" in issues


def test_cross_bag_dimension_mismatch():
    bs = BagSet(
        (Bag(Label.POSITIVE, (Pixel([1.0, 2.0]),), "a"),),
        (Bag(Label.NEGATIVE, (Pixel([1.0, 2.0, 3.0]),), "b"),),
    )
    assert any("b" in s for s in validate(bs).issues)


def test_validate_does_not_modify():
    bag = Bag(Label.POSITIVE, (Pixel([1.0, 2.0]),), "p")
    bs = BagSet((bag,))
    validate(bs)
    assert bs.positive[0] is bag
    with pytest.raises(ValueError):
        bag.pixels[0].spectrum[0] = 5.0


def test_misfiled_label():
    bs = BagSet((Bag(Label.NEGATIVE, (Pixel([1.0]),), "x"),))
    assert any("filed under positive" in s for s in validate(bs).issues)


def test_checked_raises():
    with pytest.raises(InputError):
        BagSet().checked()


def test_as_spectrum():
    assert as_spectrum(3.0).shape == (1,)
    with pytest.raises(InputError):
        as_spectrum([1.0, np.inf])
    with pytest.raises(InputError):
        as_spectrum([])


def test_from_bags_splits_by_label():
    bags = [Bag.from_array("negative", [[0.0]], "n"), Bag.from_array("positive", [[1.0]], "p")]
    bs = BagSet.from_bags(bags)
    assert [b.id for b in bs.positive] == ["p"]
    assert [b.id for b in bs.negative] == ["n"]
    assert bs.bands == 1
