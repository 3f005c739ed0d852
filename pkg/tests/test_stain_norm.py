import numpy as np
import pytest

from core.errors import DataError
from core.stain_norm import histogram_match


def test_matching_an_image_to_itself_is_identity(rng):
    image = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
    np.testing.assert_array_equal(histogram_match(image, image), image)


def test_monotone_relabelling_is_recovered_exactly(rng):
    source = rng.integers(0, 128, size=(48, 48, 3), dtype=np.uint8)
    reference = (2 * source.astype(np.int64) + 1).astype(np.uint8)
    np.testing.assert_array_equal(histogram_match(source, reference), reference)


def test_constant_reference(rng):
    source = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    reference = np.full((10, 10, 3), 77, dtype=np.uint8)
    assert np.all(histogram_match(source, reference) == 77)


def test_reference_size_may_differ(rng):
    source = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    reference = rng.integers(100, 200, size=(40, 24, 3), dtype=np.uint8)
    out = histogram_match(source, reference)
    assert out.shape == source.shape
    assert out.min() >= 100 and out.max() < 200


def test_rejects_float_images():
    with pytest.raises(DataError):
        histogram_match(np.zeros((4, 4, 3)), np.zeros((4, 4, 3), dtype=np.uint8))


def _cdf(channel):
    counts = np.bincount(channel.ravel(), minlength=256)
    return np.cumsum(counts) / counts.sum()


def _skewed_reference(rng, shape):
    return np.clip(rng.normal(170, 25, size=shape), 0, 255).astype(np.uint8)


def test_matching_twice_changes_nothing(rng):
    source = rng.integers(0, 256, size=(40, 40, 3), dtype=np.uint8)
    reference = _skewed_reference(rng, (30, 50, 3))
    once = histogram_match(source, reference)
    np.testing.assert_array_equal(histogram_match(once, reference), once)


def test_matched_cdf_tracks_the_reference(rng):
    for _ in range(20):
        source = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
        reference = _skewed_reference(rng, (48, 48, 3))
        matched = histogram_match(source, reference)
        for c in range(3):
            gap = _cdf(reference[..., c]) - _cdf(matched[..., c])
            # a source level is never split, so the gap is below its largest level share
            largest_level = np.bincount(source[..., c].ravel()).max() / source[..., c].size
            assert gap.min() >= -1e-12
            assert gap.max() <= largest_level + 1e-12
