import numpy as np

from core.augment import apply_transform, augment, augment_batch, random_transform


def test_four_quarter_turns_are_identity(rng):
    x = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    np.testing.assert_array_equal(apply_transform(x, rotation=4), x)
    np.testing.assert_array_equal(apply_transform(x, rotation=1), np.rot90(x))


def test_shift_moves_content_and_reflects_border():
    x = np.arange(16, dtype=np.uint8).reshape(4, 4, 1)
    shifted = apply_transform(x, shift=(0, 1))
    np.testing.assert_array_equal(shifted[:, 1:], x[:, :-1])
    np.testing.assert_array_equal(shifted[:, 0], x[:, 1])


def test_brightness_clips_to_valid_range():
    x = np.full((2, 2, 3), 250, dtype=np.uint8)
    assert apply_transform(x, brightness=1.1).max() == 255
    f = np.full((2, 2, 3), 0.95, dtype=np.float32)
    out = apply_transform(f, brightness=1.1)
    assert out.dtype == np.float32 and out.max() == 1.0


def test_random_transform_ranges(rng):
    for _ in range(50):
        t = random_transform(rng, 64, include_brightness=True)
        assert t["rotation"] in range(4)
        assert all(abs(s) <= 6 for s in t["shift"])
        assert 0.9 <= t["brightness"] <= 1.1
    assert random_transform(rng, 64)["brightness"] == 1.0


def test_augment_is_seeded(rng):
    batch = rng.random((3, 16, 16, 3)).astype(np.float32)
    a = augment_batch(batch, np.random.default_rng(5), include_brightness=True)
    b = augment_batch(batch, np.random.default_rng(5), include_brightness=True)
    np.testing.assert_array_equal(a, b)
    assert a.shape == batch.shape and a.dtype == batch.dtype
    assert augment(batch[0], np.random.default_rng(0)).shape == (16, 16, 3)
