"""Patch cropping: sizing, determinism, saliency targeting."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import synthimg
from piqflow.datamodel import ItemKind, ItemRecord, ValidationError
from piqflow.patches import (
    MIN_PATCH_SIDE,
    crop_patches,
    crop_window,
    patch_shape,
    saliency_map,
)


class TestPatchShape:
    def test_forty_percent_of_1000x500(self):
        assert patch_shape(1000, 500, 0.4) == (400, 200)

    def test_identity_fraction(self):
        assert patch_shape(123, 77, 1.0) == (123, 77)

    def test_half_rounds_away_from_zero(self):
        # 0.5 * 25 = 12.5 -> 13, not banker's 12
        assert patch_shape(25, 25, 0.5) == (13, 13)

    @pytest.mark.parametrize("bad", [0.0, -0.2, 1.01])
    def test_fraction_domain(self, bad):
        with pytest.raises(ValidationError):
            patch_shape(100, 100, bad)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(40, 2000), st.integers(40, 2000),
           st.floats(0.1, 1.0, exclude_min=False))
    def test_aspect_within_rounding(self, w, h, f):
        pw, ph = patch_shape(w, h, f)
        # each axis lands within 1px of the exact fractional size
        assert abs(pw - w * f) <= 0.5 + 1e-9
        assert abs(ph - h * f) <= 0.5 + 1e-9


class TestCropWindow:
    def test_deterministic_random_mode(self, photo):
        a, offa = crop_window(photo, "random", 0.4, rng_seed=11)
        b, offb = crop_window(photo, "random", 0.4, rng_seed=11)
        assert offa == offb
        assert np.array_equal(a, b)

    def test_different_seeds_move_the_crop(self, photo):
        offs = {crop_window(photo, "random", 0.3, rng_seed=s)[1]
                for s in range(8)}
        assert len(offs) > 1

    def test_crop_stays_in_bounds(self, photo):
        h, w = photo.shape[:2]
        for seed in range(10):
            patch, (left, top) = crop_window(photo, "random", 0.37, seed)
            ph, pw = patch.shape[:2]
            assert 0 <= left <= w - pw
            assert 0 <= top <= h - ph
            assert np.array_equal(patch, photo[top:top + ph, left:left + pw])

    def test_identity_crop(self, photo):
        patch, off = crop_window(photo, "random", 1.0, 3)
        assert off == (0, 0)
        assert np.array_equal(patch, photo)

    def test_too_small_patch_refused(self):
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        with pytest.raises(ValidationError):
            crop_window(img, "random", 0.25, 0)  # 4x4 < 8x8

    def test_unknown_mode(self, photo):
        with pytest.raises(ValidationError):
            crop_window(photo, "center", 0.5, 0)

    def test_salient_mode_finds_the_busy_corner(self):
        # flat field with a textured block in the lower right: the salient
        # window must land on (or overlap) the texture
        rng = np.random.default_rng(0)
        img = np.full((96, 96, 3), 128, dtype=np.uint8)
        img[64:, 64:] = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        patch, (left, top) = crop_window(img, "salient", 0.33, 0)
        assert left + patch.shape[1] > 64
        assert top + patch.shape[0] > 64

    def test_salient_mode_deterministic(self, photo):
        _, offa = crop_window(photo, "salient", 0.4, 0)
        _, offb = crop_window(photo, "salient", 0.4, 99)
        # saliency ignores the seed entirely
        assert offa == offb


class TestSaliencyMap:
    def test_range_and_shape(self, photo):
        sal = saliency_map(photo)
        assert sal.shape == photo.shape[:2]
        assert sal.min() >= 0.0 and sal.max() <= 1.0
        assert sal.max() == pytest.approx(1.0)

    def test_constant_image_all_zero(self):
        img = np.full((40, 40, 3), 200, dtype=np.uint8)
        assert not saliency_map(img).any()


class TestCropPatches:
    def test_record_links_parent_and_names_deterministically(self, photo):
        item = ItemRecord("imgX", ItemKind.WHOLE_IMAGE,
                          photo.shape[1], photo.shape[0])
        rec, patch, off = crop_patches(item, photo, "random", 0.4, rng_seed=5)
        assert rec.item_id == "imgX_random_5"
        assert rec.parent_id == "imgX"
        assert rec.kind is ItemKind.RANDOM_PATCH
        assert (rec.width_px, rec.height_px) == (patch.shape[1], patch.shape[0])

    def test_salient_kind(self, photo):
        item = ItemRecord("imgY", ItemKind.WHOLE_IMAGE,
                          photo.shape[1], photo.shape[0])
        rec, _, _ = crop_patches(item, photo, "salient", 0.5, rng_seed=0)
        assert rec.kind is ItemKind.SALIENT_PATCH

    def test_min_side_constant(self):
        assert MIN_PATCH_SIDE == 8
