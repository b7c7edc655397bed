import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from accentmask import masking as mk
from accentmask.errors import FormatError, ShapeError, ValidationError
from accentmask.frontend import Spectrogram

POLICY = mk.MaskPolicy()


def banded_saliency(n_per_band, rng):
    """Scores with n_per_band pixels drawn inside each of the four bands."""
    parts = [rng.uniform(0.0, 0.3, n_per_band), rng.uniform(0.3, 0.5, n_per_band),
             rng.uniform(0.5, 0.7, n_per_band), rng.uniform(0.7, 1.0, n_per_band)]
    parts[0][0], parts[1][0] = 0.3, np.nextafter(0.3, 1)  # threshold edges
    parts[2][0], parts[3][0] = 0.5, 0.7
    return np.concatenate(parts).reshape(4 * n_per_band // 100, 100)


class TestThreshold:
    def test_strict(self):
        assert mk.threshold_mask(np.array([[0.3, 0.31, 0.0]])).tolist() == [[0, 1, 0]]

    def test_zero_saliency(self):
        assert not mk.threshold_mask(np.zeros((3, 3))).any()


class TestPolicy:
    @pytest.mark.parametrize("kwargs", [
        {"t_enter": 0.6}, {"t_high": 1.2}, {"mid_band": (0.9, 0.7)}, {"low_band": (-0.1, 0.05)},
        {"granularity": "per-frame"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            mk.MaskPolicy(**kwargs)

    def test_hash_tracks_content(self):
        assert mk.MaskPolicy().hash() == mk.MaskPolicy().hash()
        assert mk.MaskPolicy().hash() != mk.MaskPolicy(t_enter=0.25).hash()
        assert len(POLICY.hash()) == 16


class TestBuildMask:
    def test_low_saliency_always_kept(self):
        assert mk.build_mask(np.full((50, 50), 0.2), seed=1).grid.all()

    def test_high_saliency_always_masked(self):
        assert not mk.build_mask(np.full((50, 50), 0.85), seed=1).grid.any()

    def test_mid_band_rate(self):
        m = mk.build_mask(np.full((100, 1000), 0.6), seed=3)
        rate = 1.0 - m.grid.mean()
        assert 0.7 <= rate <= 0.9
        # per-pixel u is uniform on [0.7, 0.9], so the marginal rate is its mean
        assert abs(rate - 0.8) < 0.01

    def test_per_utterance_rates_average(self):
        rates = [1.0 - mk.build_mask(np.full((20, 50), 0.6), mk.MaskPolicy(granularity="per-utterance"),
                                     seed=s).grid.mean() for s in range(400)]
        assert abs(np.mean(rates) - 0.8) < 0.01
        assert 0.7 - 0.05 < min(rates) and max(rates) < 0.9 + 0.05

    def test_deterministic_per_key(self, rng):
        c = rng.random((30, 40))
        a = mk.build_mask(c, seed=5, key=("utt1",)).grid
        assert np.array_equal(a, mk.build_mask(c, seed=5, key=("utt1",)).grid)
        assert not np.array_equal(a, mk.build_mask(c, seed=5, key=("utt2",)).grid)

    def test_shape_check(self):
        with pytest.raises(ShapeError):
            mk.build_mask(np.zeros((3, 4)), shape=(4, 3))

    def test_monotone_in_t_enter(self, rng):
        c = rng.random((60, 60))
        masked = [int((mk.build_mask(c, mk.MaskPolicy(t_enter=t), seed=2).grid == 0).sum())
                  for t in (0.0, 0.1, 0.3, 0.45)]
        assert masked == sorted(masked, reverse=True)


class TestApplyMask:
    def test_identity_and_zero(self, rng):
        s = rng.normal(size=(4, 5)).astype(np.float32)
        assert np.array_equal(mk.apply_mask(s, np.ones((4, 5), np.uint8)), s)
        out = mk.apply_mask(s, np.zeros((4, 5), np.uint8))
        assert not out.any() and not np.signbit(out).any()

    def test_single_cell(self, rng):
        s = rng.normal(size=(4, 5)) + 3.0
        m = np.ones((4, 5), np.uint8)
        m[2, 3] = 0
        assert np.argwhere(mk.apply_mask(s, m) != s).tolist() == [[2, 3]]

    def test_spectrogram_type_preserved(self):
        out = mk.apply_mask(Spectrogram(np.ones((2, 2), np.float32)), mk.BinaryMask(np.eye(2)))
        assert isinstance(out, Spectrogram) and out.values.tolist() == [[1, 0], [0, 1]]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mk.apply_mask(np.zeros((2, 3)), np.ones((3, 2)))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 12), st.data())
    def test_locality_and_idempotence(self, rows, cols, data):
        s = data.draw(arrays(np.float32, (rows, cols), elements=st.floats(-4, 4, width=32)))
        m = data.draw(arrays(np.uint8, (rows, cols), elements=st.integers(0, 1)))
        out = mk.apply_mask(s, m)
        assert out.view(np.uint32)[m == 1].tolist() == s.view(np.uint32)[m == 1].tolist()
        assert np.all(out.view(np.uint32)[m == 0] == 0)
        assert np.array_equal(mk.apply_mask(out, m), out)


class TestStats:
    def test_rate_law(self):
        g = np.random.default_rng(0)
        c = banded_saliency(20_000, g)
        stats = mk.mask_stats((mk.build_mask(c, seed=11), c))
        bands = stats["bands"]
        names = mk.band_names(POLICY)
        assert bands[names[0]]["rate"] == 0.0
        assert bands[names[3]]["rate"] == 1.0
        se = np.sqrt(0.25 / 20_000)
        assert 0.7 - 3 * se <= bands[names[2]]["rate"] <= 0.9 + 3 * se
        assert 0.0 <= bands[names[1]]["rate"] <= 0.05 + 3 * se
        assert stats["pixels"] == 80_000
        assert stats["keep_fraction"] + stats["masked_fraction"] == pytest.approx(1.0)

    def test_empty_band_rate_none(self):
        c = np.full((2, 2), 0.1)
        stats = mk.mask_stats([(mk.build_mask(c), c)])
        assert stats["bands"][mk.band_names(POLICY)[3]] == {"pixels": 0, "masked": 0, "rate": None}

    def test_band_names(self):
        assert mk.band_names(POLICY) == ["C<=0.3", "0.3<C<0.5", "0.5<=C<0.7", "C>=0.7"]


class TestSpecAugment:
    def test_no_masks_identity(self, rng):
        s = rng.normal(size=(80, 200))
        p = mk.SpecAugmentParams(n_freq_masks=0, n_time_masks=0)
        assert np.array_equal(mk.spec_augment(s, p, 1), s)

    def test_full_rows_only(self, rng):
        s = rng.normal(size=(80, 200)) + 10.0
        out = mk.spec_augment(s, mk.SpecAugmentParams(n_freq_masks=1, n_time_masks=0), 4)
        zero_rows = np.flatnonzero((out == 0).all(axis=1))
        assert np.array_equal(out == 0, np.isin(np.arange(80), zero_rows)[:, None].repeat(200, 1))
        if zero_rows.size:
            assert np.all(np.diff(zero_rows) == 1)
        keep = ~np.isin(np.arange(80), zero_rows)
        assert np.array_equal(out[keep], s[keep])

    def test_expected_width(self):
        p = mk.SpecAugmentParams(n_freq_masks=1, n_time_masks=0, T_max=4)
        ones = np.ones((80, 4))
        widths = [int((mk.spec_augment(ones, p, np.random.default_rng(s)) == 0).all(axis=1).sum())
                  for s in range(10_000)]
        assert abs(np.mean(widths) - 13.5) < 0.5

    def test_width_exceeds_grid(self):
        with pytest.raises(ValueError):
            mk.spec_augment(np.zeros((10, 200)), mk.SpecAugmentParams())


class TestMaskIO:
    def test_round_trip(self, rng):
        m = mk.BinaryMask(rng.integers(0, 2, size=(5, 7)))
        buf = io.BytesIO()
        mk.write_mask(m, buf)
        assert np.array_equal(mk.read_mask(io.BytesIO(buf.getvalue())).grid, m.grid)

    def test_non_binary_rejected(self):
        buf = io.BytesIO()
        mk.write_mask(mk.BinaryMask(np.array([[0, 2]])), buf)
        with pytest.raises(FormatError):
            mk.read_mask(io.BytesIO(buf.getvalue()))
