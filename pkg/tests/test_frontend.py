import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accentmask import frontend as fe
from accentmask.errors import FormatError, TruncatedPayloadError, TypeMismatchError, UnsupportedFormatError
from accentmask.gridio import encode_grid


def pcm_wav(frames, rate=16000, channels=1, bits=16, tag=1):
    data = np.asarray(frames, dtype="<i2").tobytes()
    fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * channels * bits // 8, channels * bits // 8, bits)
    return (b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt
            + b"data" + struct.pack("<I", len(data)) + data)


def tone(freq, seconds, rate=16000, amp=0.5):
    t = np.arange(int(seconds * rate)) / rate
    return fe.AudioClip(amp * np.sin(2 * np.pi * freq * t), rate)


class TestDecodeWav:
    def test_silence(self):
        clip = fe.decode_wav(pcm_wav(np.zeros(16000, dtype=np.int16)))
        assert clip.sample_rate == 16000 and clip.channels == 1
        assert len(clip.samples) == 16000 and not clip.samples.any()

    def test_full_scale_scaling(self):
        clip = fe.decode_wav(pcm_wav([32767, -32768]))
        assert clip.samples[0] == 32767 / 32768
        assert clip.samples[1] == -1.0

    def test_stereo_symmetric_average(self):
        frames = np.array([[16384, -16384]] * 10, dtype=np.int16)
        clip = fe.decode_wav(pcm_wav(frames.ravel(), channels=2))
        assert len(clip.samples) == 10
        assert np.all(clip.samples == 0.0)

    def test_roundtrip_with_encoder(self, rng):
        x = rng.uniform(-0.9, 0.9, 1000)
        clip = fe.decode_wav(fe.encode_wav(x, 22050))
        assert clip.sample_rate == 22050
        assert np.max(np.abs(clip.samples - x)) <= 0.5 / 32768 + 1e-12

    @pytest.mark.parametrize("data", [b"", b"RIFF\x00\x00\x00\x00WAVX", b"not a wav file at all"])
    def test_malformed_header(self, data):
        with pytest.raises(FormatError):
            fe.decode_wav(data)

    def test_missing_data_chunk(self):
        wav = pcm_wav([1, 2, 3])
        with pytest.raises(FormatError, match="data"):
            fe.decode_wav(wav[:36])

    def test_float_encoding_unsupported(self):
        with pytest.raises(UnsupportedFormatError):
            fe.decode_wav(pcm_wav([0, 0], tag=3))

    def test_24_bit_unsupported(self):
        with pytest.raises(UnsupportedFormatError):
            fe.decode_wav(pcm_wav([0, 0, 0], bits=24))


class TestResample:
    def test_same_rate_is_identity(self, rng):
        clip = fe.AudioClip(rng.uniform(-1, 1, 500), 16000)
        out = fe.resample(clip, 16000)
        assert out.sample_rate == 16000
        assert np.array_equal(out.samples, clip.samples)

    def test_length_ratio(self):
        out = fe.resample(fe.AudioClip(np.zeros(32000), 32000), 16000)
        assert len(out.samples) == 16000 and out.sample_rate == 16000

    @pytest.mark.parametrize("src,dst,n", [(48000, 16000, 48000), (8000, 16000, 7999), (44100, 16000, 44100)])
    def test_duration_within_one_sample(self, src, dst, n):
        out = fe.resample(fe.AudioClip(np.zeros(n), src), dst)
        assert abs(len(out.samples) / dst - n / src) <= 1 / dst

    def test_tone_peak_survives_downsampling(self):
        out = fe.resample(tone(440, 1.0, rate=48000), 16000)
        # FFT-peak oracle on the resampled signal: bin width 1 Hz for a 1 s clip
        spectrum = np.abs(np.fft.rfft(out.samples))
        peak_hz = np.argmax(spectrum) * out.sample_rate / len(out.samples)
        assert abs(peak_hz - 440) <= out.sample_rate / len(out.samples)

    def test_alias_suppressed(self):
        # 12 kHz is above the new Nyquist frequency and must be filtered out
        out = fe.resample(tone(12000, 1.0, rate=48000), 16000)
        assert np.sqrt(np.mean(out.samples[200:-200] ** 2)) < 0.01

    def test_bad_target(self):
        with pytest.raises(ValueError):
            fe.resample(fe.AudioClip(np.zeros(10), 16000), 0)

    def test_empty_clip(self):
        with pytest.raises(ValueError):
            fe.resample(fe.AudioClip(np.zeros(0), 16000), 8000)


class TestFilterbank:
    def test_invariants(self):
        fb = fe.mel_filterbank()
        assert fb.weights.shape == (80, 257)
        assert np.all(fb.weights >= 0)
        assert np.all((fb.weights > 0).sum(axis=1) >= 1)

    def test_centers_follow_mel_formula(self):
        fb = fe.mel_filterbank()
        mels = 2595 * np.log10(1 + fb.centers_hz / 700)
        assert np.allclose(np.diff(mels), np.diff(mels)[0])

    def test_too_fine_for_fft(self):
        with pytest.raises(ValueError, match="cover no FFT bin"):
            fe.mel_filterbank(n_mels=200, n_fft=64)


class TestFeaturize:
    def test_thirty_seconds_fill_the_grid(self):
        clip = tone(440, 30.0)
        assert fe.frame_count(len(clip.samples)) == 2998
        spec = fe.featurize(clip)
        assert spec.shape == (80, 3000)

    def test_long_clip_truncated(self):
        assert fe.featurize(tone(440, 31.0)).shape == (80, 3000)

    def test_silence_is_floor_everywhere(self):
        spec = fe.featurize(fe.AudioClip(np.zeros(16000), 16000))
        floor = (np.log10(fe.LOG_EPS) + 4) / 4
        assert np.all(spec.values == np.float32(floor))

    def test_short_clip_padded_with_floor(self):
        spec = fe.featurize(tone(1000, 1.0))
        n = fe.frame_count(16000)
        assert np.all(spec.values[:, n:] == spec.values.min())
        # a pure tone spans more than 8 decades, so the clamp sets the range to exactly 8 / 4
        assert spec.values.max() - spec.values.min() == pytest.approx(2.0, abs=1e-6)

    def test_value_range(self, rng):
        spec = fe.featurize(fe.AudioClip(rng.uniform(-0.5, 0.5, 48000), 16000))
        top = spec.values.max()
        assert np.all(np.isfinite(spec.values))
        assert spec.values.min() >= top - 2.0 - 1e-6  # 8 log10 units / 4

    def test_tone_lands_in_nearest_mel_bin(self):
        fb = fe.mel_filterbank()
        # oracle: filter centers from the mel formula, independent of the weights matrix
        edges = 700 * (10 ** (np.linspace(0, 2595 * np.log10(1 + 8000 / 700), 82) / 2595) - 1)
        expected = int(np.argmin(np.abs(edges[1:-1] - 440)))
        energy = fe.mel_power(tone(440, 2.0), fb).mean(axis=1)
        assert int(np.argmax(energy)) == expected
        spec = fe.featurize(tone(440, 2.0), fb)
        n = fe.frame_count(32000)
        assert int(np.argmax(spec.values[:, :n].mean(axis=1))) == expected

    def test_deterministic(self, rng):
        clip = fe.AudioClip(rng.uniform(-1, 1, 20000), 16000)
        assert fe.featurize(clip) == fe.featurize(clip)

    def test_empty_clip(self):
        with pytest.raises(ValueError):
            fe.featurize(fe.AudioClip(np.zeros(0), 16000))

    def test_wrong_rate(self):
        with pytest.raises(ValueError, match="Hz"):
            fe.featurize(fe.AudioClip(np.zeros(1000), 8000))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=400, max_value=40000))
    def test_frame_count_formula(self, n):
        clip = fe.AudioClip(np.sin(np.arange(n) * 0.01), 16000)
        assert fe.mel_power(clip).shape[1] == 1 + (n - 400) // 160

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_doubling_amplitude_never_lowers_log_mel(self, seed):
        x = np.random.default_rng(seed).uniform(-0.4, 0.4, 4000)
        low = fe.log_mel(fe.AudioClip(x, 16000))
        high = fe.log_mel(fe.AudioClip(2 * x, 16000))
        assert np.all(high >= low)

    def test_noise_energy_grows_with_variance(self):
        totals = []
        for sigma in (0.01, 0.02, 0.05, 0.1, 0.2):
            trials = [fe.mel_power(fe.AudioClip(np.random.default_rng(t).normal(0, sigma, 8000), 16000)).sum()
                      for t in range(20)]
            totals.append(np.mean(trials))
        assert all(a < b for a, b in zip(totals, totals[1:]))


class TestSpecFiles:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        spec = fe.Spectrogram(rng.normal(size=(80, 300)))
        fe.write_spectrogram(spec, tmp_path / "a.spec")
        assert fe.read_spectrogram(tmp_path / "a.spec") == spec

    def test_small_grid_layout(self, tmp_path):
        spec = fe.Spectrogram([[0, 1], [2, 3]])
        fe.write_spectrogram(spec, tmp_path / "s.spec")
        raw = (tmp_path / "s.spec").read_bytes()
        assert raw[:4] == b"SPEC"
        assert struct.unpack("<III", raw[4:16]) == (1, 2, 2)
        assert struct.unpack("<4f", raw[16:]) == (0.0, 1.0, 2.0, 3.0)
        assert fe.read_spectrogram(raw) == spec

    def test_truncated_payload(self):
        raw = struct.pack("<4sIII", b"SPEC", 1, 80, 3000) + b"\x00" * 100
        with pytest.raises(TruncatedPayloadError):
            fe.read_spectrogram(raw)

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            fe.read_spectrogram(b"JUNK" + bytes(12))

    def test_other_grid_type(self):
        with pytest.raises(TypeMismatchError):
            fe.read_spectrogram(encode_grid(b"SMAP", np.zeros((2, 2))))

    def test_bad_version(self):
        with pytest.raises(FormatError, match="version"):
            fe.read_spectrogram(struct.pack("<4sIII", b"SPEC", 2, 1, 1) + bytes(4))

    def test_dimension_overflow(self):
        with pytest.raises(FormatError, match="exceed"):
            fe.read_spectrogram(struct.pack("<4sIII", b"SPEC", 1, 2**31, 2**31))

    def test_stream_sink(self, rng):
        import io
        buf = io.BytesIO()
        spec = fe.Spectrogram(rng.normal(size=(3, 4)))
        fe.write_spectrogram(spec, buf)
        assert fe.read_spectrogram(io.BytesIO(buf.getvalue())) == spec
