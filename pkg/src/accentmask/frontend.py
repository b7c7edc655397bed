"""Audio decoding and resampling, plus log-mel featurization.

The feature pipeline follows the Whisper front end: 16 kHz mono input,
400-sample Hann window with a 160-sample hop (zero-padded to a 512-point
FFT), 80 triangular mel filters, ``log10`` power, an 8-decade dynamic range
clamp under the utterance maximum and the affine map ``(x + 4) / 4``.
Clips are padded with the utterance floor or truncated to 3000 frames.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import gridio
from .errors import FormatError, UnsupportedFormatError

SAMPLE_RATE = 16000
N_MELS = 80
N_FRAMES = 3000
WIN_LENGTH = 400
HOP_LENGTH = 160
N_FFT = 512
LOG_EPS = 1e-10
DYNAMIC_RANGE = 8.0

RESAMPLE_TAPS = 64
KAISER_BETA = 8.6

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE
# KSDATAFORMAT_SUBTYPE_PCM GUID
_PCM_SUBFORMAT = b"\x01\x00\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    channels: int = 1

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class Spectrogram:
    """Normalized log-mel grid, mel-major: ``values[mel_bin, frame]``."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError(f"spectrogram must be 2-D, got shape {self.values.shape}")

    @property
    def n_mels(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, Spectrogram):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.values, other.values)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular filters on the HTK mel scale, peak weight 1 at each center."""

    weights: np.ndarray = field(repr=False)
    n_fft: int
    sample_rate: int
    f_min: float
    f_max: float

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def edges_hz(self) -> np.ndarray:
        mels = np.linspace(hz_to_mel(self.f_min), hz_to_mel(self.f_max), self.n_mels + 2)
        return mel_to_hz(mels)

    @property
    def centers_hz(self) -> np.ndarray:
        return self.edges_hz[1:-1]


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT, sample_rate: int = SAMPLE_RATE,
                   f_min: float = 0.0, f_max: float | None = None) -> MelFilterbank:
    return _mel_filterbank(n_mels, n_fft, sample_rate, float(f_min),
                           float(sample_rate / 2 if f_max is None else f_max))


@lru_cache(maxsize=8)
def _mel_filterbank(n_mels, n_fft, sample_rate, f_min, f_max):
    if not 0 <= f_min < f_max <= sample_rate / 2:
        raise ValueError(f"invalid frequency range [{f_min}, {f_max}] for rate {sample_rate}")
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (center - lo)
    falling = (hi - freqs) / (hi - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.sum(axis=1) == 0)
    if empty.size:
        raise ValueError(f"mel filters {empty.tolist()} cover no FFT bin; use a larger n_fft")
    weights.setflags(write=False)
    return MelFilterbank(weights, n_fft, sample_rate, f_min, f_max)


# -- WAV decoding -----------------------------------------------------------

def decode_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE PCM 16-bit file into a mono clip in [-1, 1)."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file")
    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8: pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise FormatError("fmt chunk too short")
            fmt = body
        elif chunk_id == b"data":
            if len(body) < size:
                raise FormatError(f"data chunk truncated ({len(body)} of {size} bytes)")
            payload = body
            break
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise FormatError("missing fmt chunk")
    if payload is None:
        raise FormatError("missing data chunk")

    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise FormatError("extensible fmt chunk too short")
        if fmt[24:40] != _PCM_SUBFORMAT:
            raise UnsupportedFormatError("extensible WAV with non-PCM subformat")
    elif tag != _WAVE_FORMAT_PCM:
        raise UnsupportedFormatError(f"unsupported WAV encoding tag 0x{tag:04x} (PCM only)")
    if bits != 16:
        raise UnsupportedFormatError(f"unsupported sample width {bits} bits (16-bit only)")
    if channels < 1:
        raise FormatError("channel count is zero")
    if rate == 0:
        raise FormatError("sample rate is zero")
    if block_align != 2 * channels:
        raise FormatError(f"block_align {block_align} inconsistent with {channels} channels")
    n_frames = len(payload) // block_align
    pcm = np.frombuffer(payload, dtype="<i2", count=n_frames * channels)
    samples = pcm.reshape(n_frames, channels).astype(np.float64) / 32768.0
    return AudioClip(samples.mean(axis=1), rate, 1)


def encode_wav(samples, sample_rate: int = SAMPLE_RATE) -> bytes:
    """Encode mono or (frames, channels) float samples as 16-bit PCM WAV bytes."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    channels = samples.shape[1]
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2").tobytes()
    fmt = struct.pack("<HHIIHH", _WAVE_FORMAT_PCM, channels, sample_rate,
                      sample_rate * 2 * channels, 2 * channels, 16)
    return (b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(pcm)) + b"WAVE"
            + b"fmt " + struct.pack("<I", len(fmt)) + fmt
            + b"data" + struct.pack("<I", len(pcm)) + pcm)


# -- resampling -------------------------------------------------------------

def resample(clip: AudioClip, target_rate: int, taps: int = RESAMPLE_TAPS,
             beta: float = KAISER_BETA) -> AudioClip:
    """Kaiser-windowed sinc interpolation.

    ``taps`` counts filter taps at the lower of the two rates, so the
    anti-aliasing filter keeps the same shape whether up- or downsampling.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if len(clip.samples) == 0:
        raise ValueError("cannot resample an empty clip")
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples.copy(), clip.sample_rate, clip.channels)

    x = clip.samples
    step = clip.sample_rate / target_rate           # input samples per output sample
    cutoff = min(1.0, target_rate / clip.sample_rate)
    half = (taps / 2) / cutoff                      # half-width in input samples
    n_out = int(round(len(x) * target_rate / clip.sample_rate))
    offsets = np.arange(-int(np.ceil(half)) + 1, int(np.ceil(half)) + 1)
    padded = np.concatenate([np.zeros(len(offsets)), x, np.zeros(len(offsets))])

    out = np.empty(n_out)
    block = max(1, (1 << 20) // len(offsets))
    for start in range(0, n_out, block):
        pos = np.arange(start, min(n_out, start + block)) * step
        base = np.floor(pos).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        t = pos[:, None] - idx
        window = _kaiser(t / half, beta)
        kernel = cutoff * np.sinc(cutoff * t) * window
        out[start:start + len(pos)] = (padded[idx + len(offsets)] * kernel).sum(axis=1)
    return AudioClip(np.clip(out, -1.0, 1.0), target_rate, clip.channels)


def _kaiser(u, beta):
    inside = np.abs(u) < 1.0
    arg = np.sqrt(np.where(inside, 1.0 - u * u, 0.0))
    return np.where(inside, np.i0(beta * arg) / np.i0(beta), 0.0)


# -- featurization ----------------------------------------------------------

def frame_count(n_samples: int) -> int:
    if n_samples < WIN_LENGTH:
        return 0
    return 1 + (n_samples - WIN_LENGTH) // HOP_LENGTH


def mel_power(clip: AudioClip, fb: MelFilterbank | None = None) -> np.ndarray:
    """Mel-filtered STFT power, shape ``(n_mels, frames)`` with no padding."""
    fb = fb or mel_filterbank()
    x = clip.samples
    if len(x) == 0:
        raise ValueError("cannot featurize an empty clip")
    if clip.sample_rate != fb.sample_rate:
        raise ValueError(f"clip is {clip.sample_rate} Hz, filterbank expects {fb.sample_rate} Hz")
    if len(x) < WIN_LENGTH:
        x = np.concatenate([x, np.zeros(WIN_LENGTH - len(x))])
    frames = np.lib.stride_tricks.sliding_window_view(x, WIN_LENGTH)[::HOP_LENGTH]
    spectrum = np.fft.rfft(frames * np.hanning(WIN_LENGTH + 1)[:-1], n=fb.n_fft, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    return fb.weights @ power.T


def log_mel(clip: AudioClip, fb: MelFilterbank | None = None) -> np.ndarray:
    """Unclamped ``log10`` mel power; the pre-normalization energies."""
    return np.log10(np.maximum(mel_power(clip, fb), LOG_EPS))


def featurize(clip: AudioClip, fb: MelFilterbank | None = None,
              n_frames: int = N_FRAMES) -> Spectrogram:
    logspec = log_mel(clip, fb)
    top = logspec.max()
    floor = max(top - DYNAMIC_RANGE, np.log10(LOG_EPS))
    logspec = np.clip(logspec, floor, top)
    if logspec.shape[1] < n_frames:
        pad = np.full((logspec.shape[0], n_frames - logspec.shape[1]), floor)
        logspec = np.concatenate([logspec, pad], axis=1)
    else:
        logspec = logspec[:, :n_frames]
    return Spectrogram((logspec + 4.0) / 4.0)


def floor_value(spec: Spectrogram) -> float:
    return float(spec.values.min())


# -- SPEC files -------------------------------------------------------------

def write_spectrogram(spec: Spectrogram, sink) -> None:
    gridio.write_bytes(sink, gridio.encode_grid(b"SPEC", spec.values))


def read_spectrogram(source) -> Spectrogram:
    values = gridio.decode_grid(b"SPEC", gridio.read_bytes(source))
    if not np.all(np.isfinite(values)):
        raise FormatError("spectrogram contains non-finite values")
    return Spectrogram(values)


def load_audio(path) -> AudioClip:
    """Read a WAV file and bring it to 16 kHz mono."""
    with open(path, "rb") as fh:
        clip = decode_wav(fh.read())
    if clip.sample_rate != SAMPLE_RATE:
        clip = resample(clip, SAMPLE_RATE)
    return clip
