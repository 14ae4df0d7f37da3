"""PCM ingestion and the 64-band log-mel frontend.

Feature recipe: 44.1 kHz mono, 40 ms Hann-windowed frames every 20 ms
(1764-sample window, 882-sample hop), zero-padded to 2048-point FFT, power
spectrum, 64 triangular mel filters between 0 Hz and Nyquist, then
log(max(energy, 1e-10)). A clip is padded or truncated so it yields
exactly 500 frames for 10 s of audio; frame t starts at exactly 20*t ms.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import SceneSedError

SAMPLE_RATE = 44100
FRAME_LEN = 1764        # 40 ms
HOP = 882               # 20 ms
N_FFT = 2048            # smallest power of two >= FRAME_LEN
N_MELS = 64
N_FRAMES = 500
LOG_FLOOR = 1e-10
CACHE_MAGIC = b"LMEL"


class WavError(SceneSedError):
    """Malformed RIFF/WAVE container or header."""


class UnsupportedEncodingError(WavError):
    """WAV payload is not integer PCM with 1-2 channels."""


class UnsupportedBitDepthError(WavError):
    """WAV payload is PCM but not 16-bit."""


class SampleRateError(SceneSedError):
    """Waveform sample rate differs from the 44.1 kHz the frontend expects."""


@dataclass
class Waveform:
    samples: np.ndarray  # float64 in [-1, 1], mono
    sample_rate: int


def load_wav(path):
    """Read a 16-bit PCM RIFF/WAVE file; stereo is averaged to mono."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise WavError(f"{path}: truncated chunk {cid!r}")
        if cid == b"fmt ":
            if size < 16:
                raise WavError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or data is None:
        raise WavError(f"{path}: missing fmt or data chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if audio_format != 1:
        raise UnsupportedEncodingError(f"{path}: unsupported encoding (format tag {audio_format}; need PCM)")
    if channels not in (1, 2):
        raise UnsupportedEncodingError(f"{path}: unsupported channel count {channels}")
    if bits != 16:
        raise UnsupportedBitDepthError(f"{path}: unsupported bit depth {bits}; need 16")
    ints = np.frombuffer(data[:len(data) - len(data) % (2 * channels)], dtype="<i2")
    samples = ints.astype(np.float64) / 32768.0
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    if samples.size == 0:
        raise WavError(f"{path}: empty data chunk")
    return Waveform(samples=samples, sample_rate=sample_rate)


def write_wav(path, samples, sample_rate=SAMPLE_RATE):
    """Write mono float samples in [-1, 1] as 16-bit PCM."""
    ints = np.clip(np.rint(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    body = ints.tobytes()
    with open(path, "wb") as fh:
        fh.write(b"RIFF")
        fh.write(struct.pack("<I", 36 + len(body)))
        fh.write(b"WAVE")
        fh.write(b"fmt ")
        fh.write(struct.pack("<IHHIIHH", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16))
        fh.write(b"data")
        fh.write(struct.pack("<I", len(body)))
        fh.write(body)


def mel_scale(freq_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


@dataclass
class MelFilterbank:
    weights: np.ndarray     # (n_mels, n_fft // 2 + 1), non-negative triangles
    centers_hz: np.ndarray  # peak frequency per band


def build_mel_filterbank(n_fft=N_FFT, sample_rate=SAMPLE_RATE, n_mels=N_MELS):
    """Triangular filters with peaks uniformly spaced on the mel scale."""
    if n_mels < 2:
        raise ValueError("need at least 2 mel bands")
    edges_hz = mel_to_hz(np.linspace(0.0, mel_scale(sample_rate / 2.0), n_mels + 2))
    bin_hz = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    lower = edges_hz[:-2][:, None]
    peak = edges_hz[1:-1][:, None]
    upper = edges_hz[2:][:, None]
    rising = (bin_hz[None, :] - lower) / (peak - lower)
    falling = (upper - bin_hz[None, :]) / (upper - peak)
    weights = np.clip(np.minimum(rising, falling), 0.0, None)
    if np.any(weights.sum(axis=1) == 0.0):
        raise ValueError(f"{n_mels} mel bands exceed the resolution of {n_fft // 2 + 1} FFT bins")
    return MelFilterbank(weights=weights, centers_hz=edges_hz[1:-1].copy())


def log_mel(wave, filterbank=None, n_frames=N_FRAMES):
    """Log-mel energies, (n_frames, 64). Audio is zero-padded or truncated
    so frame t always covers samples [882*t, 882*t + 1764)."""
    if wave.sample_rate != SAMPLE_RATE:
        raise SampleRateError(f"expected {SAMPLE_RATE} Hz, got {wave.sample_rate} (no implicit resampling)")
    if filterbank is None:
        filterbank = _default_filterbank()
    target_len = FRAME_LEN + (n_frames - 1) * HOP
    x = np.zeros(target_len)
    n = min(len(wave.samples), target_len)
    x[:n] = wave.samples[:n]
    idx = np.arange(n_frames)[:, None] * HOP + np.arange(FRAME_LEN)[None, :]
    frames = x[idx] * np.hanning(FRAME_LEN)[None, :]
    spectrum = np.fft.rfft(frames, n=N_FFT, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    energies = power @ filterbank.weights.T
    return np.log(np.maximum(energies, LOG_FLOOR))


_FILTERBANK_CACHE = None


def _default_filterbank():
    global _FILTERBANK_CACHE
    if _FILTERBANK_CACHE is None:
        _FILTERBANK_CACHE = build_mel_filterbank()
    return _FILTERBANK_CACHE


def write_feature_cache(path, features):
    """Per-clip cache: 16-byte header (magic, u32 T, u32 F, u32 reserved),
    then T*F little-endian float32, row-major by frame."""
    feats = np.ascontiguousarray(features, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<III", feats.shape[0], feats.shape[1], 0))
        fh.write(feats.tobytes())


def read_feature_cache(path):
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != CACHE_MAGIC:
            raise SceneSedError(f"{path}: not a feature cache file")
        n_frames, n_bands, _ = struct.unpack("<III", header[4:])
        body = fh.read(n_frames * n_bands * 4)
    if len(body) != n_frames * n_bands * 4:
        raise SceneSedError(f"{path}: truncated feature cache")
    feats = np.frombuffer(body, dtype="<f4").reshape(n_frames, n_bands)
    return feats.astype(np.float64)
