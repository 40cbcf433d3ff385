"""Log-mel spectrogram frontend: resample, STFT, mel projection, framing.

Conventions: Hann window, centered (reflect-free, zero-padded) STFT frames,
magnitude spectra, HTK mel scale with area-normalized triangles, natural log
with a 1e-10 floor, per-utterance standardization over valid columns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import ContractError, DegenerateInputError, FormatError, NumericError, ParameterError

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
N_FFT = 2048
HOP = 512
N_MELS = 128
FRAME_WIDTH = 128
LOG_FLOOR = 1e-10
STD_FLOOR = 1e-8


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise NumericError("audio contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class SpectrogramFrames:
    frames: np.ndarray  # [n_frames, n_mels, frame_width]
    num_valid_columns: int

    def __post_init__(self):
        if self.frames.ndim != 3:
            raise ContractError(f"frames must be [n, mels, width], got {self.frames.shape}")
        if self.num_valid_columns > self.frames.shape[0] * self.frames.shape[2]:
            raise ContractError("num_valid_columns exceeds the framed width")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def valid_frames(self) -> int:
        """Frames holding at least one non-padded column (always >= 1)."""
        width = self.frames.shape[2]
        return max(1, -(-self.num_valid_columns // width))


def read_wav(path: str | Path) -> AudioClip:
    """Read 16-bit PCM or 32-bit float WAV; stereo is averaged to mono."""
    try:
        rate, data = wavfile.read(str(path))
    except (ValueError, EOFError) as exc:
        raise FormatError(f"{path}: unreadable WAV ({exc})") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype.kind == "f":
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample type {data.dtype}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioClip(np.clip(samples, -1.0, 1.0), int(rate))


def write_wav(path: str | Path, clip: AudioClip) -> None:
    """Write 16-bit PCM mono."""
    pcm = np.round(np.clip(clip.samples, -1.0, 32767 / 32768) * 32768.0).astype(np.int16)
    wavfile.write(str(path), clip.sample_rate, pcm)


def resample(clip: AudioClip, target_rate: int = SAMPLE_RATE) -> AudioClip:
    if target_rate <= 0:
        raise ParameterError(f"target_rate must be positive, got {target_rate}")
    if len(clip.samples) == 0:
        raise DegenerateInputError("cannot resample an empty clip")
    if target_rate == clip.sample_rate:
        return clip
    g = gcd(target_rate, clip.sample_rate)
    out = resample_poly(clip.samples, target_rate // g, clip.sample_rate // g)
    return AudioClip(out, target_rate)


def stft(clip: AudioClip, n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """Magnitude STFT, shape ``[n_fft // 2 + 1, 1 + len // hop]``."""
    x = clip.samples
    if len(x) == 0:
        raise DegenerateInputError("cannot analyse an empty clip")
    n_cols = 1 + len(x) // hop
    half = n_fft // 2
    padded = np.zeros(len(x) + 2 * half + n_fft)
    padded[half : half + len(x)] = x
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_cols)[:, None]
    window = np.hanning(n_fft + 1)[:-1]  # periodic Hann
    spec = np.fft.rfft(padded[idx] * window, axis=1)
    return np.abs(spec).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int = N_MELS,
    n_fft: int = N_FFT,
    sample_rate: int = SAMPLE_RATE,
    f_min: float = 0.0,
    f_max: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Triangular filters with unit area in Hz.

    Returns ``(weights [n_mels, n_fft // 2 + 1], edge frequencies [n_mels + 2])``;
    filter ``m`` rises from ``edges[m]`` to a peak at ``edges[m + 1]`` and falls
    to zero at ``edges[m + 2]``.
    """
    if n_mels < 1:
        raise ParameterError(f"n_mels must be >= 1, got {n_mels}")
    f_max = sample_rate / 2 if f_max is None else f_max
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    tri = np.maximum(0.0, np.minimum(rising, falling))
    return tri * (2.0 / (hi - lo)), edges


def mel_project(mag: np.ndarray, n_mels: int = N_MELS, f_min: float = 0.0, f_max: float = 8000.0, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    n_fft = 2 * (mag.shape[0] - 1)
    weights, _ = mel_filterbank(n_mels, n_fft, sample_rate, f_min, f_max)
    return weights @ mag


def log_scale(mel: np.ndarray) -> np.ndarray:
    if np.any(mel < 0):
        raise NumericError("log_scale: negative input")
    return np.log(mel + LOG_FLOOR)


def normalize_and_pad(logmel: np.ndarray, max_columns: int) -> np.ndarray:
    """Standardize over the valid columns, then right-pad with zeros."""
    n_cols = logmel.shape[1]
    if n_cols > max_columns:
        raise ContractError(f"{n_cols} columns exceed max_columns={max_columns}; truncate first")
    std = max(float(logmel.std()), STD_FLOOR)
    out = np.zeros((logmel.shape[0], max_columns))
    out[:, :n_cols] = (logmel - logmel.mean()) / std
    return out


def split_frames(padded: np.ndarray, width: int = FRAME_WIDTH, num_valid_columns: int | None = None) -> SpectrogramFrames:
    n_rows, n_cols = padded.shape
    if n_cols % width or n_cols == 0:
        raise ContractError(f"width {n_cols} is not a positive multiple of {width}")
    frames = padded.reshape(n_rows, n_cols // width, width).transpose(1, 0, 2).copy()
    return SpectrogramFrames(frames, n_cols if num_valid_columns is None else num_valid_columns)


def round_up_columns(n_cols: int, width: int = FRAME_WIDTH) -> int:
    return max(width, -(-n_cols // width) * width)


def logmel(clip: AudioClip) -> np.ndarray:
    """Resample to 16 kHz and return the log-mel matrix ``[128, T_cols]``."""
    clip = resample(clip, SAMPLE_RATE)
    return log_scale(mel_project(stft(clip)))


def featurize(clip: AudioClip, max_columns: int) -> SpectrogramFrames:
    """Full frontend; responses longer than ``max_columns`` are right-truncated."""
    lm = logmel(clip)
    if lm.shape[1] > max_columns:
        logger.warning("truncating %d spectrogram columns to %d", lm.shape[1], max_columns)
        lm = lm[:, :max_columns]
    return split_frames(normalize_and_pad(lm, max_columns), num_valid_columns=lm.shape[1])


def white_noise_like(clip: AudioClip, rng: np.random.Generator) -> AudioClip:
    return AudioClip(rng.uniform(-1.0, 1.0, size=len(clip.samples)), clip.sample_rate)
