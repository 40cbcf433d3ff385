"""Audio frontend: a sine through STFT, mel projection, log, and 128x128 framing."""

import numpy as np

from speechgrade import audio
from speechgrade.audio import AudioClip

rate = 16000
t = np.arange(int(2.5 * rate)) / rate
clip = AudioClip(0.4 * np.sin(2 * np.pi * 440 * t), rate)

mag = audio.stft(clip)
print("STFT", mag.shape, "(bins x columns, hop 512)")
peak_bin = mag[:, 10].argmax()
print("peak bin", peak_bin, "->", peak_bin * rate / 2048, "Hz")

weights, edges = audio.mel_filterbank(128, 2048, rate, 0.0, 8000.0)
centers = edges[1:-1]
mel = audio.mel_project(mag)
band = mel[:, 10].argmax()
print(f"mel band {band}: centre {centers[band]:.1f} Hz, neighbours {centers[band - 1]:.1f} / {centers[band + 1]:.1f} Hz")

logmel = audio.log_scale(mel)
max_cols = audio.round_up_columns(logmel.shape[1])
frames = audio.split_frames(audio.normalize_and_pad(logmel, max_cols), num_valid_columns=logmel.shape[1])
print("frames", frames.frames.shape, "valid columns", frames.num_valid_columns)
valid = frames.frames[0][:, : frames.num_valid_columns]
print(f"valid region mean {valid.mean():.2e} std {valid.std():.6f}")

# the same thing in one call, with a 44.1 kHz input resampled first
t44 = np.arange(int(2.5 * 44100)) / 44100
clip44 = AudioClip(0.4 * np.sin(2 * np.pi * 440 * t44), 44100)
again = audio.featurize(clip44, max_cols)
print("from 44.1 kHz:", again.frames.shape, "same band peak:", again.frames[0][:, 10].argmax() == band)

# white noise replacement used by the ablation
noise = audio.white_noise_like(clip, np.random.default_rng(0))
print(f"noise: {len(noise.samples)} samples, mean {noise.samples.mean():+.4f}")
