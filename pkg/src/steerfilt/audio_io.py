"""WAV file reading and writing (PCM 16-bit and IEEE float-32).

The reader never resamples; callers that expect a particular rate get an
error on mismatch. Files are stored (frames, channels) on disk and exposed
as (channels, samples) in memory.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.io import wavfile

from .errors import DataError, ParameterError
from .signals import Waveform

_PCM_SCALE = {np.dtype(np.int16): 2**15, np.dtype(np.int32): 2**31}


def read_wav(path: str | os.PathLike, expect_rate: int | None = None) -> Waveform:
    try:
        rate, data = wavfile.read(os.fspath(path))
    except FileNotFoundError:
        raise DataError(f"audio file not found: {path}")
    except ValueError as exc:
        raise DataError(f"unreadable WAV file {path}: {exc}")
    if expect_rate is not None and rate != expect_rate:
        raise DataError(f"{path}: sample rate {rate} Hz, expected {expect_rate} Hz (no resampling)")
    if data.dtype in _PCM_SCALE:
        data = data.astype(np.float64) / _PCM_SCALE[data.dtype]
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype}")
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return Waveform(data, int(rate))


def write_wav(path: str | os.PathLike, w: Waveform, fmt: str = "float32") -> None:
    data = w.samples.T if w.n_channels > 1 else w.samples[0]
    if fmt == "float32":
        wavfile.write(os.fspath(path), w.sample_rate, data.astype(np.float32))
    elif fmt == "pcm16":
        clipped = np.clip(data, -1.0, 32767 / 32768)
        wavfile.write(os.fspath(path), w.sample_rate, np.round(clipped * 32768).astype(np.int16))
    else:
        raise ParameterError(f"unsupported WAV format: {fmt}")
