"""Time/frequency transforms, complex ratio-mask codec, and evaluation metrics.

The STFT uses a square-root Hann window (periodic form) for both analysis and
synthesis at 50% overlap, which satisfies the constant-overlap-add identity.
Signals are front-padded by one hop before framing so that every original
sample receives full window coverage; the spectrogram records the original
sample count so that the inverse transform can undo the padding exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NormalizationError, ParameterError, ShapeError, StateError

SI_SDR_CAP_DB = 100.0

# cIRM compression parameters; with K = C = 1 the forward map equals tanh(v/2).
CIRM_K = 1.0
CIRM_C = 1.0
CIRM_CLAMP = 0.999


@dataclass
class Waveform:
    """Multichannel audio in [-1, 1] nominal range, shape (channels, samples)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 2:
            raise ShapeError(f"expected (channels, samples), got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("waveform contains non-finite samples")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def channel(self, index: int) -> "Waveform":
        return Waveform(self.samples[index : index + 1].copy(), self.sample_rate)

    def mono(self) -> np.ndarray:
        """Return the single channel as a 1-D array; error if multichannel."""
        if self.n_channels != 1:
            raise ShapeError(f"expected mono waveform, got {self.n_channels} channels")
        return self.samples[0]


@dataclass(frozen=True)
class StftConfig:
    window_ms: float = 32.0
    overlap_fraction: float = 0.5
    window_kind: str = "sqrt_hann"

    def __post_init__(self):
        if not 0.0 < self.overlap_fraction < 1.0:
            raise ParameterError(f"overlap_fraction must be in (0,1), got {self.overlap_fraction}")
        if self.window_kind != "sqrt_hann":
            raise ParameterError(f"unsupported window kind: {self.window_kind}")

    def window_length(self, sample_rate: int) -> int:
        win = int(round(self.window_ms * 1e-3 * sample_rate))
        if win <= 0 or win % 2 != 0:
            raise ParameterError(f"window length must be a positive even sample count, got {win}")
        return win

    def hop_length(self, sample_rate: int) -> int:
        return int(round(self.window_length(sample_rate) * (1.0 - self.overlap_fraction)))

    def n_bins(self, sample_rate: int) -> int:
        return self.window_length(sample_rate) // 2 + 1


def sqrt_hann(length: int) -> np.ndarray:
    """Square root of the periodic Hann window (COLA at 50% overlap)."""
    n = np.arange(length)
    return np.sqrt(0.5 * (1.0 - np.cos(2.0 * np.pi * n / length)))


@dataclass
class ComplexSpectrogram:
    """Complex STFT bins, shape (channels, frames, frequencies).

    ``n_samples`` carries the length of the originating waveform so the
    inverse transform can trim the synthesis padding; hand-built spectrograms
    may leave it ``None`` and receive the full overlap-add buffer instead.
    """

    bins: np.ndarray
    sample_rate: int
    config: StftConfig = field(default_factory=StftConfig)
    n_samples: int | None = None

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        if self.bins.ndim == 2:
            self.bins = self.bins[None]
        if self.bins.ndim != 3:
            raise ShapeError(f"expected (channels, frames, freqs), got shape {self.bins.shape}")
        if self.bins.shape[2] != self.config.n_bins(self.sample_rate):
            raise ShapeError(
                f"{self.bins.shape[2]} frequency bins inconsistent with "
                f"window of {self.config.window_length(self.sample_rate)} samples"
            )
        if not np.all(np.isfinite(self.bins)):
            raise ParameterError("spectrogram contains non-finite bins")

    @property
    def n_channels(self) -> int:
        return self.bins.shape[0]

    @property
    def n_frames(self) -> int:
        return self.bins.shape[1]

    @property
    def n_freqs(self) -> int:
        return self.bins.shape[2]

    def channel(self, index: int) -> np.ndarray:
        """Complex bins of one channel, shape (frames, freqs)."""
        return self.bins[index]


def stft(w: Waveform, cfg: StftConfig | None = None) -> ComplexSpectrogram:
    """Forward transform of every channel.

    Frames start at multiples of the hop on the front-padded signal and the
    tail is zero-padded to a whole window, giving ceil(n/hop) + 1 frames.
    """
    cfg = cfg or StftConfig()
    if w.n_samples == 0:
        raise ParameterError("cannot transform an empty waveform")
    win = cfg.window_length(w.sample_rate)
    hop = cfg.hop_length(w.sample_rate)
    n = w.n_samples
    n_frames = -(-n // hop) + 1
    padded = np.zeros((w.n_channels, hop + (n_frames - 1) * hop + win))
    padded[:, hop : hop + n] = w.samples
    window = sqrt_hann(win)
    starts = np.arange(n_frames) * hop
    frames = np.stack([padded[:, s : s + win] for s in starts], axis=1)  # (C, T, win)
    bins = np.fft.rfft(frames * window, axis=2)
    return ComplexSpectrogram(bins, w.sample_rate, cfg, n_samples=n)


def istft(s: ComplexSpectrogram) -> Waveform:
    """Inverse transform by windowed overlap-add.

    Returns exactly ``n_samples`` samples when the spectrogram records its
    origin; otherwise the full (frames - 1) * hop + window buffer.
    """
    win = s.config.window_length(s.sample_rate)
    hop = s.config.hop_length(s.sample_rate)
    window = sqrt_hann(win)
    frames = np.fft.irfft(s.bins, n=win, axis=2) * window  # (C, T, win)
    out_len = (s.n_frames - 1) * hop + win
    out = np.zeros((s.n_channels, out_len))
    for t in range(s.n_frames):
        out[:, t * hop : t * hop + win] += frames[:, t]
    if s.n_samples is not None:
        if s.n_samples > out_len - hop:
            raise ShapeError(
                f"recorded length {s.n_samples} exceeds synthesis span {out_len - hop}"
            )
        out = out[:, hop : hop + s.n_samples]
    return Waveform(out, s.sample_rate)


@dataclass
class CirmMask:
    """Complex ratio mask per (frame, frequency) with a compression flag."""

    values: np.ndarray
    compressed: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.ndim != 2:
            raise ShapeError(f"mask must be (frames, freqs), got shape {self.values.shape}")
        if self.compressed:
            comp = np.concatenate([self.values.real.ravel(), self.values.imag.ravel()])
            if np.any(np.abs(comp) >= 1.0):
                raise ParameterError("compressed mask components must lie strictly inside (-1, 1)")


def compress_mask(m: CirmMask) -> CirmMask:
    """Map unbounded mask components into (-K, K).

    The map K * (1 - exp(-C v)) / (1 + exp(-C v)) equals K * tanh(C v / 2);
    the tanh form avoids overflow for large negative components.
    """
    if m.compressed:
        raise StateError("mask is already compressed")
    real = CIRM_K * np.tanh(CIRM_C * m.values.real / 2.0)
    imag = CIRM_K * np.tanh(CIRM_C * m.values.imag / 2.0)
    return CirmMask(real + 1j * imag, compressed=True)


def decompress_mask(m: CirmMask) -> CirmMask:
    """Exact inverse of :func:`compress_mask` on the clamped domain.

    Components are clamped to +/-CIRM_CLAMP first, which keeps the logarithm
    away from its singularity at |component| = K.
    """
    if not m.compressed:
        raise StateError("mask is not compressed")
    real = np.clip(m.values.real, -CIRM_CLAMP, CIRM_CLAMP)
    imag = np.clip(m.values.imag, -CIRM_CLAMP, CIRM_CLAMP)
    inv_r = -np.log((CIRM_K - real) / (CIRM_K + real)) / CIRM_C
    inv_i = -np.log((CIRM_K - imag) / (CIRM_K + imag)) / CIRM_C
    return CirmMask(inv_r + 1j * inv_i, compressed=False)


def apply_mask(mask: CirmMask, y_ref: np.ndarray) -> np.ndarray:
    """Elementwise complex product of an uncompressed mask with the
    reference-channel bins, shape (frames, freqs)."""
    if mask.compressed:
        raise StateError("decompress the mask before applying it")
    y_ref = np.asarray(y_ref)
    if mask.values.shape != y_ref.shape:
        raise ShapeError(f"mask shape {mask.values.shape} != reference shape {y_ref.shape}")
    return mask.values * y_ref


def si_sdr(est: Waveform | np.ndarray, ref: Waveform | np.ndarray) -> float:
    """Scale-invariant signal-to-distortion ratio in dB, capped at +100 dB.

    Both signals are mean-removed; the reference is scaled to the orthogonal
    projection of the estimate before computing the energy ratio.
    """
    e = est.mono() if isinstance(est, Waveform) else np.asarray(est, dtype=np.float64).ravel()
    r = ref.mono() if isinstance(ref, Waveform) else np.asarray(ref, dtype=np.float64).ravel()
    if e.shape != r.shape:
        raise ShapeError(f"length mismatch: {e.shape} vs {r.shape}")
    r = r - r.mean()
    e = e - e.mean()
    ref_energy = np.dot(r, r)
    if ref_energy == 0.0:
        raise ParameterError("reference signal is silent")
    target = (np.dot(e, r) / ref_energy) * r
    noise = e - target
    num = np.dot(target, target)
    den = np.dot(noise, noise)
    if den <= num * 10.0 ** (-SI_SDR_CAP_DB / 10.0) or den == 0.0:
        return SI_SDR_CAP_DB
    return float(min(10.0 * np.log10(num / den), SI_SDR_CAP_DB))


def reference_std(w: Waveform, channel: int = 0) -> float:
    """Standard deviation of one channel's time-domain samples; the
    per-utterance normalizer for network features."""
    sigma = float(np.std(w.samples[channel]))
    if sigma == 0.0:
        raise NormalizationError("reference channel is silent (zero standard deviation)")
    return sigma
