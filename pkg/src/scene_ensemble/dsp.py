"""Feature extraction: framed STFT power, dB spectrogram images and MFCCs.

Matrices are float64 numpy arrays; time runs along axis 0 for power and MFCC
matrices. Spectrogram images put frequency on rows and time on columns.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

EPS = 1e-10


class SignalTooShortError(ValueError):
    pass


class FilterbankError(ValueError):
    pass


@dataclass(frozen=True)
class DspConfig:
    frame_length: int = 2048
    hop_length: int = 512
    image_size: int = 64
    n_mels: int = 40
    mfcc_count: int = 20
    sample_rate: int = 16000
    db_floor: float = -80.0
    fmin: float = 0.0
    fmax: float = None

    def __post_init__(self):
        if self.fmax is None:
            object.__setattr__(self, "fmax", self.sample_rate / 2)
        if self.frame_length <= 0:
            raise ValueError("frame_length must be positive")
        if not 0 < self.hop_length <= self.frame_length:
            raise ValueError("hop_length must be in (0, frame_length]")
        if self.image_size <= 0:
            raise ValueError("image_size must be positive")
        if not 0 < self.mfcc_count <= self.n_mels:
            raise ValueError("mfcc_count must be in (0, n_mels]")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise ValueError("need 0 <= fmin < fmax <= sample_rate/2")

    @property
    def n_bins(self):
        return self.frame_length // 2 + 1

    def n_frames(self, n_samples):
        return (n_samples - self.frame_length) // self.hop_length + 1


@lru_cache(maxsize=8)
def _hann(n):
    # periodic Hann, the usual STFT analysis window
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    w.setflags(write=False)
    return w


def hann_window(n):
    return _hann(int(n)).copy()


def frame_signal(signal, cfg):
    """Slice ``signal`` into Hann-windowed frames ``[n_frames, frame_length]``."""
    x = np.asarray(signal, dtype=np.float64)
    L, H = cfg.frame_length, cfg.hop_length
    if x.ndim != 1:
        raise ValueError("frame_signal expects a 1-D signal")
    if len(x) < L:
        raise SignalTooShortError(f"signal too short: {len(x)} samples < frame length {L}")
    n = cfg.n_frames(len(x))
    idx = np.arange(L)[None, :] + H * np.arange(n)[:, None]
    return x[idx] * _hann(L)


def power_spectrogram(frames):
    """``|DFT_k(frame)|^2`` for ``k = 0..L/2`` of each row."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    spec = np.fft.rfft(frames, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def power_to_db(p, db_floor=-80.0):
    return np.maximum(10.0 * np.log10(np.asarray(p, dtype=np.float64) + EPS), db_floor)


def bilinear_resize(m, out_h, out_w):
    """Resize a 2-D array with bilinear interpolation on pixel centres.

    Source coordinates follow the half-pixel convention
    ``src = (dst + 0.5) * in / out - 0.5`` clamped to the valid range, so an
    equal-size resize is the identity.
    """
    m = np.asarray(m, dtype=np.float64)
    in_h, in_w = m.shape

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    r0, r1, fr = axis_weights(in_h, out_h)
    c0, c1, fc = axis_weights(in_w, out_w)
    top = m[r0][:, c0] * (1 - fc) + m[r0][:, c1] * fc
    bot = m[r1][:, c0] * (1 - fc) + m[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bot * fr[:, None]


def spectrogram_image(db, image_size=64):
    """Resize to ``image_size`` square and min-max scale into [0, 1].

    A constant matrix maps to all zeros.
    """
    db = np.asarray(db, dtype=np.float64)
    if db.size == 0:
        raise ValueError("empty dB matrix")
    img = bilinear_resize(db, image_size, image_size)
    lo, hi = img.min(), img.max()
    if hi - lo <= 0:
        return np.zeros_like(img)
    return np.clip((img - lo) / (hi - lo), 0.0, 1.0)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(cfg):
    """The ``n_mels + 2`` corner frequencies (Hz); interior ones are the centres."""
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(mels)


def mel_filterbank(cfg):
    """Unit-peak triangular filters ``[n_mels, L/2 + 1]`` over the FFT bins."""
    edges = mel_band_edges(cfg)
    freqs = np.arange(cfg.n_bins) * cfg.sample_rate / cfg.frame_length
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rise = (freqs[None, :] - lower) / (centre - lower)
    fall = (upper - freqs[None, :]) / (upper - centre)
    fb = np.maximum(0.0, np.minimum(rise, fall))
    empty = np.flatnonzero(~(fb > 0).any(axis=1))
    if empty.size:
        raise FilterbankError(
            f"n_mels={cfg.n_mels} too large for frame length {cfg.frame_length}: "
            f"filters {empty.tolist()} cover no FFT bin"
        )
    return fb


@lru_cache(maxsize=8)
def _dct_basis(n):
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    basis = np.cos(np.pi * k * (2 * j + 1) / (2 * n)) * np.sqrt(2.0 / n)
    basis[0] /= np.sqrt(2.0)
    basis.setflags(write=False)
    return basis


def dct2_ortho(x, axis=-1):
    """Orthonormal DCT-II along ``axis``."""
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, -1)
    return np.moveaxis(x @ _dct_basis(x.shape[-1]).T, -1, axis)


def mfcc(p, fb, n_coeffs=20):
    """Cepstral coefficients ``[n_frames, n_coeffs]`` from a power spectrogram."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if fb.shape[1] != p.shape[1]:
        raise ValueError(f"filterbank has {fb.shape[1]} bins, spectrogram has {p.shape[1]}")
    log_e = np.log(p @ fb.T + EPS)
    return dct2_ortho(log_e)[:, :n_coeffs]


def extract_features(seg, cfg):
    """One ``(image, mfcc)`` pair per channel of ``seg``.

    ``seg`` needs ``channels`` (sequence of 1-D arrays) and ``sample_rate``.
    """
    if len(seg.channels) < 1:
        raise ValueError("segment has no channels")
    if seg.sample_rate != cfg.sample_rate:
        raise ValueError(f"sample rate {seg.sample_rate} Hz does not match config {cfg.sample_rate} Hz")
    fb = mel_filterbank(cfg)
    out = []
    for ch in seg.channels:
        p = power_spectrogram(frame_signal(ch, cfg))
        img = spectrogram_image(power_to_db(p, cfg.db_floor).T, cfg.image_size)
        out.append((img, mfcc(p, fb, cfg.mfcc_count)))
    return out
