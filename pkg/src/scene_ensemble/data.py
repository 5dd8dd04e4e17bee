"""Labels, manifests, WAV ingestion, dataset splitting and the synthetic corpus."""

import csv
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np


class ClassLabel(IntEnum):
    Absence = 0
    Cooking = 1
    Dishwashing = 2
    Eating = 3
    Other = 4
    SocialActivity = 5
    VacuumCleaning = 6
    WatchingTV = 7
    Working = 8

    @property
    def abbrev(self):
        return ABBREVIATIONS[self]

    @property
    def display_name(self):
        return DISPLAY_NAMES[self]

    @classmethod
    def parse(cls, text):
        """Accept the enum name, the display name or the abbreviation, any case."""
        key = text.strip().replace(" ", "").replace("_", "").lower()
        try:
            return _LOOKUP[key]
        except KeyError:
            raise ValueError(f"unknown class label {text!r}") from None


ABBREVIATIONS = dict(zip(ClassLabel, ["AB", "CO", "DW", "EA", "OT", "SA", "VC", "WT", "WO"]))
DISPLAY_NAMES = dict(zip(ClassLabel, [
    "Absence", "Cooking", "Dishwashing", "Eating", "Other", "Social activity",
    "Vacuum cleaning", "Watching TV", "Working",
]))
_LOOKUP = {}
for _c in ClassLabel:
    for _alias in (_c.name, DISPLAY_NAMES[_c], ABBREVIATIONS[_c]):
        _LOOKUP[_alias.replace(" ", "").lower()] = _c

NUM_CLASSES = len(ClassLabel)
SPLITS = ("train", "val", "test", "unassigned")
MANIFEST_HEADER = ["path", "label", "session"]


class ManifestError(ValueError):
    pass


class WavFormatError(ValueError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: ClassLabel
    session: str = ""
    split: str = "unassigned"

    def __post_init__(self):
        if not self.path:
            raise ValueError("manifest entry needs a path")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split tag {self.split!r}")
        object.__setattr__(self, "label", ClassLabel(self.label))


@dataclass
class AudioSegment:
    channels: list
    sample_rate: int = 16000
    label: ClassLabel = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = [np.asarray(c, dtype=np.float64) for c in self.channels]
        if not 1 <= len(self.channels) <= 4:
            raise ValueError(f"expected 1-4 channels, got {len(self.channels)}")
        if len({len(c) for c in self.channels}) != 1:
            raise ValueError("channels differ in length")

    @property
    def n_samples(self):
        return len(self.channels[0])

    @property
    def duration(self):
        return self.n_samples / self.sample_rate


def load_manifest(path):
    """Read a ``path<TAB>label<TAB>session[<TAB>split]`` manifest.

    The header row is optional. Errors name the 1-based line number.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if lineno == 1 and [c.strip().lower() for c in cols[:3]] == MANIFEST_HEADER:
            continue
        if len(cols) not in (3, 4):
            raise ManifestError(f"{path}:{lineno}: expected 3 or 4 tab-separated columns, got {len(cols)}")
        try:
            label = ClassLabel.parse(cols[1])
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: unknown label {cols[1]!r}") from None
        split = cols[3].strip() if len(cols) == 4 else "unassigned"
        try:
            entries.append(ManifestEntry(cols[0].strip(), label, cols[2].strip(), split or "unassigned"))
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
    return entries


def write_manifest(entries, path, with_split=False):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(MANIFEST_HEADER + (["split"] if with_split else []))
        for e in entries:
            row = [e.path, e.label.name, e.session]
            w.writerow(row + [e.split] if with_split else row)


def read_wav(path, label=None, expected_rate=None):
    """Parse a 16-bit PCM RIFF/WAVE file into an :class:`AudioSegment`.

    Samples are scaled by 1/32768. ``expected_rate`` rejects other rates.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    pos, fmt, data = 12, None, None
    while pos + 8 <= len(raw):
        cid, size = raw[pos:pos + 4], struct.unpack_from("<I", raw, pos + 4)[0]
        body = raw[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavFormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body)
            if fmt[0] == 0xFFFE and len(body) >= 26:
                # WAVE_FORMAT_EXTENSIBLE: first two bytes of the sub-format GUID
                fmt = (struct.unpack_from("<H", body, 24)[0],) + fmt[1:]
        elif cid == b"data":
            if len(body) < size:
                raise WavFormatError(f"{path}: truncated data chunk ({len(body)} of {size} bytes)")
            data = body
            break
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")
    audio_format, n_ch, rate, _, block_align, bits = fmt
    if audio_format != 1:
        raise WavFormatError(f"{path}: not PCM (format tag {audio_format})")
    if bits != 16:
        raise WavFormatError(f"{path}: unsupported bit depth {bits}")
    if not 1 <= n_ch <= 4:
        raise WavFormatError(f"{path}: unsupported channel count {n_ch}")
    if expected_rate is not None and rate != expected_rate:
        raise WavFormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if len(data) % (2 * n_ch):
        raise WavFormatError(f"{path}: truncated data chunk (partial frame)")
    samples = np.frombuffer(data, dtype="<i2").reshape(-1, n_ch)
    chans = [samples[:, i].astype(np.float64) / 32768.0 for i in range(n_ch)]
    return AudioSegment(chans, sample_rate=rate, label=label)


def to_pcm16(x):
    return np.clip(np.round(np.asarray(x) * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, seg):
    """Write ``seg`` as 16-bit PCM (samples clipped to the int16 range)."""
    pcm = np.stack([to_pcm16(c) for c in seg.channels], axis=1)
    n_ch = pcm.shape[1]
    data = pcm.tobytes()
    fmt = struct.pack("<HHIIHH", 1, n_ch, seg.sample_rate, seg.sample_rate * 2 * n_ch, 2 * n_ch, 16)
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(data)) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<I", len(fmt)) + fmt)
        fh.write(b"data" + struct.pack("<I", len(data)) + data)


def largest_remainder(n, fractions):
    quotas = [n * f for f in fractions]
    counts = [int(np.floor(q)) for q in quotas]
    left = n - sum(counts)
    # stable sort: equal remainders go to the earlier split first
    order = sorted(range(len(quotas)), key=lambda i: -(quotas[i] - counts[i]))
    for i in order[:left]:
        counts[i] += 1
    return counts


def split_dataset(entries, seed, fractions=(0.75, 0.05, 0.20), min_per_class=20):
    """Stratified train/val/test split with largest-remainder rounding per class.

    Each output list keeps manifest order and carries the matching split tag.
    """
    by_class = {}
    for idx, e in enumerate(entries):
        by_class.setdefault(e.label, []).append(idx)
    small = sorted(c.name for c, idx in by_class.items() if len(idx) < min_per_class)
    if small:
        raise SplitError(f"classes below {min_per_class} entries: {', '.join(small)}")
    tag = {}
    for label, idx in sorted(by_class.items()):
        rng = np.random.default_rng([seed, int(label)])
        perm = [idx[i] for i in rng.permutation(len(idx))]
        n_tr, n_va, _ = largest_remainder(len(idx), fractions)
        for j, i in enumerate(perm):
            tag[i] = "train" if j < n_tr else "val" if j < n_tr + n_va else "test"
    parts = {"train": [], "val": [], "test": []}
    for i, e in enumerate(entries):
        parts[tag[i]].append(replace(e, split=tag[i]))
    return parts["train"], parts["val"], parts["test"]


def epoch_permutation(n, seed, epoch):
    return np.random.default_rng([seed, epoch]).permutation(n)


def batch_iter(items, batch_size, seed, epoch):
    """Yield shuffled batches; the order depends only on ``(seed, epoch)``.

    The final short batch is kept.
    """
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    perm = epoch_permutation(len(items), seed, epoch)
    for start in range(0, len(perm), batch_size):
        idx = perm[start:start + batch_size]
        if isinstance(items, np.ndarray):
            yield items[idx]
        else:
            yield [items[i] for i in idx]


# Synthetic corpus: each class has a tonal chord and a noise band at
# class-specific frequencies plus a class-specific amplitude envelope.
_SYNTH_TONES = [
    (110.0,), (220.0, 330.0), (1800.0, 2700.0), (440.0, 660.0, 880.0), (150.0, 3200.0),
    (300.0, 500.0, 700.0), (90.0, 180.0, 270.0), (520.0, 1040.0), (1200.0,),
]
_SYNTH_BANDS = [
    (50, 400), (2500, 4000), (4500, 6500), (800, 1500), (6000, 7500),
    (1000, 3000), (200, 6000), (3000, 3800), (400, 900),
]
_SYNTH_MOD_HZ = [0.0, 3.0, 7.0, 1.5, 0.0, 5.0, 0.0, 0.5, 2.0]


def _band_noise(rng, n, rate, lo, hi):
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / rate)
    spec[(f < lo) | (f > hi)] = 0
    x = np.fft.irfft(spec, n)
    return x / (np.abs(x).max() + 1e-12)


def synth_segment(label, rng, duration=10.0, sample_rate=16000, n_channels=4):
    label = ClassLabel(label)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    k = int(label)
    x = np.zeros(n)
    for f0 in _SYNTH_TONES[k]:
        f = f0 * rng.uniform(0.98, 1.02)
        x += rng.uniform(0.6, 1.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x /= len(_SYNTH_TONES[k])
    x += rng.uniform(0.3, 0.6) * _band_noise(rng, n, sample_rate, *_SYNTH_BANDS[k])
    if _SYNTH_MOD_HZ[k]:
        x *= 0.6 + 0.4 * np.sin(2 * np.pi * _SYNTH_MOD_HZ[k] * t + rng.uniform(0, 2 * np.pi))
    x *= rng.uniform(0.3, 0.8) / (np.abs(x).max() + 1e-12)
    chans = []
    for _ in range(n_channels):
        ch = x * rng.uniform(0.9, 1.1) + 0.002 * rng.standard_normal(n)
        chans.append(to_pcm16(ch).astype(np.float64) / 32768.0)
    return AudioSegment(chans, sample_rate=sample_rate, label=label)


def generate_synthetic_dataset(n_per_class, seed, duration=10.0, sample_rate=16000,
                               n_channels=4, fast=False):
    """Balanced desk-scale stand-in corpus: list of ``(ManifestEntry, AudioSegment)``.

    ``fast`` shortens every segment to one second. Samples sit on the 16-bit
    grid so writing and re-reading them is lossless.
    """
    if fast:
        duration = 1.0
    out = []
    for label in ClassLabel:
        for i in range(n_per_class):
            rng = np.random.default_rng([seed, int(label), i])
            seg = synth_segment(label, rng, duration, sample_rate, n_channels)
            entry = ManifestEntry(f"{label.name}_{i:04d}.wav", label, f"{label.abbrev}{i % 3}")
            out.append((entry, seg))
    return out


def export_dataset(dataset, out_dir):
    """Write WAVs plus ``manifest.tsv`` under ``out_dir``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for entry, seg in dataset:
        write_wav(out_dir / entry.path, seg)
    manifest = out_dir / "manifest.tsv"
    write_manifest([e for e, _ in dataset], manifest)
    return manifest


def nearest_centroid_probe(dataset, cfg, seed=0, train_fraction=0.5):
    """Accuracy of a nearest-centroid classifier on per-segment mean MFCCs.

    Uses the first channel; half of each class fits centroids, the rest is
    scored. Serves as a separability self-test for synthetic corpora.
    """
    from . import dsp

    fb = dsp.mel_filterbank(cfg)
    feats, labels = [], []
    for entry, seg in dataset:
        p = dsp.power_spectrogram(dsp.frame_signal(seg.channels[0], cfg))
        feats.append(dsp.mfcc(p, fb, cfg.mfcc_count).mean(axis=0))
        labels.append(int(entry.label))
    feats, labels = np.array(feats), np.array(labels)
    rng = np.random.default_rng(seed)
    fit = np.zeros(len(labels), dtype=bool)
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        fit[idx[:max(1, int(len(idx) * train_fraction))]] = True
    classes = np.unique(labels)
    cents = np.stack([feats[fit & (labels == c)].mean(axis=0) for c in classes])
    test = ~fit
    d = ((feats[test][:, None, :] - cents[None]) ** 2).sum(axis=2)
    return float((classes[d.argmin(axis=1)] == labels[test]).mean())
