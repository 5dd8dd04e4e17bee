import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scene_ensemble import data, dsp
from scene_ensemble.data import (
    AudioSegment, ClassLabel, ManifestEntry, ManifestError, SplitError, WavFormatError,
)


def wav_bytes(samples, rate=16000, fmt_tag=1, bits=16, data_size=None):
    """Hand-assembled RIFF file around int16 ``samples`` of shape [n, channels]."""
    samples = np.asarray(samples, dtype="<i2")
    n_ch = samples.shape[1]
    payload = samples.tobytes()
    fmt = struct.pack("<HHIIHH", fmt_tag, n_ch, rate, rate * n_ch * bits // 8, n_ch * bits // 8, bits)
    size = len(payload) if data_size is None else data_size
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", size) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


class TestLabels:
    def test_ids(self):
        assert int(ClassLabel.Absence) == 0 and int(ClassLabel.Working) == 8
        assert data.NUM_CLASSES == 9

    @pytest.mark.parametrize("text", ["Cooking", "cooking", "CO", " co "])
    def test_parse(self, text):
        assert ClassLabel.parse(text) is ClassLabel.Cooking

    def test_display_and_abbrev(self):
        assert ClassLabel.parse("Social activity") is ClassLabel.SocialActivity
        assert ClassLabel.SocialActivity.display_name == "Social activity"
        assert ClassLabel.WatchingTV.abbrev == "WT"

    def test_unknown(self):
        with pytest.raises(ValueError):
            ClassLabel.parse("Jogging")


class TestManifest:
    def test_row(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("path\tlabel\tsession\na/b.wav\tCooking\ts1\n")
        (e,) = data.load_manifest(p)
        assert (e.path, int(e.label), e.session, e.split) == ("a/b.wav", 1, "s1", "unassigned")

    def test_split_column(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("x.wav\tEA\ts\ttest\n")
        assert data.load_manifest(p)[0].split == "test"

    def test_empty(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("")
        assert data.load_manifest(p) == []

    def test_unknown_label_names_row(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("path\tlabel\tsession\na.wav\tCooking\ts\nb.wav\tJogging\ts\n")
        with pytest.raises(ManifestError, match=r":3:.*Jogging"):
            data.load_manifest(p)

    def test_bad_columns(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("a.wav\tCooking\n")
        with pytest.raises(ManifestError, match=":1:"):
            data.load_manifest(p)

    def test_roundtrip(self, tmp_path):
        entries = [ManifestEntry("a.wav", ClassLabel.Other, "s0", "val"),
                   ManifestEntry("b.wav", ClassLabel.Working, "s1", "train")]
        p = tmp_path / "m.tsv"
        data.write_manifest(entries, p, with_split=True)
        assert data.load_manifest(p) == entries


class TestWav:
    def test_four_channels(self, tmp_path, rng):
        pcm = rng.integers(-32768, 32767, size=(160000, 4))
        p = tmp_path / "a.wav"
        p.write_bytes(wav_bytes(pcm))
        seg = data.read_wav(p, expected_rate=16000)
        assert len(seg.channels) == 4 and seg.duration == 10.0
        for i in range(4):
            np.testing.assert_array_equal(seg.channels[i], pcm[:, i] / 32768.0)

    def test_mono(self, tmp_path):
        p = tmp_path / "m.wav"
        p.write_bytes(wav_bytes(np.zeros((100, 1))))
        assert len(data.read_wav(p).channels) == 1

    def test_eight_sample_fixture(self, tmp_path):
        values = [0, 1, -1, 32767, -32768, 16384, -16384, 2]
        p = tmp_path / "f.wav"
        p.write_bytes(wav_bytes(np.array(values)[:, None]))
        np.testing.assert_array_equal(data.read_wav(p).channels[0],
                                      [0, 1 / 32768, -1 / 32768, 32767 / 32768, -1.0, 0.5, -0.5, 2 / 32768])

    def test_not_pcm(self, tmp_path):
        p = tmp_path / "f.wav"
        p.write_bytes(wav_bytes(np.zeros((4, 1)), fmt_tag=3))
        with pytest.raises(WavFormatError, match="not PCM"):
            data.read_wav(p)

    def test_24_bit(self, tmp_path):
        p = tmp_path / "f.wav"
        p.write_bytes(wav_bytes(np.zeros((6, 1)), bits=24))
        with pytest.raises(WavFormatError, match="bit depth"):
            data.read_wav(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "f.wav"
        p.write_bytes(wav_bytes(np.zeros((10, 2)), data_size=400))
        with pytest.raises(WavFormatError, match="truncated"):
            data.read_wav(p)

    def test_wrong_rate(self, tmp_path):
        p = tmp_path / "f.wav"
        p.write_bytes(wav_bytes(np.zeros((10, 1)), rate=44100))
        with pytest.raises(WavFormatError, match="44100"):
            data.read_wav(p, expected_rate=16000)

    def test_garbage(self, tmp_path):
        p = tmp_path / "f.wav"
        p.write_bytes(b"hello world, not audio")
        with pytest.raises(WavFormatError):
            data.read_wav(p)

    def test_roundtrip(self, tmp_path, rng):
        seg = AudioSegment([rng.integers(-32768, 32767, 500) / 32768.0 for _ in range(3)], 16000)
        p = tmp_path / "r.wav"
        data.write_wav(p, seg)
        back = data.read_wav(p)
        for a, b in zip(seg.channels, back.channels):
            np.testing.assert_array_equal(a, b)


def entries_per_class(n):
    return [ManifestEntry(f"{c.name}_{i}.wav", c) for c in ClassLabel for i in range(n)]


class TestSplit:
    @pytest.mark.parametrize("n,expected", [(100, (75, 5, 20)), (20, (15, 1, 4))])
    def test_counts(self, n, expected):
        tr, va, te = data.split_dataset(entries_per_class(n), seed=0)
        for c in ClassLabel:
            got = tuple(sum(e.label == c for e in part) for part in (tr, va, te))
            assert got == expected

    def test_tags_and_order(self):
        entries = entries_per_class(20)
        tr, va, te = data.split_dataset(entries, seed=3)
        assert {e.split for e in tr} == {"train"} and {e.split for e in te} == {"test"}
        pos = {e.path: i for i, e in enumerate(entries)}
        for part in (tr, va, te):
            assert [pos[e.path] for e in part] == sorted(pos[e.path] for e in part)

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(20, 60), seed=st.integers(0, 10_000))
    def test_partition(self, n, seed):
        entries = entries_per_class(n)
        parts = data.split_dataset(entries, seed)
        paths = [e.path for p in parts for e in p]
        assert sorted(paths) == sorted(e.path for e in entries)
        assert data.split_dataset(entries, seed) == parts

    def test_seed_changes_assignment(self):
        entries = entries_per_class(30)
        assert data.split_dataset(entries, 0)[2] != data.split_dataset(entries, 1)[2]

    def test_below_minimum(self):
        entries = entries_per_class(20)[:-1]
        with pytest.raises(SplitError, match="Working"):
            data.split_dataset(entries, 0)

    def test_largest_remainder(self):
        assert data.largest_remainder(20, (0.75, 0.05, 0.20)) == [15, 1, 4]
        assert data.largest_remainder(7, (0.75, 0.05, 0.20)) == [5, 0, 2]
        assert data.largest_remainder(2, (0.25, 0.25, 0.5)) == [1, 0, 1]  # tie goes to the earlier split


class TestBatching:
    def test_sizes(self):
        sizes = [len(b) for b in data.batch_iter(list(range(273)), 50, seed=0, epoch=1)]
        assert sizes == [50] * 5 + [23]

    def test_each_item_once(self):
        items = np.arange(273)
        seen = np.concatenate(list(data.batch_iter(items, 50, 0, 1)))
        assert sorted(seen.tolist()) == list(range(273))

    def test_deterministic(self):
        a = [b.tolist() for b in data.batch_iter(np.arange(40), 7, 5, 3)]
        b = [b.tolist() for b in data.batch_iter(np.arange(40), 7, 5, 3)]
        c = [b.tolist() for b in data.batch_iter(np.arange(40), 7, 5, 4)]
        assert a == b and a != c

    def test_recorded_permutation(self):
        # guards against silent changes to the shuffle stream
        assert data.epoch_permutation(10, 0, 1).tolist() == [9, 1, 3, 8, 7, 6, 0, 4, 2, 5]
        assert data.epoch_permutation(10, 0, 2).tolist() == [8, 2, 1, 0, 5, 6, 7, 4, 3, 9]

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            list(data.batch_iter([1, 2], 0, 0, 0))


class TestSynthetic:
    def test_shape(self):
        ds = data.generate_synthetic_dataset(10, seed=0, fast=True)
        assert len(ds) == 90
        assert [sum(e.label == c for e, _ in ds) for c in ClassLabel] == [10] * 9
        seg = ds[0][1]
        assert len(seg.channels) == 4 and seg.n_samples == 16000

    def test_byte_identical_export(self, tmp_path):
        ds1 = data.generate_synthetic_dataset(2, seed=11, fast=True)
        ds2 = data.generate_synthetic_dataset(2, seed=11, fast=True)
        data.export_dataset(ds1, tmp_path / "a")
        data.export_dataset(ds2, tmp_path / "b")
        for e, _ in ds1:
            assert (tmp_path / "a" / e.path).read_bytes() == (tmp_path / "b" / e.path).read_bytes()
        assert (tmp_path / "a" / "manifest.tsv").read_bytes() == (tmp_path / "b" / "manifest.tsv").read_bytes()

    def test_export_is_lossless(self, tmp_path):
        ds = data.generate_synthetic_dataset(1, seed=2, fast=True)
        manifest = data.export_dataset(ds, tmp_path)
        entries = data.load_manifest(manifest)
        assert entries == [e for e, _ in ds]
        for e, seg in ds:
            back = data.read_wav(tmp_path / e.path)
            for a, b in zip(seg.channels, back.channels):
                np.testing.assert_array_equal(a, b)

    def test_seed_matters(self):
        a = data.generate_synthetic_dataset(1, seed=0, fast=True)[0][1].channels[0]
        b = data.generate_synthetic_dataset(1, seed=1, fast=True)[0][1].channels[0]
        assert not np.array_equal(a, b)

    def test_separable(self):
        ds = data.generate_synthetic_dataset(10, seed=0, fast=True)
        cfg = dsp.DspConfig(hop_length=80)
        assert data.nearest_centroid_probe(ds, cfg) >= 0.95
