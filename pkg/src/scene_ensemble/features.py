"""On-disk feature store: one container file per (segment, channel) plus an index TSV."""

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .data import ClassLabel, ManifestEntry
from .models.checkpoint import CorruptContainerError, read_container, write_container

INDEX_NAME = "index.tsv"
INDEX_FIELDS = ["segment", "label", "session", "split", "channel", "file"]


@dataclass(frozen=True)
class IndexRow:
    segment: str
    label: ClassLabel
    session: str
    split: str
    channel: int
    file: str

    def entry(self):
        return ManifestEntry(self.segment, self.label, self.session, self.split)


def feature_filename(segment_path, channel):
    stem = Path(segment_path).with_suffix("").as_posix().replace("/", "__")
    return f"{stem}.ch{channel}.sens"


def write_feature_file(path, image, mfcc, meta):
    write_container(path, {"kind": "features", **meta}, {"image": image, "mfcc": mfcc})


def read_feature_file(path):
    header, tensors = read_container(path)
    if header.get("kind") != "features" or not {"image", "mfcc"} <= set(tensors):
        raise CorruptContainerError(f"{path}: corrupt container (not a feature file)")
    return tensors["image"], tensors["mfcc"], header


def extract_to_files(entry, seg, cfg, out_dir, force=False):
    """Write one feature file per channel; returns ``(rows, n_written)``."""
    out_dir = Path(out_dir)
    names = [feature_filename(entry.path, ch) for ch in range(len(seg.channels))]
    if not force and all((out_dir / n).exists() for n in names):
        rows = [IndexRow(entry.path, entry.label, entry.session, entry.split, ch, n)
                for ch, n in enumerate(names)]
        return rows, 0
    pairs = dsp.extract_features(seg, cfg)
    rows = []
    for ch, ((img, mf), name) in enumerate(zip(pairs, names)):
        meta = {"segment": entry.path, "channel": ch, "label": entry.label.name, "dsp": asdict(cfg)}
        write_feature_file(out_dir / name, img, mf, meta)
        rows.append(IndexRow(entry.path, entry.label, entry.session, entry.split, ch, name))
    return rows, len(rows)


def write_index(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(INDEX_FIELDS)
        for r in rows:
            w.writerow([r.segment, r.label.name, r.session, r.split, r.channel, r.file])


def read_index(path):
    path = Path(path)
    if path.is_dir():
        path = path / INDEX_NAME
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if reader.fieldnames != INDEX_FIELDS:
            raise ValueError(f"{path}: unexpected index header {reader.fieldnames}")
        return [IndexRow(r["segment"], ClassLabel.parse(r["label"]), r["session"], r["split"],
                         int(r["channel"]), r["file"]) for r in reader]


def group_by_segment(rows):
    """Ordered mapping ``segment -> [rows sorted by channel]``."""
    groups = {}
    for r in rows:
        groups.setdefault(r.segment, []).append(r)
    return {k: sorted(v, key=lambda r: r.channel) for k, v in groups.items()}


def model_input(image, mfcc, model_name):
    return image[None] if model_name == "cnn2d" else mfcc


def load_examples(rows, feature_dir, model_name):
    """Stack per-channel examples for ``model_name``; returns ``(x, y)``."""
    feature_dir = Path(feature_dir)
    xs, ys = [], []
    for r in rows:
        img, mf, _ = read_feature_file(feature_dir / r.file)
        xs.append(model_input(img, mf, model_name))
        ys.append(int(r.label))
    return np.stack(xs), np.array(ys, dtype=np.int64)


def load_segments(rows, feature_dir):
    """Per segment: ``(label, images [C,1,S,S], mfccs [C,T,M])``."""
    feature_dir = Path(feature_dir)
    out = []
    for seg_rows in group_by_segment(rows).values():
        imgs, mfs = [], []
        for r in seg_rows:
            img, mf, _ = read_feature_file(feature_dir / r.file)
            imgs.append(img[None])
            mfs.append(mf)
        out.append((seg_rows[0].label, np.stack(imgs), np.stack(mfs)))
    return out
