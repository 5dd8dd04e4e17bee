"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (the lines print even while
pytest captures output) or ``python -m tests.test_acceptance``.
"""

import time

import numpy as np
import pytest

from scene_ensemble import data, dsp, evaluation as ev, models, nn
from scene_ensemble.config import load_run_config
from scene_ensemble.models import EnsembleWeights, TrainConfig, ensemble_predict, train_model
from scene_ensemble.models.architectures import Model, lstm_descriptor
from tests.gradcheck import TOL, check_layer, numeric_grad, rel_error
from tests.oracles import brute_mfcc_frame, naive_dft_power_vec


class Criterion:
    """Collects named sub-checks and prints a single verdict line."""

    def __init__(self, number, title, budget_s, emit):
        self.number, self.title, self.budget, self.emit = number, title, budget_s, emit
        self.failed = []
        self.start = time.perf_counter()

    def check(self, name, ok, detail=""):
        if not ok:
            self.failed.append(f"{name} ({detail})" if detail else name)

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check("runtime", elapsed < self.budget, f"{elapsed:.1f}s >= {self.budget}s")
        verdict = "PASS" if not self.failed else "FAIL"
        line = f"{verdict} criterion {self.number}: {self.title} [{elapsed:.1f}s]"
        if self.failed:
            line += " :: " + "; ".join(self.failed)
        self.emit(line)
        assert not self.failed, line


@pytest.fixture
def criterion(capsys):
    def emit(line):
        with capsys.disabled():
            print("\n" + line)

    return lambda *a: Criterion(*a, emit=emit)


# ---------------------------------------------------------------- 1

def test_1_metric_oracle(criterion):
    c = criterion(1, "confusion matrix reproduces the reference F1 column", 1.0)
    _, _, f1 = ev.per_class_f1(ev.REFERENCE_CONFUSION)
    for name, got, want in zip(ev.CLASS_NAMES, f1, ev.REFERENCE_F1):
        c.check(name, abs(got - want) <= 0.01, f"{got:.4f} vs {want:.2f}")
    macro = ev.macro_f1(f1)
    c.check("macro", abs(macro - 92.19) <= 0.01, f"{macro:.4f}")
    # Absence by hand: P = 201/255, R = 201/221
    p, r = 201 / 255, 201 / 221
    c.check("absence hand value", abs(f1[0] - 100 * 2 * p * r / (p + r)) < 1e-9)
    c.check("exact 100s", f1[6] == 100.0 and f1[7] == 100.0)
    c.finish()


# ---------------------------------------------------------------- 2

def test_2_baseline_delta(criterion):
    c = criterion(2, "deltas against the baseline system", 1.0)
    rep = ev.MetricReport.from_confusion(ev.ConfusionMatrix(ev.REFERENCE_CONFUSION))
    deltas = ev.compare_to_baseline(rep)
    c.check("macro +7.69", abs(deltas["macro"] - 7.69) <= 0.01, f"{deltas['macro']:.4f}")
    for idx, want in ((2, 19.25), (3, 9.38), (4, 32.88)):
        got = deltas["per_class"][idx]
        c.check(f"{ev.CLASS_NAMES[idx]} +{want}", abs(got - want) <= 0.01, f"{got:.4f}")
    c.finish()


# ---------------------------------------------------------------- 3

def test_3_dsp_oracles(criterion):
    c = criterion(3, "spectrogram, MFCC and Parseval oracles on 100 frames", 30.0)
    rng = np.random.default_rng(3)
    cfg = dsp.DspConfig()
    L = cfg.frame_length
    signal = rng.standard_normal(L + 99 * cfg.hop_length)
    frames = dsp.frame_signal(signal, cfg)
    assert frames.shape[0] == 100
    power = dsp.power_spectrogram(frames)
    fb = dsp.mel_filterbank(cfg)
    coeffs = dsp.mfcc(power, fb, cfg.mfcc_count)
    k = np.arange(L // 2 + 1)[:, None]
    basis = np.exp(-2j * np.pi * k * np.arange(L)[None, :] / L)
    w = np.full(L // 2 + 1, 2.0)
    w[0] = w[-1] = 1.0
    worst = {"dft": 0.0, "mfcc": 0.0, "parseval": 0.0}
    for i in range(100):
        ref = np.abs(basis @ frames[i]) ** 2
        worst["dft"] = max(worst["dft"], rel_error(power[i], ref))
        worst["mfcc"] = max(worst["mfcc"], rel_error(coeffs[i], brute_mfcc_frame(power[i], fb, cfg.mfcc_count)))
        energy = (frames[i] ** 2).sum()
        worst["parseval"] = max(worst["parseval"], abs((w * power[i]).sum() / L - energy) / energy)
    assert np.allclose(naive_dft_power_vec(frames[0]), np.abs(basis @ frames[0]) ** 2)
    for name, err in worst.items():
        c.check(name, err <= 1e-6, f"rel {err:.2e}")
    c.finish()


# ---------------------------------------------------------------- 4

def test_4_gradient_suite(criterion):
    c = criterion(4, "finite-difference gradient checks in float64", 120.0)
    rng = np.random.default_rng(4)
    f64 = np.float64
    relu_x = rng.standard_normal((3, 8))
    relu_x[np.abs(relu_x) < 0.05] = 0.5
    cases = {
        "conv1d": (nn.Conv1D(3, 4, 5, rng=rng, dtype=f64), rng.standard_normal((2, 11, 3))),
        "conv2d": (nn.Conv2D(2, 3, 3, "same", rng=rng, dtype=f64), rng.standard_normal((2, 2, 6, 5))),
        "maxpool2d": (nn.MaxPool2D(2), rng.standard_normal((2, 3, 6, 4))),
        "maxpool1d": (nn.MaxPool1D(2), rng.standard_normal((2, 9, 3))),
        "dense": (nn.Dense(7, 5, rng=rng, dtype=f64), rng.standard_normal((4, 7))),
        "relu": (nn.ReLU(), relu_x),
        "lstm cell (T=1)": (nn.LSTM(3, 4, rng=rng, dtype=f64), rng.standard_normal((2, 1, 3))),
    }
    for name, (layer, x) in cases.items():
        err = max(check_layer(layer, x, rng).values())
        c.check(name, err <= TOL, f"rel {err:.2e}")

    z = rng.standard_normal((5, 9))
    y = rng.integers(0, 9, 5)
    _, _, g = nn.softmax_cross_entropy(z, y)
    err = rel_error(g, numeric_grad(lambda: nn.softmax_cross_entropy(z, y)[0], z))
    c.check("softmax+cross-entropy", err <= TOL, f"rel {err:.2e}")

    # three stacked LSTM layers, T=5, every coordinate
    stack = [nn.LSTM(3, 4, True, rng=rng, dtype=f64), nn.LSTM(4, 4, True, rng=rng, dtype=f64),
             nn.LSTM(4, 4, False, rng=rng, dtype=f64)]
    for layer in stack:
        for k in ("p_i", "p_f", "p_o"):
            layer.params[k][...] = rng.standard_normal(4) * 0.5
    x = rng.standard_normal((2, 5, 3))
    r = rng.standard_normal((2, 4))

    def stack_loss():
        h = x
        for layer in stack:
            h = layer.forward(h)
        return float((h * r).sum())

    stack_loss()
    g = r
    for layer in reversed(stack):
        layer.zero_grad()
        g = layer.backward(g)
    errs = [rel_error(g, numeric_grad(stack_loss, x))]
    for layer in stack:
        errs += [rel_error(layer.grads[k], numeric_grad(stack_loss, p)) for k, p in layer.params.items()]
    c.check("3-layer LSTM BPTT T=5", max(errs) <= TOL, f"rel {max(errs):.2e}")

    # the full-width LSTM classifier at T=5, through the loss
    m = Model(lstm_descriptor(5, 3), seed=4, dtype=f64)
    xb, yb = rng.standard_normal((2, 5, 3)), np.array([2, 6])

    def model_loss():
        return nn.softmax_cross_entropy(m.forward(xb), yb)[0]

    m.zero_grad()
    m.backward(nn.softmax_cross_entropy(m.forward(xb), yb)[2])
    grads = m.gradients()
    for name, p in m.parameters().items():
        flat = p.reshape(-1)
        idx = rng.choice(flat.size, size=min(20, flat.size), replace=False)
        num = []
        for i in idx:
            old = flat[i]
            flat[i] = old + 1e-3
            fp = model_loss()
            flat[i] = old - 1e-3
            fm = model_loss()
            flat[i] = old
            num.append((fp - fm) / 2e-3)
        err = rel_error(grads[name].reshape(-1)[idx], np.array(num))
        c.check(f"lstm model {name}", err <= TOL, f"rel {err:.2e}")
    c.finish()


# ---------------------------------------------------------------- 5

def test_5_architecture_fidelity(criterion):
    c = criterion(5, "layer tables, flatten width and 9-way posteriors", 60.0)
    rng = np.random.default_rng(5)
    cnn2d, cnn1d, lstm = models.build_cnn2d(), models.build_cnn1d(), models.build_lstm()
    c.check("cnn2d table", cnn2d.audit() == [(32, 64, 64), (32, 32, 32), (64, 32, 32), (64, 16, 16),
                                             (64, 16, 16), (64, 8, 8), (4096,), (128,), (9,)])
    c.check("cnn2d flatten 4096", cnn2d.audit()[6] == (4096,))
    c.check("cnn1d table", cnn1d.audit() == [(210, 128), (181, 128), (90, 128), (76, 128), (38, 128),
                                             (4864,), (128,), (9,)])
    c.check("lstm table", lstm.audit() == [(309, 64), (309, 64), (64,), (64,), (9,)])
    kinds = [[s["type"] for s in m.descriptor.layers] for m in (cnn2d, cnn1d, lstm)]
    c.check("cnn2d kinds", kinds[0] == ["conv2d", "maxpool2d"] * 3 + ["flatten", "dense", "dense"])
    c.check("cnn1d kinds", kinds[1] == ["conv1d", "conv1d", "maxpool1d", "conv1d", "maxpool1d",
                                        "flatten", "dense", "dense"])
    c.check("cnn1d kernels", [s.get("kernel") for s in cnn1d.descriptor.layers[:4]] == [100, 30, 2, 15])
    c.check("lstm kinds", kinds[2] == ["lstm"] * 3 + ["dropout", "dense"])
    for m, shape in ((cnn2d, (1, 64, 64)), (cnn1d, (309, 20)), (lstm, (309, 20))):
        p = m.predict_proba(rng.random((4,) + shape).astype(np.float32))
        c.check(f"{m.name} posteriors", p.shape == (4, 9) and np.abs(p.sum(axis=1) - 1).max() <= 1e-6)
    c.finish()


# ---------------------------------------------------------------- 6

def _toy_features(n_per_class, seed, cfg):
    imgs, mfccs, y, segs = [], [], [], []
    for entry, seg in data.generate_synthetic_dataset(n_per_class, seed, fast=True):
        feats = dsp.extract_features(seg, cfg)
        segs.append((int(entry.label), np.stack([f[0][None] for f in feats]), np.stack([f[1] for f in feats])))
        for img, mf in feats:
            imgs.append(img[None])
            mfccs.append(mf)
            y.append(int(entry.label))
    return np.array(imgs, np.float32), np.array(mfccs, np.float32), np.array(y), segs


@pytest.fixture(scope="module")
def toy_run():
    t0 = time.perf_counter()
    cfg = load_run_config(preset="toy", env={})
    train = _toy_features(10, 0, cfg.dsp)
    val = _toy_features(2, 1, cfg.dsp)
    held_out = _toy_features(10, 2, cfg.dsp)
    n_frames = train[1].shape[1]
    trained, logs = {}, {}
    for name, col in (("cnn2d", 0), ("cnn1d", 1), ("lstm", 2)):
        x = 0 if col == 0 else 1
        m = models.BUILDERS[name](**({} if name == "cnn2d" else {"n_frames": n_frames}), seed=0)
        res = train_model(m, (train[x], train[2]), (val[x], val[2]), cfg.train)
        trained[name], logs[name] = m, res.log
    return cfg, trained, logs, held_out, time.perf_counter() - t0


def test_6_toy_learning(criterion, toy_run):
    c = criterion(6, "toy corpus: train accuracy and held-out ensemble F1", 600.0)
    cfg, trained, logs, held_out, setup_s = toy_run
    c.start -= setup_s  # feature extraction and training happen in the fixture
    c.check("preset lr", cfg.train.lr == 1e-3 and cfg.train.epochs == 200)
    for name, log in logs.items():
        acc = max(row["train_acc"] for row in log)
        c.check(f"{name} train acc", acc >= 0.99 and len(log) <= 200, f"{acc:.3f} after {len(log)} epochs")
    cm = ev.ConfusionMatrix()
    for label, imgs, mfs in held_out[3]:
        p = ensemble_predict(models.predict(trained["cnn2d"], imgs), models.predict(trained["cnn1d"], mfs),
                             models.predict(trained["lstm"], mfs), EnsembleWeights(0.3, 0.4, 0.3))
        cm.accumulate(label, int(np.argmax(p)))
    f1 = ev.macro_f1(ev.per_class_f1(cm)[2])
    c.check("held-out macro F1 >= 95", f1 >= 95.0 and cm.total == 90, f"{f1:.2f}")
    c.finish()


# ---------------------------------------------------------------- 7

def test_7_ensemble_properties(criterion, toy_run):
    c = criterion(7, "ensemble weighting properties", 60.0)
    _, trained, _, held_out, _ = toy_run
    label, imgs, mfs = held_out[3][0]
    p1 = models.predict(trained["cnn2d"], imgs)
    p2 = models.predict(trained["cnn1d"], mfs)
    p3 = models.predict(trained["lstm"], mfs)
    c.check("(1,0,0) is model 1", np.array_equal(ensemble_predict(p1, p2, p3, EnsembleWeights(1, 0, 0)), p1))
    c.check("fixed point", np.allclose(ensemble_predict(p1, p1, p1), p1, atol=1e-12, rtol=0))
    rng = np.random.default_rng(7)
    for _ in range(200):
        ps = rng.dirichlet(np.full(9, 0.3), size=3)
        w = rng.random(3) + 1e-3
        out = ensemble_predict(*ps, EnsembleWeights(*w))
        scaled = ensemble_predict(*ps, EnsembleWeights(*(w * rng.uniform(0.01, 100))))
        if not (abs(out.sum() - 1) <= 1e-9 and (out >= 0).all()):
            c.check("probability vector", False)
            break
        if out.argmax() != scaled.argmax():
            c.check("argmax under rescaling", False)
            break
    c.finish()


# ---------------------------------------------------------------- 8

def test_8_determinism_and_persistence(criterion, toy_run, tmp_path):
    c = criterion(8, "seeded logs, checkpoint roundtrip, stratified split", 120.0)
    _, trained, _, held_out, _ = toy_run
    rng = np.random.default_rng(8)
    x = rng.standard_normal((27, 20, 20)).astype(np.float32)
    y = np.arange(27) % 9
    x[np.arange(27), :, y] += 1.5
    short = TrainConfig(lr=1e-3, epochs=3, batch_size=10, seed=5)
    logs = [train_model(models.build_lstm(n_frames=20, seed=2), (x, y), (x, y), short).log for _ in range(2)]
    c.check("bit-identical logs", logs[0] == logs[1])
    for name, m in trained.items():
        path = tmp_path / f"{name}.sens"
        models.save_checkpoint(m, path)
        back = models.load_checkpoint(path)
        _, imgs, mfs = held_out[3][0]
        feats = imgs if name == "cnn2d" else mfs
        c.check(f"{name} roundtrip", np.array_equal(models.predict(back, feats), models.predict(m, feats)))
    for n in (20, 37, 100):
        entries = [data.ManifestEntry(f"{k.name}{i}.wav", k) for k in data.ClassLabel for i in range(n)]
        parts = data.split_dataset(entries, seed=8)
        c.check(f"partition n={n}", sorted(e.path for p in parts for e in p) == sorted(e.path for e in entries))
        for k in data.ClassLabel:
            got = [sum(e.label == k for e in p) for p in parts]
            c.check(f"quota n={n}", all(abs(g - n * f) < 1 for g, f in zip(got, (0.75, 0.05, 0.20))), str(got))
    c.finish()


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
