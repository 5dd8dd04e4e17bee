"""The three classifiers as layer descriptors, and the model that runs them."""

from dataclasses import dataclass, field

import numpy as np

from ..nn import (
    LSTM, Conv1D, Conv2D, Dense, Dropout, Flatten, MaxPool1D, MaxPool2D, ReLU,
    ShapeError, softmax,
)

NUM_CLASSES = 9
MODEL_NAMES = ("cnn2d", "cnn1d", "lstm")


@dataclass
class ArchitectureDescriptor:
    """Ordered layer specs plus the per-sample input shape.

    Layer specs are plain dicts so the descriptor serializes as JSON.
    """

    name: str
    input_shape: tuple
    layers: list
    num_classes: int = NUM_CLASSES
    options: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "layers": [dict(s) for s in self.layers],
            "num_classes": self.num_classes,
            "options": dict(self.options),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], tuple(d["input_shape"]), [dict(s) for s in d["layers"]],
                   d.get("num_classes", NUM_CLASSES), dict(d.get("options", {})))


def _conv2d(filters):
    return {"type": "conv2d", "filters": filters, "kernel": [3, 3], "stride": 1,
            "padding": "same", "activation": "relu"}


def _conv1d(filters, kernel):
    return {"type": "conv1d", "filters": filters, "kernel": kernel, "stride": 1,
            "padding": "valid", "activation": "relu"}


def _head(units=128, rate=0.5):
    return [
        {"type": "flatten"},
        {"type": "dense", "units": units, "activation": "relu", "dropout": rate},
        {"type": "dense", "units": NUM_CLASSES, "activation": "softmax"},
    ]


def cnn2d_descriptor(image_size=64):
    pool = {"type": "maxpool2d", "kernel": [2, 2]}
    layers = [_conv2d(32), pool, _conv2d(64), pool, _conv2d(64), pool] + _head()
    return ArchitectureDescriptor("cnn2d", (1, image_size, image_size), [dict(l) for l in layers])


def cnn1d_descriptor(n_frames=309, n_mfcc=20):
    pool = {"type": "maxpool1d", "kernel": 2}
    layers = [_conv1d(128, 100), _conv1d(128, 30), pool, _conv1d(128, 15), pool] + _head()
    return ArchitectureDescriptor("cnn1d", (n_frames, n_mfcc), [dict(l) for l in layers])


def lstm_descriptor(n_frames=309, n_mfcc=20, peephole=True):
    layers = [
        {"type": "lstm", "units": 64, "return_sequences": True},
        {"type": "lstm", "units": 64, "return_sequences": True},
        {"type": "lstm", "units": 64, "return_sequences": False},
        {"type": "dropout", "rate": 0.5},
        {"type": "dense", "units": NUM_CLASSES, "activation": "softmax"},
    ]
    return ArchitectureDescriptor("lstm", (n_frames, n_mfcc), layers, options={"peephole": peephole})


def _expand(spec, in_shape, rng, dtype, peephole):
    """Runtime layers for one descriptor entry."""
    kind = spec["type"]
    if kind == "conv2d":
        if spec.get("stride", 1) != 1:
            raise ValueError("only stride 1 is supported")
        out = [Conv2D(in_shape[0], spec["filters"], tuple(spec["kernel"]), spec["padding"], rng, dtype)]
    elif kind == "conv1d":
        if spec.get("stride", 1) != 1:
            raise ValueError("only stride 1 is supported")
        out = [Conv1D(in_shape[-1], spec["filters"], spec["kernel"], spec["padding"], rng, dtype)]
    elif kind == "maxpool2d":
        k = spec["kernel"]
        if k[0] != k[1]:
            raise ValueError("only square pooling windows are supported")
        return [MaxPool2D(k[0])]
    elif kind == "maxpool1d":
        return [MaxPool1D(spec["kernel"])]
    elif kind == "flatten":
        return [Flatten()]
    elif kind == "dense":
        if len(in_shape) != 1:
            raise ShapeError(f"dense needs a flat input, got {in_shape}")
        out = [Dense(in_shape[0], spec["units"], rng, dtype)]
    elif kind == "lstm":
        out = [LSTM(in_shape[-1], spec["units"], spec["return_sequences"], peephole, rng, dtype)]
    elif kind == "dropout":
        return [Dropout(spec["rate"], rng)]
    else:
        raise ValueError(f"unknown layer type {kind!r}")
    if spec.get("activation") == "relu":
        out.append(ReLU())
    if spec.get("dropout"):
        out.append(Dropout(spec["dropout"], rng))
    return out


class Model:
    """A descriptor made runnable.

    ``forward`` returns logits for a batch ``[N, *input_shape]``; the final
    softmax lives in :meth:`predict_proba` and in the training loss.
    Parameters are addressed as ``"<entry index>.<param>"``, e.g. ``"0.weight"``.
    """

    def __init__(self, descriptor, seed=0, dtype=np.float32):
        self.descriptor = descriptor
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)
        peephole = descriptor.options.get("peephole", True)
        self.entries = []          # (descriptor index, runtime layer)
        shape = tuple(descriptor.input_shape)
        self.shapes = []
        for i, spec in enumerate(descriptor.layers):
            for layer in _expand(spec, shape, self.rng, self.dtype, peephole):
                shape = layer.output_shape(shape)
                self.entries.append((i, layer))
            self.shapes.append(shape)
        if shape != (descriptor.num_classes,):
            raise ShapeError(f"{descriptor.name}: final shape {shape}, expected ({descriptor.num_classes},)")
        self.input_mean = None
        self.input_std = None

    @property
    def name(self):
        return self.descriptor.name

    @property
    def layers(self):
        return [layer for _, layer in self.entries]

    def audit(self):
        """Re-propagate shapes through the descriptor; returns per-entry output shapes."""
        shape = tuple(self.descriptor.input_shape)
        out = []
        j = 0
        for i, _ in enumerate(self.descriptor.layers):
            while j < len(self.entries) and self.entries[j][0] == i:
                shape = self.entries[j][1].output_shape(shape)
                j += 1
            out.append(shape)
        return out

    def parameters(self):
        params = {}
        for i, layer in self.entries:
            for k, v in layer.params.items():
                params[f"{i}.{k}"] = v
        return params

    def gradients(self):
        grads = {}
        for i, layer in self.entries:
            for k, v in layer.grads.items():
                grads[f"{i}.{k}"] = v
        return grads

    def num_parameters(self):
        return int(sum(p.size for p in self.parameters().values()))

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def astype(self, dtype):
        self.dtype = np.dtype(dtype)
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def set_normalization(self, mean, std):
        # snapped to float32 so a checkpoint roundtrip reproduces them exactly
        def snap(a):
            return None if a is None else np.asarray(a, dtype=np.float32).astype(np.float64)

        self.input_mean, self.input_std = snap(mean), snap(std)

    def _prepare(self, x):
        x = np.asarray(x)
        if x.shape[1:] != tuple(self.descriptor.input_shape):
            raise ShapeError(f"{self.name}: input shape {x.shape[1:]} != {tuple(self.descriptor.input_shape)}")
        if self.input_mean is not None:
            x = (x - self.input_mean) / self.input_std
        return x.astype(self.dtype, copy=False)

    def forward(self, x, training=False):
        x = self._prepare(x)
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def predict_proba(self, x, batch_size=256):
        """Softmax posteriors ``[N, num_classes]`` with dropout disabled."""
        x = np.asarray(x)
        out = [softmax(self.forward(x[s:s + batch_size]).astype(np.float64), axis=1)
               for s in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def state_dict(self):
        state = {k: v.copy() for k, v in self.parameters().items()}
        if self.input_mean is not None:
            state["norm.mean"] = self.input_mean.copy()
            state["norm.std"] = self.input_std.copy()
        return state

    def load_state_dict(self, state):
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"state is missing parameters: {sorted(missing)}")
        for k, p in params.items():
            v = np.asarray(state[k])
            if v.shape != p.shape:
                raise ShapeError(f"parameter {k}: shape {v.shape} != expected {p.shape}")
            p[...] = v
        if "norm.mean" in state:
            self.set_normalization(state["norm.mean"], state["norm.std"])
        else:
            self.set_normalization(None, None)


def build_model(descriptor, seed=0, dtype=np.float32):
    return Model(descriptor, seed=seed, dtype=dtype)


def build_cnn2d(image_size=64, seed=0, dtype=np.float32):
    return Model(cnn2d_descriptor(image_size), seed, dtype)


def build_cnn1d(n_frames=309, n_mfcc=20, seed=0, dtype=np.float32):
    return Model(cnn1d_descriptor(n_frames, n_mfcc), seed, dtype)


def build_lstm(n_frames=309, n_mfcc=20, peephole=True, seed=0, dtype=np.float32):
    return Model(lstm_descriptor(n_frames, n_mfcc, peephole), seed, dtype)


BUILDERS = {"cnn2d": build_cnn2d, "cnn1d": build_cnn1d, "lstm": build_lstm}


def predict(model, features):
    """Posterior for one segment given its per-channel features ``[C, *input_shape]``.

    Channel posteriors are averaged.
    """
    features = np.asarray(features)
    if features.shape == tuple(model.descriptor.input_shape):
        features = features[None]
    return model.predict_proba(features).mean(axis=0)
