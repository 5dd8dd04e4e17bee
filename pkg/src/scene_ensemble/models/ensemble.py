from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnsembleWeights:
    """Non-negative weights for (2D CNN, 1D CNN, LSTM), normalized to sum 1."""

    w1: float = 0.3
    w2: float = 0.4
    w3: float = 0.3

    def __post_init__(self):
        w = np.array([self.w1, self.w2, self.w3], dtype=np.float64)
        if (w < 0).any() or not np.isfinite(w).all():
            raise ValueError(f"ensemble weights must be finite and non-negative, got {w.tolist()}")
        total = w.sum()
        if total == 0:
            raise ValueError("ensemble weights are all zero")
        for name, v in zip(("w1", "w2", "w3"), w / total):
            object.__setattr__(self, name, float(v))

    @classmethod
    def parse(cls, text):
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected three comma-separated weights, got {text!r}")
        return cls(*parts)

    def as_tuple(self):
        return (self.w1, self.w2, self.w3)


def ensemble_predict(p1, p2, p3, w=EnsembleWeights(), tol=1e-5):
    """Weighted average of three posterior vectors (or ``[N, K]`` batches)."""
    probs = [np.asarray(p, dtype=np.float64) for p in (p1, p2, p3)]
    for i, p in enumerate(probs, start=1):
        if p.shape != probs[0].shape:
            raise ValueError("posterior shapes differ")
        if (p < 0).any() or np.abs(p.sum(axis=-1) - 1).max() > tol:
            raise ValueError(f"input {i} is not a probability vector")
    if not isinstance(w, EnsembleWeights):
        w = EnsembleWeights(*w)
    return w.w1 * probs[0] + w.w2 * probs[1] + w.w3 * probs[2]
