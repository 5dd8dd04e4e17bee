import numpy as np


def softmax(z, axis=-1):
    """Numerically stable softmax (max subtracted before exponentiation)."""
    z = np.asarray(z)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(probs, labels):
    """Mean negative log-likelihood of integer ``labels`` under ``probs``."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(labels)
    picked = probs[np.arange(len(labels)), labels]
    tiny = np.finfo(probs.dtype).tiny
    return float(-np.mean(np.log(np.maximum(picked, tiny))))


def softmax_cross_entropy(logits, labels):
    """Fused loss on logits ``[N, K]``.

    Returns ``(loss, probs, grad)`` where ``grad = (probs - onehot) / N`` is
    the derivative of the mean loss with respect to the logits.
    """
    labels = np.asarray(labels)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = float(-log_p[np.arange(n), labels].mean())
    probs = np.exp(log_p)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1
    return loss, probs, grad / n
