"""Softmax, cross-entropy and entropy helpers."""
import numpy as np

from ..errors import NumericError


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def entropy(p, axis=-1):
    """Natural-log entropy; 0 log 0 is taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=axis)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of a batch of logits against integer labels.

    Returns ``(loss, probabilities, dloss/dlogits)``; for a single sample the
    gradient is ``probabilities - one_hot(label)``.
    """
    logits = np.asarray(logits)
    single = logits.ndim == 1
    if single:
        logits = logits[None]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    n, k = logits.shape
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must be {n} ints in [0, {k})")
    logp = log_softmax(logits)
    probs = np.exp(logp)
    loss = -logp[np.arange(n), labels].mean()
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    if single:
        return float(loss), probs[0], grad[0]
    return float(loss), probs, grad
