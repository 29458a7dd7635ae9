"""Pure-NumPy loss/gradient kernels (fallback backend).

Both backends expose the same two entry points operating on a flat
parameter vector:

    softmax_xent(theta, x, y, sample_w, in_dim, n_classes)
    mlp_tanh_xent(theta, x, y, sample_w, in_dim, hidden, n_classes)

returning ``(loss, grad)`` where ``loss = sum_i sample_w[i] * xent_i`` and
``grad`` is its exact gradient with respect to ``theta``.  Sample weights
encode plain means (1/n each) as well as per-class weighted means.
"""

from __future__ import annotations

import numpy as np


def _xent_rows(logits: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row cross-entropy and softmax probabilities, log-sum-exp stabilized."""
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    denom = e.sum(axis=1)
    rows = np.arange(logits.shape[0])
    losses = np.log(denom) + m[:, 0] - logits[rows, y]
    probs = e / denom[:, None]
    return losses, probs


def softmax_xent(
    theta: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    sample_w: np.ndarray,
    in_dim: int,
    n_classes: int,
) -> tuple[float, np.ndarray]:
    """Weighted cross-entropy and gradient for a linear softmax classifier.

    Parameter layout: row-major weight matrix (in_dim x n_classes), then
    the n_classes bias entries.
    """
    nw = in_dim * n_classes
    w = theta[:nw].reshape(in_dim, n_classes)
    b = theta[nw:]
    logits = x @ w + b
    losses, g = _xent_rows(logits, y)
    loss = float(sample_w @ losses)
    g[np.arange(x.shape[0]), y] -= 1.0
    g *= sample_w[:, None]
    grad = np.empty_like(theta)
    grad[:nw] = (x.T @ g).ravel()
    grad[nw:] = g.sum(axis=0)
    return loss, grad


def mlp_tanh_xent(
    theta: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    sample_w: np.ndarray,
    in_dim: int,
    hidden: int,
    n_classes: int,
) -> tuple[float, np.ndarray]:
    """Weighted cross-entropy and gradient for a one-hidden-layer tanh MLP.

    Parameter layout: W1 (in_dim x hidden), b1, W2 (hidden x n_classes), b2,
    each row-major.
    """
    o1 = in_dim * hidden
    o2 = o1 + hidden
    o3 = o2 + hidden * n_classes
    w1 = theta[:o1].reshape(in_dim, hidden)
    b1 = theta[o1:o2]
    w2 = theta[o2:o3].reshape(hidden, n_classes)
    b2 = theta[o3:]

    h = np.tanh(x @ w1 + b1)
    logits = h @ w2 + b2
    losses, dz = _xent_rows(logits, y)
    loss = float(sample_w @ losses)

    dz[np.arange(x.shape[0]), y] -= 1.0
    dz *= sample_w[:, None]
    dh = dz @ w2.T
    da = dh * (1.0 - h * h)

    grad = np.empty_like(theta)
    grad[:o1] = (x.T @ da).ravel()
    grad[o1:o2] = da.sum(axis=0)
    grad[o2:o3] = (h.T @ dz).ravel()
    grad[o3:] = dz.sum(axis=0)
    return loss, grad
