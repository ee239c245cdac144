"""Shared test oracles, independent of the code paths they check."""

from __future__ import annotations

import numpy as np


def numeric_gradient(f, x, h=1e-5):
    """Central finite differences of a scalar function of an ndarray."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def adam_scalar_reference(grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, x0=0.0):
    """Hand-rolled scalar Adam recurrence used as an oracle."""
    x, m, v = float(x0), 0.0, 0.0
    trace = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        x -= lr * m_hat / (np.sqrt(v_hat) + eps)
        trace.append(x)
    return trace


def kl_monte_carlo(mean1, logvar1, mean2, logvar2, n, rng):
    """MC estimate of KL(N1 || N2) for diagonal Gaussians, with its SE."""
    mean1 = np.asarray(mean1, dtype=np.float64)
    logvar1 = np.asarray(logvar1, dtype=np.float64)
    mean2 = np.asarray(mean2, dtype=np.float64)
    logvar2 = np.asarray(logvar2, dtype=np.float64)
    std1 = np.exp(0.5 * logvar1)
    z = mean1 + std1 * rng.standard_normal((n, mean1.size))

    def logpdf(zz, mu, lv):
        return -0.5 * (np.log(2 * np.pi) + lv + (zz - mu) ** 2 * np.exp(-lv)).sum(axis=1)

    diff = logpdf(z, mean1, logvar1) - logpdf(z, mean2, logvar2)
    return diff.mean(), diff.std(ddof=1) / np.sqrt(n)
