"""Truncated Taylor series ("jets") evaluated pointwise over numpy arrays.

A jet of order K at points ``y`` is an array ``J`` of shape ``(K+1, *y.shape)``
holding normalized coefficients ``J[k] = f^(k)(y) / k!``.  The recurrences
below are the standard ones for products, powers and exponentials; they give
high-order derivatives to working precision, which finite differences and
spectral differentiation cannot do at orders ~20.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = ["jet_mul", "jet_exp", "jet_pow", "derivatives_from_jet", "gevrey_bump_jet"]


def jet_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for k in range(out.shape[0]):
        for j in range(k + 1):
            out[k] += a[j] * b[k - j]
    return out


def jet_exp(f: np.ndarray) -> np.ndarray:
    e = np.zeros_like(f)
    e[0] = np.exp(f[0])
    for k in range(1, f.shape[0]):
        acc = np.zeros_like(f[0])
        for j in range(1, k + 1):
            acc += j * f[j] * e[k - j]
        e[k] = acc / k
    return e


def jet_pow(f: np.ndarray, a: float) -> np.ndarray:
    """Jet of ``f**a``; requires ``f[0] > 0``."""
    g = np.zeros_like(f)
    g[0] = f[0] ** a
    for k in range(1, f.shape[0]):
        acc = np.zeros_like(f[0])
        for j in range(1, k + 1):
            acc += (a * j - (k - j)) * f[j] * g[k - j]
        g[k] = acc / (k * f[0])
    return g


def derivatives_from_jet(jet: np.ndarray) -> np.ndarray:
    fact = np.array([math.factorial(k) for k in range(jet.shape[0])], dtype=float)
    return jet * fact.reshape((-1,) + (1,) * (jet.ndim - 1))


# beyond this exponent exp(-P) is below ~1e-304 and is treated as zero
_EXP_CUTOFF = 700.0


def gevrey_bump_jet(y: np.ndarray, exponent: float, order: int) -> np.ndarray:
    """Jet of ``g(y) = exp(-(1 - y**2)**(-exponent))`` (zero for |y| >= 1).

    ``exponent = 1/(theta_h - 1)`` makes ``g`` a Gevrey-``theta_h`` bump.
    """
    y = np.asarray(y, dtype=float)
    out = np.zeros((order + 1,) + y.shape)
    inside = np.abs(y) < 1.0
    if not np.any(inside):
        return out
    yi = y[inside]
    base = np.zeros((order + 1, yi.size))
    base[0] = 1.0 - yi * yi
    if order >= 1:
        base[1] = -2.0 * yi
    if order >= 2:
        base[2] = -1.0
    with np.errstate(over="ignore"):
        p0 = base[0] ** (-exponent)
    keep = p0 < _EXP_CUTOFF
    if not np.any(keep):
        return out
    power = jet_pow(base[:, keep], -exponent)
    vals = np.zeros((order + 1, yi.size))
    vals[:, keep] = jet_exp(-power)
    out[:, inside] = vals
    return out
