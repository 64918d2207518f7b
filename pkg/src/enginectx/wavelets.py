"""Orthonormal Daubechies wavelets and a periodized multilevel DWT."""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np


@lru_cache(maxsize=None)
def daubechies_lowpass(order: int) -> np.ndarray:
    """Decomposition low-pass filter of the Daubechies wavelet with `order`
    vanishing moments (2 * order taps), normalized so sum(h) = sqrt(2).

    Built by spectral factorization, keeping the minimum-phase roots.
    """
    if order < 1:
        raise ValueError("wavelet order must be >= 1")
    if order == 1:
        h = np.array([1.0, 1.0]) / np.sqrt(2.0)
        h.setflags(write=False)
        return h
    p = order
    # P(y) = sum_k C(p-1+k, k) y^k with y = (2 - z - 1/z) / 4; the product
    # z^(p-1) P(y(z)) is an ordinary polynomial in z of degree 2(p-1).
    y_poly = np.array([-0.25, 0.5, -0.25])  # coefficients in z of z*y(z)
    acc = np.zeros(2 * p - 1)
    for k in range(p):
        term = np.array([1.0])
        for _ in range(k):
            term = np.convolve(term, y_poly)
        # shift by z^(p-1-k) to align degrees
        padded = np.zeros(2 * p - 1)
        padded[p - 1 - k:p - 1 - k + term.size] = term
        acc += comb(p - 1 + k, k) * padded
    poly = acc
    roots = np.roots(poly[::-1])
    inside = roots[np.abs(roots) < 1.0]
    q = np.real(np.poly(inside))
    h = np.array([1.0])
    for _ in range(p):
        h = np.convolve(h, [0.5, 0.5])
    h = np.convolve(h, q)
    h = h * (np.sqrt(2.0) / h.sum())
    h.setflags(write=False)
    return h


def quadrature_mirror(h: np.ndarray) -> np.ndarray:
    """High-pass partner g[n] = (-1)^n h[L-1-n]."""
    g = h[::-1].copy()
    g[1::2] *= -1.0
    return g


def _analysis_step(x: np.ndarray, h: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.size
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(h.size)[None, :]) % n
    taps = x[idx]
    return taps @ h, taps @ g


def dwt(x: np.ndarray, order: int = 4, levels: int = 6) -> tuple[np.ndarray, list[np.ndarray]]:
    """Periodized multilevel DWT.

    The input is zero-padded to a multiple of 2**levels, which keeps the
    transform orthonormal. Returns (approximation, [detail_1, ..., detail_L])
    where detail_1 is the finest band.
    """
    x = np.asarray(x, dtype=np.float64)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    block = 1 << levels
    if x.size < block:
        raise ValueError(f"need at least {block} samples for {levels} levels")
    pad = (-x.size) % block
    if pad:
        x = np.concatenate([x, np.zeros(pad)])
    h = daubechies_lowpass(order)
    g = quadrature_mirror(h)
    details = []
    a = x
    for _ in range(levels):
        a, d = _analysis_step(a, h, g)
        details.append(d)
    return a, details


def band_energies(x: np.ndarray, order: int = 4, levels: int = 6) -> np.ndarray:
    """Energies [detail_1, ..., detail_L, approximation_L]."""
    a, details = dwt(x, order, levels)
    return np.array([float(d @ d) for d in details] + [float(a @ a)])
