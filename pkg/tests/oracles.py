"""Independent reference implementations used to check the package.

Each oracle takes a deliberately different route from the code under test:
direct summation instead of FFTs, explicit loops instead of gathers,
exhaustive enumeration instead of sorting shortcuts.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

# published db4 (8-tap) reconstruction low-pass, equal to our analysis filter
DB4_LOWPASS = np.array([
    0.23037781330885523, 0.7148465705525415, 0.6308807679295904, -0.02798376941698385,
    -0.18703481171888114, 0.030841381835986965, 0.032883011666982945, -0.010597401784997278,
])
DB2_LOWPASS = np.array([0.48296291314453416, 0.8365163037378079, 0.2241438680420134,
                        -0.12940952255126037])


def naive_dft_magnitudes(signals: np.ndarray, chunk: int = 512) -> np.ndarray:
    """|X_k| for k = 0..N/2 of each row by direct summation.

    Twiddle angles use the exact integer residue (k * n) mod N so no
    precision is lost to large phase arguments.
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=np.float64))
    n = signals.shape[1]
    ns = np.arange(n, dtype=np.int64)
    out = np.empty((signals.shape[0], n // 2 + 1))
    for lo in range(0, n // 2 + 1, chunk):
        ks = np.arange(lo, min(lo + chunk, n // 2 + 1), dtype=np.int64)
        angle = 2.0 * np.pi * ((ks[:, None] * ns[None, :]) % n) / n
        re = np.cos(angle) @ signals.T
        im = np.sin(angle) @ signals.T
        out[:, ks] = np.hypot(re, im).T
    return out


def hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def spectrum_summary(mag: np.ndarray, rate: float, n: int) -> np.ndarray:
    """mean, std, skew, excess kurtosis, centroid, 85% rolloff, flatness."""
    power = mag ** 2
    freqs = np.arange(mag.size) * rate / n
    mu = mag.mean()
    sd = mag.std()
    z = (mag - mu) / sd
    skew = np.mean(z ** 3)
    kurt = np.mean(z ** 4) - 3.0
    centroid = np.sum(freqs * mag) / np.sum(mag)
    cum = np.cumsum(power)
    rolloff = freqs[np.argmax(cum >= 0.85 * cum[-1])]
    p = np.maximum(power, 1e-12 * power.max())
    flat = np.exp(np.mean(np.log(p))) / np.mean(p)
    return np.array([mu, sd, skew, kurt, centroid, rolloff, flat])


def loop_dwt(x: np.ndarray, h: np.ndarray, levels: int) -> list[np.ndarray]:
    """Periodized DWT by explicit loops; returns [d1, ..., dL, aL]."""
    g = np.array([(-1) ** k * h[h.size - 1 - k] for k in range(h.size)])
    a = list(map(float, x))
    pad = (-len(a)) % (1 << levels)
    a += [0.0] * pad
    bands = []
    for _ in range(levels):
        n = len(a)
        lo, hi = [], []
        for k in range(n // 2):
            s_lo = s_hi = 0.0
            for m in range(h.size):
                v = a[(2 * k + m) % n]
                s_lo += h[m] * v
                s_hi += g[m] * v
            lo.append(s_lo)
            hi.append(s_hi)
        bands.append(np.array(hi))
        a = lo
    bands.append(np.array(a))
    return bands


def mann_whitney_auc(scores, positive) -> float:
    """AUC as the probability a positive outranks a negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    pos, neg = scores[positive], scores[~positive]
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((greater + 0.5 * ties) / (pos.size * neg.size))


def brute_force_match(query: dict, refs: list[tuple[str, dict, int]], weights: dict):
    """Exhaustive nearest reference with exact rational distances.

    query: name -> -1/0/1; refs: (model_id, context, n_train).
    Returns (model_id, distance, margin) with ties to larger n_train then id.
    """
    live = [n for n, v in query.items() if v != -1 and weights.get(n, 0.0) > 0]
    if not live:
        return None
    scored = []
    for mid, ctx, n_train in refs:
        d = sum((Fraction(weights[n]) for n in live if ctx[n] != query[n]), Fraction(0))
        scored.append((d, mid, n_train))
    best = None
    for cand in scored:
        if best is None:
            best = cand
            continue
        d, mid, n = cand
        bd, bmid, bn = best
        if d < bd or (d == bd and (n > bn or (n == bn and mid < bmid))):
            best = cand
    ordered = sorted(d for d, _, _ in scored)
    margin = float(ordered[1] - ordered[0]) if len(ordered) > 1 else float("inf")
    return best[1], float(best[0]), margin


def brute_force_select(query: tuple, kind: str, min_n: int, records: list[dict]):
    """Filter-then-sort model selection over plain tuples.

    records: dicts with id, attrs (tuple, None = wildcard), kind, n.
    """
    def covers(attrs):
        return all(a is None or a == q for a, q in zip(attrs, query))

    def spec(attrs):
        return sum(a is not None for a in attrs)

    ok = [r for r in records if r["kind"] == kind and r["n"] >= min_n and covers(r["attrs"])]
    if ok:
        top = max(spec(r["attrs"]) for r in ok)
        ok = [r for r in ok if spec(r["attrs"]) == top]
        most = max(r["n"] for r in ok)
        ok = [r for r in ok if r["n"] == most]
        return min(r["id"] for r in ok)
    roots = [r for r in records if r["kind"] == kind and spec(r["attrs"]) == 0]
    if roots:
        most = max(r["n"] for r in roots)
        return min(r["id"] for r in roots if r["n"] == most)
    return None

