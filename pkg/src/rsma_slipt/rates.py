"""Closed-form achievable-rate lower bounds for the common and private streams.

Rates are in bits/s/Hz. The raw bounds may be negative; only the reported
allocation clamps them at zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal import BeamformerSet

TWO_PI = 2.0 * math.pi


def _received(h_k, beams: BeamformerSet) -> np.ndarray:
    """|h_k^T p_i|^2 for every stream i."""
    return (beams.vectors @ np.asarray(h_k, dtype=float)) ** 2


def _eps(eps, n):
    return np.ones(n) if eps is None else np.broadcast_to(np.asarray(eps, dtype=float), (n,))


def common_rate_lb(h_k, beams: BeamformerSet, taus, sigma2: float, eps=None) -> float:
    g = _received(h_k, beams)
    taus = np.broadcast_to(np.asarray(taus, dtype=float), g.shape)
    eps = _eps(eps, g.size)
    num = TWO_PI * sigma2 + np.dot(g, taus)
    den = TWO_PI * sigma2 + TWO_PI * np.dot(g[1:], eps[1:])
    return 0.5 * math.log2(num / den)


def private_rate_lb(h_k, beams: BeamformerSet, taus, sigma2: float, k: int, eps=None) -> float:
    """Private-stream bound of user `k` (1-based stream index, as in the stacked beamformers)."""
    g = _received(h_k, beams)
    taus = np.broadcast_to(np.asarray(taus, dtype=float), g.shape)
    eps = _eps(eps, g.size)
    others = np.ones(g.size, dtype=bool)
    others[[0, k]] = False
    num = TWO_PI * sigma2 + np.dot(g[1:], taus[1:])
    den = TWO_PI * sigma2 + TWO_PI * np.dot(g[others], eps[others])
    return 0.5 * math.log2(num / den)


def decoding_rate_lb(h_k, beams: BeamformerSet, taus, sigma2: float, signal, interference,
                     eps=None) -> float:
    """Bound for decoding one stream while the `signal` streams are still superimposed.

    `interference` is `signal` minus the stream being decoded. Both bounds
    above are special cases.
    """
    g = _received(h_k, beams)
    taus = np.broadcast_to(np.asarray(taus, dtype=float), g.shape)
    eps = _eps(eps, g.size)
    signal, interference = list(signal), list(interference)
    num = TWO_PI * sigma2 + np.dot(g[signal], taus[signal])
    den = TWO_PI * sigma2 + TWO_PI * np.dot(g[interference], eps[interference])
    return 0.5 * math.log2(num / den)


def stream_rates(gains, beams: BeamformerSet, taus, sigma2, eps=None):
    """(common, private) raw bounds for every user as two length-K arrays."""
    gains = np.atleast_2d(gains)
    sig = np.broadcast_to(np.asarray(sigma2, dtype=float), (gains.shape[0],))
    rc = np.array([common_rate_lb(h, beams, taus, s, eps) for h, s in zip(gains, sig)])
    rp = np.array([private_rate_lb(h, beams, taus, s, k + 1, eps)
                   for k, (h, s) in enumerate(zip(gains, sig))])
    return rc, rp


def ts_scale(rate, theta: float):
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    return theta * rate


@dataclass(frozen=True, eq=False)
class RateAllocation:
    theta: float
    common_shares: np.ndarray   # c_k
    private_rates: np.ndarray   # theta * R_kp, clamped at 0
    common_rates: np.ndarray    # theta * R_kc, clamped at 0

    @property
    def totals(self) -> np.ndarray:
        return self.common_shares + self.private_rates

    def common_ok(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.common_shares >= -tol)
                    and self.common_shares.sum() <= self.common_rates.min() + tol)


def allocate(gains, beams: BeamformerSet, taus, sigma2, theta: float, shares=None,
             eps=None) -> RateAllocation:
    """Rate allocation for fixed beamformers and time split.

    Given `shares` are shrunk proportionally if they overdraw the common rate.
    Without `shares` the common rate is split to maximise the minimum total
    rate (water-filling on the private rates).
    """
    rc, rp = stream_rates(gains, beams, taus, sigma2, eps)
    rc_ts = np.maximum(ts_scale(rc, theta), 0.0)
    rp_ts = np.maximum(ts_scale(rp, theta), 0.0)
    budget = float(rc_ts.min())
    if shares is None:
        c = waterfill_shares(rp_ts, budget)
    else:
        c = np.maximum(np.asarray(shares, dtype=float), 0.0)
        if c.sum() > budget:
            c = c * (budget / c.sum()) if c.sum() > 0 else c
    return RateAllocation(theta, c, rp_ts, rc_ts)


def waterfill_shares(private, budget: float) -> np.ndarray:
    """Split `budget` so that min_k (c_k + private_k) is maximal."""
    r = np.asarray(private, dtype=float)
    if budget <= 0:
        return np.zeros_like(r)
    srt = np.sort(r)
    level = srt[0] + budget
    for j in range(1, r.size + 1):
        level = (budget + srt[:j].sum()) / j
        if j == r.size or level <= srt[j]:
            break
    return np.maximum(level - r, 0.0)


def mmf_rate(alloc: RateAllocation) -> float:
    return float(np.min(alloc.totals))
