"""Transmit-side model: DC bias, amplitude/optical/electrical limits and rate constants."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .scenario import LedParams, Scenario


class InfeasibleScenario(ValueError):
    """The scenario admits no point satisfying its constraints."""


def tau(alpha, gamma, eps_sig):
    """Rate-bound constant exp(1 + 2 (alpha + gamma * eps_sig)); vectorised."""
    return np.exp(1.0 + 2.0 * (np.asarray(alpha) + np.asarray(gamma) * np.asarray(eps_sig)))


def maxent_params(peak: float, variance: float) -> tuple[float, float]:
    """(alpha, gamma) of the maximum-entropy density exp(-1 - alpha - gamma x^2) on [-peak, peak]
    with zero mean and the given variance.

    Needs variance < peak^2. The variance fixes gamma on its own (alpha only
    normalises), so gamma is found by a bracketed root search.
    """
    if not 0 < variance < peak ** 2:
        raise ValueError("variance must lie in (0, peak^2)")

    def weights(g):
        # exp(-g x^2) rescaled to peak at 1; returns (log of the scale, mass, second moment)
        shift = -g * peak ** 2 if g < 0 else 0.0
        w = lambda s: math.exp(-g * s * s - shift)
        opts = dict(points=[0.0], limit=200, epsabs=0.0, epsrel=1e-13)
        m0 = integrate.quad(w, -peak, peak, **opts)[0]
        m2 = integrate.quad(lambda s: s * s * w(s), -peak, peak, **opts)[0]
        return shift, m0, m2

    def gap(g):
        _, m0, m2 = weights(g)
        return m2 / m0 - variance

    lo, hi = -1.0, 1.0
    while gap(lo) < 0:
        lo *= 2.0
    while gap(hi) > 0:
        hi *= 2.0
    g = optimize.brentq(gap, lo, hi, xtol=1e-300, rtol=1e-14, maxiter=500)
    shift, m0, _ = weights(g)
    return math.log(m0) + shift - 1.0, float(g)


def dc_bias(led: LedParams, n_leds: int) -> float:
    """Per-LED DC bias eps_dim * P_o / N fixed by the dimming level."""
    if led.dc_bias_override is not None:
        return float(led.dc_bias_override)
    return led.dimming_level * led.max_optical_power / n_leds


def optical_headroom(led: LedParams, n_leds: int) -> float:
    """Signal swing left per LED between the bias and the current limits."""
    b = dc_bias(led, n_leds)
    room = min(b - led.current_low, led.current_high - b)
    if room < 0:
        raise InfeasibleScenario(
            f"DC bias {b:g} lies outside the current range [{led.current_low:g}, {led.current_high:g}]"
        )
    return room


def stream_params(scenario: Scenario, n_streams: int):
    """Per-stream (peak amplitude, variance, tau) arrays; every stream shares the LED values."""
    led = scenario.led
    amp = np.full(n_streams, led.peak_amplitude)
    eps = np.full(n_streams, led.signal_variance)
    taus = tau(np.full(n_streams, led.dist_alpha), np.full(n_streams, led.dist_gamma), eps)
    return amp, eps, taus


@dataclass(frozen=True, eq=False)
class BeamformerSet:
    """Precoders stacked row-wise: row 0 is the common stream, row k user k's private stream."""

    vectors: np.ndarray        # (K+1, N)
    dc_bias: float = 0.0

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        object.__setattr__(self, "vectors", v)
        if self.dc_bias < 0:
            raise ValueError("dc_bias must be >= 0")

    @property
    def common(self) -> np.ndarray:
        return self.vectors[0]

    @property
    def private(self) -> np.ndarray:
        return self.vectors[1:]

    @property
    def n_streams(self) -> int:
        return self.vectors.shape[0]

    @property
    def n_leds(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def zeros(cls, n_users: int, n_leds: int, dc_bias: float = 0.0) -> "BeamformerSet":
        return cls(np.zeros((n_users + 1, n_leds)), dc_bias)

    def scaled(self, s: float) -> "BeamformerSet":
        return BeamformerSet(self.vectors * s, self.dc_bias)

    def gram_matrices(self) -> np.ndarray:
        return np.einsum("in,im->inm", self.vectors, self.vectors)


@dataclass(frozen=True, eq=False)
class ConstraintReport:
    """Slack of every transmit constraint; a constraint holds when slack >= -tol."""

    amplitude: np.ndarray      # per LED: b - sum_i A_i |p_in|
    optical: np.ndarray        # per LED: headroom - sum_i A_i p_in
    power: float               # P_t - sum_i eps_i ||p_i||^2
    peak_optical: np.ndarray   # per LED: headroom - sum_i A_i |p_in| (worst-case swing)
    range_low: np.ndarray      # per LED: sum_i A_i p_in + b - I_L
    range_high: np.ndarray     # per LED: I_H - b - sum_i A_i p_in
    tol: float = 1e-6

    @property
    def amplitude_ok(self) -> bool:
        return bool(np.all(self.amplitude >= -self.tol))

    @property
    def optical_ok(self) -> bool:
        return bool(np.all(self.optical >= -self.tol))

    @property
    def power_ok(self) -> bool:
        return bool(self.power >= -self.tol)

    @property
    def dynamic_range_ok(self) -> bool:
        return bool(np.all(self.range_low >= -self.tol) and np.all(self.range_high >= -self.tol))

    @property
    def ok(self) -> bool:
        return self.amplitude_ok and self.optical_ok and self.power_ok

    def worst(self) -> float:
        return float(min(self.amplitude.min(), self.optical.min(), self.power))


def check_feasible(beams: BeamformerSet, scenario: Scenario, amplitudes=None,
                   variances=None, tol: float = 1e-6) -> ConstraintReport:
    """Evaluate the amplitude, optical and electrical-power constraints. Never raises on violation."""
    led = scenario.led
    n = scenario.n_leds
    if beams.n_leds != n:
        raise ValueError(f"beamformers have {beams.n_leds} entries, scenario has {n} LEDs")
    amp_d, eps_d, _ = stream_params(scenario, beams.n_streams)
    amp = amp_d if amplitudes is None else np.asarray(amplitudes, dtype=float)
    eps = eps_d if variances is None else np.asarray(variances, dtype=float)
    p = beams.vectors
    b = beams.dc_bias
    bias = dc_bias(led, n)
    room = min(bias - led.current_low, led.current_high - bias)
    signed = amp @ p
    absolute = amp @ np.abs(p)
    return ConstraintReport(
        amplitude=b - absolute,
        optical=room - signed,
        power=float(scenario.transmit_power_budget - np.sum(eps * np.sum(p ** 2, axis=1))),
        peak_optical=room - absolute,
        range_low=signed + bias - led.current_low,
        range_high=led.current_high - bias - signed,
        tol=tol,
    )
