"""Lambertian line-of-sight channel between ceiling LEDs and solar-panel receivers.

Both the LED and the receiver face vertically (LED down, panel up), so the
radiance and incidence angles of a link coincide and are measured from the
vertical.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .scenario import LedParams, PanelParams, Scenario


class GeometryError(ValueError):
    pass


def lambertian_order(semi_angle_deg: float) -> float:
    c = math.cos(math.radians(semi_angle_deg))
    if not 0.0 < semi_angle_deg < 90.0 or c <= 0.0:
        raise ValueError(f"semi-angle must lie in (0, 90) degrees, got {semi_angle_deg}")
    return -math.log(2.0) / math.log(c)


def effective_area(panel: PanelParams) -> float:
    """Effective collection area i_r^2 / sin^2(FOV) * A_s."""
    s = math.sin(math.radians(panel.fov_deg))
    return panel.refractive_index ** 2 / s ** 2 * panel.detector_area


def channel_gain(led_pos, user_pos, led: LedParams, panel: PanelParams) -> float:
    diff = np.asarray(led_pos, dtype=float) - np.asarray(user_pos, dtype=float)
    d = float(np.linalg.norm(diff))
    if d == 0.0:
        raise GeometryError("LED and user positions coincide")
    cos_angle = diff[2] / d
    if cos_angle <= 0.0:
        raise GeometryError("user must lie below the LED")
    # incidence angle against the FOV; a tiny slack keeps exact-boundary users inside
    if math.acos(min(cos_angle, 1.0)) > math.radians(panel.fov_deg) + 1e-12:
        return 0.0
    order = lambertian_order(led.semi_angle_deg)
    scale = (order + 1) * panel.resp_l * panel.resp_c * effective_area(panel) / (2 * math.pi * d ** 2)
    return scale * cos_angle ** order * cos_angle


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    gains: np.ndarray          # (K, N)
    grams: np.ndarray          # (K, N, N), grams[k] = h_k h_k^T

    @property
    def n_users(self) -> int:
        return self.gains.shape[0]

    @property
    def n_leds(self) -> int:
        return self.gains.shape[1]

    @classmethod
    def from_gains(cls, gains) -> "ChannelMatrix":
        h = np.array(gains, dtype=float, copy=True)
        if h.ndim != 2:
            raise ValueError("gains must be a (K, N) array")
        if np.any(h < 0):
            raise ValueError("channel gains must be nonnegative")
        grams = np.einsum("kn,km->knm", h, h)
        h.setflags(write=False)
        grams.setflags(write=False)
        return cls(h, grams)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["user"] + [f"led{n + 1}" for n in range(self.n_leds)])
            for k, row in enumerate(self.gains):
                w.writerow([k + 1] + [repr(float(v)) for v in row])


def channel_matrix(scenario: Scenario) -> ChannelMatrix:
    h = np.array([
        [channel_gain(led, user, scenario.led, scenario.panel) for led in scenario.led_positions]
        for user in scenario.user_positions
    ])
    return ChannelMatrix.from_gains(h)
