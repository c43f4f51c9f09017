"""Solar-panel harvest model and the time-splitting energy constraint.

During the harvesting phase the beams are off and the bias sits at I_H, so the
per-user energy constraint reduces to an upper bound on the time split.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix, channel_matrix
from .scenario import LedParams, PanelParams, Scenario
from .signal import BeamformerSet, InfeasibleScenario


def harvested_energy(beams: BeamformerSet, h_k, panel: PanelParams, eps_sigs=None) -> float:
    h_k = np.asarray(h_k, dtype=float)
    c = panel.eh
    g = (beams.vectors @ h_k) ** 2
    eps = np.ones(g.size) if eps_sigs is None else np.broadcast_to(eps_sigs, g.shape)
    bias_term = c.kappa / panel.detector_area * h_k.sum() * (c.a * beams.dc_bias + c.z) + c.E_a
    return float(c.Pi * np.dot(g, eps) + c.Gamma * bias_term ** 2
                 + c.Gamma * (math.log(c.mu) - 1.0) * bias_term)


def full_harvest(h_k, panel: PanelParams, led: LedParams) -> float:
    """Harvest with all beams off and the bias at I_H."""
    h_k = np.asarray(h_k, dtype=float)
    beams = BeamformerSet(np.zeros((1, h_k.size)), led.current_high)
    return harvested_energy(beams, h_k, panel)


def ts_harvested(theta: float, h_k, panel: PanelParams, led: LedParams) -> float:
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    return (1.0 - theta) * full_harvest(h_k, panel, led)


@dataclass(frozen=True, eq=False)
class HarvestReport:
    full: np.ndarray           # E_k(0, I_H 1)
    harvested: np.ndarray      # (1 - theta) E_k(0, I_H 1)
    theta_caps: np.ndarray     # per-user largest feasible theta

    def ok(self, threshold: float, tol: float = 1e-6) -> bool:
        return bool(np.all(self.harvested >= threshold - tol))


def harvest_report(theta: float, scenario: Scenario, channel: ChannelMatrix | None = None) -> HarvestReport:
    channel = channel or channel_matrix(scenario)
    full = np.array([full_harvest(h, scenario.panel, scenario.led) for h in channel.gains])
    with np.errstate(divide="ignore"):
        caps = np.where(full > 0, 1.0 - scenario.energy_threshold / full, -np.inf)
    return HarvestReport(full, (1.0 - theta) * full, np.clip(caps, 0.0, 1.0))


def theta_cap(scenario: Scenario, channel: ChannelMatrix | None = None) -> float:
    """Largest time split meeting every user's energy threshold."""
    channel = channel or channel_matrix(scenario)
    full = np.array([full_harvest(h, scenario.panel, scenario.led) for h in channel.gains])
    if np.any(full <= 0) and scenario.energy_threshold > 0:
        raise InfeasibleScenario("a user harvests no energy at full bias")
    if scenario.energy_threshold == 0:
        return 1.0
    cap = float(np.min(1.0 - scenario.energy_threshold / full))
    if cap < 0:
        k = int(np.argmin(full))
        raise InfeasibleScenario(
            f"user {k + 1} harvests at most {full[k]:.4g} W < threshold {scenario.energy_threshold:.4g} W"
        )
    return min(cap, 1.0)
