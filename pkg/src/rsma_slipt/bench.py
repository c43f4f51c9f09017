"""Parameter sweeps, CSV output and a brute-force oracle for small instances."""
from __future__ import annotations

import csv
import io
import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .channel import channel_matrix
from .energy import theta_cap, ts_harvested
from .rates import waterfill_shares, decoding_rate_lb, stream_rates
from .scenario import Scenario, ScenarioError, default_scenario, sample_users
from .schemes import Scheme, as_config, noma_decoding_sets
from .signal import BeamformerSet, InfeasibleScenario, check_feasible, dc_bias, optical_headroom, stream_params
from .solver import SolverOptions, solve_mmf

AXES = ("E_th", "SNR", "P_o")
SCHEMES = (Scheme.RSMA, Scheme.SDMA, Scheme.NOMA)
CSV_COLUMNS = ("axis_value", "scheme", "mmf_rate", "theta", "iters", "penalty_residual", "status", "wall_ms")

# transmit SNR is P_t relative to this reference power (W)
SNR_REFERENCE_POWER = 1.0

DEFAULT_GRIDS = {
    # thresholds in W; the default harvester saturates around 31 mW per user
    "E_th": tuple(round(0.010 + 0.002 * i, 3) for i in range(10)),
    "SNR": tuple(float(v) for v in range(-5, 26, 5)),
    "P_o": tuple(75.0 + 12.5 * i for i in range(9)),
}


def snr_to_power(snr_db: float, reference: float = SNR_REFERENCE_POWER) -> float:
    return reference * 10.0 ** (snr_db / 10.0)


def apply_axis(scenario: Scenario, axis: str, value: float) -> Scenario:
    """Copy of `scenario` with the swept parameter set to `value`."""
    if axis == "E_th":
        return scenario.replace(energy_threshold=float(value))
    if axis == "SNR":
        return scenario.replace(transmit_power_budget=snr_to_power(value))
    if axis == "P_o":
        led = scenario.led.__class__(**{**scenario.led.__dict__, "max_optical_power": float(value)})
        return scenario.replace(led=led)
    raise ValueError(f"axis must be one of {AXES}, got {axis!r}")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    grid: tuple[float, ...] = ()
    schemes: tuple[Scheme, ...] = SCHEMES
    scenario: Scenario = field(default_factory=default_scenario)
    seeds: tuple[int, ...] = (0,)
    options: SolverOptions = field(default_factory=SolverOptions)
    workers: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        grid = tuple(float(v) for v in (self.grid or DEFAULT_GRIDS[self.axis]))
        if not grid:
            raise ValueError("grid must not be empty")
        if list(grid) != sorted(grid):
            raise ValueError("grid must be sorted ascending")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "schemes", tuple(Scheme(getattr(s, "value", s)) for s in self.schemes))
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True, eq=False)
class PointResult:
    axis_value: float
    scheme: Scheme
    seed: int
    mmf_rate: float
    user_rates: tuple[float, ...]
    user_energy: tuple[float, ...]
    theta: float
    iters: int
    penalty_residual: float
    status: str           # solver status, or "infeasible"
    wall_ms: float
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "converged"


@dataclass(frozen=True, eq=False)
class SweepResult:
    spec: SweepSpec
    points: tuple[PointResult, ...]

    def series(self, scheme) -> np.ndarray:
        """MMF rate along the grid for one scheme (mean over seeds; NaN where infeasible)."""
        scheme = Scheme(getattr(scheme, "value", scheme))
        out = []
        for v in self.spec.grid:
            vals = [p.mmf_rate for p in self.points if p.scheme is scheme and p.axis_value == v]
            out.append(float(np.mean(vals)) if vals else math.nan)
        return np.array(out)

    @property
    def failures(self) -> list[PointResult]:
        return [p for p in self.points if not p.ok]


def _run_point(args) -> PointResult:
    axis, value, scheme, seed, scenario, opts = args
    t0 = time.perf_counter()
    try:
        sc = apply_axis(scenario, axis, value)
        ch = channel_matrix(sc)
        theta_cap(sc, ch)
        sol = solve_mmf(sc, scheme, SolverOptions(**{**opts.__dict__, "seed": seed}), channel=ch)
    except (InfeasibleScenario, ScenarioError) as exc:
        return PointResult(value, scheme, seed, math.nan, (), (), math.nan, 0, math.nan, "infeasible",
                           1e3 * (time.perf_counter() - t0), str(exc))
    rates = tuple(float(r) for r in sol.allocation.totals) if sol.allocation is not None else ()
    energy = tuple(float(e) for e in sol.validation.harvest.harvested) if sol.validation is not None else ()
    return PointResult(value, scheme, seed, sol.mmf_value, rates, energy, sol.theta, sol.iterations,
                       sol.penalty_residual, sol.status, 1e3 * (time.perf_counter() - t0), sol.message)


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Solve every (grid point, scheme, seed); results keep grid order whatever the completion order."""
    jobs = [(spec.axis, v, s, seed, spec.scenario, spec.options)
            for v in spec.grid for s in spec.schemes for seed in spec.seeds]
    if spec.workers == 1 or len(jobs) == 1:
        points = [_run_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(spec.workers, len(jobs))) as pool:
            points = list(pool.map(_run_point, jobs))
    return SweepResult(spec, tuple(points))


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))


def random_instance(n_users: int, seed: int, n_leds: int | None = None,
                    base: Scenario | None = None, energy_threshold: float | None = None,
                    max_draws: int = 100) -> Scenario:
    """Seeded scenario with uniformly placed users that can meet its energy threshold.

    With `n_leds` the first LEDs of the layout are kept and the optical power
    is scaled so every LED keeps the default bias. Draws that leave a user
    short of harvested energy are skipped deterministically.
    """
    base = base or default_scenario()
    if energy_threshold is not None:
        base = base.replace(energy_threshold=float(energy_threshold))
    if n_leds is not None:
        if not 1 <= n_leds <= base.n_leds:
            raise ValueError(f"n_leds must lie in [1, {base.n_leds}]")
        led = base.led.__class__(**{**base.led.__dict__,
                                    "max_optical_power": base.led.max_optical_power * n_leds / base.n_leds})
        base = base.replace(led_positions=base.led_positions[:n_leds], led=led)
    rng = np.random.default_rng(seed)
    for _ in range(max_draws):
        sc = sample_users(base, n_users, int(rng.integers(2 ** 31)))
        try:
            theta_cap(sc)
        except InfeasibleScenario:
            continue
        return sc
    raise InfeasibleScenario(f"no energy-feasible placement of {n_users} users in {max_draws} draws")


# ----------------------------------------------------------------------- CSV

def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def emit_csv(result: SweepResult | None, path=None) -> str:
    """Write one row per (point, scheme[, seed]); returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for p in (result.points if result is not None else ()):
        w.writerow([_fmt(p.axis_value), p.scheme.value, _fmt(p.mmf_rate), _fmt(p.theta), p.iters,
                    _fmt(p.penalty_residual), p.status, f"{p.wall_ms:.1f}"])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


# -------------------------------------------------------------------- oracle

def _oracle_directions(channel, scheme: Scheme) -> np.ndarray:
    K, N = channel.n_users, channel.n_leds
    V = np.zeros((K + 1, N))
    for k, h in enumerate(channel.gains):
        nrm = np.linalg.norm(h)
        V[k + 1] = h / nrm if nrm > 0 else 0.0
    if scheme is Scheme.RSMA:
        w, U = np.linalg.eigh(channel.grams.sum(axis=0))
        u = U[:, -1]
        V[0] = u if u.sum() >= 0 else -u
    return V


def _mmf_at(beams, scenario, channel, cfg, theta) -> float:
    gains = channel.gains
    K = gains.shape[0]
    _, eps, taus = stream_params(scenario, K + 1)
    sigma2 = scenario.noise_power
    if cfg.kind is Scheme.NOMA:
        per_user = np.full(K, np.inf)
        for decoder, owner, remaining in noma_decoding_sets(cfg.order_for(channel)):
            signal = [u + 1 for u in remaining]
            r = decoding_rate_lb(gains[decoder], beams, taus, sigma2, signal,
                                 [u for u in signal if u != owner + 1], eps)
            per_user[owner] = min(per_user[owner], r)
        return float(theta * np.maximum(per_user, 0.0).min())
    rc, rp = stream_rates(gains, beams, taus, sigma2, eps)
    rp = np.maximum(theta * rp, 0.0)
    if cfg.kind is Scheme.SDMA:
        return float(rp.min())
    return float(np.min(rp + waterfill_shares(rp, max(theta * rc.min(), 0.0))))


def oracle_grid(scenario: Scenario, scheme=Scheme.RSMA, resolution: int = 11,
                theta_min: float = 1e-6) -> float:
    """Brute-force lower bound on the MMF optimum.

    Beam directions are fixed (matched filters for the private streams, the
    dominant eigenvector of sum_k H_k for the common one); every combination
    of per-stream power scales on a uniform grid and every time split on a
    uniform grid of [theta_min, theta_cap] is checked against the exact
    transmit and harvesting constraints, and the common rate is split by
    water-filling. Grids with resolution r are contained in those with
    resolution 2r - 1.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    cfg = as_config(scheme)
    channel = channel_matrix(scenario)
    try:
        cap = theta_cap(scenario, channel)
    except InfeasibleScenario:
        return math.nan
    if cap < theta_min:
        return math.nan
    K = channel.n_users
    V = _oracle_directions(channel, cfg.kind)
    active = [i for i in range(K + 1) if np.any(V[i])]
    b = dc_bias(scenario.led, scenario.n_leds)
    amps, eps, _ = stream_params(scenario, K + 1)
    room = optical_headroom(scenario.led, scenario.n_leds)
    # largest scale any single stream can take on its own
    top = {}
    for i in active:
        lim = [min(b, room) / (amps[i] * np.abs(V[i]).max()),
               math.sqrt(scenario.transmit_power_budget / (eps[i] * V[i] @ V[i]))]
        top[i] = min(lim)
    thetas = np.linspace(theta_min, cap, resolution)
    # harvesting happens with the beams off, so it only limits theta
    full = [ts_harvested(t, h, scenario.panel, scenario.led) for t in thetas for h in channel.gains]
    ok_theta = [t for j, t in enumerate(thetas)
                if min(full[j * K:(j + 1) * K]) >= scenario.energy_threshold - 1e-12]
    if not ok_theta:
        return math.nan
    theta = max(ok_theta)            # every rate scales linearly with theta
    best = 0.0
    for scales in itertools.product(np.linspace(0.0, 1.0, resolution), repeat=len(active)):
        W = np.zeros_like(V)
        for i, s in zip(active, scales):
            W[i] = s * top[i] * V[i]
        beams = BeamformerSet(W, b)
        if not check_feasible(beams, scenario, tol=0.0).ok:
            continue
        best = max(best, _mmf_at(beams, scenario, channel, cfg, theta))
    return best


def single_user_rate(scenario: Scenario) -> float:
    """Exact optimum for one user: max h^T p over the per-LED box and the power ball, theta at its cap."""
    channel = channel_matrix(scenario)
    if channel.n_users != 1:
        raise ValueError("single_user_rate needs exactly one user")
    h = channel.gains[0]
    led = scenario.led
    amps, eps, taus = stream_params(scenario, 2)
    upper = min(optical_headroom(led, scenario.n_leds), dc_bias(led, scenario.n_leds)) / amps[1]
    radius2 = scenario.transmit_power_budget / eps[1]
    box = np.where(h > 0, upper, 0.0)
    if box @ box <= radius2:
        p = box
    else:
        # KKT: p = min(lam * h, upper); the power constraint fixes lam
        lo, hi = 0.0, 1.0
        while np.sum(np.minimum(hi * h, box) ** 2) < radius2:
            hi *= 2.0
        lam = brentq(lambda x: np.sum(np.minimum(x * h, box) ** 2) - radius2, lo, hi, xtol=1e-300, rtol=1e-15)
        p = np.minimum(lam * h, box)
    g = float(h @ p) ** 2
    s = 2.0 * math.pi * scenario.noise_power
    return theta_cap(scenario, channel) * 0.5 * math.log2((s + taus[1] * g) / s)


__all__ = ["AXES", "CSV_COLUMNS", "DEFAULT_GRIDS", "PointResult", "SweepResult", "SweepSpec", "apply_axis",
           "default_workers", "emit_csv", "oracle_grid", "random_instance", "run_sweep", "single_user_rate", "snr_to_power"]
