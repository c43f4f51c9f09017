"""Penalised CCCP for max-min-fair beamforming with time-splitting harvesting.

Each outer iteration builds the convex subproblem around the previous iterate,
solves it, and moves the linearisation point (blocks, principal eigenvectors,
time split and rate slacks) to the new optimum. Iteration stops once the
penalised objective changes by less than ``convergence_tol``; if the blocks
are not yet rank one the penalty is strengthened and the loop continues.
Beamformers are recovered from the principal eigen-pairs.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix, channel_matrix
from .conic import CvxpyBackend
from .energy import HarvestReport, harvest_report, theta_cap
from .rates import RateAllocation, allocate, decoding_rate_lb, stream_rates, waterfill_shares
from .scenario import Scenario
from .schemes import Scheme, SchemeConfig, as_config, noma_decoding_sets, noma_slack
from .signal import (BeamformerSet, ConstraintReport, InfeasibleScenario, check_feasible, dc_bias,
                     optical_headroom, stream_params)
from .subproblem import OPTICAL_FORMS as OPTICAL_CHOICES
from .subproblem import (LinearizationPoint, build_subproblem, penalty_residual,
                         principal_eigvecs)

log = logging.getLogger(__name__)


class RankRecoveryError(RuntimeError):
    def __init__(self, stream: int, ratio: float):
        super().__init__(f"stream {stream} is not rank one (relative residual {ratio:.3g})")
        self.stream = stream
        self.ratio = ratio


@dataclass(frozen=True)
class SolverOptions:
    convergence_tol: float = 1e-4
    penalty_rho: float = -0.1
    penalty_growth: float = 5.0
    penalty_scale: str = "objective"  # objective: rho is per unit of starting objective per unit trace
    max_growth_rounds: int = 4
    max_iters: int = 300
    theta_min: float = 1e-6
    rank_tol: float = 1e-4
    seed: int = 0
    common_off_mode: bool = True     # RSMA also tries P_0 = 0 and keeps the better run
    optical_form: str = "l1"
    init_directions: str = "auto"    # zf | mrt | auto (mrt for NOMA, zf otherwise)
    solver: str = "CLARABEL"

    def __post_init__(self):
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be > 0")
        if self.penalty_rho >= 0:
            raise ValueError("penalty_rho must be < 0")
        if self.penalty_scale not in ("objective", "absolute"):
            raise ValueError("penalty_scale must be 'objective' or 'absolute'")
        if self.penalty_growth < 1:
            raise ValueError("penalty_growth must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.optical_form not in OPTICAL_CHOICES:
            raise ValueError(f"optical_form must be one of {OPTICAL_CHOICES}")
        if self.init_directions not in ("zf", "mrt", "auto"):
            raise ValueError("init_directions must be 'zf', 'mrt' or 'auto'")


@dataclass(frozen=True)
class IterRecord:
    m: int
    t: float
    merit: float              # t + penalty, the subproblem optimum
    penalty_residual: float
    theta: float
    rho: float

    def line(self) -> str:
        return (f"m={self.m:3d} t={self.t:.6f} merit={self.merit:.6f} "
                f"residual={self.penalty_residual:.3e} theta={self.theta:.6f} rho={self.rho:g}")


@dataclass(frozen=True, eq=False)
class Validation:
    constraints: ConstraintReport
    harvest: HarvestReport
    energy_ok: bool
    common_ok: bool
    theta_ok: bool

    @property
    def ok(self) -> bool:
        return self.constraints.ok and self.energy_ok and self.common_ok and self.theta_ok


@dataclass(frozen=True, eq=False)
class Solution:
    scheme: Scheme
    status: str               # converged | max_iters | backend_error | rank_failure
    beamformers: BeamformerSet | None
    allocation: RateAllocation | None
    mmf_value: float
    trace: tuple[IterRecord, ...]
    penalty_residual: float
    blocks: np.ndarray | None
    validation: Validation | None
    message: str = ""
    common_stream: bool = True    # False when RSMA settled on its no-common-stream mode

    def raise_for_status(self) -> "Solution":
        if self.status != "converged":
            raise RuntimeError(f"{self.scheme.value} solve ended with status {self.status}: {self.message}")
        return self

    @property
    def iterations(self) -> int:
        return max(len(self.trace) - 1, 0)

    @property
    def theta(self) -> float:
        return self.allocation.theta if self.allocation is not None else math.nan

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def trace_lines(self) -> list[str]:
        return [r.line() for r in self.trace]


# ------------------------------------------------------------------ helpers

def exact_slacks(gains, beams: BeamformerSet, scenario: Scenario, cfg: SchemeConfig) -> dict:
    """Raw rate bounds at `beams`, keyed by the subproblem's slack names."""
    K = gains.shape[0]
    _, eps, taus = stream_params(scenario, K + 1)
    sigma2 = scenario.noise_power
    if cfg.kind is Scheme.NOMA:
        out = {}
        for decoder, owner, remaining in noma_decoding_sets(cfg.order_for(ChannelMatrix.from_gains(gains))):
            signal = [u + 1 for u in remaining]
            interf = [u + 1 for u in remaining if u != owner]
            out[noma_slack(decoder, owner)] = decoding_rate_lb(gains[decoder], beams, taus, sigma2,
                                                               signal, interf, eps)
        return out
    rc, rp = stream_rates(gains, beams, taus, sigma2, eps)
    out = {f"vp{k + 1}": float(rp[k]) for k in range(K)}
    if cfg.kind is Scheme.RSMA:
        out.update({f"vc{k + 1}": float(rc[k]) for k in range(K)})
    return out


def point_objective(slacks: dict, theta: float, cfg: SchemeConfig, K: int) -> float:
    """Best max-min value attainable with the given rate slacks and time split."""
    if cfg.kind is Scheme.NOMA:
        return theta * min(slacks.values())
    vp = np.array([slacks[f"vp{k + 1}"] for k in range(K)])
    if cfg.kind is Scheme.SDMA:
        return float(theta * vp.min())
    vc = np.array([slacks[f"vc{k + 1}"] for k in range(K)])
    c = waterfill_shares(theta * vp, max(theta * vc.min(), 0.0))
    return float(np.min(c + theta * vp))


def _scale_to_fit(V: np.ndarray, scenario: Scenario, optical_form: str, margin: float = 0.9) -> float:
    """Largest s with s*V inside every transmit limit by the given margin."""
    led = scenario.led
    N = scenario.n_leds
    amps, eps, _ = stream_params(scenario, V.shape[0])
    room = optical_headroom(led, N)
    b = dc_bias(led, N)
    limits = []
    absolute = (amps @ np.abs(V)).max()
    if absolute > 0:
        limits.append(margin * min(room, b) / absolute)
    if optical_form == "tight":
        sq = (V.shape[0] * (amps ** 2 @ V ** 2)).max()
        if sq > 0:
            limits.append(math.sqrt(margin) * room / math.sqrt(sq))
    power = float(np.sum(eps * np.sum(V ** 2, axis=1)))
    if power > 0:
        limits.append(math.sqrt(margin * scenario.transmit_power_budget / power))
    return min(limits) if limits else 0.0


def initialize(scenario: Scenario, channel: ChannelMatrix, scheme=None, seed: int = 0,
               optical_form: str = "l1", common_weight: float = 1.0,
               private_weight: float = 0.5, directions: str = "auto") -> LinearizationPoint:
    """Feasible rank-one starting point.

    Private streams start zero-forcing (or along their users' channels with
    ``directions="mrt"``), the common stream along
    the dominant eigenvector of sum_k H_k; the set is scaled down uniformly to
    leave 10% slack in every transmit constraint. The time split starts at 90%
    of its cap and the rate slacks at the exact rates of this point.
    """
    cfg = as_config(scheme)
    if directions == "auto":
        # successive decoding needs every stream to reach the later users
        directions = "mrt" if cfg.kind is Scheme.NOMA else "zf"
    cap = theta_cap(scenario, channel)
    if cap <= 0:
        raise InfeasibleScenario("energy threshold leaves no time for information decoding")
    K, N = channel.n_users, channel.n_leds
    rng = np.random.default_rng(seed)
    V = np.zeros((K + 1, N))
    for k, u in enumerate(private_directions(channel.gains, directions)):
        if not np.any(u):
            u = _random_unit(rng, N)
        V[k + 1] = (private_weight if cfg.kind is Scheme.RSMA else 1.0) * u
    if cfg.kind is Scheme.RSMA:
        w, U = np.linalg.eigh(channel.grams.sum(axis=0))
        u0 = U[:, -1] if w[-1] > 0 else _random_unit(rng, N)
        V[0] = common_weight * (u0 if u0.sum() >= 0 else -u0)
    V *= _scale_to_fit(V, scenario, optical_form)
    beams = BeamformerSet(V, dc_bias(scenario.led, N))
    blocks = beams.gram_matrices()
    xi = np.array([v / np.linalg.norm(v) if np.linalg.norm(v) > 0 else np.eye(N)[0] for v in V])
    slacks = exact_slacks(channel.gains, beams, scenario, cfg)
    return LinearizationPoint(blocks, xi, 0.9 * min(cap, 1.0), slacks)


def private_directions(gains, directions: str = "zf", reg: float = 1e-6) -> np.ndarray:
    """Unit private-stream directions, one row per user; zero rows for silent users."""
    H = np.asarray(gains, dtype=float)
    if directions == "zf":
        G = H @ H.T
        W = H.T @ np.linalg.solve(G + reg * np.trace(G) / max(len(G), 1) * np.eye(len(G)), np.eye(len(G)))
        D = W.T
    elif directions == "mrt":
        D = H.copy()
    else:
        raise ValueError(f"directions must be 'zf' or 'mrt', got {directions!r}")
    norms = np.linalg.norm(D, axis=1, keepdims=True)
    return np.divide(D, norms, out=np.zeros_like(D), where=norms > 0)


def _random_unit(rng, n):
    u = np.abs(rng.standard_normal(n)) + 1e-3
    return u / np.linalg.norm(u)


def recover_beamformers(blocks, rank_tol: float = 1e-4, dc: float = 0.0,
                        floor: float = 1e-12) -> BeamformerSet:
    """p_i = sqrt(lambda_max) * u_max for every block; fails on a block that is not rank one."""
    vecs = []
    for i, P in enumerate(blocks):
        w, U = np.linalg.eigh(0.5 * (P + P.T))
        tr = float(np.sum(w))
        ratio = (tr - w[-1]) / max(tr, floor)
        if ratio > rank_tol:
            raise RankRecoveryError(i, ratio)
        u = U[:, -1]
        j = int(np.argmax(np.abs(u)))
        u = u if u[j] >= 0 else -u
        vecs.append(math.sqrt(max(w[-1], 0.0)) * u)
    return BeamformerSet(np.array(vecs), dc)


def polish(beams: BeamformerSet, scenario: Scenario) -> tuple[BeamformerSet, float]:
    """Scale all beams by the largest s <= 1 that meets every transmit constraint exactly.

    Removes the solver's feasibility noise (of order 1e-6) from the recovered vectors.
    """
    led = scenario.led
    N = scenario.n_leds
    amps, eps, _ = stream_params(scenario, beams.n_streams)
    p = beams.vectors
    room = optical_headroom(led, N)
    s = 1.0
    for used, limit in ((amps @ np.abs(p), beams.dc_bias), (amps @ p, room)):
        peak = float(np.max(used))
        if peak > limit:
            s = min(s, limit / peak if peak > 0 else 1.0)
    power = float(np.sum(eps * np.sum(p ** 2, axis=1)))
    if power > scenario.transmit_power_budget:
        s = min(s, math.sqrt(scenario.transmit_power_budget / power))
    return (beams if s == 1.0 else beams.scaled(s)), s


def scheme_allocation(gains, beams: BeamformerSet, scenario: Scenario, cfg: SchemeConfig,
                      theta: float, shares=None) -> RateAllocation:
    K = gains.shape[0]
    _, eps, taus = stream_params(scenario, K + 1)
    if cfg.kind is Scheme.RSMA:
        return allocate(gains, beams, taus, scenario.noise_power, theta, shares, eps)
    if cfg.kind is Scheme.SDMA:
        base = allocate(gains, beams, taus, scenario.noise_power, theta, np.zeros(K), eps)
        return RateAllocation(theta, np.zeros(K), base.private_rates, np.zeros(K))
    slacks = exact_slacks(gains, beams, scenario, cfg)
    per_user = np.full(K, np.inf)
    for decoder, owner, _ in noma_decoding_sets(cfg.order_for(ChannelMatrix.from_gains(gains))):
        per_user[owner] = min(per_user[owner], slacks[noma_slack(decoder, owner)])
    return RateAllocation(theta, np.zeros(K), np.maximum(theta * per_user, 0.0), np.zeros(K))


def validate(beams: BeamformerSet, alloc: RateAllocation, scenario: Scenario,
             channel: ChannelMatrix, tol: float = 1e-6) -> Validation:
    report = check_feasible(beams, scenario, tol=tol)
    harvest = harvest_report(alloc.theta, scenario, channel)
    return Validation(
        constraints=report,
        harvest=harvest,
        energy_ok=harvest.ok(scenario.energy_threshold, tol),
        common_ok=alloc.common_ok(tol),
        theta_ok=0.0 < alloc.theta <= 1.0 + tol,
    )


# --------------------------------------------------------------------- solve

def solve_mmf(scenario: Scenario, scheme=None, opts: SolverOptions | None = None,
              channel: ChannelMatrix | None = None, backend=None,
              start: LinearizationPoint | None = None) -> Solution:
    """Max-min-fair design for one scheme.

    The common-rate bound is negative whenever the common stream is silent,
    so the RSMA program cannot reach the configurations without a common
    stream. With ``common_off_mode`` RSMA is therefore also solved with
    P_0 = 0 (no common message) and the better of the two runs is returned.
    """
    opts = opts or SolverOptions()
    cfg = as_config(scheme)
    channel = channel or channel_matrix(scenario)
    backend = backend or CvxpyBackend(opts.solver)
    if optical_headroom(scenario.led, scenario.n_leds) == 0.0:
        return silent_solution(scenario, channel, cfg)
    sol = run_cccp(scenario, cfg, opts, channel, backend, start)
    if cfg.kind is not Scheme.RSMA or not opts.common_off_mode or start is not None:
        return sol
    off = run_cccp(scenario, SchemeConfig(Scheme.SDMA), opts, channel, backend)
    if _better(off, sol):
        return dataclasses.replace(off, scheme=Scheme.RSMA, common_stream=False,
                                   message=(off.message + " " if off.message else "") + "common stream off")
    return sol


def silent_solution(scenario: Scenario, channel: ChannelMatrix, scheme=None) -> Solution:
    """Closed-form answer when the bias sits on a current limit: no signal swing, zero rate."""
    cfg = as_config(scheme)
    K, N = channel.n_users, channel.n_leds
    theta = min(max(theta_cap(scenario, channel), 1e-300), 1.0)
    beams = BeamformerSet(np.zeros((K + 1, N)), dc_bias(scenario.led, N))
    zero = np.zeros(K)
    alloc = RateAllocation(theta, zero, zero.copy(), zero.copy())
    trace = (IterRecord(0, 0.0, 0.0, 0.0, theta, 0.0),)
    return Solution(cfg.kind, "converged", beams, alloc, 0.0, trace, 0.0, np.zeros((K + 1, N, N)),
                    validate(beams, alloc, scenario, channel), "zero optical headroom")


def _better(a: Solution, b: Solution) -> bool:
    """True when `a` should replace `b`: converged first, then larger MMF."""
    def key(s):
        return (s.converged, s.mmf_value if math.isfinite(s.mmf_value) else -math.inf)
    return key(a) > key(b)


def initial_rho(opts: SolverOptions, merit: float, blocks) -> float:
    """Starting penalty factor.

    With ``penalty_scale="objective"`` the factor is measured against the
    starting objective per unit of total trace, so the pull towards the
    previous directions does not depend on how large the rates are.
    """
    if opts.penalty_scale == "absolute":
        return opts.penalty_rho
    total = float(sum(np.trace(b) for b in blocks))
    if total <= 0:
        return opts.penalty_rho
    return opts.penalty_rho * max(merit, 1e-3) / total


def run_cccp(scenario: Scenario, cfg: SchemeConfig, opts: SolverOptions, channel: ChannelMatrix,
             backend, start: LinearizationPoint | None = None) -> Solution:
    """The penalised CCCP loop for exactly the given scheme restriction."""
    K = channel.n_users
    point = start or initialize(scenario, channel, cfg, opts.seed, opts.optical_form,
                                directions=opts.init_directions)
    merit_prev = point_objective(dict(point.slacks), point.theta, cfg, K)
    rho = initial_rho(opts, merit_prev, point.blocks)
    trace = [IterRecord(0, merit_prev, merit_prev, penalty_residual(point.blocks), point.theta, rho)]
    status, message = "max_iters", ""
    result = None
    growth = 0
    for m in range(1, opts.max_iters + 1):
        program = build_subproblem(point, scenario, channel, cfg, rho, opts.theta_min, opts.optical_form)
        result = backend.solve(program)
        if not result.ok:
            status, message = "backend_error", f"iteration {m}: {result.status} {result.message}"
            break
        blocks = np.array([result.blocks.get(f"P{i}", np.zeros((channel.n_leds,) * 2))
                           for i in range(K + 1)])
        residual = penalty_residual(blocks)
        slacks = {name: result.scalars[name] for name in point.slacks}
        theta = min(max(result.scalars["theta"], opts.theta_min), 1.0)
        rec = IterRecord(m, result.scalars["t"], result.objective, residual, theta, rho)
        trace.append(rec)
        log.debug(rec.line())
        point = LinearizationPoint(blocks, principal_eigvecs(blocks), theta, slacks)
        if abs(result.objective - merit_prev) < opts.convergence_tol:
            total = float(sum(np.trace(b) for b in blocks))
            if residual <= opts.rank_tol * max(total, 1e-300) or total == 0.0:
                status = "converged"
                break
            if growth >= opts.max_growth_rounds:
                status, message = "rank_failure", f"penalty residual {residual:.3g} after {growth} growth rounds"
                break
            growth += 1
            rho *= opts.penalty_growth
            merit_prev = -math.inf
            continue
        merit_prev = result.objective

    if result is None or not result.ok:
        return Solution(cfg.kind, status, None, None, math.nan, tuple(trace), math.nan, None, None, message)

    blocks = point.blocks
    residual = penalty_residual(blocks)
    dc = dc_bias(scenario.led, scenario.n_leds)
    try:
        beams = recover_beamformers(blocks, opts.rank_tol, dc)
    except RankRecoveryError as exc:
        if status == "converged":
            status = "rank_failure"
        message = str(exc)
        w, U = np.linalg.eigh(blocks)
        beams = BeamformerSet(np.sqrt(np.maximum(w[:, -1], 0.0))[:, None] * U[:, :, -1], dc)
    beams, scale = polish(beams, scenario)
    if scale < 1.0:
        log.debug("polished beams by %.3g", scale)
    # water-filling is the optimal split of the common rate for fixed beams
    alloc = scheme_allocation(channel.gains, beams, scenario, cfg, point.theta)
    # report what the recovered beams actually achieve, not the subproblem's t
    mmf = float(np.min(alloc.totals))
    return Solution(cfg.kind, status, beams, alloc, mmf, tuple(trace),
                    residual, blocks, validate(beams, alloc, scenario, channel), message)
