"""Acceptance suite: one PASS/FAIL line per primary criterion.

    pytest tests/test_acceptance.py -v      # lines repeated in the terminal summary
    python tests/test_acceptance.py         # plain script, exits 1 on any FAIL

The full default sweeps and the random CCCP runs are computed once and shared.
"""
from __future__ import annotations

import functools
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from rsma_slipt import bench
from rsma_slipt.channel import channel_gain, channel_matrix
from rsma_slipt.conic import CvxpyBackend
from rsma_slipt.scenario import LedParams, PanelParams, default_scenario
from rsma_slipt.schemes import SchemeConfig
from rsma_slipt.solver import SolverOptions, run_cccp, solve_mmf
from rsma_slipt.subproblem import (LinearizationPoint, bilinear_identity, block_name, linearize_F,
                                   principal_eigvecs, square_tangent)

FROZEN = json.loads((Path(__file__).parent / "data" / "oracle_values.json").read_text())

RESULTS: dict[str, str] = {}

MONO_TOL = 1e-6
RANK_TOL = 1e-4
CONSTRAINT_TOL = 1e-6
ORACLE_TOL = 1e-3
DOMINANCE_TOL = 1e-4
TREND_TOL = 1e-3          # solver noise floor on flat stretches is ~3e-4
N_MONO_SEEDS = 10

warnings.filterwarnings("ignore", module="cvxpy")


def record(name: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS[name] = line
    print(line)
    return ok


# ------------------------------------------------------------- shared runs

@functools.lru_cache(maxsize=None)
def cccp_runs():
    """(seed, scheme, Solution) for seeded N=8, K=3 instances, every scheme run as its own program."""
    opts = SolverOptions()
    backend = CvxpyBackend(opts.solver)
    out = []
    for seed in range(N_MONO_SEEDS):
        sc = bench.random_instance(3, seed)
        ch = channel_matrix(sc)
        for scheme in bench.SCHEMES:
            out.append((seed, scheme, run_cccp(sc, SchemeConfig(scheme), opts, ch, backend)))
    return out


@functools.lru_cache(maxsize=None)
def default_sweeps():
    return {axis: bench.run_sweep(bench.SweepSpec(axis, workers=bench.default_workers()))
            for axis in bench.AXES}


# ---------------------------------------------------------------- criteria

def check_algebraic_identities() -> bool:
    rng = np.random.default_rng(11)
    # theta in (0, 1], rate slacks up to 10 bits/s/Hz
    a = rng.uniform(1e-2, 1.0, 100_000)
    b = rng.uniform(1e-2, 10.0, 100_000)
    bil = max(abs(bilinear_identity(x, y) - x * y) / (x * y) for x, y in zip(a.tolist(), b.tolist()))

    sc = bench.random_instance(3, 0)
    scale = float(channel_matrix(sc).gains.max())
    h = rng.uniform(0.0, scale, (10_000, 8))
    p = rng.standard_normal((10_000, 8))
    H = np.einsum("kn,km->knm", h, h)
    P = np.einsum("kn,km->knm", p, p)
    lifted = np.einsum("knm,knm->k", H, P)
    direct = np.einsum("kn,kn->k", h, p) ** 2
    # error measured against the magnitude of the summands: |h^T p|^2 can cancel to ~0
    sdr = float(np.max(np.abs(lifted - direct) / np.einsum("kn,kn->k", np.abs(h), np.abs(p)) ** 2))
    ok = bil <= 1e-12 and sdr <= 1e-10
    return record("algebraic identities", ok,
                  f"bilinear max rel err {bil:.2e} on 1e5 pairs (<= 1e-12); "
                  f"Tr(H pp^T) vs |h^T p|^2 max rel err {sdr:.2e} on 1e4 draws (<= 1e-10)")


def _random_point(rng, K, N, slack_names):
    vecs = rng.standard_normal((K + 1, N)) * 0.3
    blocks = np.einsum("in,im->inm", vecs, vecs)
    slacks = {name: float(rng.uniform(0.1, 3.0)) for name in slack_names}
    return LinearizationPoint(blocks, principal_eigvecs(blocks), float(rng.uniform(0.1, 1.0)), slacks)


def check_tangent_bounds() -> bool:
    rng = np.random.default_rng(12)
    sc = default_scenario()
    ch = channel_matrix(sc)
    K, N = ch.n_users, ch.n_leds
    names = [f"vc{k + 1}" for k in range(K)] + [f"vp{k + 1}" for k in range(K)]
    eps = np.full(K + 1, sc.led.signal_variance)
    worst_f = worst_g = -math.inf
    at_point = 0.0
    for trial in range(100):
        point = _random_point(rng, K, N, names)
        k = int(rng.integers(K))
        variant = ("common", "private")[trial % 2]
        tangent = linearize_F(point, ch, k, variant, sc.noise_power, eps)
        streams = range(1, K + 1) if variant == "common" else [j for j in range(1, K + 1) if j != k + 1]

        def exact(blocks):
            return math.log2(2 * math.pi * sc.noise_power + 2 * math.pi * sum(
                eps[j] * float(np.sum(ch.grams[k] * blocks[j])) for j in streams))

        at_point = max(at_point, abs(tangent.evaluate({}, point.block_map()) - exact(point.blocks)))
        w = rng.standard_normal((K + 1, N)) * rng.uniform(0.01, 1.0)
        moved = np.einsum("in,im->inm", w, w) + rng.uniform(0, 1) * point.blocks
        over = tangent.evaluate({}, {block_name(i): b for i, b in enumerate(moved)}) - exact(moved)
        worst_f = max(worst_f, -over)

        name = names[trial % len(names)]
        g = square_tangent(point.theta, point.slacks[name], name)
        at_point = max(at_point, abs(g.evaluate({"theta": point.theta, name: point.slacks[name]}, {})
                                     - 0.25 * (point.theta + point.slacks[name]) ** 2))
        th, v = float(rng.uniform(0, 1)), float(rng.uniform(0, 10))
        under = 0.25 * (th + v) ** 2 - g.evaluate({"theta": th, name: v}, {})
        worst_g = max(worst_g, -under)
    ok = worst_f <= 1e-12 and worst_g <= 1e-12 and at_point <= 1e-9
    return record("tangent bounds", ok,
                  f"100 perturbations each; worst F under-estimate {max(worst_f, 0):.1e}, "
                  f"worst G over-estimate {max(worst_g, 0):.1e}, max gap at point {at_point:.1e} (<= 1e-9)")


def check_cccp_monotonicity() -> bool:
    worst, steps, runs = 0.0, 0, 0
    where = ""
    for seed, scheme, sol in cccp_runs():
        runs += 1
        for prev, cur in zip(sol.trace, sol.trace[1:]):
            if prev.rho != cur.rho:
                continue
            steps += 1
            drop = prev.merit - cur.merit
            if drop > worst:
                worst, where = drop, f"seed {seed} {scheme.value} m={cur.m}"
    ok = worst <= MONO_TOL and runs >= 3 * N_MONO_SEEDS
    return record("CCCP monotonicity", ok,
                  f"{runs} runs on {N_MONO_SEEDS} seeded N=8 K=3 instances, {steps} steps; "
                  f"largest drop {worst:.1e}{' at ' + where if where else ''} (<= 1e-6)")


def check_rank_one_recovery() -> bool:
    sols = [(f"seed {seed} {scheme.value}", sol) for seed, scheme, sol in cccp_runs()]
    sc = default_scenario()
    ch = channel_matrix(sc)
    sols += [(f"default {s.value}", solve_mmf(sc, s, channel=ch)) for s in bench.SCHEMES]
    converged = [(tag, s) for tag, s in sols if s.converged]
    bad = []
    worst_ratio, worst_slack = 0.0, 0.0
    for tag, sol in converged:
        total = float(sum(np.trace(b) for b in sol.blocks))
        ratio = sol.penalty_residual / total if total > 0 else 0.0
        worst_ratio = max(worst_ratio, ratio)
        v = sol.validation
        worst_slack = min(worst_slack, v.constraints.worst())
        if ratio > RANK_TOL or not v.ok:
            bad.append(tag)
    ok = not bad and len(converged) == len(sols)
    return record("rank-one recovery", ok,
                  f"{len(converged)}/{len(sols)} runs converged; max residual/sum Tr {worst_ratio:.1e} (<= 1e-4); "
                  f"worst P0 slack {worst_slack:.1e} (>= -1e-6)" + (f"; failing: {bad}" if bad else ""))


def oracle_cases():
    cases = []
    for n_leds in (2, 3, 4):
        for n_users in (1, 2):
            cases.append((n_leds, n_users, n_leds * 10 + n_users))
    return cases


def check_oracle_dominance() -> bool:
    worst, lines = math.inf, []
    ok = True
    slowest = 0.0
    for n_leds, n_users, seed in oracle_cases():
        # one LED harvests too little for 5 mW; all instances use 1 mW so every size is feasible
        sc = bench.random_instance(n_users, seed, n_leds=n_leds, energy_threshold=0.001)
        for scheme in bench.SCHEMES:
            t0 = time.perf_counter()
            oracle = bench.oracle_grid(sc, scheme, resolution=11)
            sol = solve_mmf(sc, scheme)
            slowest = max(slowest, time.perf_counter() - t0)
            margin = sol.mmf_value - oracle
            worst = min(worst, margin)
            if not (sol.converged and margin >= -ORACLE_TOL):
                ok = False
                lines.append(f"N={n_leds} K={n_users} {scheme.value}: {sol.mmf_value:.4f} vs {oracle:.4f}")
    ok = ok and slowest <= 60.0
    return record("oracle dominance", ok,
                  f"{len(oracle_cases()) * 3} instance/scheme pairs with N<=4, K<=2; min(solver - oracle) "
                  f"{worst:+.2e} (>= -1e-3); slowest pair {slowest:.1f} s (<= 60 s)"
                  + (f"; failing: {lines}" if lines else ""))


def check_scheme_dominance() -> bool:
    worst_sdma = worst_noma = math.inf
    points = skipped = 0
    for axis, res in default_sweeps().items():
        r, s, n = (res.series(x) for x in bench.SCHEMES)
        for i in range(len(res.spec.grid)):
            if math.isnan(r[i]):
                skipped += 1
                continue
            points += 1
            worst_sdma = min(worst_sdma, r[i] - s[i])
            worst_noma = min(worst_noma, r[i] - n[i])
    spread, k1 = 0.0, 0
    for seed in range(3):
        sc = bench.random_instance(1, 100 + seed)
        vals = [solve_mmf(sc, x).mmf_value for x in bench.SCHEMES]
        exact = bench.single_user_rate(sc)
        spread = max(spread, max(vals) - min(vals), max(abs(v - exact) for v in vals))
        k1 += 1
    ok = (worst_sdma >= -DOMINANCE_TOL and worst_noma >= -DOMINANCE_TOL and spread <= DOMINANCE_TOL)
    return record("scheme dominance", ok,
                  f"{points} feasible default sweep points ({skipped} infeasible skipped); "
                  f"min RSMA-SDMA {worst_sdma:+.1e}, min RSMA-NOMA {worst_noma:+.1e} (>= -1e-4); "
                  f"K=1 spread incl. closed form {spread:.1e} on {k1} instances (<= 1e-4)")


def _unimodal(y, tol):
    peak = int(np.argmax(y))
    up = all(y[i + 1] >= y[i] - tol for i in range(peak))
    down = all(y[i + 1] <= y[i] + tol for i in range(peak, len(y) - 1))
    return peak, up and down


def check_trends() -> bool:
    sweeps = default_sweeps()
    notes, ok = [], True
    for scheme in bench.SCHEMES:
        e = sweeps["E_th"].series(scheme)
        inc = float(np.nanmax(np.diff(e)))
        ok &= not np.any(np.isnan(e)) and inc <= TREND_TOL
        notes.append(f"E_th {scheme.value}: max rise {inc:+.1e}")

        snr_grid = np.array(sweeps["SNR"].spec.grid)
        s = sweeps["SNR"].series(scheme)
        dec = float(-np.min(np.diff(s)))
        high = s[snr_grid >= 15.0]
        flat = float(np.ptp(high))
        gain = float(high[0] - s[0])
        ok &= not np.any(np.isnan(s)) and dec <= TREND_TOL and flat <= TREND_TOL and gain > 10 * TREND_TOL
        notes.append(f"SNR {scheme.value}: max drop {max(dec, 0):.1e}, spread above 15 dB {flat:.1e}")

        grid = np.array(sweeps["P_o"].spec.grid)
        p = np.nan_to_num(sweeps["P_o"].series(scheme), nan=0.0)   # infeasible bias: no service
        peak, uni = _unimodal(p, TREND_TOL)
        ok &= uni and grid[peak] == FROZEN["optical_power_argmax"]
        notes.append(f"P_o {scheme.value}: argmax {grid[peak]:g} W, unimodal {uni}")
    return record("trend reproduction", bool(ok), "; ".join(notes) + f" (tol {TREND_TOL:g})")


def check_channel_oracle() -> bool:
    led, panel = LedParams(), PanelParams()
    g = channel_gain((1.5, 1.5, 4.5), (1.5, 1.5, 1.7), led, panel)
    rel = abs(g - 6.58e-5) / 6.58e-5
    frozen_rel = abs(g - FROZEN["on_axis_gain"]) / FROZEN["on_axis_gain"]
    # 2.8 m drop, 4 m lateral: incidence ~55 deg, outside a 45 deg FOV
    outside = channel_gain((0.0, 0.0, 4.5), (4.0, 0.0, 1.7), led, PanelParams(fov_deg=45.0))
    ok = rel <= 1e-3 and frozen_rel <= 1e-12 and outside == 0.0
    return record("channel oracle", ok,
                  f"on-axis gain {g:.6e} vs 6.58e-5 rel {rel:.1e} (<= 1e-3), vs independent oracle {frozen_rel:.0e}; "
                  f"outside-FOV gain {outside!r} (== 0)")


CRITERIA = (
    check_algebraic_identities,
    check_tangent_bounds,
    check_cccp_monotonicity,
    check_rank_one_recovery,
    check_oracle_dominance,
    check_scheme_dominance,
    check_trends,
    check_channel_oracle,
)


# ------------------------------------------------------------ pytest hooks

def test_algebraic_identities():
    assert check_algebraic_identities()


def test_tangent_bounds():
    assert check_tangent_bounds()


def test_cccp_monotonicity():
    assert check_cccp_monotonicity()


def test_rank_one_recovery():
    assert check_rank_one_recovery()


def test_oracle_dominance():
    assert check_oracle_dominance()


def test_scheme_dominance():
    assert check_scheme_dominance()


def test_trend_reproduction():
    assert check_trends()


def test_channel_oracle():
    assert check_channel_oracle()


if __name__ == "__main__":
    results = [c() for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
