"""Convex subproblem solved at every outer iteration.

The precoders are lifted to PSD matrices P_i = p_i p_i^T. Around the previous
iterate the concave interference logs are replaced by their tangents
(over-estimates) and the convex squares of the bilinear rate-time products by
theirs (under-estimates). Both make the subproblem an inner approximation of
the original problem. A linear penalty rho * sum_i [Tr(P_i) - xi_i^T P_i xi_i]
(rho < 0) pushes every P_i back towards rank one.

Rate constraints are written noise-normalised and in nats:
log2(x) = ln(x)/ln2, and log2(2 pi sigma^2) cancels between numerator and
denominator, so each constraint has the same value as the log2 form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .channel import ChannelMatrix
from .conic import PSD, Affine, ConicProgram, ExpCone, Linear, RotatedSOC
from .energy import theta_cap as compute_theta_cap
from .scenario import Scenario
from .signal import InfeasibleScenario, optical_headroom, stream_params

LN2 = math.log(2.0)
TWO_PI = 2.0 * math.pi
OPTICAL_FORMS = ("l1", "squared", "tight")


def block_name(i: int) -> str:
    return f"P{i}"


@dataclass(frozen=True, eq=False)
class LinearizationPoint:
    """Previous iterate: PSD blocks, their principal eigenvectors, time split and rate slacks."""

    blocks: np.ndarray                  # (K+1, N, N)
    xi: np.ndarray                      # (K+1, N), unit norm
    theta: float
    slacks: Mapping[str, float] = field(default_factory=dict)   # "vc1", "vp1", "vn2_1", ...

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")

    @property
    def n_users(self) -> int:
        return self.blocks.shape[0] - 1

    def block_map(self) -> dict:
        return {block_name(i): b for i, b in enumerate(self.blocks)}

    def vc(self) -> np.ndarray:
        return np.array([self.slacks.get(f"vc{k + 1}", 0.0) for k in range(self.n_users)])

    def vp(self) -> np.ndarray:
        return np.array([self.slacks.get(f"vp{k + 1}", 0.0) for k in range(self.n_users)])


def principal_eigvecs(blocks) -> np.ndarray:
    """Unit principal eigenvector of each block; e_1 for an all-zero block."""
    out = []
    for P in blocks:
        w, V = np.linalg.eigh(0.5 * (P + P.T))
        u = V[:, -1] if w[-1] > 0 else np.eye(P.shape[0])[0]
        # fix the sign so results are reproducible
        j = int(np.argmax(np.abs(u)))
        out.append(u if u[j] >= 0 else -u)
    return np.array(out)


def penalty_residual(blocks) -> float:
    """sum_i (Tr(P_i) - lambda_max(P_i)); zero iff every block has rank <= 1."""
    total = 0.0
    for P in blocks:
        w = np.linalg.eigvalsh(0.5 * (P + P.T))
        total += float(np.sum(w) - w[-1])
    return total


def bilinear_identity(a: float, b: float) -> float:
    """a*b as (a+b)^2/4 - (a-b)^2/4."""
    val = 0.25 * (a + b) ** 2 - 0.25 * (a - b) ** 2
    if not math.isclose(val, a * b, rel_tol=1e-12, abs_tol=1e-300 + 1e-15 * (a * a + b * b)):
        raise ArithmeticError(f"bilinear identity failed for ({a}, {b})")
    return val


# ------------------------------------------------------------------ tangents

def log_tangent(point: LinearizationPoint, gram, streams, weights, offset: float) -> Affine:
    """First-order expansion of log2(offset + sum_j w_j Tr(gram P_j)) around the point's blocks."""
    gram = np.asarray(gram, dtype=float)
    base = offset + sum(w * float(np.sum(gram * point.blocks[j])) for j, w in zip(streams, weights))
    out = Affine.constant(math.log2(base))
    for j, w in zip(streams, weights):
        coef = w * gram / (base * LN2)
        out = out + Affine.trace(block_name(j), coef) - float(np.sum(coef * point.blocks[j]))
    return out


def interference_streams(n_users: int, k: int, variant: str) -> list[int]:
    """Streams interfering with user k (0-based): all private streams, minus k's own for 'private'."""
    if variant == "common":
        return list(range(1, n_users + 1))
    if variant == "private":
        return [j for j in range(1, n_users + 1) if j != k + 1]
    raise ValueError(f"variant must be 'common' or 'private', got {variant!r}")


def linearize_F(point: LinearizationPoint, channel: ChannelMatrix, k: int, variant: str,
                sigma2: float, eps=None) -> Affine:
    """Tangent of log2(2 pi sigma^2 + 2 pi sum_j eps_j Tr(H_k P_j)) for user k (0-based)."""
    K = point.n_users
    eps = np.ones(K + 1) if eps is None else np.broadcast_to(np.asarray(eps, dtype=float), (K + 1,))
    streams = interference_streams(K, k, variant)
    return log_tangent(point, channel.grams[k], streams, [TWO_PI * eps[j] for j in streams],
                       TWO_PI * sigma2)


def square_tangent(theta_m: float, v_m: float, v_name: str) -> Affine:
    """Tangent of (theta + v)^2 / 4 at (theta_m, v_m)."""
    a = theta_m + v_m
    return (Affine.var("theta") + Affine.var(v_name)) * (0.5 * a) - 0.25 * a * a


def linearize_G(point: LinearizationPoint, k: int, variant: str) -> Affine:
    name = {"common": "vc", "private": "vp"}[variant] + str(k + 1)
    return square_tangent(point.theta, point.slacks.get(name, 0.0), name)


# ------------------------------------------------------------------- builder

@dataclass(frozen=True, eq=False)
class BuildContext:
    point: LinearizationPoint
    scenario: Scenario
    channel: ChannelMatrix
    rho: float
    theta_cap: float
    theta_min: float
    optical_form: str
    amps: np.ndarray
    eps: np.ndarray
    taus: np.ndarray


def rate_rows(ctx: BuildContext, k: int, signal, interference, v_name: str, tag: str) -> ExpCone:
    """ln(1 + sum_signal tau_i Tr(H_k P_i)/s) >= ln2 * (2 v + F - log2 s), s = 2 pi sigma^2.

    Both sides are shifted by the log of the argument at the linearization
    point, which leaves the feasible set unchanged.
    """
    s = TWO_PI * ctx.scenario.noise_power
    H = ctx.channel.grams[k]
    arg = Affine.constant(1.0)
    for i in signal:
        arg = arg + Affine.trace(block_name(i), ctx.taus[i] / s * H)
    F = log_tangent(ctx.point, H, interference, [TWO_PI * ctx.eps[j] for j in interference], s)
    bound = (F - math.log2(s)) * LN2 + Affine.var(v_name, 2.0 * LN2)
    # divide the argument by its value at the point so the cone stays well scaled
    scale = arg.evaluate({}, ctx.point.block_map())
    return ExpCone(arg / scale, bound - math.log(scale), name=tag)


def optical_rows(ctx: BuildContext, streams) -> list[Linear]:
    n_leds = ctx.scenario.n_leds
    room = optical_headroom(ctx.scenario.led, n_leds)
    rows = []
    for n in range(n_leds):
        e = np.zeros((n_leds, n_leds))
        e[n, n] = 1.0
        expr = Affine()
        if room == 0.0:
            for i in streams:
                expr = expr + Affine.trace(block_name(i), e)
        elif ctx.optical_form == "l1":
            # sqrt(P_nn) <= (q + P_nn) / (2 sqrt q): tangent of the concave root
            for i in streams:
                floor = 1e-12 * (room / ctx.amps[i]) ** 2
                q = max(float(ctx.point.blocks[i][n, n]), floor)
                expr = expr + (Affine.trace(block_name(i), e) + q) * (ctx.amps[i] / (2.0 * math.sqrt(q)))
            expr = expr - room
        else:
            mult = len(streams) if ctx.optical_form == "tight" else 1
            for i in streams:
                expr = expr + Affine.trace(block_name(i), mult * ctx.amps[i] ** 2 * e)
            expr = expr - room ** 2
        rows.append(Linear(expr, "<=", f"optical{n + 1}"))
    return rows


def build_subproblem(point: LinearizationPoint, scenario: Scenario, channel: ChannelMatrix,
                     scheme=None, rho: float = -10.0, theta_min: float = 1e-6,
                     optical_form: str = "l1") -> ConicProgram:
    """Convex subproblem at `point` for the given scheme (RSMA when `scheme` is None)."""
    from .schemes import SchemeConfig, apply_scheme

    if rho > 0:
        raise ValueError("penalty rho must be <= 0")
    if optical_form not in OPTICAL_FORMS:
        raise ValueError(f"optical_form must be one of {OPTICAL_FORMS}")
    cap = compute_theta_cap(scenario, channel)
    if cap <= 0:
        raise InfeasibleScenario("energy threshold leaves no time for information decoding")
    K, N = channel.n_users, channel.n_leds
    if point.blocks.shape != (K + 1, N, N):
        raise ValueError("linearization point does not match the channel dimensions")
    amps, eps, taus = stream_params(scenario, K + 1)
    ctx = BuildContext(point, scenario, channel, rho, cap, theta_min, optical_form, amps, eps, taus)

    blocks = tuple(block_name(i) for i in range(K + 1))
    users = range(1, K + 1)
    scalars = ("t", "theta") + tuple(f"c{k}" for k in users) \
        + tuple(f"vc{k}" for k in users) + tuple(f"vp{k}" for k in users)

    cons = []
    for k in range(K):
        cons.append(rate_rows(ctx, k, range(0, K + 1), interference_streams(K, k, "common"),
                              f"vc{k + 1}", f"rate_c{k + 1}"))
        cons.append(rate_rows(ctx, k, range(1, K + 1), interference_streams(K, k, "private"),
                              f"vp{k + 1}", f"rate_p{k + 1}"))
    shares = sum((Affine.var(f"c{k}") for k in users), Affine())
    for k in range(K):
        cons.append(RotatedSOC(Affine.var("theta") - Affine.var(f"vc{k + 1}"),
                               linearize_G(point, k, "common") - shares, f"bilin_c{k + 1}"))
        cons.append(RotatedSOC(Affine.var("theta") - Affine.var(f"vp{k + 1}"),
                               linearize_G(point, k, "private") - Affine.var("t") + Affine.var(f"c{k + 1}"),
                               f"bilin_p{k + 1}"))
    cons += optical_rows(ctx, range(K + 1))
    power = sum((Affine.trace(block_name(i), eps[i] * np.eye(N)) for i in range(K + 1)), Affine())
    cons.append(Linear(power - scenario.transmit_power_budget, "<=", "power"))
    cons.append(Linear(Affine.var("theta") - cap, "<=", "eh_theta_cap"))
    cons.append(Linear(theta_min - Affine.var("theta"), "<=", "theta_min"))
    cons.append(Linear(Affine.var("theta") - 1.0, "<=", "theta_max"))
    cons += [Linear(-Affine.var(f"c{k}"), "<=", f"c_nonneg{k}") for k in users]
    cons += [PSD(b, f"psd_{b}") for b in blocks]

    objective = Affine.var("t") + penalty_objective(point, range(K + 1), rho)
    program = ConicProgram(N, blocks, scalars, objective, tuple(cons), ctx)
    return apply_scheme(program, scheme if scheme is not None else SchemeConfig())


def penalty_objective(point: LinearizationPoint, streams, rho: float) -> Affine:
    n = point.blocks.shape[1]
    out = Affine()
    if rho == 0:
        return out
    for i in streams:
        xi = point.xi[i]
        out = out + Affine.trace(block_name(i), rho * (np.eye(n) - np.outer(xi, xi)))
    return out
