"""Multiple-access schemes as restrictions of the RSMA subproblem.

SDMA switches the common stream off. NOMA also removes the common stream and
instead decodes the private streams by successive interference cancellation
in a fixed order: the user at position j decodes the streams of every user at
positions < j (in order) before its own, treating the streams not yet decoded
as interference.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .conic import PSD, Affine, ConicProgram, RotatedSOC
from .subproblem import rate_rows, square_tangent


class Scheme(str, Enum):
    RSMA = "rsma"
    SDMA = "sdma"
    NOMA = "noma"


@dataclass(frozen=True)
class SchemeConfig:
    kind: Scheme = Scheme.RSMA
    noma_order: tuple[int, ...] | None = None    # 0-based users, first decoded first

    def __post_init__(self):
        object.__setattr__(self, "kind", Scheme(self.kind))
        if self.noma_order is not None:
            object.__setattr__(self, "noma_order", tuple(int(u) for u in self.noma_order))

    def order_for(self, channel) -> tuple[int, ...]:
        order = self.noma_order if self.noma_order is not None else default_noma_order(channel)
        if sorted(order) != list(range(channel.n_users)):
            raise ValueError(f"noma_order {order} is not a permutation of {channel.n_users} users")
        return tuple(order)


def as_config(scheme) -> SchemeConfig:
    if scheme is None:
        return SchemeConfig()
    if isinstance(scheme, SchemeConfig):
        return scheme
    return SchemeConfig(Scheme(str(getattr(scheme, "value", scheme)).lower()))


def default_noma_order(channel) -> tuple[int, ...]:
    """Users by descending channel norm, ties broken by index."""
    norms = np.linalg.norm(np.asarray(channel.gains), axis=1)
    return tuple(sorted(range(norms.size), key=lambda k: (-norms[k], k)))


def noma_decoding_sets(order) -> list[tuple[int, int, list[int]]]:
    """(decoder, stream owner, undecoded users) triples, all 0-based users.

    The stream of the user at position j must be decoded by every user at
    position >= j while the streams of positions >= j are still present.
    """
    rows = []
    for j, owner in enumerate(order):
        remaining = list(order[j:])
        for decoder in order[j:]:
            rows.append((decoder, owner, remaining))
    return rows


def noma_slack(decoder: int, owner: int) -> str:
    return f"vn{decoder + 1}_{owner + 1}"


def _without_common(program: ConicProgram, drop_private: bool) -> tuple:
    K = len(program.blocks) - 1
    drop_scalars = {f"c{k}" for k in range(1, K + 1)} | {f"vc{k}" for k in range(1, K + 1)}
    prefixes = ("rate_c", "bilin_c", "c_nonneg", "psd_P0")
    if drop_private:
        drop_scalars |= {f"vp{k}" for k in range(1, K + 1)}
        prefixes += ("rate_p", "bilin_p")
    drop_blocks = {"P0"}
    cons = []
    for c in program.constraints:
        if c.name.startswith(prefixes):
            continue
        if isinstance(c, PSD):
            cons.append(c)
            continue
        fields = {f.name: getattr(c, f.name) for f in dataclasses.fields(c)}
        for key, val in fields.items():
            if isinstance(val, Affine):
                fields[key] = val.drop(drop_scalars, drop_blocks)
        cons.append(type(c)(**fields))
    blocks = tuple(b for b in program.blocks if b not in drop_blocks)
    scalars = tuple(s for s in program.scalars if s not in drop_scalars)
    objective = program.objective.drop(drop_scalars, drop_blocks)
    return blocks, scalars, objective, cons


def apply_scheme(program: ConicProgram, cfg: SchemeConfig) -> ConicProgram:
    """Restrict an RSMA subproblem to the configured scheme."""
    cfg = as_config(cfg)
    if cfg.kind is Scheme.RSMA:
        return program
    if cfg.kind is Scheme.SDMA:
        blocks, scalars, objective, cons = _without_common(program, drop_private=False)
        return ConicProgram(program.block_size, blocks, scalars, objective, tuple(cons), program.context)

    ctx = program.context
    if ctx is None:
        raise ValueError("NOMA needs the build context carried by the RSMA program")
    order = cfg.order_for(ctx.channel)
    blocks, scalars, objective, cons = _without_common(program, drop_private=True)
    extra = []
    new_scalars = []
    for decoder, owner, remaining in noma_decoding_sets(order):
        name = noma_slack(decoder, owner)
        new_scalars.append(name)
        signal = [u + 1 for u in remaining]
        interference = [u + 1 for u in remaining if u != owner]
        extra.append(rate_rows(ctx, decoder, signal, interference, name, f"rate_n{decoder + 1}_{owner + 1}"))
        g = square_tangent(ctx.point.theta, ctx.point.slacks[name], name)
        extra.append(RotatedSOC(Affine.var("theta") - Affine.var(name), g - Affine.var("t"),
                                f"bilin_n{decoder + 1}_{owner + 1}"))
    n_psd = sum(isinstance(c, PSD) for c in cons)
    cons = cons[: len(cons) - n_psd] + extra + cons[len(cons) - n_psd:]
    return ConicProgram(program.block_size, blocks, scalars + tuple(new_scalars), objective,
                        tuple(cons), ctx)

