"""Distributed average consensus with compressed messages.

Two engines share the same message exchange:

* CHOCO-Gossip with a constant consensus step-size ``gamma``;
* AdaGossip, which divides ``gamma`` elementwise by the square root of an
  exponential moving average of the squared gossip-error.

State layout: the public copy of agent ``j`` is held once, in row ``j`` of
``x_hat``. Every neighbor of ``j`` applies the same ``delta_j`` to its copy,
so all copies of ``x_hat_j`` agree exactly and one row stands for all of them.
:meth:`GossipState.agent_view` materializes the per-agent picture.

u carries no bias correction. With ``u = 0`` initially and ``beta`` close to
one, the first steps are large (roughly ``gamma / sqrt(1 - beta)`` times a
sign step).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .compression import CompressorSpec, compress, decompress, payload_bytes
from .topology import MixingMatrix

__all__ = [
    "GossipState",
    "GossipHyperParams",
    "init_gossip_state",
    "exchange",
    "gossip_error",
    "choco_gossip_round",
    "adagossip_round",
    "consensus_distance",
    "run_consensus",
]


@dataclass(frozen=True)
class GossipHyperParams:
    gamma: float
    beta: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class GossipState:
    """Private values ``x``, public copies ``x_hat`` and second moment ``u``, one row per agent."""

    x: np.ndarray
    x_hat: np.ndarray
    u: np.ndarray
    round: int = 0
    bytes_sent: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.bytes_sent is None:
            self.bytes_sent = np.zeros(self.x.shape[0], dtype=np.int64)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def copy(self) -> "GossipState":
        return GossipState(self.x.copy(), self.x_hat.copy(), self.u.copy(), self.round, self.bytes_sent.copy())

    def agent_view(self, i: int, w: MixingMatrix) -> dict:
        """Agent ``i``'s local state: ``x``, ``u`` and its public copies keyed by neighbor id."""
        return {
            "x": self.x[i],
            "u": self.u[i],
            "x_hat": {j: self.x_hat[j] for j in w.neighbors[i]},
            "round": self.round,
        }


def init_gossip_state(values) -> GossipState:
    """Start from private values with ``x_hat = 0`` and ``u = 0``."""
    x = np.array(values, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] == 0:
        raise ValueError("initial values must be an (agents, dim) array with dim >= 1")
    return GossipState(x=x, x_hat=np.zeros_like(x), u=np.zeros_like(x))


def _check(x: np.ndarray, w: MixingMatrix) -> None:
    if x.ndim != 2:
        raise ValueError("agent values must be an (agents, dim) array")
    if x.shape[0] != w.n:
        raise ValueError(f"{x.shape[0]} agents but mixing matrix is {w.n}x{w.n}")


def exchange(send: np.ndarray, x_hat: np.ndarray, w: MixingMatrix, spec: CompressorSpec):
    """Compress ``send - x_hat`` per agent and apply every delta to the public copies.

    Returns ``(x_hat_new, bytes_per_agent)``; bytes count one payload per
    outgoing edge (the self-copy is local and free).
    """
    if send.shape != x_hat.shape:
        raise ValueError(f"dimension mismatch: values {send.shape} vs public copies {x_hat.shape}")
    # phase 1: every agent compresses from the round-start snapshot
    deltas = np.empty_like(send)
    sent = np.empty(w.n, dtype=np.int64)
    for i in range(w.n):
        p = compress(spec, send[i] - x_hat[i])
        deltas[i] = decompress(p)
        sent[i] = payload_bytes(p) * w.out_degree(i)
    # phase 2: receivers apply the deltas
    return x_hat + deltas, sent


def gossip_error(x_hat: np.ndarray, w: MixingMatrix) -> np.ndarray:
    """``e_i = sum_{j in N(i)} w_ij (x_hat_j - x_hat_i)``, summed in ascending neighbor order."""
    e = np.zeros_like(x_hat)
    slots = _neighbor_slots(w)
    if slots is not None:
        # regular graph: slot k holds each agent's k-th neighbor, same summation order as the loop
        idx, wts = slots
        for k in range(idx.shape[1]):
            e += wts[:, k : k + 1] * (x_hat[idx[:, k]] - x_hat)
        return e
    for i, nbrs in enumerate(w.neighbors):
        for j in nbrs:
            if j != i:
                e[i] += w.w[i, j] * (x_hat[j] - x_hat[i])
    return e


def _neighbor_slots(w: MixingMatrix):
    cached = getattr(w, "_slots", False)
    if cached is not False:
        return cached
    others = [[j for j in nbrs if j != i] for i, nbrs in enumerate(w.neighbors)]
    slots = None
    if len({len(o) for o in others}) == 1:
        idx = np.array(others, dtype=np.int64).reshape(w.n, -1)
        slots = (idx, w.w[np.arange(w.n)[:, None], idx])
    object.__setattr__(w, "_slots", slots)
    return slots


def choco_gossip_round(state: GossipState, w: MixingMatrix, spec: CompressorSpec, gamma: float):
    """One CHOCO-Gossip round. Returns ``(new_state, bytes_per_agent)``."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    _check(state.x, w)
    x_hat, sent = exchange(state.x, state.x_hat, w, spec)
    e = gossip_error(x_hat, w)
    new = GossipState(
        x=state.x + gamma * e,
        x_hat=x_hat,
        u=state.u.copy(),
        round=state.round + 1,
        bytes_sent=state.bytes_sent + sent,
    )
    return new, sent


def adaptive_step(u: np.ndarray, e: np.ndarray, hp: GossipHyperParams):
    """Update the second-moment estimate and return ``(u_new, increment)``."""
    u_new = hp.beta * u + (1.0 - hp.beta) * (e * e)
    return u_new, hp.gamma / (np.sqrt(u_new) + hp.epsilon) * e


def adagossip_round(state: GossipState, w: MixingMatrix, spec: CompressorSpec, hp: GossipHyperParams):
    """One AdaGossip round. Returns ``(new_state, bytes_per_agent)``."""
    _check(state.x, w)
    x_hat, sent = exchange(state.x, state.x_hat, w, spec)
    e = gossip_error(x_hat, w)
    u, step = adaptive_step(state.u, e, hp)
    new = GossipState(
        x=state.x + step,
        x_hat=x_hat,
        u=u,
        round=state.round + 1,
        bytes_sent=state.bytes_sent + sent,
    )
    return new, sent


def consensus_distance(x) -> float:
    """``(1/n) sum_i ||x_i - mean||^2``. Accepts a state or an (agents, dim) array."""
    x = x.x if isinstance(x, GossipState) else np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    diff = x - x.mean(axis=0)
    return float(np.sum(diff * diff) / x.shape[0])


def run_consensus(
    initial,
    w: MixingMatrix,
    spec: CompressorSpec,
    engine: str,
    hp: GossipHyperParams,
    rounds: int,
    return_state: bool = False,
) -> list[tuple[int, float, float]] | tuple[list[tuple[int, float, float]], GossipState]:
    """Run ``rounds`` gossip rounds from ``initial`` values.

    Returns rows ``(round, consensus_distance, cumulative_bytes_per_agent)``,
    starting with the round-0 row. ``engine`` is ``"choco"`` or ``"adagossip"``;
    CHOCO only reads ``hp.gamma``.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if engine not in ("choco", "adagossip"):
        raise ValueError(f"unknown consensus engine {engine!r}")
    state = init_gossip_state(initial)
    _check(state.x, w)
    rows = [(0, consensus_distance(state), 0.0)]
    for _ in range(rounds):
        if engine == "choco":
            state, _ = choco_gossip_round(state, w, spec, hp.gamma)
        else:
            state, _ = adagossip_round(state, w, spec, hp)
        rows.append((state.round, consensus_distance(state), float(state.bytes_sent.mean())))
    return (rows, state) if return_state else rows


def mean_drift(states: Sequence[GossipState]) -> np.ndarray:
    """Max-norm change of the coordinate-wise mean between consecutive states."""
    means = np.array([s.x.mean(axis=0) for s in states])
    return np.max(np.abs(np.diff(means, axis=0)), axis=1)
