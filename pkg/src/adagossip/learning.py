"""Decentralized training rounds: DSGD, DeepSqueeze, CHOCO-SGD and AdaG-SGD.

Every round follows the same order: each agent computes a gradient at its
current parameters and takes a local momentum-SGD step to ``x_half``; agents
then exchange messages derived from ``x_half`` and apply a gossip correction.
Only parameters travel over the network. Momentum buffers stay local.

Gradients come from a callback ``grad_fn(agent, params) -> grad`` so the
engines stay independent of the model and the batch sampler.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .compression import IDENTITY, CompressorSpec, bytes_for_dim, compress, decompress, payload_bytes
from .consensus import GossipHyperParams, GossipState, adaptive_step, exchange, gossip_error
from .models import ModelSpec, loss_and_accuracy
from .topology import MixingMatrix

__all__ = [
    "OptimizerConfig",
    "LearnerState",
    "init_learner_state",
    "lr_schedule",
    "local_sgd_step",
    "dsgd_round",
    "deepsqueeze_round",
    "choco_sgd_round",
    "adag_sgd_round",
    "evaluate_consensus_model",
    "ENGINES",
]

GradFn = Callable[[int, np.ndarray], np.ndarray]


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    lr0: float = 0.1
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 1e-4
    batch_size: int = 32
    epochs: int = 1

    def __post_init__(self) -> None:
        if not self.lr0 > 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass
class LearnerState:
    """All agents' training state, one row per agent.

    ``params`` is ``gossip.x``; there is no second copy of the parameters.
    """

    gossip: GossipState
    momentum: np.ndarray
    residual: np.ndarray
    step: int = 0

    @property
    def params(self) -> np.ndarray:
        return self.gossip.x

    @property
    def n(self) -> int:
        return self.gossip.n

    def copy(self) -> "LearnerState":
        return LearnerState(self.gossip.copy(), self.momentum.copy(), self.residual.copy(), self.step)


def init_learner_state(params) -> LearnerState:
    """Per-agent parameters in; momentum, residual, public copies and u start at zero."""
    x = np.array(params, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("params must be an (agents, dim) array")
    zeros = np.zeros_like(x)
    return LearnerState(GossipState(x, zeros.copy(), zeros.copy()), zeros.copy(), zeros.copy())


def lr_schedule(cfg: OptimizerConfig, epoch: int) -> float:
    """Step decay: /10 at 50% of training, /100 at 75%.

    Boundaries are floored; one that floors to epoch 0 is never crossed, so a
    single-epoch run keeps ``lr0``.
    """
    if not 0 <= epoch < cfg.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.epochs})")
    if epoch < max(1, cfg.epochs // 2):
        return cfg.lr0
    if epoch < max(1, (3 * cfg.epochs) // 4):
        return cfg.lr0 / 10
    return cfg.lr0 / 100


def local_sgd_step(params, buf, grad, lr: float, cfg: OptimizerConfig, agent: int | None = None, step: int | None = None):
    """SGD with coupled weight decay and (Nesterov) momentum.

    Returns ``(new_params, new_buf)``; inputs are left untouched.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match params {params.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient(f"non-finite gradient at agent {agent}, step {step}")
    g = grad + cfg.weight_decay * params
    buf = cfg.momentum * buf + g
    eff = g + cfg.momentum * buf if cfg.nesterov else buf
    return params - lr * eff, buf


def _local_steps(state: LearnerState, grad_fn: GradFn, lr: float, cfg: OptimizerConfig):
    x = state.params
    half = np.empty_like(x)
    buf = np.empty_like(x)
    for i in range(state.n):
        g = grad_fn(i, x[i])
        half[i], buf[i] = local_sgd_step(x[i], state.momentum[i], g, lr, cfg, agent=i, step=state.step)
    return half, buf


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")


def _check_dims(state: LearnerState, w: MixingMatrix) -> None:
    if state.n != w.n:
        raise ValueError(f"{state.n} agents but mixing matrix is {w.n}x{w.n}")


def _dense_bytes(w: MixingMatrix, d: int) -> np.ndarray:
    return np.array([bytes_for_dim(IDENTITY, d) * w.out_degree(i) for i in range(w.n)], dtype=np.int64)


def dsgd_round(state: LearnerState, w: MixingMatrix, gamma: float, grad_fn: GradFn, lr: float, cfg: OptimizerConfig):
    """Full-communication DSGD. Returns ``(new_state, bytes_per_agent)``."""
    _check_gamma(gamma)
    _check_dims(state, w)
    half, buf = _local_steps(state, grad_fn, lr, cfg)
    x = half + gamma * gossip_error(half, w)
    sent = _dense_bytes(w, half.shape[1])
    g = state.gossip
    new = LearnerState(GossipState(x, g.x_hat, g.u, g.round + 1, g.bytes_sent + sent), buf, state.residual, state.step + 1)
    return new, sent


def deepsqueeze_round(
    state: LearnerState, w: MixingMatrix, spec: CompressorSpec, gamma: float, grad_fn: GradFn, lr: float, cfg: OptimizerConfig
):
    """DeepSqueeze: compress the error-compensated parameters, carry the residual forward."""
    _check_gamma(gamma)
    _check_dims(state, w)
    half, buf = _local_steps(state, grad_fn, lr, cfg)
    v = half + state.residual
    p = np.empty_like(v)
    sent = np.empty(w.n, dtype=np.int64)
    for i in range(w.n):
        payload = compress(spec, v[i])
        p[i] = decompress(payload)
        sent[i] = payload_bytes(payload) * w.out_degree(i)
    x = half + gamma * gossip_error(p, w)
    g = state.gossip
    new = LearnerState(GossipState(x, g.x_hat, g.u, g.round + 1, g.bytes_sent + sent), buf, v - p, state.step + 1)
    return new, sent


def choco_sgd_round(
    state: LearnerState, w: MixingMatrix, spec: CompressorSpec, gamma: float, grad_fn: GradFn, lr: float, cfg: OptimizerConfig
):
    """CHOCO-SGD: compress ``x_half - x_hat``, update public copies, then gossip on them."""
    _check_gamma(gamma)
    _check_dims(state, w)
    half, buf = _local_steps(state, grad_fn, lr, cfg)
    g = state.gossip
    x_hat, sent = exchange(half, g.x_hat, w, spec)
    x = half + gamma * gossip_error(x_hat, w)
    new = LearnerState(GossipState(x, x_hat, g.u, g.round + 1, g.bytes_sent + sent), buf, state.residual, state.step + 1)
    return new, sent


def adag_sgd_round(
    state: LearnerState,
    w: MixingMatrix,
    spec: CompressorSpec,
    hp: GossipHyperParams,
    grad_fn: GradFn,
    lr: float,
    cfg: OptimizerConfig,
):
    """AdaG-SGD: CHOCO-SGD exchange with the adaptive per-coordinate consensus step."""
    _check_dims(state, w)
    half, buf = _local_steps(state, grad_fn, lr, cfg)
    g = state.gossip
    x_hat, sent = exchange(half, g.x_hat, w, spec)
    e = gossip_error(x_hat, w)
    u, incr = adaptive_step(g.u, e, hp)
    new = LearnerState(GossipState(half + incr, x_hat, u, g.round + 1, g.bytes_sent + sent), buf, state.residual, state.step + 1)
    return new, sent


ENGINES = ("dsgd", "deepsqueeze", "choco", "adag")


def run_round(
    algorithm: str,
    state: LearnerState,
    w: MixingMatrix,
    spec: CompressorSpec,
    hp: GossipHyperParams,
    grad_fn: GradFn,
    lr: float,
    cfg: OptimizerConfig,
):
    """Dispatch one round of ``algorithm`` (one of :data:`ENGINES`)."""
    if algorithm == "dsgd":
        return dsgd_round(state, w, hp.gamma, grad_fn, lr, cfg)
    if algorithm == "deepsqueeze":
        return deepsqueeze_round(state, w, spec, hp.gamma, grad_fn, lr, cfg)
    if algorithm == "choco":
        return choco_sgd_round(state, w, spec, hp.gamma, grad_fn, lr, cfg)
    if algorithm == "adag":
        return adag_sgd_round(state, w, spec, hp, grad_fn, lr, cfg)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def consensus_model(params) -> np.ndarray:
    x = params.params if isinstance(params, LearnerState) else np.asarray(params)
    return x.mean(axis=0)


def evaluate_consensus_model(params, model: ModelSpec, features: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Accuracy and loss of the coordinate-wise average of all agents' parameters."""
    if len(labels) == 0:
        raise ValueError("empty evaluation set")
    loss, acc = loss_and_accuracy(model, consensus_model(params), features, labels)
    return acc, loss
