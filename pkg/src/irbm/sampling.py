"""Gibbs samplers over (z, h, v) and (z, y), with CD and PCD chain handling.

The cutoff z is always drawn from its full posterior with the geometric tail
included; a draw landing in the tail is clamped to l+1, so no chain ever
addresses a unit more than one past the materialized pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import ModelParams, label_joint_log_weights, unit_inputs, z_posterior


@dataclass
class GibbsChainState:
    """One fantasy particle of the generative chain."""

    v: np.ndarray            # (D,) binary
    z: int = 1
    stream_id: int = 0


@dataclass
class LabelChainState:
    """State of the label chain used for discriminative sampling (v clamped)."""

    y: int
    z: int = 1


@dataclass
class JointChainState:
    """Fantasy particle over (v, y) for models with label units."""

    v: np.ndarray
    y: int
    z: int = 1


@dataclass
class FantasyChains:
    """Persistent negative-phase particles. Only the visible state (and the
    label, for joint chains) survives between updates; z is redrawn from its
    posterior at the start of each negative phase, which keeps the chain
    well defined when hidden units get reordered between updates."""

    v: np.ndarray                  # (n_chains, D) uint8
    y: np.ndarray | None = None    # (n_chains,)

    @property
    def n_chains(self) -> int:
        return self.v.shape[0]


@dataclass
class PhaseSamples:
    """Per-example statistics coming out of a positive or negative phase.

    step_token tags which parameter ordering produced the samples so that
    mixing phases from different permutations is caught early.
    """

    v: np.ndarray                  # (n, D)
    z: np.ndarray                  # (n,)
    y: np.ndarray | None = None
    step_token: int | None = None


def categorical_rows(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(p, axis=-1)
    u = rng.random(p.shape[0]) * cdf[:, -1]
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def draw_z(params: ModelParams, V, Y, rng) -> np.ndarray:
    """z ~ p(z | v [, y]) for each row, clamped to l+1."""
    zp = z_posterior(params, V, Y)
    z = zp.sample(rng)
    return np.atleast_1d(z)


def draw_h(params: ModelParams, V, Z, Y, rng) -> np.ndarray:
    """h ~ p(h | v, z [, y]) as an (n, l+1) binary array; units above the
    cutoff are zero, and the l+1'th unit (zero parameters) has mean 1/2."""
    n = V.shape[0]
    l = params.l
    means = np.empty((n, l + 1))
    means[:, :l] = expit(unit_inputs(params, V, Y))
    means[:, l] = 0.5
    mask = np.arange(l + 1)[None, :] < np.asarray(Z)[:, None]
    return ((rng.random((n, l + 1)) < means) & mask).astype(np.float64)


def draw_v(params: ModelParams, H, rng) -> np.ndarray:
    """v ~ p(v | h, z); the cutoff is implicit in H's zero rows above z, and
    the l+1'th unit never contributes because its weights are zero."""
    means = expit(params.b_v + H[:, :params.l] @ params.W)
    return (rng.random(means.shape) < means).astype(np.float64)


def draw_y(params: ModelParams, H, rng) -> np.ndarray:
    """y ~ p(y | h, z) for each row."""
    logits = params.d + H[:, :params.l] @ params.U
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return categorical_rows(p, rng)


def draw_y_given_vz(params: ModelParams, V, Z, rng) -> np.ndarray:
    """y ~ p(y | v, z) for each row (the label step of the clamped chain)."""
    logw, _ = label_joint_log_weights(params, V)
    idx = (np.asarray(Z) - 1)[:, None, None]
    logits = np.take_along_axis(logw, idx, axis=2)[:, :, 0]
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return categorical_rows(p, rng)


def gibbs_sweep(params: ModelParams, V, Y, rng):
    """One full sweep z -> h -> v (-> y for joint chains) on a batch.

    Returns (V', Y', Z) where Z is the cutoff used for this sweep.
    """
    Z = draw_z(params, V, Y, rng)
    H = draw_h(params, V, Z, Y, rng)
    Vn = draw_v(params, H, rng)
    Yn = draw_y(params, H, rng) if Y is not None else None
    return Vn, Yn, Z


def sample_z_given_v(params: ModelParams, v, rng, y=None) -> int:
    """Single-vector cutoff draw from the full posterior (tail clamped)."""
    return int(z_posterior(params, v, y).sample(rng))


def gibbs_step_generative(params: ModelParams, chain: GibbsChainState,
                          rng) -> GibbsChainState:
    """One z -> h -> v sweep of the generative chain."""
    V = np.asarray(chain.v, dtype=np.float64)[None, :]
    Vn, _, Z = gibbs_sweep(params, V, None, rng)
    return GibbsChainState(v=Vn[0].astype(np.uint8), z=int(Z[0]),
                           stream_id=chain.stream_id)


def gibbs_step_joint(params: ModelParams, chain: JointChainState,
                     rng) -> JointChainState:
    """One z -> h -> (v, y) sweep of the joint chain."""
    V = np.asarray(chain.v, dtype=np.float64)[None, :]
    Y = np.array([chain.y])
    Vn, Yn, Z = gibbs_sweep(params, V, Y, rng)
    return JointChainState(v=Vn[0].astype(np.uint8), y=int(Yn[0]), z=int(Z[0]))


def gibbs_step_discriminative(params: ModelParams, v, state: LabelChainState,
                              rng) -> LabelChainState:
    """Alternate z ~ p(z | v, y) and y ~ p(y | v, z) with v clamped."""
    V = np.asarray(v, dtype=np.float64)[None, :]
    Y = np.array([state.y])
    Z = draw_z(params, V, Y, rng)
    Yn = draw_y_given_vz(params, V, Z, rng)
    return LabelChainState(y=int(Yn[0]), z=int(Z[0]))


def run_cd(params: ModelParams, V, z_init, k: int, rng, Y=None,
           step_token: int | None = None) -> PhaseSamples:
    """CD negative phase: start chains at the data with the positive-phase
    cutoffs, run k rounds of h -> v (-> y) -> z, return the end points."""
    if k < 1:
        raise ValueError("CD needs at least one Gibbs step")
    V = np.asarray(V, dtype=np.float64)
    Z = np.asarray(z_init, dtype=np.int64).copy()
    if Z.shape[0] != V.shape[0]:
        raise ValueError("one initial cutoff per example is required")
    Y = None if Y is None else np.asarray(Y, dtype=np.int64).copy()
    for _ in range(k):
        H = draw_h(params, V, Z, Y, rng)
        V = draw_v(params, H, rng)
        if Y is not None:
            Y = draw_y(params, H, rng)
        Z = draw_z(params, V, Y, rng)
    return PhaseSamples(v=V, z=Z, y=Y, step_token=step_token)


def run_pcd(params: ModelParams, chains: FantasyChains, k: int, rng,
            step_token: int | None = None) -> tuple[PhaseSamples, FantasyChains]:
    """PCD negative phase: continue the persistent particles for k rounds.

    The cutoff is redrawn from p(z | v [, y]) before the first round.
    """
    if k < 1:
        raise ValueError("PCD needs at least one Gibbs step")
    V = chains.v.astype(np.float64)
    Y = None if chains.y is None else chains.y.astype(np.int64)
    Z = draw_z(params, V, Y, rng)
    for _ in range(k):
        H = draw_h(params, V, Z, Y, rng)
        V = draw_v(params, H, rng)
        if Y is not None:
            Y = draw_y(params, H, rng)
        Z = draw_z(params, V, Y, rng)
    neg = PhaseSamples(v=V, z=Z, y=Y, step_token=step_token)
    updated = FantasyChains(v=V.astype(np.uint8),
                            y=None if Y is None else Y.copy())
    return neg, updated


def run_label_cd(params: ModelParams, V, y_init, k: int, rng,
                 step_token: int | None = None) -> PhaseSamples:
    """Discriminative negative phase: k sweeps of the clamped (z, y) chain
    started at the data labels."""
    if k < 1:
        raise ValueError("CD needs at least one Gibbs step")
    V = np.asarray(V, dtype=np.float64)
    Y = np.asarray(y_init, dtype=np.int64).copy()
    Z = None
    for _ in range(k):
        Z = draw_z(params, V, Y, rng)
        Y = draw_y_given_vz(params, V, Z, rng)
    return PhaseSamples(v=V, z=Z, y=Y, step_token=step_token)


def init_chains(params: ModelParams, n_chains: int, rng,
                labeled: bool = False) -> FantasyChains:
    """Fresh fantasy particles with uniform random visible bits (and labels)."""
    v = (rng.random((n_chains, params.D)) < 0.5).astype(np.uint8)
    y = rng.integers(0, params.C, size=n_chains) if labeled else None
    return FantasyChains(v=v, y=y)
