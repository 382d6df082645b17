"""Model parameters and closed-form quantities for (discriminative) iRBMs.

An iRBM has an unbounded ordered pool of binary hidden units. A cutoff
variable z >= 1 selects how many of them enter the energy; each selected unit
pays a penalty beta_i, and with beta > 1 the infinite sum over z converges
because every unit beyond the l materialized ones has zero weights and bias.
All sums over z are therefore a finite head (z = 1..l+1) plus a geometric
tail handled in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

LN2 = float(np.log(2.0))


def softplus(x):
    """log(1 + e^x), stable for large |x|."""
    return np.logaddexp(0.0, x)


@dataclass(frozen=True)
class PenaltyConfig:
    """Per-unit energy penalty.

    mode='dynamic' couples the penalty to the hidden bias, beta*ln(1+e^{c_i});
    mode='constant' fixes it at beta*ln2, the value used for every reported
    experiment. Units beyond the materialized pool always pay beta*ln2.
    """

    beta: float = 1.01
    mode: str = "constant"

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta <= 1.0:
            raise ValueError(f"beta must be finite and > 1, got {self.beta}")
        if self.mode not in ("constant", "dynamic"):
            raise ValueError(f"unknown penalty mode {self.mode!r}")

    @property
    def beta_zero(self) -> float:
        """Penalty of a zero-parameter unit (identical in both modes)."""
        return self.beta * LN2

    @property
    def log_tail_ratio(self) -> float:
        """ln r, where r < 1 is the factor e^{-F(v,z)} shrinks by per extra
        zero-parameter unit: r = exp(ln2 - beta_zero)."""
        return LN2 - self.beta_zero

    @property
    def log_tail_geometric_sum(self) -> float:
        """log(r / (1 - r)) = log sum_{k>=1} r^k."""
        ltr = self.log_tail_ratio
        return ltr - np.log1p(-np.exp(ltr))


@dataclass
class ModelParams:
    """All learnable quantities plus the current capacity l.

    Storage is hidden-unit-major: row i of W (and U) and entry i of c belong
    to hidden unit i, so reordering units is a row shuffle. U and d are only
    present for models with label units.
    """

    W: np.ndarray                       # (l, D) visible-hidden weights
    b_v: np.ndarray                     # (D,) visible biases
    c: np.ndarray                       # (l,) hidden biases
    U: np.ndarray | None = None         # (l, C) label-hidden weights
    d: np.ndarray | None = None         # (C,) label biases
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b_v = np.ascontiguousarray(self.b_v, dtype=np.float64)
        self.c = np.ascontiguousarray(self.c, dtype=np.float64)
        if self.W.ndim != 2:
            raise ValueError("W must be a matrix of shape (l, D)")
        l, D = self.W.shape
        if l < 1:
            raise ValueError("at least one hidden unit must be materialized")
        if self.b_v.shape != (D,):
            raise ValueError(f"b_v has shape {self.b_v.shape}, expected ({D},)")
        if self.c.shape != (l,):
            raise ValueError(f"c has shape {self.c.shape}, expected ({l},)")
        if (self.U is None) != (self.d is None):
            raise ValueError("U and d must be supplied together")
        if self.U is not None:
            self.U = np.ascontiguousarray(self.U, dtype=np.float64)
            self.d = np.ascontiguousarray(self.d, dtype=np.float64)
            if self.U.ndim != 2 or self.U.shape[0] != l:
                raise ValueError(f"U has shape {self.U.shape}, expected ({l}, C)")
            if self.d.shape != (self.U.shape[1],):
                raise ValueError(f"d has shape {self.d.shape}, expected ({self.U.shape[1]},)")

    @property
    def l(self) -> int:
        return self.W.shape[0]

    @property
    def D(self) -> int:
        return self.W.shape[1]

    @property
    def C(self) -> int:
        return 0 if self.U is None else self.U.shape[1]

    @property
    def has_labels(self) -> bool:
        return self.U is not None

    def unit_penalties(self) -> np.ndarray:
        """beta_i for the l materialized units."""
        if self.penalty.mode == "dynamic":
            return self.penalty.beta * softplus(self.c)
        return np.full(self.l, self.penalty.beta_zero)

    def copy(self) -> "ModelParams":
        return ModelParams(
            W=self.W.copy(),
            b_v=self.b_v.copy(),
            c=self.c.copy(),
            U=None if self.U is None else self.U.copy(),
            d=None if self.d is None else self.d.copy(),
            penalty=self.penalty,
        )

    def check_finite(self):
        for name in ("W", "b_v", "c", "U", "d"):
            arr = getattr(self, name)
            if arr is not None and not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite entries in {name}")


def zero_model(D: int, C: int = 0, beta: float = 1.01,
               penalty_mode: str = "constant") -> ModelParams:
    """Fresh model with a single all-zero hidden unit (the training start)."""
    U = np.zeros((1, C)) if C else None
    d = np.zeros(C) if C else None
    return ModelParams(W=np.zeros((1, D)), b_v=np.zeros(D), c=np.zeros(1),
                       U=U, d=d, penalty=PenaltyConfig(beta=beta, mode=penalty_mode))


def _as_batch(v) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        return v[None, :], True
    return v, False


def _label_array(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.ndim == 0:
        y = np.full(n, int(y))
    return y


def unit_inputs(params: ModelParams, v, y=None) -> np.ndarray:
    """Total input W_i.v (+ U_i.e_y) + c_i of each materialized unit.

    v may be one vector or a batch (n, D); returns (l,) or (n, l).
    """
    V, single = _as_batch(v)
    if V.shape[1] != params.D:
        raise ValueError(f"visible vector has length {V.shape[1]}, model D={params.D}")
    A = V @ params.W.T + params.c
    if y is not None:
        if not params.has_labels:
            raise ValueError("model has no label weights")
        Y = _label_array(y, V.shape[0])
        A = A + params.U[:, Y].T
    return A[0] if single else A


def cumulative_unit_terms(params: ModelParams, v, y=None) -> np.ndarray:
    """Cumulative sum over units of softplus(input_i) - beta_i, for
    z = 1..l+1. The last entry appends one zero-parameter unit, whose term is
    ln2 - beta_zero. -F(v, z) is this plus the z-independent bias terms.
    """
    A = unit_inputs(params, v, y)
    T = softplus(A) - params.unit_penalties()
    cum = np.cumsum(T, axis=-1)
    last = cum[..., -1:] + params.penalty.log_tail_ratio
    return np.concatenate([cum, last], axis=-1)


def energy(params: ModelParams, v, h, z: int, y=None) -> float:
    """Joint energy of (v, h, z) (and a label, when given).

    Units i <= z contribute -h_i * input_i plus the penalty beta_i; units
    beyond the materialized pool enter with zero weights and penalty
    beta*ln2. The caller must supply h_i = 0 for every i > z.
    """
    if z < 1:
        raise ValueError("z must be >= 1")
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if v.shape != (params.D,):
        raise ValueError(f"v has shape {v.shape}, model D={params.D}")
    if h.ndim != 1:
        raise ValueError("h must be a vector")
    if np.any(h[z:] != 0):
        raise ValueError(f"h must be zero beyond index z={z}")
    l = params.l
    a = unit_inputs(params, v, y)
    m = min(z, l)
    e = -float(v @ params.b_v)
    if y is not None:
        e -= float(params.d[int(y)])
    e -= float(h[:m] @ a[:m])
    pen = params.unit_penalties()
    e += float(np.sum(pen[:m]))
    if z > l:
        e += (z - l) * params.penalty.beta_zero
    return e


def free_energy(params: ModelParams, v, z: int, y=None):
    """-log sum_{h in H_z} e^{-E(v, h, z)}; the label variant includes the
    label bias. For z beyond the pool each extra unit adds beta_zero - ln2.
    """
    if z < 1:
        raise ValueError("z must be >= 1")
    V, single = _as_batch(v)
    cum = cumulative_unit_terms(params, V, y)
    l = params.l
    base = V @ params.b_v
    if y is not None:
        Y = _label_array(y, V.shape[0])
        base = base + params.d[Y]
    if z <= l:
        s = cum[:, z - 1]
    else:
        s = cum[:, l - 1] + (z - l) * params.penalty.log_tail_ratio
    F = -(base + s)
    return float(F[0]) if single else F


def g_energy(params: ModelParams, v, z: int, y):
    """Label-conditional free energy: free_energy(v, y, z) with the visible
    bias term dropped (it cancels in every conditional given v)."""
    F = free_energy(params, v, z, y)
    V, single = _as_batch(v)
    vb = V @ params.b_v
    G = F + (float(vb[0]) if single else vb)
    return G


@dataclass
class ZPosterior:
    """Posterior over the cutoff z given v (and optionally a label).

    head_log_weights[..., k] is log e^{-F(v, z=k+1)} for z = 1..l+1;
    tail_log_mass is the closed-form log of sum_{z > l+1} e^{-F(v, z)},
    a geometric series with ratio r = exp(ln2 - beta_zero) < 1.
    Arrays may carry a leading batch dimension.
    """

    head_log_weights: np.ndarray     # (..., l+1)
    tail_log_mass: np.ndarray        # (...)
    log_norm: np.ndarray             # (...)

    @property
    def support(self) -> int:
        """Largest head value of z, i.e. l+1."""
        return self.head_log_weights.shape[-1]

    def head_probs(self) -> np.ndarray:
        return np.exp(self.head_log_weights - self.log_norm[..., None])

    def tail_prob(self) -> np.ndarray:
        return np.exp(self.tail_log_mass - self.log_norm)

    def clamped_probs(self) -> np.ndarray:
        """Distribution over z = 1..l+1 with the tail mass pooled at l+1,
        matching the clamp rule used by every sampler."""
        p = self.head_probs()
        p[..., -1] += self.tail_prob()
        return p

    def p_z_geq(self) -> np.ndarray:
        """p(z >= i | .) for i = 1..l+1, accumulated in the log domain."""
        logw = np.concatenate(
            [self.head_log_weights, self.tail_log_mass[..., None]], axis=-1)
        suffix = np.logaddexp.accumulate(logw[..., ::-1], axis=-1)[..., ::-1]
        return np.exp(suffix[..., :-1] - self.log_norm[..., None])

    def mass_at_most(self, m: int) -> np.ndarray:
        """log p(z <= m | .) for m within the head support l+1 (regroup
        lengths never exceed l). m = 0 gives -inf."""
        if m <= 0:
            return np.full(self.log_norm.shape, -np.inf)
        if m > self.support:
            raise ValueError(f"m must be <= {self.support}")
        return logsumexp(self.head_log_weights[..., :m], axis=-1) - self.log_norm

    def mode(self, pool_tail: bool = False) -> np.ndarray:
        """argmax_z p(z | .) over the head support 1..l+1, ties toward the
        smaller z. With pool_tail the mass beyond l+1 is folded into the last
        bin first (the convention of the regroup statistic)."""
        probs = self.clamped_probs() if pool_tail else self.head_probs()
        return np.argmax(probs, axis=-1) + 1

    def sample(self, rng: np.random.Generator):
        """Draw z from the full posterior; tail draws land at l+1."""
        p = self.clamped_probs()
        cdf = np.cumsum(p, axis=-1)
        if cdf.ndim == 1:
            u = rng.random() * cdf[-1]
            return int(np.searchsorted(cdf, u, side="right")) + 1
        u = rng.random(cdf.shape[0]) * cdf[:, -1]
        idx = (u[:, None] >= cdf).sum(axis=1)
        return np.minimum(idx, self.support - 1) + 1


def z_posterior(params: ModelParams, v, y=None) -> ZPosterior:
    """Posterior over z given one visible vector or a batch.

    With a label (scalar or per-row array) this is the posterior given
    (v, y); the geometric tail is always included in the normalization.
    """
    V, single = _as_batch(v)
    cum = cumulative_unit_terms(params, V, y)
    base = V @ params.b_v
    if y is not None:
        Y = _label_array(y, V.shape[0])
        base = base + params.d[Y]
    head = base[:, None] + cum
    tail = head[:, -1] + params.penalty.log_tail_geometric_sum
    log_norm = np.logaddexp(logsumexp(head, axis=-1), tail)
    if single:
        return ZPosterior(head[0], tail[0], log_norm[0])
    return ZPosterior(head, tail, log_norm)


def cond_h_given_vz(params: ModelParams, v, z: int, y=None,
                    length: int | None = None) -> np.ndarray:
    """Bernoulli means of the first z hidden units given (v, z) (and a label).

    Entries beyond the materialized pool (possible only for z = l+1) have
    zero parameters, hence mean 1/2. With `length` > z the result is padded
    with zeros: units above the cutoff are never active.
    """
    if z < 1:
        raise ValueError("z must be >= 1")
    n = length if length is not None else z
    if n < z:
        raise ValueError("length must be >= z")
    a = unit_inputs(params, v, y)
    means = np.zeros(n)
    m = min(z, params.l)
    means[:m] = expit(a[:m])
    if z > params.l:
        means[params.l:z] = 0.5
    return means


def cond_v_given_hz(params: ModelParams, h, z: int) -> np.ndarray:
    """Bernoulli means of the visible units given the first z hidden ones."""
    if z < 1:
        raise ValueError("z must be >= 1")
    h = np.asarray(h, dtype=np.float64)
    m = min(z, params.l)
    act = params.b_v + h[:m] @ params.W[:m]
    return expit(act)


def cond_y_given_hz(params: ModelParams, h, z: int) -> np.ndarray:
    """Class probabilities given the first z hidden units."""
    if not params.has_labels:
        raise ValueError("model has no label weights")
    h = np.asarray(h, dtype=np.float64)
    m = min(z, params.l)
    logits = params.d + h[:m] @ params.U[:m]
    logits = logits - logits.max()
    p = np.exp(logits)
    return p / p.sum()


def label_joint_log_weights(params: ModelParams, V) -> tuple[np.ndarray, np.ndarray]:
    """Per-class unnormalized z weights for a batch.

    Returns (logw, tail) with logw[n, y, k] = log e^{-G(y, z=k+1 | v_n)} for
    z = 1..l+1 and tail[n, y] = log sum_{z > l+1} e^{-G(y, z | v_n)}.
    """
    if not params.has_labels:
        raise ValueError("model has no label weights")
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] != params.D:
        raise ValueError(f"V has shape {V.shape}, expected (n, {params.D})")
    base = V @ params.W.T + params.c                 # (n, l)
    A = base[:, None, :] + params.U.T[None, :, :]    # (n, C, l)
    T = softplus(A) - params.unit_penalties()
    cum = np.cumsum(T, axis=-1)
    ltr = params.penalty.log_tail_ratio
    headplus = np.concatenate([cum, cum[..., -1:] + ltr], axis=-1)  # z = 1..l+1
    logw = params.d[None, :, None] + headplus
    tail = logw[..., -1] + params.penalty.log_tail_geometric_sum
    return logw, tail


def label_log_weights(params: ModelParams, v) -> np.ndarray:
    """log sum_z e^{-G(y, z | v)} for every class, i.e. -F(y | v).

    Computed with per-class cumulative sums over the materialized units plus
    the analytic tail, costing O(l D + l C) per example. v may be a batch;
    the result is (C,) or (n, C).
    """
    V, single = _as_batch(v)
    logw, tail = label_joint_log_weights(params, V)
    out = np.logaddexp(logsumexp(logw, axis=-1), tail)
    return out[0] if single else out


def cond_y_given_v(params: ModelParams, v) -> np.ndarray:
    """p(y | v) over all classes, summing the full z support per class."""
    lw = label_log_weights(params, v)
    lw = lw - logsumexp(lw, axis=-1, keepdims=True)
    return np.exp(lw)


def marginal_z_posterior(params: ModelParams, v) -> ZPosterior:
    """p(z | v) regardless of labels: for labeled models the classes are
    summed out; otherwise this is the plain posterior."""
    if not params.has_labels:
        return z_posterior(params, v)
    V, single = _as_batch(v)
    logw, tail = label_joint_log_weights(params, V)
    head = logsumexp(logw, axis=1)              # (n, l+1)
    tail = logsumexp(tail, axis=1)              # (n,)
    log_norm = np.logaddexp(logsumexp(head, axis=-1), tail)
    if single:
        return ZPosterior(head[0], tail[0], log_norm[0])
    return ZPosterior(head, tail, log_norm)


def cond_y_given_vz(params: ModelParams, v, z: int) -> np.ndarray:
    """p(y | v, z), the label conditional at a fixed cutoff."""
    if not params.has_labels:
        raise ValueError("model has no label weights")
    if z < 1:
        raise ValueError("z must be >= 1")
    v = np.asarray(v, dtype=np.float64)
    m = min(z, params.l)
    base = params.W[:m] @ v + params.c[:m]          # (m,)
    A = base[:, None] + params.U[:m]                # (m, C)
    pen = params.unit_penalties()[:m]
    logits = params.d + np.sum(softplus(A) - pen[:, None], axis=0)
    logits = logits - logits.max()
    p = np.exp(logits)
    return p / p.sum()


def marginal_h_prob(params: ModelParams, v, unit: int) -> float:
    """p(h_unit = 1 | v) for the 1-based unit index: the unit's own sigmoid
    activation damped by p(z >= unit | v)."""
    if not 1 <= unit <= params.l:
        raise ValueError(f"unit must be in 1..{params.l}")
    a = unit_inputs(params, v)
    zp = z_posterior(params, v)
    return float(expit(a[unit - 1]) * zp.p_z_geq()[unit - 1])


@dataclass
class OrderingDiagnostic:
    """Per-unit view of how the left-to-right ordering gates activations."""

    activation: np.ndarray       # (l,) sigmoid(input_i)
    p_z_geq: np.ndarray          # (l,) p(z >= i | v)
    marginal: np.ndarray         # (l,) product of the two
    p_z_at_pool: float           # p(z = l | v)
    tail_prob: float             # p(z > l | v)


def ordering_diagnostic(params: ModelParams, v) -> OrderingDiagnostic:
    a = unit_inputs(params, v)
    zp = z_posterior(params, v)
    act = expit(a)
    geq = zp.p_z_geq()[:params.l]
    head = zp.head_probs()
    return OrderingDiagnostic(
        activation=act,
        p_z_geq=geq,
        marginal=act * geq,
        p_z_at_pool=float(head[params.l - 1]),
        tail_prob=float(head[params.l] + zp.tail_prob()),
    )


def check_permutation(order, max_len: int) -> np.ndarray:
    order = np.asarray(order, dtype=np.int64)
    m = order.shape[0]
    if m > max_len:
        raise ValueError(f"permutation length {m} exceeds pool size {max_len}")
    if m and (np.sort(order) != np.arange(m)).any():
        raise ValueError("order must be a bijection on 0..M-1")
    return order


def apply_permutation(params: ModelParams, order) -> ModelParams:
    """Reorder the first M hidden units (rows of W, U and entries of c) by
    `order`; everything attached to the visible or label side is untouched.

    `order` is a 0-based permutation of 0..M-1 with M <= l: new unit k is old
    unit order[k]. The inverse reordering is argsort(order).
    """
    order = check_permutation(order, params.l)
    out = params.copy()
    m = order.shape[0]
    if m:
        out.W[:m] = params.W[order]
        out.c[:m] = params.c[order]
        if params.has_labels:
            out.U[:m] = params.U[order]
    return out
