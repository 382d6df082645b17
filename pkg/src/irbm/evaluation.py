"""Evaluation: exact partition functions for small models, AIS for the rest,
the order-invariance checker, effective-size estimates and classification
metrics.

Everything here reads the model without mutating it. Exact quantities
enumerate all 2^D visible vectors and are guarded by a dimension cap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit, logsumexp

from .model import (
    ModelParams,
    apply_permutation,
    cond_y_given_v,
    free_energy,
    label_log_weights,
    marginal_z_posterior,
    unit_inputs,
    z_posterior,
)
from .sampling import gibbs_sweep
from .training import Gradients, sample_permutation

EXACT_D_CAP = 14


def all_binary_vectors(D: int) -> np.ndarray:
    """All 2^D binary vectors, row index read as a binary number."""
    idx = np.arange(2 ** D, dtype=np.uint32)
    return ((idx[:, None] >> np.arange(D - 1, -1, -1)) & 1).astype(np.float64)


def _require_small(params: ModelParams, cap: int):
    if params.D > cap:
        raise ValueError(f"exact enumeration needs D <= {cap}, model has D={params.D}")


def log_pstar(params: ModelParams, v) -> np.ndarray:
    """log of the unnormalized marginal: sum over z (and classes, for
    labeled models) of e^{-F}. Accepts a batch."""
    V = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if params.has_labels:
        lw = V @ params.b_v[:, None] + label_log_weights(params, V)
        return logsumexp(lw, axis=-1)
    return np.atleast_1d(z_posterior(params, V).log_norm)


def exact_log_partition(params: ModelParams, cap: int = EXACT_D_CAP) -> float:
    """log Z by enumerating every visible vector; the z sum is a finite head
    plus the closed-form geometric tail, and labeled models also sum over y."""
    _require_small(params, cap)
    return float(logsumexp(log_pstar(params, all_binary_vectors(params.D))))


def exact_loglik(params: ModelParams, X, cap: int = EXACT_D_CAP) -> float:
    """Mean log p(v) over a dataset, exactly."""
    log_z = exact_log_partition(params, cap)
    return float(np.mean(log_pstar(params, X))) - log_z


def exact_cond_loglik(params: ModelParams, X, Y) -> float:
    """Mean log p(y | v); needs no partition function."""
    p = cond_y_given_v(params, np.atleast_2d(X))
    n = p.shape[0]
    return float(np.mean(np.log(p[np.arange(n), np.asarray(Y, dtype=np.int64)])))


def exact_visible_distribution(params: ModelParams,
                               cap: int = EXACT_D_CAP) -> np.ndarray:
    """p(v) for every binary vector, indexed by the binary number of v."""
    _require_small(params, cap)
    lp = log_pstar(params, all_binary_vectors(params.D))
    return np.exp(lp - logsumexp(lp))


def exact_generative_gradient(params: ModelParams, X,
                              cap: int = EXACT_D_CAP) -> Gradients:
    """Exact gradient of -mean log p(v) on an enumerable model.

    Both expectations of the free-energy derivative are closed-form: the
    posterior one via p(z >= i | v), the model one by weighting every visible
    vector with its exact probability.
    """
    if params.has_labels:
        raise ValueError("exact generative gradient is for unlabeled models")
    _require_small(params, cap)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))

    def expected_term(V, w):
        A = unit_inputs(params, V)
        Pg = z_posterior(params, V).p_z_geq()[:, :params.l]
        R = (Pg * expit(A)) * w[:, None]
        g = Gradients.zeros(params)
        g.W[:] = -R.T @ V
        g.c[:] = -R.sum(axis=0)
        if params.penalty.mode == "dynamic":
            g.c += (params.penalty.beta * expit(params.c)
                    * (Pg * w[:, None]).sum(axis=0))
        g.b_v[:] = -(V * w[:, None]).sum(axis=0)
        return g

    data = expected_term(X, np.full(X.shape[0], 1.0 / X.shape[0]))
    all_v = all_binary_vectors(params.D)
    model = expected_term(all_v, exact_visible_distribution(params, cap))
    return data.plus(model.scaled(-1.0))


# -- annealed importance sampling -------------------------------------------


@dataclass
class AisResult:
    log_z: float
    std_err: float
    log_weights: np.ndarray

    def within(self, reference: float, n_se: float = 3.0) -> bool:
        return abs(self.log_z - reference) <= n_se * self.std_err


def _interpolated(params: ModelParams, beta_k: float,
                  b_base: np.ndarray) -> ModelParams:
    return ModelParams(
        W=beta_k * params.W,
        b_v=(1.0 - beta_k) * b_base + beta_k * params.b_v,
        c=beta_k * params.c,
        U=None if params.U is None else beta_k * params.U,
        d=None if params.d is None else beta_k * params.d,
        penalty=params.penalty,
    )


def base_log_partition(params: ModelParams, b_base: np.ndarray) -> float:
    """Closed-form log Z of the zero-weight model with visible biases b_base:
    the visible factor times the geometric z series (times C for labels)."""
    out = float(np.sum(np.logaddexp(0.0, b_base)))
    out += params.penalty.log_tail_geometric_sum
    if params.has_labels:
        out += np.log(params.C)
    return out


def ais_log_partition(params: ModelParams, n_temps: int, n_chains: int,
                      rng: np.random.Generator, base_means=None,
                      n_boot: int = 200) -> AisResult:
    """AIS estimate of log Z.

    Anneals from a zero-weight base model (visible biases matched to
    base_means when given) to the target by scaling all coupling parameters
    along a geometric inverse-temperature ladder. Returns the log-mean
    importance weight plus a bootstrap standard error.
    """
    if n_temps < 2:
        raise ValueError("need at least two temperatures")
    if n_chains < 1:
        raise ValueError("need at least one chain")
    if base_means is None:
        b_base = np.zeros(params.D)
    else:
        means = np.clip(np.asarray(base_means, dtype=np.float64), 1e-4, 1 - 1e-4)
        b_base = logit(means)
    betas = np.concatenate([[0.0], np.geomspace(1e-3, 1.0, n_temps - 1)])

    V = (rng.random((n_chains, params.D)) < expit(b_base)).astype(np.float64)
    Y = rng.integers(0, params.C, size=n_chains) if params.has_labels else None

    def lp(V, Y, beta_k):
        m = _interpolated(params, beta_k, b_base)
        if Y is None:
            return log_pstar(m, V)
        lw = V @ m.b_v[:, None] + label_log_weights(m, V)
        return lw[np.arange(V.shape[0]), Y]

    log_w = np.zeros(n_chains)
    prev = lp(V, Y, betas[0])
    for k in range(1, n_temps):
        cur = lp(V, Y, betas[k])
        log_w += cur - prev
        if k < n_temps - 1:
            m = _interpolated(params, betas[k], b_base)
            V, Y, _ = gibbs_sweep(m, V, Y, rng)
            prev = lp(V, Y, betas[k])
        else:
            prev = cur
    if not np.all(np.isfinite(log_w)):
        bad = int(np.sum(~np.isfinite(log_w)))
        raise FloatingPointError(f"{bad}/{n_chains} AIS weights are not finite")

    log_z_base = base_log_partition(params, b_base)
    est = log_z_base + logsumexp(log_w) - np.log(n_chains)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n_chains, size=n_chains)
        boots[b] = logsumexp(log_w[idx]) - np.log(n_chains)
    return AisResult(log_z=float(est), std_err=float(np.std(boots)),
                     log_weights=log_w)


# -- order invariance ---------------------------------------------------------


@dataclass
class InvarianceReport:
    """How close the model is to being order-free over its first M units."""

    m: int
    n_perms: int
    max_log_mass: float          # max_n ln p(z <= M | v_n) over all perms
    mean_log_mass: float
    loglik_spread: float | None  # max - min of exact avg loglik across perms
    per_perm_loglik: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n_perms": self.n_perms,
            "max_log_mass": self.max_log_mass,
            "mean_log_mass": self.mean_log_mass,
            "loglik_spread": self.loglik_spread,
            "per_perm_loglik": list(self.per_perm_loglik),
        }


def check_order_invariance(params: ModelParams, X, m: int, n_perms: int,
                           rng: np.random.Generator,
                           cap: int = EXACT_D_CAP) -> InvarianceReport:
    """Measure ln p(z <= M | v) over the data for random permutations of the
    first M units and, when exact evaluation is affordable, the spread of the
    dataset log-likelihood across those permutations.

    A spread near zero together with very negative masses is the order-free
    regime; a material spread shows the mass condition is necessary.
    """
    if m > params.l:
        raise ValueError("cannot permute more units than are materialized")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    exact_ok = params.D <= cap
    masses = []
    logliks = []
    for _ in range(max(1, n_perms)):
        order = sample_permutation(m, rng)
        pj = apply_permutation(params, order)
        zp = marginal_z_posterior(pj, X)
        masses.append(zp.mass_at_most(m))
        if exact_ok:
            logliks.append(exact_loglik(pj, X, cap))
    masses = np.asarray(masses)
    spread = float(np.max(logliks) - np.min(logliks)) if exact_ok else None
    return InvarianceReport(
        m=m, n_perms=n_perms,
        max_log_mass=float(np.max(masses)),
        mean_log_mass=float(np.mean(masses)),
        loglik_spread=spread,
        per_perm_loglik=[float(v) for v in logliks],
    )


# -- permutation-averaged likelihoods ----------------------------------------


def permutation_averaged_loglik(params: ModelParams, X, n_perms: int,
                                rng: np.random.Generator, m: int | None = None,
                                log_z_fn=None) -> float:
    """Mean over examples of log of the probability-domain average of
    p(v | order) over sampled permutations of the first m units.

    log_z_fn maps a permuted model to its log partition; the default is the
    exact enumeration (so the caller must supply an AIS-backed one for large
    models).
    """
    if log_z_fn is None:
        log_z_fn = exact_log_partition
    m = params.l if m is None else m
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    per_perm = np.empty((max(1, n_perms), X.shape[0]))
    for j in range(max(1, n_perms)):
        order = sample_permutation(m, rng)
        pj = apply_permutation(params, order)
        per_perm[j] = log_pstar(pj, X) - log_z_fn(pj)
    return float(np.mean(logsumexp(per_perm, axis=0) - np.log(per_perm.shape[0])))


def permutation_averaged_condlik(params: ModelParams, X, Y, n_perms: int,
                                 rng: np.random.Generator,
                                 m: int | None = None) -> float:
    """Same averaging for log p(y | v); no partition function involved."""
    m = params.l if m is None else m
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.asarray(Y, dtype=np.int64)
    rows = np.arange(X.shape[0])
    per_perm = np.empty((max(1, n_perms), X.shape[0]))
    for j in range(max(1, n_perms)):
        order = sample_permutation(m, rng)
        pj = apply_permutation(params, order)
        per_perm[j] = np.log(cond_y_given_v(pj, X)[rows, Y])
    return float(np.mean(logsumexp(per_perm, axis=0) - np.log(per_perm.shape[0])))


# -- size estimates and converted-RBM evaluation ------------------------------


def effective_hidden_size(params: ModelParams, X,
                          minibatch_size: int = 100) -> int:
    """Mean over minibatches of the batch maximum of the posterior mode of z
    (support 1..l+1, tail pooled), rounded to an integer."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    modes = marginal_z_posterior(params, X).mode()
    maxima = [int(np.max(modes[s:s + minibatch_size]))
              for s in range(0, X.shape[0], minibatch_size)]
    return int(round(float(np.mean(maxima))))


def converted_rbm_loglik(params: ModelParams, X, n_h: int,
                         cap: int = EXACT_D_CAP) -> float:
    """Evaluate the model as a classic RBM by clamping z = n_h: mean of
    -F(v, n_h) minus the partition restricted to that cutoff. The constant
    penalty sum cancels between the two terms."""
    _require_small(params, cap)
    if n_h < 1:
        raise ValueError("the converted RBM needs at least one unit")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    f_data = free_energy(params, X, n_h)
    f_all = free_energy(params, all_binary_vectors(params.D), n_h)
    return float(np.mean(-f_data) - logsumexp(-f_all))


# -- classification -----------------------------------------------------------


@dataclass
class EvalReport:
    """One evaluation pass, serializable to JSON."""

    avg_loglik: float | None = None
    avg_cond_loglik: float | None = None
    classification_error: float | None = None
    n_h: int | None = None
    z_m_histogram: dict = field(default_factory=dict)
    method: str = "exact"
    log_z: float | None = None
    log_z_std_err: float | None = None
    n_perms: int = 1

    def to_json(self, **extra) -> str:
        payload = {
            "format": "irbm-eval-report",
            "version": 1,
            "avg_loglik": self.avg_loglik,
            "avg_cond_loglik": self.avg_cond_loglik,
            "classification_error": self.classification_error,
            "n_h": self.n_h,
            "z_m_histogram": {str(k): int(v) for k, v in self.z_m_histogram.items()},
            "method": self.method,
            "log_z": self.log_z,
            "log_z_std_err": self.log_z_std_err,
            "n_perms": self.n_perms,
        }
        payload.update(extra)
        return json.dumps(payload, indent=2, sort_keys=True)


def classification_metrics(params: ModelParams, X, Y, n_perms: int = 1,
                           m: int = 0, rng: np.random.Generator | None = None):
    """Predict argmax_y of the permutation-averaged p(y | v) and collect the
    histogram of z_m, the mode of the averaged p(z | v).

    Ties break toward the smaller class / smaller z. With m < 2 or a single
    permutation the average degenerates to the current ordering.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.asarray(Y, dtype=np.int64)
    reps = max(1, n_perms) if m >= 2 else 1
    p_y = None
    p_z = None
    for _ in range(reps):
        order = (sample_permutation(m, rng) if reps > 1 else
                 np.arange(0))
        pj = apply_permutation(params, order)
        py_j = cond_y_given_v(pj, X)
        pz_j = marginal_z_posterior(pj, X).head_probs()
        p_y = py_j if p_y is None else p_y + py_j
        p_z = pz_j if p_z is None else p_z + pz_j
    preds = np.argmax(p_y, axis=1)
    z_m = np.argmax(p_z, axis=1) + 1
    values, counts = np.unique(z_m, return_counts=True)
    hist = {int(v): int(c) for v, c in zip(values, counts)}
    error = float(np.mean(preds != Y))
    return error, preds, z_m, hist


def full_report(params: ModelParams, X, Y=None, n_perms: int = 1, m: int = 0,
                rng: np.random.Generator | None = None,
                cap: int = EXACT_D_CAP, ais_temps: int = 1000,
                ais_chains: int = 100,
                minibatch_size: int = 100) -> EvalReport:
    """Assemble the standard evaluation record for a dataset.

    Picks exact evaluation when every visible vector can be enumerated and
    AIS otherwise; the permutation average is used when m >= 2 and more than
    one permutation is requested.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if rng is None:
        rng = np.random.default_rng(0)
    report = EvalReport(n_perms=n_perms)
    report.n_h = effective_hidden_size(params, X, minibatch_size)
    if params.D <= cap:
        report.method = "exact"
        log_z_fn = exact_log_partition
        report.log_z = exact_log_partition(params, cap)
    else:
        report.method = "ais"

        def log_z_fn(p):
            return ais_log_partition(p, ais_temps, ais_chains, rng,
                                     base_means=X.mean(axis=0)).log_z

        first = ais_log_partition(params, ais_temps, ais_chains, rng,
                                  base_means=X.mean(axis=0))
        report.log_z = first.log_z
        report.log_z_std_err = first.std_err
    if n_perms > 1 and m >= 2:
        report.avg_loglik = permutation_averaged_loglik(
            params, X, n_perms, rng, m=m, log_z_fn=log_z_fn)
    else:
        report.avg_loglik = float(np.mean(log_pstar(params, X))) - report.log_z
    if Y is not None and params.has_labels:
        error, _, _, hist = classification_metrics(params, X, Y, n_perms, m, rng)
        report.classification_error = error
        report.z_m_histogram = hist
        report.avg_cond_loglik = exact_cond_loglik(params, X, Y)
    else:
        z_m = marginal_z_posterior(params, X).mode()
        values, counts = np.unique(z_m, return_counts=True)
        report.z_m_histogram = {int(v): int(c) for v, c in zip(values, counts)}
    return report
