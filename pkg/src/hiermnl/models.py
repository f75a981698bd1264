"""Parameter layouts, priors, likelihoods, and gradients for the three models.

MNL
    Flat multinomial logit. Class j gets probability proportional to
    exp(alpha_j + x @ beta_j). One intercept sd tau0 governs all alpha_j,
    one sd tau governs all coefficients.

treeMNL
    One small multinomial logit per internal hierarchy node, predicting
    which child branch a case follows. Node models are parameter-disjoint
    and the class probability is the product of node-level probabilities
    along the root-to-leaf path. Each node m has its own coefficient sd
    tau_m; a single tau0 governs every node's intercepts.

corMNL
    Flat multinomial logit whose effective coefficient vector for class j
    is the sum of per-branch vectors phi over the branches on j's path.
    Branches leaving node m share the sd tau_m, which correlates the
    coefficients of classes that share ancestry.

All coefficient priors are zero-mean normals. The sd hyperparameters get
Gamma priors on the precision scale: tau^-2 ~ Gamma(a, b) with density
f(x|a,b) = x^(a-1) exp(-x/b) / (b^a Gamma(a)), mean a*b, sd sqrt(a)*b.
With automatic relevance determination (ARD) active, a per-covariate
scale sigma_l multiplies the sd of every coefficient that touches x_l,
in every model; intercepts are never ARD-scaled.

The redundant parameterization with one coefficient column per class is
kept on purpose (no reference class is pinned to zero) so that the prior
treats all classes symmetrically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import special

from hiermnl.hierarchy import ClassHierarchy

if TYPE_CHECKING:
    from hiermnl.datagen import Dataset

__all__ = [
    "GammaPrior",
    "MnlPriors",
    "HierPriors",
    "MnlState",
    "CorMnlState",
    "TreeMnlState",
    "MODEL_KINDS",
    "softmax_probs",
    "cormnl_effective_beta",
    "treemnl_leaf_probs",
    "class_probs_matrix",
    "log_likelihood",
    "log_posterior_and_gradient",
    "gamma_tau_percentiles",
    "gamma_tau_cdf",
    "initial_state",
    "pack_locations",
    "unpack_locations",
    "location_prior_sds",
]

MODEL_KINDS = ("mnl", "treemnl", "cormnl")


@dataclass(frozen=True)
class GammaPrior:
    """Gamma prior in shape-scale form, placed on a precision tau^-2.

    Density f(x | a, b) = x^(a-1) exp(-x/b) / (b^a Gamma(a)), so the mean
    is a*b and the sd is sqrt(a)*b. Note that b is a scale, not a rate.
    """

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"Gamma prior needs a > 0 and b > 0, got {self}")

    def median_tau(self) -> float:
        """The sd value tau whose precision sits at the prior median."""
        return float(gamma_tau_percentiles(self, [0.5])[0])

    def draw_tau(self, rng: np.random.Generator) -> float:
        """Draw a precision from the prior and return the implied sd."""
        lam = rng.gamma(self.a, self.b)
        return float(lam) ** -0.5


@dataclass(frozen=True)
class MnlPriors:
    """Hyperparameter priors for the flat MNL model.

    ``intercept`` governs tau0^-2, ``coefficient`` governs tau^-2, and
    ``ard`` (optional) governs each per-covariate sigma_l^-2.
    """

    intercept: GammaPrior
    coefficient: GammaPrior
    ard: GammaPrior | None = None


@dataclass(frozen=True)
class HierPriors:
    """Hyperparameter priors for treeMNL and corMNL.

    ``nodes[m]`` governs tau_m^-2 of internal node m (index order).
    """

    intercept: GammaPrior
    nodes: tuple[GammaPrior, ...]
    ard: GammaPrior | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @staticmethod
    def by_level(
        h: ClassHierarchy,
        intercept: GammaPrior,
        levels,
        ard: GammaPrior | None = None,
    ) -> "HierPriors":
        """Assign node priors by depth: a node at depth d gets levels[d],
        with the last entry reused for any deeper node."""
        levels = list(levels)
        if not levels:
            raise ValueError("need at least one level prior")
        nodes = tuple(
            levels[min(h.node_depth(m), len(levels) - 1)] for m in range(h.n_internal)
        )
        return HierPriors(intercept, nodes, ard)

    @staticmethod
    def uniform(
        h: ClassHierarchy,
        intercept: GammaPrior,
        node: GammaPrior,
        ard: GammaPrior | None = None,
    ) -> "HierPriors":
        """The same prior for every internal node."""
        return HierPriors(intercept, (node,) * h.n_internal, ard)


@dataclass
class MnlState:
    """Flat MNL parameters: alpha (c,), beta (p, c), sds tau0 and tau."""

    alpha: np.ndarray
    beta: np.ndarray
    tau0: float
    tau: float
    sigma: np.ndarray | None = None

    def copy(self) -> "MnlState":
        return MnlState(
            self.alpha.copy(),
            self.beta.copy(),
            self.tau0,
            self.tau,
            None if self.sigma is None else self.sigma.copy(),
        )


@dataclass
class CorMnlState:
    """corMNL parameters: alpha (c,), phi (B, p), tau0, per-node tau (M,)."""

    alpha: np.ndarray
    phi: np.ndarray
    tau0: float
    tau: np.ndarray
    sigma: np.ndarray | None = None

    def copy(self) -> "CorMnlState":
        return CorMnlState(
            self.alpha.copy(),
            self.phi.copy(),
            self.tau0,
            self.tau.copy(),
            None if self.sigma is None else self.sigma.copy(),
        )


@dataclass
class TreeMnlState:
    """treeMNL parameters: per node m, alpha[m] (c_m,) and beta[m] (p, c_m).

    tau0 is shared by every node's intercepts; tau[m] is node m's
    coefficient sd.
    """

    alpha: list[np.ndarray]
    beta: list[np.ndarray]
    tau0: float
    tau: np.ndarray
    sigma: np.ndarray | None = None

    def copy(self) -> "TreeMnlState":
        return TreeMnlState(
            [a.copy() for a in self.alpha],
            [b.copy() for b in self.beta],
            self.tau0,
            self.tau.copy(),
            None if self.sigma is None else self.sigma.copy(),
        )


# ---------------------------------------------------------------------------
# Probabilities and likelihoods
# ---------------------------------------------------------------------------


def _check_finite(arr, what: str):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite values in {what}")


def softmax_probs(alpha: np.ndarray, beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Class probabilities exp(alpha_j + x @ beta_j) / sum_j' exp(...).

    Computed with max subtraction so large logits cannot overflow.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    x = np.asarray(x, dtype=float)
    if beta.shape != (x.shape[0], alpha.shape[0]):
        raise ValueError(
            f"dimension mismatch: alpha {alpha.shape}, beta {beta.shape}, x {x.shape}"
        )
    _check_finite(alpha, "alpha")
    _check_finite(beta, "beta")
    _check_finite(x, "x")
    logits = alpha + x @ beta
    z = np.exp(logits - logits.max())
    return z / z.sum()


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def _log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=1, keepdims=True))


def cormnl_effective_beta(state: CorMnlState, h: ClassHierarchy) -> np.ndarray:
    """The (p, c) coefficient matrix implied by the branch vectors.

    Column j is the sum of phi rows over the branches on class j's path,
    so corMNL predictive probabilities are softmax_probs on this matrix.
    """
    phi = np.asarray(state.phi, dtype=float)
    if phi.shape[0] != h.n_branches:
        raise ValueError(
            f"state has {phi.shape[0]} branch vectors, hierarchy has {h.n_branches} branches"
        )
    return phi.T @ h.path_matrix()


def treemnl_leaf_probs(state: TreeMnlState, h: ClassHierarchy, x: np.ndarray) -> np.ndarray:
    """Leaf probabilities: the product of node-level softmax terms along each path."""
    x = np.asarray(x, dtype=float)
    out = treemnl_probs_matrix(state, h, x[None, :])
    return out[0]


def treemnl_probs_matrix(state: TreeMnlState, h: ClassHierarchy, X: np.ndarray) -> np.ndarray:
    """Row-wise treeMNL class probabilities for a whole design matrix."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    logp = np.zeros((n, h.n_classes))
    for m in range(h.n_internal):
        alpha = state.alpha[m]
        beta = state.beta[m]
        if beta.shape != (X.shape[1], alpha.shape[0]):
            raise ValueError(f"node {m}: dimension mismatch")
        lsm = _log_softmax_rows(alpha + X @ beta)
        for k, classes in enumerate(h.slot_classes(m)):
            logp[:, list(classes)] += lsm[:, [k]]
    return np.exp(logp)


def class_probs_matrix(state, h: ClassHierarchy, X: np.ndarray) -> np.ndarray:
    """Class-probability matrix (n, c) for any of the three model states."""
    X = np.asarray(X, dtype=float)
    if isinstance(state, MnlState):
        return _softmax_rows(state.alpha + X @ state.beta)
    if isinstance(state, CorMnlState):
        return _softmax_rows(state.alpha + X @ cormnl_effective_beta(state, h))
    if isinstance(state, TreeMnlState):
        return treemnl_probs_matrix(state, h, X)
    raise TypeError(f"not a model state: {type(state).__name__}")


def encode_labels(h: ClassHierarchy, y) -> np.ndarray:
    """Map class labels to class indices; unknown labels raise."""
    return np.array([h.class_index(str(lab)) for lab in y], dtype=np.intp)


def _class_slot_table(h: ClassHierarchy) -> list[np.ndarray]:
    """Per node m, an array mapping class index -> child slot (or -1 if the
    class does not pass through m)."""
    tables = []
    for m in range(h.n_internal):
        table = np.full(h.n_classes, -1, dtype=np.intp)
        for k, classes in enumerate(h.slot_classes(m)):
            table[list(classes)] = k
        tables.append(table)
    return tables


def _mnl_loglik(alpha, beta, X, y_idx) -> float:
    logits = alpha + X @ beta
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return float((logits[np.arange(len(y_idx)), y_idx] - lse).sum())


def log_likelihood(state, h: ClassHierarchy, data: "Dataset") -> float:
    """Sum over cases of the log probability of the observed class.

    For treeMNL this decomposes into independent per-node terms over the
    cases routed through each node; the sum over nodes is returned.
    """
    X = np.asarray(data.X, dtype=float)
    y_idx = encode_labels(h, data.y)
    if isinstance(state, MnlState):
        value = _mnl_loglik(state.alpha, state.beta, X, y_idx)
    elif isinstance(state, CorMnlState):
        value = _mnl_loglik(state.alpha, cormnl_effective_beta(state, h), X, y_idx)
    elif isinstance(state, TreeMnlState):
        value = 0.0
        for m, slots in enumerate(_class_slot_table(h)):
            local = slots[y_idx]
            rows = local >= 0
            if not rows.any():
                continue
            value += _mnl_loglik(state.alpha[m], state.beta[m], X[rows], local[rows])
    else:
        raise TypeError(f"not a model state: {type(state).__name__}")
    if not math.isfinite(value):
        raise ValueError("non-finite log-likelihood")
    return value


# ---------------------------------------------------------------------------
# Flat location-parameter view (for HMC and serialization)
# ---------------------------------------------------------------------------


def pack_locations(state) -> np.ndarray:
    """Concatenate all location parameters into one vector.

    Layout: MNL and corMNL put alpha first, then beta (or phi) raveled in
    C order. treeMNL concatenates per-node blocks (alpha_m, then beta_m)
    in node index order.
    """
    if isinstance(state, (MnlState,)):
        return np.concatenate([state.alpha, state.beta.ravel()])
    if isinstance(state, CorMnlState):
        return np.concatenate([state.alpha, state.phi.ravel()])
    if isinstance(state, TreeMnlState):
        parts = []
        for a, b in zip(state.alpha, state.beta):
            parts.append(a)
            parts.append(b.ravel())
        return np.concatenate(parts)
    raise TypeError(f"not a model state: {type(state).__name__}")


def unpack_locations(state, vector: np.ndarray):
    """Inverse of :func:`pack_locations`: a copy of ``state`` with the
    location parameters replaced by ``vector``."""
    vector = np.asarray(vector, dtype=float)
    out = state.copy()
    if isinstance(state, MnlState):
        c = state.alpha.shape[0]
        out.alpha = vector[:c].copy()
        out.beta = vector[c:].reshape(state.beta.shape).copy()
        return out
    if isinstance(state, CorMnlState):
        c = state.alpha.shape[0]
        out.alpha = vector[:c].copy()
        out.phi = vector[c:].reshape(state.phi.shape).copy()
        return out
    if isinstance(state, TreeMnlState):
        pos = 0
        for m in range(len(state.alpha)):
            cm = state.alpha[m].shape[0]
            out.alpha[m] = vector[pos : pos + cm].copy()
            pos += cm
            size = state.beta[m].size
            out.beta[m] = vector[pos : pos + size].reshape(state.beta[m].shape).copy()
            pos += size
        return out
    raise TypeError(f"not a model state: {type(state).__name__}")


def location_prior_sds(state, h: ClassHierarchy) -> np.ndarray:
    """Prior sd of each packed location parameter, aligned with pack_locations.

    Intercepts get tau0. MNL coefficients get tau, corMNL branch
    components get the tau of the branch's parent node, treeMNL node
    coefficients get that node's tau. With ARD, coefficient sds are
    multiplied by the sigma_l of their covariate.
    """
    if isinstance(state, MnlState):
        p, c = state.beta.shape
        scale = state.tau * (state.sigma if state.sigma is not None else np.ones(p))
        return np.concatenate([np.full(c, state.tau0), np.repeat(scale, c)])
    if isinstance(state, CorMnlState):
        B, p = state.phi.shape
        node_of = np.array([br.parent for br in h.branches])
        sigma = state.sigma if state.sigma is not None else np.ones(p)
        phi_sds = np.repeat(state.tau[node_of], p) * np.tile(sigma, B)
        return np.concatenate([np.full(state.alpha.shape[0], state.tau0), phi_sds])
    if isinstance(state, TreeMnlState):
        parts = []
        for m in range(len(state.alpha)):
            cm = state.alpha[m].shape[0]
            p = state.beta[m].shape[0]
            sigma = state.sigma if state.sigma is not None else np.ones(p)
            parts.append(np.full(cm, state.tau0))
            parts.append(np.repeat(state.tau[m] * sigma, cm))
        return np.concatenate(parts)
    raise TypeError(f"not a model state: {type(state).__name__}")


def log_posterior_and_gradient(state, h: ClassHierarchy, data: "Dataset", priors):
    """Log posterior over location parameters with hyperparameters fixed.

    Returns (value, gradient) where the gradient is aligned with
    :func:`pack_locations`. The value is log-likelihood plus the sum of
    normal log-densities of every location parameter; tau and sigma
    contribute only through the (fixed) prior sds, so the gradient covers
    location parameters only.
    """
    X = np.asarray(data.X, dtype=float)
    y_idx = encode_labels(h, data.y)
    n = X.shape[0]

    if isinstance(state, MnlState):
        ll, d_alpha, d_beta = _mnl_ll_grad(state.alpha, state.beta, X, y_idx)
        grad = np.concatenate([d_alpha, d_beta.ravel()])
    elif isinstance(state, CorMnlState):
        eff = cormnl_effective_beta(state, h)
        ll, d_alpha, d_eff = _mnl_ll_grad(state.alpha, eff, X, y_idx)
        d_phi = h.path_matrix() @ d_eff.T
        grad = np.concatenate([d_alpha, d_phi.ravel()])
    elif isinstance(state, TreeMnlState):
        ll = 0.0
        parts = []
        for m, slots in enumerate(_class_slot_table(h)):
            local = slots[y_idx]
            rows = local >= 0
            if rows.any():
                ll_m, d_a, d_b = _mnl_ll_grad(
                    state.alpha[m], state.beta[m], X[rows], local[rows]
                )
            else:
                ll_m = 0.0
                d_a = np.zeros_like(state.alpha[m])
                d_b = np.zeros_like(state.beta[m])
            ll += ll_m
            parts.append(d_a)
            parts.append(d_b.ravel())
        grad = np.concatenate(parts)
    else:
        raise TypeError(f"not a model state: {type(state).__name__}")

    theta = pack_locations(state)
    sds = location_prior_sds(state, h)
    value = (
        ll
        - 0.5 * float(np.sum((theta / sds) ** 2))
        - float(np.sum(np.log(sds)))
        - 0.5 * theta.size * math.log(2.0 * math.pi)
    )
    grad = grad - theta / sds**2
    if not (math.isfinite(value) and np.all(np.isfinite(grad))):
        raise ValueError("non-finite log posterior or gradient")
    return value, grad


def _mnl_ll_grad(alpha, beta, X, y_idx):
    logits = alpha + X @ beta
    m = logits.max(axis=1)
    e = np.exp(logits - m[:, None])
    z = e.sum(axis=1)
    rows = np.arange(len(y_idx))
    ll = float((logits[rows, y_idx] - m - np.log(z)).sum())
    g = -e / z[:, None]
    g[rows, y_idx] += 1.0
    return ll, g.sum(axis=0), X.T @ g


# ---------------------------------------------------------------------------
# Gamma prior utilities and initialization
# ---------------------------------------------------------------------------


def gamma_tau_percentiles(prior: GammaPrior, q) -> np.ndarray:
    """Quantiles of the sd tau when tau^-2 ~ Gamma(a, b).

    The q-quantile of tau is (b * P^-1(a, 1-q))^(-1/2) where P^-1 is the
    inverse of the regularized lower incomplete gamma function, because
    tau is a decreasing function of the precision.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0.0) or np.any(q >= 1.0):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    lam = prior.b * special.gammaincinv(prior.a, 1.0 - q)
    return lam**-0.5


def gamma_tau_cdf(prior: GammaPrior, t) -> np.ndarray:
    """P(tau <= t) when tau^-2 ~ Gamma(a, b); the complement of the
    regularized gamma CDF evaluated at t^-2 / b."""
    t = np.asarray(t, dtype=float)
    return special.gammaincc(prior.a, 1.0 / (t**2 * prior.b))


def initial_state(kind: str, h: ClassHierarchy, p: int, priors):
    """Deterministic chain start: all location parameters 0, every sd at
    its prior median."""
    if kind == "mnl":
        if not isinstance(priors, MnlPriors):
            raise TypeError("mnl expects MnlPriors")
        sigma = None
        if priors.ard is not None:
            sigma = np.full(p, priors.ard.median_tau())
        return MnlState(
            alpha=np.zeros(h.n_classes),
            beta=np.zeros((p, h.n_classes)),
            tau0=priors.intercept.median_tau(),
            tau=priors.coefficient.median_tau(),
            sigma=sigma,
        )
    if kind == "cormnl":
        _expect_hier_priors(h, priors)
        sigma = None
        if priors.ard is not None:
            sigma = np.full(p, priors.ard.median_tau())
        return CorMnlState(
            alpha=np.zeros(h.n_classes),
            phi=np.zeros((h.n_branches, p)),
            tau0=priors.intercept.median_tau(),
            tau=np.array([g.median_tau() for g in priors.nodes]),
            sigma=sigma,
        )
    if kind == "treemnl":
        _expect_hier_priors(h, priors)
        sigma = None
        if priors.ard is not None:
            sigma = np.full(p, priors.ard.median_tau())
        return TreeMnlState(
            alpha=[np.zeros(h.n_children(m)) for m in range(h.n_internal)],
            beta=[np.zeros((p, h.n_children(m))) for m in range(h.n_internal)],
            tau0=priors.intercept.median_tau(),
            tau=np.array([g.median_tau() for g in priors.nodes]),
            sigma=sigma,
        )
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def _expect_hier_priors(h: ClassHierarchy, priors):
    if not isinstance(priors, HierPriors):
        raise TypeError("hierarchical models expect HierPriors")
    if len(priors.nodes) != h.n_internal:
        raise ValueError(
            f"priors cover {len(priors.nodes)} nodes, hierarchy has {h.n_internal}"
        )
