"""Posterior simulation: update schedules, chains, prediction, serialization.

One iteration is one coefficient update (a full slice sweep over every
location parameter, or one HMC trajectory) followed by one pass over all
variance hyperparameters (conjugate Gibbs draws, or slice updates on the
log scale). States from iterations past the burn-in are retained along
with aligned diagnostics.

treeMNL is fitted as independent node models: each internal node's block
is updated on exactly the training cases routed through that node, with
its own random substream, so the result does not depend on the order in
which node blocks are scheduled. The single intercept sd tau0 is shared
across nodes and updated from all intercepts pooled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from hiermnl import models as _m
from hiermnl.hierarchy import ClassHierarchy, parse_hierarchy
from hiermnl.models import (
    CorMnlState,
    GammaPrior,
    HierPriors,
    MnlPriors,
    MnlState,
    TreeMnlState,
)
from hiermnl.samplers import (
    HmcConfig,
    RngStream,
    SliceConfig,
    gibbs_precision_update,
    hmc_update,
    slice_precision_update,
    slice_update,
)

__all__ = [
    "FitConfig",
    "PosteriorChain",
    "fit",
    "predict",
    "predict_matrix",
    "classify",
    "classify_matrix",
    "save_chain",
    "load_chain",
    "chain_to_dict",
    "chain_from_dict",
]

_COEF_KERNELS = ("slice", "hmc")
_HYPER_KERNELS = ("gibbs", "slice")


@dataclass(frozen=True)
class FitConfig:
    """Sampling schedule and kernel plan.

    ``kernel`` updates the regression coefficients ("slice" runs a full
    univariate sweep, "hmc" one Hamiltonian trajectory per iteration).
    ``hyper_kernel`` updates the variance hyperparameters; leaving it
    None picks conjugate Gibbs alongside slice coefficients and slice
    updates alongside HMC.
    """

    iterations: int = 1000
    burn_in: int = 250
    kernel: str = "slice"
    hyper_kernel: str | None = None
    slice_cfg: SliceConfig = SliceConfig()
    hmc: HmcConfig = HmcConfig(leapfrog_steps=500, step_size=0.02)
    seed: int = 0
    require_standardized: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.kernel not in _COEF_KERNELS:
            raise ValueError(f"kernel must be one of {_COEF_KERNELS}")
        if self.hyper_kernel is not None and self.hyper_kernel not in _HYPER_KERNELS:
            raise ValueError(f"hyper_kernel must be one of {_HYPER_KERNELS}")

    @property
    def resolved_hyper_kernel(self) -> str:
        if self.hyper_kernel is not None:
            return self.hyper_kernel
        return "slice" if self.kernel == "hmc" else "gibbs"

    @property
    def n_retained(self) -> int:
        return self.iterations - self.burn_in


@dataclass
class PosteriorChain:
    """Retained posterior draws plus aligned per-draw diagnostics.

    ``diagnostics`` always holds "train_log_lik" and the hyperparameter
    traces ("tau0", "tau", and "sigma" when ARD is active); HMC runs add
    "accept". Every array's leading dimension equals len(draws).
    """

    kind: str
    hierarchy: ClassHierarchy
    draws: list
    diagnostics: dict
    config: FitConfig
    standardization: tuple | None = None

    def __len__(self) -> int:
        return len(self.draws)


# ---------------------------------------------------------------------------
# Slice sweep over one flat multinomial block
# ---------------------------------------------------------------------------


class _Coordinate:
    """One scalar location parameter: which logit columns it shifts, with
    what per-row multiplier, and where it lives in the state."""

    __slots__ = ("cols", "notcols", "mult", "sx", "array_key", "index")

    def __init__(self, cols, notcols, mult, sx, array_key, index):
        self.cols = cols
        self.notcols = notcols
        self.mult = mult
        self.sx = sx
        self.array_key = array_key
        self.index = index


class _BlockSweep:
    """Univariate slice sweep over the parameters of one softmax block.

    Keeps the (n, c) logit matrix current and evaluates each candidate
    value in O(n) by splitting the log-sum-exp into the affected columns
    (which all shift by delta times a shared row multiplier) and the
    rest.
    """

    def __init__(self, X, y_idx, n_cols, coords):
        self.X = X
        self.y = y_idx
        self.n_cols = n_cols
        self.coords = coords
        self.rows = np.arange(X.shape[0])

    def sweep(self, arrays, sds, logits, cfg, rng):
        """Update every coordinate once, in order. ``arrays`` maps array
        keys to the live parameter arrays; ``sds`` maps array keys to
        arrays of matching shape holding each parameter's prior sd."""
        L = logits
        label_sum = float(L[self.rows, self.y].sum())
        for coord in self.coords:
            arr = arrays[coord.array_key]
            cur = float(arr[coord.index])
            sd = float(sds[coord.array_key][coord.index])
            mult = coord.mult
            m_all = L.max(axis=1)
            E = np.exp(L - m_all[:, None])
            with np.errstate(divide="ignore"):
                lse_in = m_all + np.log(E[:, coord.cols].sum(axis=1))
                lse_out = m_all + np.log(E[:, coord.notcols].sum(axis=1))
            base = label_sum - cur * coord.sx
            inv_two_var = 0.5 / (sd * sd)

            def logf(v):
                shifted = lse_in + (v - cur) * mult
                total = np.logaddexp(lse_out, shifted).sum()
                return base + v * coord.sx - total - inv_two_var * v * v

            new = slice_update(cur, logf, cfg, rng)
            delta = new - cur
            if delta != 0.0:
                L[:, coord.cols] += delta * mult[:, None]
                label_sum += delta * coord.sx
                arr[coord.index] = new


def _singleton_coords(X, y_idx, n_cols, alpha_key, beta_key):
    """Coordinates for a plain softmax block: every alpha_j shifts column
    j with multiplier 1, every beta[l, j] shifts column j with X[:, l]."""
    n, p = X.shape
    ones = np.ones(n)
    all_cols = np.arange(n_cols)
    coords = []
    for j in range(n_cols):
        cols = np.array([j])
        notcols = np.delete(all_cols, j)
        sx = float(np.sum(y_idx == j))
        coords.append(_Coordinate(cols, notcols, ones, sx, alpha_key, j))
    for l in range(p):
        mult = X[:, l]
        for j in range(n_cols):
            cols = np.array([j])
            notcols = np.delete(all_cols, j)
            sx = float(mult[y_idx == j].sum())
            coords.append(_Coordinate(cols, notcols, mult, sx, beta_key, (l, j)))
    return coords


def _cormnl_coords(h, X, y_idx):
    """corMNL coordinates: alpha_j like a flat block, and each phi[b, l]
    shifting every class column on branch b's subtree with X[:, l]."""
    n, p = X.shape
    c = h.n_classes
    ones = np.ones(n)
    all_cols = np.arange(c)
    coords = []
    for j in range(c):
        coords.append(
            _Coordinate(
                np.array([j]),
                np.delete(all_cols, j),
                ones,
                float(np.sum(y_idx == j)),
                "alpha",
                j,
            )
        )
    for b in range(h.n_branches):
        cols = np.array(h.branch_classes(b))
        notcols = np.setdiff1d(all_cols, cols)
        in_branch = np.isin(y_idx, cols)
        for l in range(p):
            mult = X[:, l]
            coords.append(
                _Coordinate(cols, notcols, mult, float(mult[in_branch].sum()), "phi", (b, l))
            )
    return coords


# ---------------------------------------------------------------------------
# Hyperparameter pass
# ---------------------------------------------------------------------------


def _update_precision(method, current, values, prior, slice_cfg, rng):
    if method == "gibbs":
        return gibbs_precision_update(values, prior, rng)
    return slice_precision_update(current, values, prior, slice_cfg, rng)


def _hyper_pass(kind, state, h, priors, method, slice_cfg, rng):
    sig = state.sigma if state.sigma is not None else None
    if kind == "mnl":
        state.tau0 = _update_precision(
            method, state.tau0, state.alpha, priors.intercept, slice_cfg, rng
        )
        scaled = state.beta if sig is None else state.beta / sig[:, None]
        state.tau = _update_precision(
            method, state.tau, scaled.ravel(), priors.coefficient, slice_cfg, rng
        )
        if sig is not None:
            for l in range(sig.size):
                sig[l] = _update_precision(
                    method, sig[l], state.beta[l] / state.tau, priors.ard, slice_cfg, rng
                )
    elif kind == "cormnl":
        state.tau0 = _update_precision(
            method, state.tau0, state.alpha, priors.intercept, slice_cfg, rng
        )
        node_of = np.array([br.parent for br in h.branches])
        for m in range(h.n_internal):
            block = state.phi[node_of == m]
            scaled = block if sig is None else block / sig[None, :]
            state.tau[m] = _update_precision(
                method, state.tau[m], scaled.ravel(), priors.nodes[m], slice_cfg, rng
            )
        if sig is not None:
            per_branch_tau = state.tau[node_of]
            for l in range(sig.size):
                sig[l] = _update_precision(
                    method, sig[l], state.phi[:, l] / per_branch_tau, priors.ard, slice_cfg, rng
                )
    elif kind == "treemnl":
        pooled = np.concatenate(state.alpha)
        state.tau0 = _update_precision(
            method, state.tau0, pooled, priors.intercept, slice_cfg, rng
        )
        for m in range(h.n_internal):
            block = state.beta[m]
            scaled = block if sig is None else block / sig[:, None]
            state.tau[m] = _update_precision(
                method, state.tau[m], scaled.ravel(), priors.nodes[m], slice_cfg, rng
            )
        if sig is not None:
            for l in range(sig.size):
                values = np.concatenate(
                    [state.beta[m][l] / state.tau[m] for m in range(h.n_internal)]
                )
                sig[l] = _update_precision(method, sig[l], values, priors.ard, slice_cfg, rng)
    else:
        raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# HMC coefficient updates
# ---------------------------------------------------------------------------


def _flat_logpost(kind, h, X, y_idx, shape, sds):
    """Log posterior and gradient over the packed location vector, with
    the hyperparameters frozen into the prior sd vector."""
    if kind == "mnl":
        p, c = shape

        def f(theta):
            alpha = theta[:c]
            beta = theta[c:].reshape(p, c)
            ll, d_a, d_b = _m._mnl_ll_grad(alpha, beta, X, y_idx)
            val = ll - 0.5 * float(np.sum((theta / sds) ** 2))
            grad = np.concatenate([d_a, d_b.ravel()]) - theta / sds**2
            return val, grad

        return f
    if kind == "cormnl":
        B, p = shape
        A = h.path_matrix()
        c = h.n_classes

        def f(theta):
            alpha = theta[:c]
            phi = theta[c:].reshape(B, p)
            ll, d_a, d_eff = _m._mnl_ll_grad(alpha, phi.T @ A, X, y_idx)
            val = ll - 0.5 * float(np.sum((theta / sds) ** 2))
            grad = np.concatenate([d_a, (A @ d_eff.T).ravel()]) - theta / sds**2
            return val, grad

        return f
    raise ValueError(kind)


def _node_sds(state, m, c_m):
    sig = state.sigma if state.sigma is not None else np.ones(state.beta[m].shape[0])
    return np.concatenate(
        [np.full(c_m, state.tau0), np.repeat(state.tau[m] * sig, c_m)]
    )


def _hmc_step_scale(sds, kappa):
    """Per-coordinate leapfrog step scale.

    The stepsizes are set individually, inversely proportional to a
    cheap upper estimate of each coordinate's energy curvature: the
    prior precision plus the logistic likelihood curvature bound in
    ``kappa``. The configured stepsize then acts as a global adjustment
    factor. Without this, no single stepsize is stable once the
    hierarchy's sds spread over orders of magnitude. Recomputed every
    iteration because the hyperparameters move.
    """
    return 1.0 / np.sqrt(sds**-2.0 + kappa)


def _data_curvature(X, n_cols, repeat_coef=None, tile_coef=None):
    """Curvature bounds for an (intercepts, coefficients) packed vector.

    Each data point contributes at most 1/4 to an intercept's curvature
    and x_l^2/4 to a coefficient's. ``repeat_coef`` lays the coefficient
    block out as an (p, n_cols) ravel, ``tile_coef`` as (blocks, p).
    """
    xsq = 0.25 * (X**2).sum(axis=0)
    head = np.full(n_cols, 0.25 * X.shape[0])
    if repeat_coef is not None:
        return np.concatenate([head, np.repeat(xsq, repeat_coef)])
    return np.concatenate([head, np.tile(xsq, tile_coef)])


# ---------------------------------------------------------------------------
# Fit
# ---------------------------------------------------------------------------


def fit(
    kind: str,
    h: ClassHierarchy,
    data,
    priors,
    cfg: FitConfig,
    stream: RngStream | None = None,
    node_order: Sequence[int] | None = None,
) -> PosteriorChain:
    """Run the posterior sampler and return the retained chain.

    ``stream`` overrides the default RngStream(cfg.seed); replication
    drivers pass per-task child streams. ``node_order`` (treeMNL only)
    is the schedule for node-block updates; because each node owns a
    random substream the chain is identical under any permutation, and
    the argument exists so that can be verified.
    """
    if kind not in _m.MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {_m.MODEL_KINDS}")
    X = np.ascontiguousarray(data.X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    y_idx = _m.encode_labels(h, data.y)
    p = X.shape[1]
    if cfg.require_standardized and not getattr(data, "standardized", False):
        raise ValueError("config requires standardized data, dataset is not")

    state = _m.initial_state(kind, h, p, priors)
    _m.log_posterior_and_gradient(state, h, data, priors)  # raises when not finite

    root = stream if stream is not None else RngStream(cfg.seed)
    hyper_rng = root.child(2).generator()
    hyper_kernel = cfg.resolved_hyper_kernel

    draws: list = []
    diag_ll: list[float] = []
    diag_tau0: list[float] = []
    diag_tau: list = []
    diag_sigma: list = []
    diag_accept: list[float] = []

    if kind == "treemnl":
        order = list(range(h.n_internal)) if node_order is None else list(node_order)
        if sorted(order) != list(range(h.n_internal)):
            raise ValueError("node_order must be a permutation of the internal nodes")
        slots = _m._class_slot_table(h)
        node_X: list[np.ndarray] = []
        node_y: list[np.ndarray] = []
        for m in range(h.n_internal):
            local = slots[m][y_idx]
            keep = local >= 0
            node_X.append(X[keep])
            node_y.append(local[keep])
        node_rngs = [root.child(1, m).generator() for m in range(h.n_internal)]
        node_kappa = [
            _data_curvature(node_X[m], h.n_children(m), repeat_coef=h.n_children(m))
            for m in range(h.n_internal)
        ]
        node_sweeps = [
            _BlockSweep(
                node_X[m],
                node_y[m],
                h.n_children(m),
                _singleton_coords(node_X[m], node_y[m], h.n_children(m), "alpha", "beta"),
            )
            for m in range(h.n_internal)
        ]

        for it in range(cfg.iterations):
            accepted = []
            for m in order:
                sig = state.sigma if state.sigma is not None else np.ones(p)
                if cfg.kernel == "slice":
                    arrays = {"alpha": state.alpha[m], "beta": state.beta[m]}
                    sds = {
                        "alpha": np.full(h.n_children(m), state.tau0),
                        "beta": np.broadcast_to(
                            (state.tau[m] * sig)[:, None], state.beta[m].shape
                        ),
                    }
                    logits = state.alpha[m] + node_X[m] @ state.beta[m]
                    node_sweeps[m].sweep(arrays, sds, logits, cfg.slice_cfg, node_rngs[m])
                else:
                    c_m = h.n_children(m)
                    sds = _node_sds(state, m, c_m)
                    f = _flat_logpost(
                        "mnl", h, node_X[m], node_y[m], state.beta[m].shape, sds
                    )
                    theta0 = np.concatenate([state.alpha[m], state.beta[m].ravel()])
                    theta1, ok = hmc_update(
                        theta0, f, cfg.hmc, node_rngs[m], _hmc_step_scale(sds, node_kappa[m])
                    )
                    state.alpha[m] = theta1[:c_m]
                    state.beta[m] = theta1[c_m:].reshape(state.beta[m].shape)
                    accepted.append(1.0 if ok else 0.0)
            _hyper_pass(kind, state, h, priors, hyper_kernel, cfg.slice_cfg, hyper_rng)
            if it >= cfg.burn_in:
                draws.append(state.copy())
                diag_ll.append(_m.log_likelihood(state, h, data))
                diag_tau0.append(state.tau0)
                diag_tau.append(state.tau.copy())
                if state.sigma is not None:
                    diag_sigma.append(state.sigma.copy())
                if cfg.kernel == "hmc":
                    diag_accept.append(float(np.mean(accepted)))
    else:
        coef_rng = root.child(1, 0).generator()
        if kind == "mnl":
            coords = _singleton_coords(X, y_idx, h.n_classes, "alpha", "beta")
            node_of = None
        else:
            coords = _cormnl_coords(h, X, y_idx)
            node_of = np.array([br.parent for br in h.branches])
        sweep = _BlockSweep(X, y_idx, h.n_classes, coords)
        if kind == "mnl":
            kappa = _data_curvature(X, h.n_classes, repeat_coef=h.n_classes)
        else:
            kappa = _data_curvature(X, h.n_classes, tile_coef=h.n_branches)

        for it in range(cfg.iterations):
            sig = state.sigma if state.sigma is not None else np.ones(p)
            if cfg.kernel == "slice":
                if kind == "mnl":
                    arrays = {"alpha": state.alpha, "beta": state.beta}
                    sds = {
                        "alpha": np.full(h.n_classes, state.tau0),
                        "beta": np.broadcast_to(
                            (state.tau * sig)[:, None], state.beta.shape
                        ),
                    }
                    logits = state.alpha + X @ state.beta
                else:
                    arrays = {"alpha": state.alpha, "phi": state.phi}
                    sds = {
                        "alpha": np.full(h.n_classes, state.tau0),
                        "phi": state.tau[node_of][:, None] * sig[None, :],
                    }
                    logits = state.alpha + X @ _m.cormnl_effective_beta(state, h)
                sweep.sweep(arrays, sds, logits, cfg.slice_cfg, coef_rng)
                ok = None
            else:
                sds = _m.location_prior_sds(state, h)
                shape = state.beta.shape if kind == "mnl" else state.phi.shape
                f = _flat_logpost(kind, h, X, y_idx, shape, sds)
                theta0 = _m.pack_locations(state)
                theta1, ok = hmc_update(
                    theta0, f, cfg.hmc, coef_rng, _hmc_step_scale(sds, kappa)
                )
                state = _m.unpack_locations(state, theta1)
            _hyper_pass(kind, state, h, priors, hyper_kernel, cfg.slice_cfg, hyper_rng)
            if it >= cfg.burn_in:
                draws.append(state.copy())
                diag_ll.append(_m.log_likelihood(state, h, data))
                diag_tau0.append(state.tau0)
                diag_tau.append(state.tau if np.isscalar(state.tau) else state.tau.copy())
                if state.sigma is not None:
                    diag_sigma.append(state.sigma.copy())
                if cfg.kernel == "hmc":
                    diag_accept.append(1.0 if ok else 0.0)

    diagnostics = {
        "train_log_lik": np.array(diag_ll),
        "tau0": np.array(diag_tau0),
        "tau": np.array(diag_tau),
    }
    if diag_sigma:
        diagnostics["sigma"] = np.array(diag_sigma)
    if cfg.kernel == "hmc":
        diagnostics["accept"] = np.array(diag_accept)

    standardization = None
    if getattr(data, "standardized", False) and getattr(data, "center", None) is not None:
        standardization = (
            np.asarray(data.center, dtype=float).copy(),
            np.asarray(data.scale, dtype=float).copy(),
        )
    return PosteriorChain(kind, h, draws, diagnostics, cfg, standardization)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict_matrix(chain: PosteriorChain, h: ClassHierarchy, X) -> np.ndarray:
    """Posterior-predictive class probabilities, one row per row of X.

    The predictive is the arithmetic mean over retained draws of each
    draw's class-probability vector.
    """
    if len(chain.draws) == 0:
        raise ValueError("empty chain")
    X = np.asarray(X, dtype=float)
    total = np.zeros((X.shape[0], h.n_classes))
    for state in chain.draws:
        total += _m.class_probs_matrix(state, h, X)
    return total / len(chain.draws)


def predict(chain: PosteriorChain, h: ClassHierarchy, x) -> np.ndarray:
    """Posterior-predictive probabilities for a single covariate vector."""
    x = np.asarray(x, dtype=float)
    return predict_matrix(chain, h, x[None, :])[0]


def classify_matrix(chain: PosteriorChain, h: ClassHierarchy, X) -> list[str]:
    """Predicted label per row: argmax of the predictive, ties to the
    lowest class index."""
    probs = predict_matrix(chain, h, X)
    return [h.labels[j] for j in probs.argmax(axis=1)]


def classify(chain: PosteriorChain, h: ClassHierarchy, x) -> str:
    x = np.asarray(x, dtype=float)
    return classify_matrix(chain, h, x[None, :])[0]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _state_to_dict(kind: str, state) -> dict:
    if kind == "mnl":
        out = {
            "alpha": state.alpha.tolist(),
            "beta": state.beta.tolist(),
            "tau0": float(state.tau0),
            "tau": float(state.tau),
        }
    elif kind == "cormnl":
        out = {
            "alpha": state.alpha.tolist(),
            "phi": state.phi.tolist(),
            "tau0": float(state.tau0),
            "tau": state.tau.tolist(),
        }
    else:
        out = {
            "alpha": [a.tolist() for a in state.alpha],
            "beta": [b.tolist() for b in state.beta],
            "tau0": float(state.tau0),
            "tau": state.tau.tolist(),
        }
    out["sigma"] = None if state.sigma is None else state.sigma.tolist()
    return out


def _state_from_dict(kind: str, d: dict):
    sigma = None if d.get("sigma") is None else np.array(d["sigma"], dtype=float)
    if kind == "mnl":
        return MnlState(
            np.array(d["alpha"], dtype=float),
            np.array(d["beta"], dtype=float),
            float(d["tau0"]),
            float(d["tau"]),
            sigma,
        )
    if kind == "cormnl":
        return CorMnlState(
            np.array(d["alpha"], dtype=float),
            np.array(d["phi"], dtype=float),
            float(d["tau0"]),
            np.array(d["tau"], dtype=float),
            sigma,
        )
    return TreeMnlState(
        [np.array(a, dtype=float) for a in d["alpha"]],
        [np.array(b, dtype=float) for b in d["beta"]],
        float(d["tau0"]),
        np.array(d["tau"], dtype=float),
        sigma,
    )


def _config_to_dict(cfg: FitConfig) -> dict:
    return {
        "iterations": cfg.iterations,
        "burn_in": cfg.burn_in,
        "kernel": cfg.kernel,
        "hyper_kernel": cfg.hyper_kernel,
        "slice": {"w": cfg.slice_cfg.w, "max_step_out": cfg.slice_cfg.max_step_out},
        "hmc": {"leapfrog_steps": cfg.hmc.leapfrog_steps, "step_size": cfg.hmc.step_size},
        "seed": cfg.seed,
        "require_standardized": cfg.require_standardized,
    }


def _config_from_dict(d: dict) -> FitConfig:
    return FitConfig(
        iterations=int(d["iterations"]),
        burn_in=int(d["burn_in"]),
        kernel=d["kernel"],
        hyper_kernel=d.get("hyper_kernel"),
        slice_cfg=SliceConfig(d["slice"]["w"], int(d["slice"]["max_step_out"])),
        hmc=HmcConfig(int(d["hmc"]["leapfrog_steps"]), d["hmc"]["step_size"]),
        seed=int(d["seed"]),
        require_standardized=bool(d.get("require_standardized", False)),
    )


def chain_to_dict(chain: PosteriorChain) -> dict:
    """JSON-ready layout: model kind, hierarchy text, config echo, the
    retained draws, diagnostics, and any standardization statistics."""
    out = {
        "model": chain.kind,
        "hierarchy": chain.hierarchy.serialize(),
        "config": _config_to_dict(chain.config),
        "n_draws": len(chain.draws),
        "draws": [_state_to_dict(chain.kind, s) for s in chain.draws],
        "diagnostics": {k: np.asarray(v).tolist() for k, v in chain.diagnostics.items()},
        "standardization": None
        if chain.standardization is None
        else {
            "center": chain.standardization[0].tolist(),
            "scale": chain.standardization[1].tolist(),
        },
    }
    return out


def chain_from_dict(d: dict) -> PosteriorChain:
    kind = d["model"]
    h = parse_hierarchy(d["hierarchy"])
    std = d.get("standardization")
    return PosteriorChain(
        kind=kind,
        hierarchy=h,
        draws=[_state_from_dict(kind, s) for s in d["draws"]],
        diagnostics={k: np.array(v) for k, v in d["diagnostics"].items()},
        config=_config_from_dict(d["config"]),
        standardization=None
        if std is None
        else (np.array(std["center"], dtype=float), np.array(std["scale"], dtype=float)),
    )


def save_chain(chain: PosteriorChain, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(chain_to_dict(chain), fh)


def load_chain(path) -> PosteriorChain:
    with open(path, encoding="utf-8") as fh:
        return chain_from_dict(json.load(fh))
