"""Canned experiment protocols and replication drivers.

Three synthetic protocols share one shape: draw generator parameters
from a model's prior, simulate a train/test pair, fit every candidate
model on the training split, and score on the test split; repeat, and
tabulate the grid of means. The document-labelling surrogate follows the
small-training-set design instead: one fixed pool, several disjoint
training subsets, a shared test remainder, and paired t-tests across
subsets.

Every replication draws its randomness from a child stream keyed by
(generator, replication), so results are reproducible and independent
of execution order, including parallel runs.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from hiermnl.datagen import (
    Dataset,
    SimSpec,
    draw_prior_state,
    generate_replication,
    sample_labels,
    standardize,
    subsample_splits,
)
from hiermnl.evaluation import (
    ComparisonTable,
    build_comparison,
    evaluate,
    paired_t_test,
)
from hiermnl.hierarchy import ClassHierarchy, parse_hierarchy
from hiermnl.inference import FitConfig, fit
from hiermnl.models import GammaPrior, HierPriors, MnlPriors
from hiermnl.samplers import HmcConfig, RngStream, SliceConfig

__all__ = [
    "TWO_LEVEL_TREE",
    "COMPLEX_TREE",
    "DOC_TREE",
    "Protocol",
    "PROTOCOLS",
    "SURROGATE_NAME",
    "MODEL_ORDER",
    "SurrogateResult",
    "run_table",
    "run_surrogate",
    "doc_mnl_priors",
    "doc_hier_priors",
    "prior_table",
    "PRIOR_TABLE_NAMES",
]

MODEL_ORDER = ("mnl", "treemnl", "cormnl")

TWO_LEVEL_TREE = parse_hierarchy("((1,2),(3,4))")

COMPLEX_TREE = parse_hierarchy("(((1,2),(3,4,5)),6,(7,8))")

# 24 region classes of scanned journal pages, grouped by how easily they
# are confused: running text with its satellites, heading styles, labels,
# equation-like blocks, single styles, and framed content.
DOC_TREE = parse_hierarchy(
    '(("Text", "Ref.", ("Foot Note", ("Fig. Cap.", "Table Cap."), "Bullet Item")),'
    ' "Abstract", ("Auth. List", "Ed. List"), "Header",'
    ' ("Sec. Head.", "Subsec. Head."), "Footer", ("Fig. Label", "Table Label"),'
    ' "Eq.", "Eq. #", "Page #", "Main Title", "Decoration",'
    ' ("Table", ("Graph", "Fig."), "Code"))'
)


@dataclass(frozen=True)
class Protocol:
    """One synthetic comparison recipe: hierarchy, data law, priors, and
    the default sampling schedule."""

    name: str
    hierarchy: ClassHierarchy
    p: int
    n_total: int
    n_train: int
    x_low: float
    x_high: float
    mnl_priors: MnlPriors
    hier_priors: HierPriors
    fit: FitConfig
    description: str = ""

    def priors_for(self, kind: str):
        return self.mnl_priors if kind == "mnl" else self.hier_priors

    def sim_spec(self, kind: str) -> SimSpec:
        return SimSpec(
            kind,
            self.hierarchy,
            self.priors_for(kind),
            p=self.p,
            n_total=self.n_total,
            n_train=self.n_train,
            x_low=self.x_low,
            x_high=self.x_high,
        )


def _simple_protocol(name: str, n_train: int) -> Protocol:
    h = TWO_LEVEL_TREE
    return Protocol(
        name=name,
        hierarchy=h,
        p=2,
        n_total=10000,
        n_train=n_train,
        x_low=-5.0,
        x_high=5.0,
        mnl_priors=MnlPriors(GammaPrior(1.0, 10.0), GammaPrior(1.0, 1.0)),
        hier_priors=HierPriors.by_level(
            h, GammaPrior(1.0, 10.0), [GammaPrior(1.0, 5.0), GammaPrior(1.0, 20.0)]
        ),
        fit=FitConfig(iterations=1000, burn_in=250, kernel="slice"),
        description=(
            f"Four classes in two pairs, two uniform(-5,5) covariates, "
            f"{n_train} training cases out of 10000."
        ),
    )


def _complex_protocol() -> Protocol:
    h = COMPLEX_TREE
    return Protocol(
        name="sim-complex",
        hierarchy=h,
        p=4,
        n_total=10000,
        n_train=100,
        x_low=0.0,
        x_high=1.0,
        mnl_priors=MnlPriors(GammaPrior(1.0, 10.0), GammaPrior(1.0, 1.0)),
        hier_priors=HierPriors.by_level(
            h,
            GammaPrior(1.0, 10.0),
            [GammaPrior(1.0, 5.0), GammaPrior(1.0, 20.0), GammaPrior(1.0, 100.0)],
        ),
        fit=FitConfig(iterations=1000, burn_in=250, kernel="slice"),
        description=(
            "Eight classes in a mixed-depth hierarchy, four uniform(0,1) "
            "covariates, 100 training cases out of 10000."
        ),
    )


PROTOCOLS: dict = {
    "sim-n100": _simple_protocol("sim-n100", 100),
    "sim-n50": _simple_protocol("sim-n50", 50),
    "sim-complex": _complex_protocol(),
}

SURROGATE_NAME = "doc-surrogate"


def doc_mnl_priors() -> MnlPriors:
    return MnlPriors(
        intercept=GammaPrior(0.5, 1.0),
        coefficient=GammaPrior(0.5, 20.0),
        ard=GammaPrior(1.0, 10.0),
    )


def doc_hier_priors(h: ClassHierarchy = DOC_TREE) -> HierPriors:
    return HierPriors.uniform(
        h,
        intercept=GammaPrior(0.5, 1.0),
        node=GammaPrior(0.5, 100.0),
        ard=GammaPrior(1.0, 10.0),
    )


_SIMPLE_LEVELS = [GammaPrior(1.0, 5.0), GammaPrior(1.0, 20.0)]
_COMPLEX_LEVELS = [GammaPrior(1.0, 5.0), GammaPrior(1.0, 20.0), GammaPrior(1.0, 100.0)]

PRIOR_TABLE_NAMES = ("sim-n100", "sim-n50", "sim-complex", SURROGATE_NAME)


def prior_table(name: str, kind: str, h: ClassHierarchy):
    """Look up the stock prior table `name` and instantiate it for `kind` on `h`.

    The simulation tables assign node scales by depth, so they work on any
    hierarchy as deep as the one they were written for (deeper nodes reuse the
    last level). Returns MnlPriors for kind "mnl", HierPriors otherwise.
    """
    if name not in PRIOR_TABLE_NAMES:
        known = ", ".join(PRIOR_TABLE_NAMES)
        raise ValueError(f"unknown prior table {name!r}, expected one of: {known}")
    if kind not in MODEL_ORDER:
        raise ValueError(f"unknown model kind {kind!r}")
    if name == SURROGATE_NAME:
        return doc_mnl_priors() if kind == "mnl" else doc_hier_priors(h)
    if name == "sim-complex":
        mnl = PROTOCOLS[name].mnl_priors
        levels = _COMPLEX_LEVELS
    else:
        mnl = PROTOCOLS[name].mnl_priors
        levels = _SIMPLE_LEVELS
    if kind == "mnl":
        return mnl
    return HierPriors.by_level(h, GammaPrior(1.0, 10.0), levels)


# ---------------------------------------------------------------------------
# Grid runner
# ---------------------------------------------------------------------------


def _table_task(args):
    protocol, gen, g_idx, rep, seed, kinds, fit_cfg = args
    h = protocol.hierarchy
    stream = RngStream(seed).child(g_idx, rep)
    train, test, _ = generate_replication(protocol.sim_spec(gen), stream.child(0).generator())
    cell = []
    for f_idx, fitter in enumerate(kinds):
        chain = fit(
            fitter,
            h,
            train,
            protocol.priors_for(fitter),
            fit_cfg,
            stream=stream.child(1, f_idx),
        )
        cell.append((fitter, evaluate(chain, h, test)))
    return gen, cell


def run_table(
    protocol: Protocol,
    replications: int,
    seed: int,
    kinds=MODEL_ORDER,
    fit_cfg: FitConfig | None = None,
    workers: int | None = None,
) -> ComparisonTable:
    """Run the full generator-by-fitter grid and tabulate the means.

    Each (generator, replication) pair is an independent task with its
    own random stream, so the table is identical whether tasks run
    serially or across ``workers`` processes.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    fit_cfg = protocol.fit if fit_cfg is None else fit_cfg
    tasks = [
        (protocol, gen, g_idx, rep, seed, tuple(kinds), fit_cfg)
        for g_idx, gen in enumerate(kinds)
        for rep in range(replications)
    ]
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_table_task, tasks))
    else:
        outputs = [_table_task(t) for t in tasks]

    results: dict = {}
    for gen, cell in outputs:
        for fitter, res in cell:
            results.setdefault((gen, fitter), []).append(res)
    return build_comparison(results)


# ---------------------------------------------------------------------------
# Document-labelling surrogate
# ---------------------------------------------------------------------------


@dataclass
class SurrogateResult:
    """Small-training-set comparison on one generated pool.

    ``log_prob`` and ``error`` are (n_models, n_splits); ``tests`` maps
    "metric:a_vs_b" to the paired t-test over splits (None when the
    difference variance is degenerate).
    """

    models: tuple
    log_prob: np.ndarray
    error: np.ndarray
    tests: dict
    n_test: int

    def mean_log_prob(self) -> np.ndarray:
        return self.log_prob.mean(axis=1)

    def mean_error(self) -> np.ndarray:
        return self.error.mean(axis=1)


def _surrogate_fit_default() -> FitConfig:
    return FitConfig(
        iterations=2500,
        burn_in=500,
        kernel="hmc",
        hmc=HmcConfig(leapfrog_steps=500, step_size=0.02),
        slice_cfg=SliceConfig(),
    )


def run_surrogate(
    seed: int,
    n_splits: int = 10,
    train_size: int = 200,
    pool_size: int = 5556,
    p: int = 59,
    hierarchy: ClassHierarchy = DOC_TREE,
    fit_cfg: FitConfig | None = None,
    kinds=MODEL_ORDER,
) -> SurrogateResult:
    """Generate a document-style pool from the hierarchical model's prior
    and compare fitters across disjoint small training sets.

    The pool's labels come from a prior draw of the correlated model on
    ``hierarchy``. Training subsets are standardized individually and
    the shared test remainder is re-standardized with each subset's
    statistics before scoring.
    """
    h = hierarchy
    root = RngStream(seed)
    gen_rng = root.child(0).generator()
    gen_state = draw_prior_state("cormnl", h, p, doc_hier_priors(h), gen_rng)
    X = gen_rng.uniform(0.0, 1.0, size=(pool_size, p))
    y = sample_labels(gen_state, h, X, gen_rng)
    pool = Dataset(X, y, labels=h.labels)

    trains, test_raw = subsample_splits(pool, n_splits, train_size, root.child(1).generator())
    fit_cfg = _surrogate_fit_default() if fit_cfg is None else fit_cfg

    kinds = tuple(kinds)
    log_prob = np.empty((len(kinds), n_splits))
    error = np.empty((len(kinds), n_splits))
    for i, train_raw in enumerate(trains):
        train, (test,) = standardize(train_raw, [test_raw])
        for f_idx, kind in enumerate(kinds):
            priors = doc_mnl_priors() if kind == "mnl" else doc_hier_priors(h)
            chain = fit(kind, h, train, priors, fit_cfg, stream=root.child(2, i, f_idx))
            res = evaluate(chain, h, test)
            log_prob[f_idx, i] = res.avg_log_prob
            error[f_idx, i] = res.error_rate

    tests: dict = {}
    metric_arrays = {"avg_log_prob": log_prob, "error_rate": error}
    pairs = [(a, b) for i, a in enumerate(kinds) for b in kinds[i + 1 :]]
    for metric, arr in metric_arrays.items():
        for a, b in pairs:
            key = f"{metric}:{a}_vs_{b}"
            try:
                tests[key] = paired_t_test(arr[kinds.index(a)], arr[kinds.index(b)])
            except ValueError:
                tests[key] = None
    return SurrogateResult(kinds, log_prob, error, tests, test_raw.n)
