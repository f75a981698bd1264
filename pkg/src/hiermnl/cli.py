"""Command line driver.

Five modes: ``simulate`` draws synthetic replications from a protocol's
generator and writes train/test CSVs, ``fit`` runs the sampler on a
training CSV and saves the retained chain, ``predict`` and ``evaluate``
score a saved chain on a test CSV, and ``replicate-tables`` reruns a
whole comparison protocol and writes the resulting table.

Options resolve in three layers: an explicit flag wins over the matching
key in the ``--config`` INI section named after the mode, which wins
over the built-in default. Every run writes ``run_config.json`` into the
output directory with the fully resolved options, so any artifact can be
regenerated from it. Nothing written here contains timestamps; rerunning
with the same options and seed reproduces every file byte for byte.

Exit status: 0 on success, 2 for invalid options or inputs caught before
any real work, 1 when a module raises during the run (the message is
passed through verbatim).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import generate_replication, load_csv, standardize, write_csv
from .evaluation import evaluate_probs, format_table, table_to_csv
from .experiments import (
    MODEL_ORDER,
    PRIOR_TABLE_NAMES,
    PROTOCOLS,
    SURROGATE_NAME,
    _surrogate_fit_default,
    prior_table,
    run_surrogate,
    run_table,
)
from .hierarchy import flat_hierarchy, parse_hierarchy
from .inference import (
    FitConfig,
    HmcConfig,
    fit,
    load_chain,
    predict_matrix,
    save_chain,
)
from .samplers import RngStream

__all__ = ["main", "CliError"]

_KERNELS = ("slice", "hmc")


class CliError(Exception):
    """Invalid invocation or input, reported with exit status 2."""


# ---------------------------------------------------------------------------
# Option registry
# ---------------------------------------------------------------------------

_REQUIRED = object()

# mode -> option name -> (type, default). _REQUIRED marks options that
# must come from a flag or the config file.
_OPTIONS: dict[str, dict] = {
    "simulate": {
        "table": (str, "sim-n100"),
        "model": (str, _REQUIRED),
        "reps": (int, 1),
        "n-total": (int, None),
        "n-train": (int, None),
        "seed": (int, 0),
        "out": (str, _REQUIRED),
    },
    "fit": {
        "model": (str, _REQUIRED),
        "train": (str, _REQUIRED),
        "hierarchy": (str, None),
        "priors": (str, "sim-n100"),
        "label-column": (str, "label"),
        "standardize": (bool, False),
        "iters": (int, 1000),
        "burnin": (int, 250),
        "kernel": (str, "slice"),
        "hmc-steps": (int, 500),
        "hmc-stepsize": (float, 0.02),
        "seed": (int, 0),
        "out": (str, _REQUIRED),
    },
    "predict": {
        "chain": (str, _REQUIRED),
        "test": (str, _REQUIRED),
        "label-column": (str, "label"),
        "out": (str, _REQUIRED),
    },
    "evaluate": {
        "chain": (str, _REQUIRED),
        "test": (str, _REQUIRED),
        "label-column": (str, "label"),
        "out": (str, _REQUIRED),
    },
    "replicate-tables": {
        "table": (str, _REQUIRED),
        "reps": (int, None),
        "iters": (int, None),
        "burnin": (int, None),
        "kernel": (str, None),
        "hmc-steps": (int, None),
        "hmc-stepsize": (float, None),
        "workers": (int, None),
        "train-size": (int, None),
        "pool-size": (int, None),
        "covariates": (int, None),
        "seed": (int, 0),
        "out": (str, _REQUIRED),
    },
}

_MODE_HELP = {
    "simulate": "draw synthetic train/test replications from a protocol generator",
    "fit": "sample the posterior on a training CSV and save the chain",
    "predict": "write posterior-predictive class probabilities for a test CSV",
    "evaluate": "score a saved chain on a labelled test CSV",
    "replicate-tables": "rerun a comparison protocol and write its table",
}

_OPTION_HELP = {
    "table": "protocol name (see --help of replicate-tables for the list)",
    "model": "one of: " + ", ".join(MODEL_ORDER),
    "reps": "number of replications (simulate) or replications/splits (tables)",
    "n-total": "override the protocol's total case count",
    "n-train": "override the protocol's training case count",
    "seed": "root random seed",
    "out": "output directory (created if missing)",
    "train": "training CSV, one label column plus numeric features",
    "test": "test CSV with the same columns as training",
    "hierarchy": "file with a parenthesized class tree; default: flat over training labels (mnl only)",
    "priors": "prior table name, one of: " + ", ".join(PRIOR_TABLE_NAMES),
    "label-column": "name of the label column in the CSVs",
    "standardize": "center/scale features before fitting and store the statistics in the chain",
    "iters": "sampler iterations",
    "burnin": "iterations discarded before retaining draws",
    "kernel": "coefficient update kernel: slice or hmc",
    "hmc-steps": "leapfrog steps per hmc update",
    "hmc-stepsize": "leapfrog step size",
    "chain": "chain JSON written by fit",
    "workers": "worker processes for the replication grid",
    "train-size": "surrogate only: cases per training split",
    "pool-size": "surrogate only: generated pool size",
    "covariates": "surrogate only: number of features",
}

_BOOL_WORDS = {
    "1": True,
    "true": True,
    "yes": True,
    "on": True,
    "0": False,
    "false": False,
    "no": False,
    "off": False,
}


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hiermnl",
        description="Multinomial logit models with class-hierarchy priors.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="mode", required=True, metavar="mode")
    for mode, opts in _OPTIONS.items():
        p = sub.add_parser(mode, help=_MODE_HELP[mode])
        p.add_argument(
            "--config",
            default=None,
            help=f"INI file; keys in its [{mode}] section fill options not given as flags",
        )
        for name, (typ, _) in opts.items():
            flag = "--" + name
            if typ is bool:
                p.add_argument(
                    flag, action="store_const", const=True, default=None, help=_OPTION_HELP[name]
                )
            else:
                p.add_argument(flag, type=typ, default=None, help=_OPTION_HELP[name])
    return ap


def _convert(mode: str, key: str, raw: str, typ):
    if typ is bool:
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise CliError(f"config [{mode}] {key}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[word]
    try:
        return typ(raw)
    except ValueError:
        raise CliError(
            f"config [{mode}] {key}: expected {typ.__name__}, got {raw!r}"
        ) from None


def _resolve(mode: str, args: argparse.Namespace) -> dict:
    """Merge flags over the config file over defaults; check required."""
    opts = _OPTIONS[mode]
    from_file: dict = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise CliError(f"config file {path}: {exc}") from None
        if parser.has_section(mode):
            for key, raw in parser.items(mode):
                if key not in opts:
                    raise CliError(f"config [{mode}]: unknown option {key!r}")
                from_file[key] = _convert(mode, key, raw, opts[key][0])
    resolved = {}
    for name, (_, default) in opts.items():
        flag_value = getattr(args, name.replace("-", "_"))
        if flag_value is not None:
            resolved[name] = flag_value
        elif name in from_file:
            resolved[name] = from_file[name]
        elif default is _REQUIRED:
            raise CliError(f"{mode}: missing required option --{name}")
        else:
            resolved[name] = default
    return resolved


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------


def _outdir(resolved: dict) -> Path:
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_echo(outdir: Path, mode: str, resolved: dict) -> None:
    payload = {"mode": mode, "version": __version__, "options": dict(resolved)}
    with open(outdir / "run_config.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _check_model(mode: str, kind: str) -> str:
    if kind not in MODEL_ORDER:
        raise CliError(f"{mode}: unknown model {kind!r}; expected one of: " + ", ".join(MODEL_ORDER))
    return kind


def _check_kernel(mode: str, kernel: str) -> str:
    if kernel not in _KERNELS:
        raise CliError(f"{mode}: unknown kernel {kernel!r}; expected slice or hmc")
    return kernel


def _existing_file(mode: str, what: str, path_str: str) -> Path:
    path = Path(path_str)
    if not path.is_file():
        raise CliError(f"{mode}: {what} file not found: {path}")
    return path


def _load_chain_checked(mode: str, path_str: str):
    path = _existing_file(mode, "chain", path_str)
    try:
        return load_chain(path)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed chain file {path}: {exc}") from exc


def _load_test(mode: str, resolved: dict):
    path = _existing_file(mode, "test", resolved["test"])
    test = load_csv(path, resolved["label-column"])
    if test.n == 0:
        raise CliError(f"{mode}: test set is empty: {path}")
    return test


def _chain_features(chain) -> int:
    state = chain.draws[0]
    if chain.kind == "mnl":
        return state.beta.shape[0]
    if chain.kind == "cormnl":
        return state.phi.shape[1]
    return state.beta[0].shape[0]


def _test_matrix(mode: str, chain, test) -> np.ndarray:
    """Feature matrix for scoring, transformed by the chain's stored
    standardization statistics when it has them."""
    p = _chain_features(chain)
    if test.X.shape[1] != p:
        raise CliError(f"{mode}: test set has {test.X.shape[1]} feature(s), chain expects {p}")
    if chain.standardization is None:
        return test.X
    center, scale = chain.standardization
    return (test.X - center) / scale


def _override_fit(base: FitConfig, resolved: dict) -> FitConfig | None:
    """FitConfig with any of the sampler flags applied, None if none were."""
    changes: dict = {}
    if resolved["iters"] is not None:
        changes["iterations"] = resolved["iters"]
    if resolved["burnin"] is not None:
        changes["burn_in"] = resolved["burnin"]
    if resolved["kernel"] is not None:
        changes["kernel"] = _check_kernel("replicate-tables", resolved["kernel"])
    hmc_changes: dict = {}
    if resolved["hmc-steps"] is not None:
        hmc_changes["leapfrog_steps"] = resolved["hmc-steps"]
    if resolved["hmc-stepsize"] is not None:
        hmc_changes["step_size"] = resolved["hmc-stepsize"]
    if hmc_changes:
        changes["hmc"] = replace(base.hmc, **hmc_changes)
    if not changes:
        return None
    return replace(base, **changes)


# ---------------------------------------------------------------------------
# Mode handlers
# ---------------------------------------------------------------------------


def _cmd_simulate(resolved: dict) -> int:
    name = resolved["table"]
    if name not in PROTOCOLS:
        raise CliError(
            f"simulate: unknown protocol {name!r}; expected one of: " + ", ".join(PROTOCOLS)
        )
    kind = _check_model("simulate", resolved["model"])
    reps = resolved["reps"]
    if reps < 1:
        raise CliError("simulate: --reps must be at least 1")
    spec = PROTOCOLS[name].sim_spec(kind)
    overrides = {}
    if resolved["n-total"] is not None:
        overrides["n_total"] = resolved["n-total"]
    if resolved["n-train"] is not None:
        overrides["n_train"] = resolved["n-train"]
    if overrides:
        spec = replace(spec, **overrides)
    outdir = _outdir(resolved)
    # Same stream layout as the replication grid, so rep r of generator
    # `kind` reproduces exactly the data used by replicate-tables.
    g_idx = MODEL_ORDER.index(kind)
    for rep in range(reps):
        rng = RngStream(resolved["seed"]).child(g_idx, rep).child(0).generator()
        train, test, _ = generate_replication(spec, rng)
        write_csv(train, outdir / f"rep{rep:03d}_train.csv")
        write_csv(test, outdir / f"rep{rep:03d}_test.csv")
    _write_echo(outdir, "simulate", resolved)
    print(f"wrote {reps} replication(s) of {name}/{kind} to {outdir}")
    return 0


def _cmd_fit(resolved: dict) -> int:
    kind = _check_model("fit", resolved["model"])
    kernel = _check_kernel("fit", resolved["kernel"])
    train_path = _existing_file("fit", "training", resolved["train"])
    train = load_csv(train_path, resolved["label-column"])
    if resolved["hierarchy"] is not None:
        hpath = _existing_file("fit", "hierarchy", resolved["hierarchy"])
        h = parse_hierarchy(hpath.read_text(encoding="utf-8"))
    elif kind == "mnl":
        h = flat_hierarchy(train.labels)
    else:
        raise CliError(f"fit: model {kind!r} needs --hierarchy")
    try:
        priors = prior_table(resolved["priors"], kind, h)
    except ValueError as exc:
        raise CliError(f"fit: {exc}") from None
    if resolved["standardize"]:
        train, _ = standardize(train)
    cfg = FitConfig(
        iterations=resolved["iters"],
        burn_in=resolved["burnin"],
        kernel=kernel,
        hmc=HmcConfig(resolved["hmc-steps"], resolved["hmc-stepsize"]),
        seed=resolved["seed"],
    )
    chain = fit(kind, h, train, priors, cfg)
    outdir = _outdir(resolved)
    save_chain(chain, outdir / "chain.json")
    _write_diagnostics(chain, outdir / "diagnostics.csv")
    _write_echo(outdir, "fit", resolved)
    print(f"retained {len(chain)} draw(s); wrote {outdir / 'chain.json'}")
    return 0


def _write_diagnostics(chain, path: Path) -> None:
    """Per-draw traces as CSV, vector diagnostics split into numbered columns."""
    names: list[str] = []
    cols: list[np.ndarray] = []
    for key in ("train_log_lik", "tau0", "tau", "sigma", "accept"):
        if key not in chain.diagnostics:
            continue
        arr = np.asarray(chain.diagnostics[key])
        if arr.ndim == 1:
            names.append(key)
            cols.append(arr)
        else:
            for j in range(arr.shape[1]):
                names.append(f"{key}_{j}")
                cols.append(arr[:, j])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw"] + names)
        for i in range(len(chain)):
            writer.writerow([i] + [repr(float(col[i])) for col in cols])


def _cmd_predict(resolved: dict) -> int:
    chain = _load_chain_checked("predict", resolved["chain"])
    test = _load_test("predict", resolved)
    X = _test_matrix("predict", chain, test)
    probs = predict_matrix(chain, chain.hierarchy, X)
    labels = chain.hierarchy.labels
    outdir = _outdir(resolved)
    with open(outdir / "probs.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"prob_{lab}" for lab in labels] + ["predicted"])
        for i in range(probs.shape[0]):
            row = [repr(float(v)) for v in probs[i]]
            writer.writerow(row + [labels[int(np.argmax(probs[i]))]])
    _write_echo(outdir, "predict", resolved)
    print(f"wrote probabilities for {test.n} case(s) to {outdir / 'probs.csv'}")
    return 0


def _cmd_evaluate(resolved: dict) -> int:
    chain = _load_chain_checked("evaluate", resolved["chain"])
    test = _load_test("evaluate", resolved)
    X = _test_matrix("evaluate", chain, test)
    probs = predict_matrix(chain, chain.hierarchy, X)
    result = evaluate_probs(probs, chain.hierarchy, test.y)
    outdir = _outdir(resolved)
    with open(outdir / "eval.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "avg_log_prob": result.avg_log_prob,
                "error_rate": result.error_rate,
                "n_test": result.n_test,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    _write_echo(outdir, "evaluate", resolved)
    print(
        f"avg log prob {result.avg_log_prob:.4f}, error rate {result.error_rate:.4f} "
        f"on {result.n_test} case(s)"
    )
    return 0


def _cmd_tables(resolved: dict) -> int:
    name = resolved["table"]
    outdir = _outdir(resolved)
    if name in PROTOCOLS:
        protocol = PROTOCOLS[name]
        reps = 20 if resolved["reps"] is None else resolved["reps"]
        fit_cfg = _override_fit(protocol.fit, resolved)
        table = run_table(
            protocol, reps, resolved["seed"], fit_cfg=fit_cfg, workers=resolved["workers"]
        )
        table_to_csv(table, outdir / "table.csv")
        text = format_table(table)
        if not text.endswith("\n"):
            text += "\n"
        (outdir / "table.txt").write_text(text, encoding="utf-8")
        _write_echo(outdir, "replicate-tables", resolved)
        sys.stdout.write(text)
        return 0
    if name == SURROGATE_NAME:
        splits = 10 if resolved["reps"] is None else resolved["reps"]
        fit_cfg = _override_fit(_surrogate_fit_default(), resolved)
        kwargs: dict = {}
        if resolved["train-size"] is not None:
            kwargs["train_size"] = resolved["train-size"]
        if resolved["pool-size"] is not None:
            kwargs["pool_size"] = resolved["pool-size"]
        if resolved["covariates"] is not None:
            kwargs["p"] = resolved["covariates"]
        result = run_surrogate(resolved["seed"], n_splits=splits, fit_cfg=fit_cfg, **kwargs)
        _write_surrogate(result, outdir)
        _write_echo(outdir, "replicate-tables", resolved)
        sys.stdout.write((outdir / "summary.txt").read_text(encoding="utf-8"))
        return 0
    known = ", ".join(list(PROTOCOLS) + [SURROGATE_NAME])
    raise CliError(f"replicate-tables: unknown table {name!r}; expected one of: {known}")


def _write_surrogate(result, outdir: Path) -> None:
    with open(outdir / "surrogate.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "split", "avg_log_prob", "error_rate"])
        for i, model in enumerate(result.models):
            for s in range(result.log_prob.shape[1]):
                writer.writerow(
                    [model, s, repr(float(result.log_prob[i, s])), repr(float(result.error[i, s]))]
                )
    tests_payload = {
        key: None if t is None else {"statistic": t.statistic, "pvalue": t.pvalue}
        for key, t in result.tests.items()
    }
    with open(outdir / "tests.json", "w", encoding="utf-8") as fh:
        json.dump(tests_payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    lines = [f"{'model':<10} {'avg log prob':>14} {'error rate':>12}"]
    mean_lp = result.mean_log_prob()
    mean_err = result.mean_error()
    for i, model in enumerate(result.models):
        lines.append(f"{model:<10} {mean_lp[i]:>14.4f} {mean_err[i]:>12.4f}")
    lines.append(
        f"{result.log_prob.shape[1]} split(s), {result.n_test} shared test case(s)."
    )
    for key in sorted(result.tests):
        t = result.tests[key]
        if t is None:
            lines.append(f"{key}: degenerate")
        else:
            lines.append(f"{key}: t = {t.statistic:.3f}, p = {t.pvalue:.4g}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


_HANDLERS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "replicate-tables": _cmd_tables,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        resolved = _resolve(args.mode, args)
        return _HANDLERS[args.mode](resolved)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
