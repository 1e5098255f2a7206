"""Command-line surface: fit, sweep, simulate, evaluate, and report.

Every subcommand writes a result document (JSON) plus flat plot-data
files into the output directory (``--out``, defaulting to the
``MIXMEM_OUTDIR`` environment variable or the working directory). Runs
are deterministic given ``--seed``.
"""

import argparse
import itertools
import json
import os
import sys

import numpy as np

from mixmem import summaries
from mixmem.dataset import CountMatrix, load_dataset, save_dataset
from mixmem.mixed_membership import MixedMembership, sample_mixed_membership
from mixmem.mixture import PoissonMixture
from mixmem.results import (
    config_hash,
    format_profile_set,
    load_result,
    write_plot_csv,
    write_result,
)
from mixmem.selection import MCConfig, sweep
from mixmem.validation import resolve_delta

__all__ = ["main"]

HIST_BINS = 20


def _parse_delta(text):
    text = text.strip()
    if text == "1/G":
        return text
    if "," in text:
        return [float(v) for v in text.split(",")]
    return float(text)


def _outdir(args):
    out = args.out or os.environ.get("MIXMEM_OUTDIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _histogram_rows(values, lo, hi):
    counts, edges = np.histogram(values, bins=HIST_BINS, range=(lo, hi))
    return [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))]


def _write_membership_plots(outdir, meta, model, data):
    n_prof = model.rates_.shape[0]
    map_z = summaries.map_assignments(model.phi_)
    eom = summaries.extent_of_membership(model.membership_)
    unc = summaries.assignment_uncertainty(model.phi_)

    write_plot_csv(
        os.path.join(outdir, "eom_hist.csv"),
        ["bin_left", "bin_right", "count"],
        _histogram_rows(eom, 1.0, float(n_prof)), meta)
    write_plot_csv(
        os.path.join(outdir, "uncertainty_hist.csv"),
        ["bin_left", "bin_right", "count"],
        _histogram_rows(unc.ravel(), 0.0, 1.0 - 1.0 / n_prof if n_prof > 1 else 1.0),
        meta)

    if n_prof >= 3:
        rows = []
        for face in itertools.combinations(range(1, n_prof + 1), 3):
            coords = summaries.ternary_coordinates(model.membership_, face)
            tag = "-".join(str(p) for p in face)
            for rid, (x, y) in zip(data.row_ids, coords):
                rows.append((tag, rid, x, y))
        write_plot_csv(os.path.join(outdir, "ternary_coords.csv"),
                       ["face", "id", "x", "y"], rows, meta)
    return map_z, eom, unc


def _write_theta_curves(outdir, meta, rates, col_labels):
    rows = [(g + 1, col_labels[m], rates[g, m])
            for g in range(rates.shape[0]) for m in range(rates.shape[1])]
    write_plot_csv(os.path.join(outdir, "theta_curves.csv"),
                   ["component", "attribute", "rate"], rows, meta)


def _recovery_metrics(model, truth_dir):
    rates_true = np.loadtxt(os.path.join(truth_dir, "true_rates_exact.csv"),
                            delimiter=",", skiprows=1,
                            usecols=range(1, model.rates_.shape[1] + 1), ndmin=2)
    true_tau = np.loadtxt(os.path.join(truth_dir, "true_tau.csv"),
                          delimiter=",", skiprows=1,
                          usecols=range(1, model.rates_.shape[0] + 1), ndmin=2)
    perm = summaries.align_labels(model.rates_, rates_true)
    aligned_rates = model.rates_[perm]
    aligned_tau = model.membership_[:, perm]
    return {
        "permutation": [int(p) for p in perm],
        "mean_relative_rate_error": float(
            np.mean(np.abs(aligned_rates - rates_true) / rates_true)),
        "mean_abs_tau_error": float(np.mean(np.abs(aligned_tau - true_tau))),
    }


def _cmd_simulate(args):
    outdir = _outdir(args)
    rng = np.random.default_rng(args.seed)
    if args.base_rates:
        base = np.asarray([float(v) for v in args.base_rates.split(",")])
        if base.shape[0] != args.G:
            raise ValueError(f"--base-rates needs {args.G} values")
    else:
        base = 2.0 * 3.0 ** np.arange(args.G)
    jitter = rng.uniform(-args.rate_jitter, args.rate_jitter, size=(args.G, args.M))
    rates = base[:, np.newaxis] * (1.0 + jitter)

    delta = resolve_delta(_parse_delta(args.delta), args.G)
    X, tau, z = sample_mixed_membership(rates, delta, args.N, random_state=rng)

    col_labels = [f"h{j + 1}" for j in range(args.M)]
    row_ids = [f"obs{i + 1}" for i in range(args.N)]
    data = CountMatrix(values=X, row_ids=row_ids, col_labels=col_labels)
    save_dataset(data, os.path.join(outdir, "dataset.csv"))

    config = {
        "command": "simulate", "G": args.G, "N": args.N, "M": args.M,
        "delta": delta, "base_rates": base, "rate_jitter": args.rate_jitter,
        "seed": args.seed,
    }
    meta = {"seed": args.seed, "config_hash": config_hash(config)}

    with open(os.path.join(outdir, "true_rates_exact.csv"), "w", encoding="utf-8") as fh:
        fh.write("profile," + ",".join(col_labels) + "\n")
        for g in range(args.G):
            fh.write(str(g + 1) + "," + ",".join(repr(v) for v in rates[g]) + "\n")
    with open(os.path.join(outdir, "true_tau.csv"), "w", encoding="utf-8") as fh:
        fh.write("id," + ",".join(f"profile_{g + 1}" for g in range(args.G)) + "\n")
        for rid, row in zip(row_ids, tau):
            fh.write(rid + "," + ",".join(repr(v) for v in row) + "\n")
    save_dataset(CountMatrix(values=z + 1, row_ids=row_ids, col_labels=col_labels),
                 os.path.join(outdir, "true_z.csv"))

    write_result(os.path.join(outdir, "result.json"), "simulate", args.seed, config, {
        "n_obs": args.N, "n_attributes": args.M, "n_profiles": args.G,
        "files": {
            "dataset": "dataset.csv", "true_rates_exact": "true_rates_exact.csv",
            "true_tau": "true_tau.csv", "true_z": "true_z.csv",
        },
    })
    _write_theta_curves(outdir, meta, rates, col_labels)
    return 0


def _cmd_fit_mm(args):
    outdir = _outdir(args)
    data = load_dataset(args.data)
    model = MixedMembership(
        n_profiles=args.G, delta=_parse_delta(args.delta), mode=args.mode,
        prior_shape=args.prior_shape, prior_rate=args.prior_rate,
        tol=args.tol, max_iter=args.max_iter, n_restarts=args.restarts,
        random_state=args.seed,
    )
    model.fit(data.values)

    config = {
        "command": "fit-mm", "data": os.path.basename(args.data), "G": args.G,
        "delta": model.delta_, "mode": args.mode,
        "prior_shape": args.prior_shape, "prior_rate": args.prior_rate,
        "tol": args.tol, "max_iter": args.max_iter, "restarts": args.restarts,
        "seed": args.seed,
    }
    meta = {"seed": args.seed, "config_hash": config_hash(config)}

    map_z, eom, unc = _write_membership_plots(outdir, meta, model, data)
    _write_theta_curves(outdir, meta, model.rates_, data.col_labels)

    results = {
        "elbo": model.lower_bound_, "converged": model.converged_,
        "n_iter": model.n_iter_, "elbo_trace": model.elbo_trace_,
        "rates": model.rates_, "membership": model.membership_,
        "gamma": model.gamma_, "phi": model.phi_,
        "map_z": map_z, "profile_sets": [list(s) for s in summaries.profile_sets(map_z)],
        "eom": eom, "uncertainty": unc,
        "row_ids": data.row_ids, "col_labels": data.col_labels,
        "mode": args.mode,
    }
    if args.mode == "bayes":
        results["posterior_eta"] = model.eta_post_
        results["posterior_nu"] = model.nu_post_

    if args.truth_dir:
        recovery = _recovery_metrics(model, args.truth_dir)
        results["recovery"] = recovery
        with open(os.path.join(outdir, "recovery.json"), "w", encoding="utf-8") as fh:
            json.dump(recovery, fh, sort_keys=True, indent=1)
            fh.write("\n")

    write_result(os.path.join(outdir, "result.json"), "mm_fit", args.seed,
                 config, results)
    return 0


def _cmd_fit_mixture(args):
    outdir = _outdir(args)
    data = load_dataset(args.data)
    model = PoissonMixture(n_components=args.G, tol=args.tol,
                           max_iter=args.max_iter, n_restarts=args.restarts,
                           random_state=args.seed)
    model.fit(data.values)
    labels, unc = summaries.mixture_assignments(model.responsibilities_)

    config = {
        "command": "fit-mixture", "data": os.path.basename(args.data),
        "G": args.G, "tol": args.tol, "max_iter": args.max_iter,
        "restarts": args.restarts, "seed": args.seed,
    }
    meta = {"seed": args.seed, "config_hash": config_hash(config)}
    _write_theta_curves(outdir, meta, model.rates_, data.col_labels)

    write_result(os.path.join(outdir, "result.json"), "mixture_fit", args.seed, config, {
        "loglik": model.loglik_, "bic": model.bic(data.values),
        "converged": model.converged_, "n_iter": model.n_iter_,
        "loglik_trace": model.loglik_trace_, "weights": model.weights_,
        "rates": model.rates_, "map_groups": labels, "uncertainty": unc,
        "responsibilities": model.responsibilities_,
        "row_ids": data.row_ids, "col_labels": data.col_labels,
    })
    return 0


def _cmd_sweep(args):
    outdir = _outdir(args)
    data = load_dataset(args.data)
    g_values = list(range(1, args.g_max + 1))
    mc = MCConfig(n_draws=args.draws, seed=args.seed, split=args.split)
    rows = sweep(
        data.values, g_values, mode=args.mode, mc=mc, seed=args.seed,
        n_jobs=args.threads,
        mm_kwargs={"n_restarts": args.restarts, "tol": args.tol,
                   "max_iter": args.max_iter, "delta": _parse_delta(args.delta)},
        mixture_kwargs={"n_restarts": args.restarts, "max_iter": args.max_iter},
    )

    config = {
        "command": "sweep", "data": os.path.basename(args.data),
        "g_max": args.g_max, "mode": args.mode, "draws": args.draws,
        "split": args.split, "delta": args.delta, "restarts": args.restarts,
        "tol": args.tol, "max_iter": args.max_iter, "seed": args.seed,
    }
    meta = {
        "seed": args.seed, "config_hash": config_hash(config),
        "holdout_orientation": "higher_is_better",
        "bic_orientation": "lower_is_better (negate when plotting as a score)",
    }

    def best(criterion, pick):
        scored = [r for r in rows if r.criterion == criterion and r.error is None
                  and np.isfinite(r.value)]
        return pick(scored, key=lambda r: r.value).n_components if scored else None

    selected = {"holdout_loglik": best("holdout_loglik", max), "bic": best("bic", min)}

    write_plot_csv(
        os.path.join(outdir, "sweep.csv"),
        ["criterion", "n_components", "value", "converged", "n_iter", "error"],
        [(r.criterion, r.n_components,
          "" if r.value is None or not np.isfinite(r.value) else repr(r.value),
          r.converged, r.n_iter, r.error or "") for r in rows],
        meta)
    write_result(os.path.join(outdir, "result.json"), "sweep", args.seed, config, {
        "rows": [{"n_components": r.n_components, "criterion": r.criterion,
                  "value": None if r.value is None or not np.isfinite(r.value)
                  else float(r.value),
                  "converged": r.converged, "n_iter": r.n_iter,
                  "fit_value": r.fit_value, "error": r.error} for r in rows],
        "selected": selected,
    })
    return 0


def _cmd_evaluate(args):
    outdir = _outdir(args)
    doc = load_result(args.fit)
    if doc.get("kind") != "mm_fit":
        raise ValueError("evaluate expects the result.json of a fit-mm run")
    res = doc["results"]
    phi = np.asarray(res["phi"], dtype=float)
    membership = np.asarray(res["membership"], dtype=float)
    n_prof = phi.shape[2]

    map_z = summaries.map_assignments(phi)
    sets = summaries.profile_sets(map_z)
    eom = summaries.extent_of_membership(membership)
    unc = summaries.assignment_uncertainty(phi)

    config = {"command": "evaluate", "fit": os.path.basename(args.fit),
              "source_config_hash": doc["config_hash"]}
    meta = {"seed": doc["seed"], "config_hash": config_hash(config)}

    write_plot_csv(os.path.join(outdir, "eom_hist.csv"),
                   ["bin_left", "bin_right", "count"],
                   _histogram_rows(eom, 1.0, float(n_prof)), meta)
    write_plot_csv(os.path.join(outdir, "uncertainty_hist.csv"),
                   ["bin_left", "bin_right", "count"],
                   _histogram_rows(unc.ravel(), 0.0,
                                   1.0 - 1.0 / n_prof if n_prof > 1 else 1.0),
                   meta)
    if n_prof >= 3:
        rows = []
        for face in itertools.combinations(range(1, n_prof + 1), 3):
            coords = summaries.ternary_coordinates(membership, face)
            tag = "-".join(str(p) for p in face)
            for rid, (x, y) in zip(res["row_ids"], coords):
                rows.append((tag, rid, x, y))
        write_plot_csv(os.path.join(outdir, "ternary_coords.csv"),
                       ["face", "id", "x", "y"], rows, meta)

    write_result(os.path.join(outdir, "result.json"), "evaluate", doc["seed"], config, {
        "eom": eom, "uncertainty": unc, "map_z": map_z,
        "profile_sets": [list(s) for s in sets],
    })
    return 0


def _cmd_report(args):
    outdir = _outdir(args)
    mm_doc = load_result(args.mm_fit)
    mix_doc = load_result(args.mixture_fit)
    if mm_doc.get("kind") != "mm_fit" or mix_doc.get("kind") != "mixture_fit":
        raise ValueError("report expects one fit-mm and one fit-mixture result")
    sets = [tuple(s) for s in mm_doc["results"]["profile_sets"]]
    groups = mix_doc["results"]["map_groups"]
    if len(sets) != len(groups):
        raise ValueError("the two fits cover different numbers of observations")

    tab = summaries.cross_tabulate(groups, sets)
    config = {"command": "report",
              "mm_fit": os.path.basename(args.mm_fit),
              "mixture_fit": os.path.basename(args.mixture_fit),
              "mm_config_hash": mm_doc["config_hash"],
              "mixture_config_hash": mix_doc["config_hash"]}
    meta = {"seed": mm_doc["seed"], "config_hash": config_hash(config)}

    header = ["group"] + [format_profile_set(s) for s in tab.col_labels]
    rows = [[f"Group {g}"] + [int(c) for c in tab.counts[i]]
            for i, g in enumerate(tab.row_labels)]
    write_plot_csv(os.path.join(outdir, "crosstab.csv"), header, rows, meta)

    write_result(os.path.join(outdir, "result.json"), "report", mm_doc["seed"], config, {
        "crosstab": {
            "group_labels": tab.row_labels,
            "set_labels": [list(s) for s in tab.col_labels],
            "counts": tab.counts,
        },
    })
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mixmem",
        description="Mixed membership and mixture modelling of count matrices.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--out", default=None,
                       help="output directory (default $MIXMEM_OUTDIR or .)")

    p = sub.add_parser("simulate", help="draw a dataset from the generative process")
    p.add_argument("--G", type=int, required=True, help="number of profiles")
    p.add_argument("--N", type=int, required=True, help="number of observations")
    p.add_argument("--M", type=int, required=True, help="number of attributes")
    p.add_argument("--delta", default="1/G")
    p.add_argument("--base-rates", default=None,
                   help="comma-separated per-profile base rates "
                        "(default 2,6,18,... tripling)")
    p.add_argument("--rate-jitter", type=float, default=0.2,
                   help="relative per-attribute rate variation")
    add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit-mm", help="fit a mixed membership model")
    p.add_argument("--data", required=True)
    p.add_argument("--G", type=int, required=True)
    p.add_argument("--mode", choices=["nuisance", "bayes"], default="nuisance")
    p.add_argument("--delta", default="1/G")
    p.add_argument("--prior-shape", type=float, default=0.01)
    p.add_argument("--prior-rate", type=float, default=0.01)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--truth-dir", default=None,
                   help="directory written by `simulate`; adds recovery metrics")
    add_common(p)
    p.set_defaults(func=_cmd_fit_mm)

    p = sub.add_parser("fit-mixture", help="fit the Poisson mixture baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--G", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--restarts", type=int, default=10)
    add_common(p)
    p.set_defaults(func=_cmd_fit_mixture)

    p = sub.add_parser("sweep", help="model selection over candidate counts")
    p.add_argument("--data", required=True)
    p.add_argument("--g-max", type=int, required=True)
    p.add_argument("--mode", choices=["nuisance", "bayes"], default="nuisance")
    p.add_argument("--draws", type=int, default=100_000,
                   help="Monte Carlo draws for the hold-out likelihood")
    p.add_argument("--split", type=float, default=None,
                   help="optional held-out fraction of observations")
    p.add_argument("--delta", default="1/G")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--threads", type=int, default=1,
                   help="parallel sweep rows (default 1 for bit-reproducibility)")
    add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("evaluate", help="recompute summary statistics from a saved fit")
    p.add_argument("--fit", required=True, help="result.json of a fit-mm run")
    add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="cross-tabulate a mixture fit against mapped profiles")
    p.add_argument("--mm-fit", required=True, help="result.json of a fit-mm run")
    p.add_argument("--mixture-fit", required=True,
                   help="result.json of a fit-mixture run")
    add_common(p)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"mixmem: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
