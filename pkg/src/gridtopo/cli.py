"""Command-line entry point: ``gridtopo learn|simulate|experiment|thresholds``."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .covariance import analytic_theta_covariance
from .grid import GridError, build_laplacian, topology_error
from .harness import SpecError, emit_results, format_errors_csv, load_spec, resolve_grid, run_experiment
from .learner import LearnError, LearnerConfig, learn_topology, theoretical_thresholds, write_report
from .powerflow import MODELS, PowerFlowError, simulate
from .samples import read_samples_csv, write_samples_csv


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridtopo", description="Learn grid topology from voltage samples.")
    sub = p.add_subparsers(dest="command", required=True)

    lp = sub.add_parser("learn", help="estimate the edge set from a sample CSV")
    lp.add_argument("--grid", required=True, help="fixture name or grid file (used to score the estimate)")
    lp.add_argument("--samples", required=True, help="sample CSV written by 'simulate'")
    lp.add_argument("--tau1", type=float, required=True)
    lp.add_argument("--tau2", type=float, required=True)
    lp.add_argument("--tau3", type=float, required=True)
    lp.add_argument("--mode", choices=("dc", "lc"), default="dc")
    lp.add_argument("--joint", action="store_true", help="take neighbours from the first-stage regressions")
    lp.add_argument("--report", help="also write a sectioned report file")

    sp = sub.add_parser("simulate", help="draw voltage samples")
    sp.add_argument("--grid", required=True)
    sp.add_argument("--model", required=True, choices=MODELS)
    sp.add_argument("--T", type=int, required=True)
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--rho", type=float, default=0.0)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)

    ep = sub.add_parser("experiment", help="run an error-curve experiment")
    ep.add_argument("--spec", required=True, help="key = value experiment file")
    ep.add_argument("--out", required=True, help="output directory")

    tp = sub.add_parser("thresholds", help="oracle thresholds and the SNR check")
    tp.add_argument("--grid", required=True)
    tp.add_argument("--sigma", type=float, required=True)
    tp.add_argument("--noise", type=float, default=0.0, help="noise variance as a fraction of each node's angle variance")
    return p


def _learn(a) -> int:
    grid = resolve_grid(a.grid)
    samples = read_samples_csv(a.samples)
    cfg = LearnerConfig(a.tau1, a.tau2, a.tau3, mode=a.mode, joint_mode=a.joint)
    out = learn_topology(samples, cfg)
    print("zero_injection: " + " ".join(str(k) for k in sorted(out.zero_injection)))
    print("edges:")
    for i, j in sorted(out.edges):
        print(f"  {i} {j}")
    if out.merge.representative:
        print("merged: " + " ".join(f"{k}->{r}" for k, r in sorted(out.merge.representative.items())))
    print(f"topology_error: {topology_error(grid, out.estimate):.6g}")
    if a.report:
        write_report(out, a.report)
    return 0


def _simulate(a) -> int:
    grid = resolve_grid(a.grid)
    s = simulate(grid, a.model, a.T, a.sigma, a.rho, seed=a.seed, noise=a.noise)
    write_samples_csv(s, a.out)
    print(f"wrote {s.T} samples over {s.N} nodes to {a.out}")
    return 0


def _experiment(a) -> int:
    spec = load_spec(a.spec)

    def progress(k, n):
        print(f"trial {k}/{n}", file=sys.stderr)

    curve = run_experiment(spec, progress=progress)
    csv_path, plot_path = emit_results(curve, a.out)
    for r, cfg in curve.thresholds.items():
        print(f"# r={r:g}: tau1={cfg.tau1:.6g} tau2={cfg.tau2:.6g} tau3={cfg.tau3:.6g}")
    sys.stdout.write(format_errors_csv(curve))
    for (T, r), d in sorted(curve.diagnostics.items()):
        if d["pf_failures"] or d["learn_failures"]:
            print(f"# T={T} r={r:g}: {d['pf_failures']} power-flow failure(s), "
                  f"{d['learn_failures']} learner failure(s)", file=sys.stderr)
    print(f"wrote {csv_path} and {plot_path}", file=sys.stderr)
    return 0


def _thresholds(a) -> int:
    grid = resolve_grid(a.grid)
    var = a.sigma ** 2
    noise = None
    if a.noise:
        S = analytic_theta_covariance(build_laplacian(grid), var, grid.zero_injection)
        noise = a.noise * np.diag(S.values)
    rep = theoretical_thresholds(grid, var, noise)
    print(f"tau1 {rep.tau1:.6g}")
    print(f"tau2 {rep.tau2:.6g}")
    print(f"tau3 {rep.tau3:.6g}")
    print(f"beta_min {rep.beta_min:.6g}")
    print(f"s_id {rep.s_id:.6g}")
    print(f"sigma_min_signal {rep.sigma_min_signal:.6g}")
    print(f"snr {rep.snr:.6g}")
    print("snr_bounds " + " ".join(f"{b:.6g}" for b in rep.snr_bounds))
    print(f"snr_required {rep.snr_required:.6g}")
    print(f"snr_ok {'yes' if rep.snr_ok else 'no'}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"learn": _learn, "simulate": _simulate, "experiment": _experiment,
               "thresholds": _thresholds}[args.command]
    try:
        return handler(args)
    except (SpecError, GridError, LearnError, PowerFlowError, ValueError, KeyError, OSError) as exc:
        print(f"gridtopo {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
