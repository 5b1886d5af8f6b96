"""Batch command-line front-end.

    platoon-lab run <command> --scenario <path-or-preset> [--seed N] [--jobs N] [--out DIR]

Commands: headway, simulate, montecarlo, stability, oracle.  Results land in
the output directory (flag --out, else $PLATOON_LAB_OUT, else ./platoon-lab-out)
as CSV series, SVG plots and a report.json; a summary goes to stdout.

Exit codes: 0 success, 2 configuration error, 3 simulation divergence,
4 analysis error (non-Hurwitz dynamics).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import control, expectation, output, stability
from .channel import gamma_of
from .control import Scheme
from .scenario import Scenario, ScenarioError, load_scenario
from .sim import (SimOutput, SimulationDivergedError, empirical_string_stability,
                  monte_carlo, simulate, simulate_deterministic)

DEFAULT_SEED = 20201
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_ANALYSIS = 4


def _out_dir(arg: str | None) -> Path:
    root = arg or os.environ.get("PLATOON_LAB_OUT") or "platoon-lab-out"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _headway_table(scenario: Scenario) -> dict:
    cfg = scenario.config
    gamma = scenario.gamma_for_analysis()
    mu = scenario.mu_for_analysis()
    tau, ka = cfg.tau, cfg.gains.k_a
    table = {
        "gamma": gamma,
        "h_min_acc": control.min_headway_acc(tau),
        "h_min_cacc": control.min_headway_cacc(tau, gamma, ka),
        "h_min_cacc_plus": control.min_headway_cacc_plus(tau, gamma, ka),
    }
    if mu != gamma:
        table["mu"] = mu
        table["h_min_cacc_plus_mu"] = control.min_headway_cacc_plus_mu(tau, gamma, mu, ka)
    key = {Scheme.ACC: "h_min_acc", Scheme.CACC: "h_min_cacc",
           Scheme.CACC_PLUS: "h_min_cacc_plus"}[cfg.scheme]
    table["scheme"] = cfg.scheme.value
    table["configured_headway"] = cfg.policy.h_w
    table["headway_sufficient"] = cfg.policy.h_w >= table[key]
    return table


def cmd_headway(scenario: Scenario, outdir: Path, jobs: int) -> output.RunReport:
    verdicts = _headway_table(scenario)
    report = output.RunReport("headway", scenario.config_hash, verdicts)
    report.write(outdir / f"{scenario.output.prefix}-headway-report.json")
    print(f"gamma = {verdicts['gamma']:.4f}")
    for k in ("h_min_acc", "h_min_cacc", "h_min_cacc_plus", "h_min_cacc_plus_mu"):
        if k in verdicts:
            print(f"{k} = {verdicts[k]:.4f} s")
    state = "sufficient" if verdicts["headway_sufficient"] else "insufficient"
    print(f"configured headway {verdicts['configured_headway']:g} s is {state} "
          f"for scheme {verdicts['scheme']}")
    return report


def _write_run_outputs(scenario: Scenario, out: SimOutput, outdir: Path,
                       label: str, report: output.RunReport):
    prefix = scenario.output.prefix
    if scenario.output.csv:
        p = output.write_timeseries_csv(out, outdir / f"{prefix}-{label}-timeseries.csv")
        report.artifacts.append(p)
        p = output.write_peaks_csv(out.peak_errors(), outdir / f"{prefix}-{label}-peaks.csv")
        report.artifacts.append(p)
    if scenario.output.svg:
        series = {f"e{i + 1}": out.errors[i] for i in range(out.errors.shape[0])}
        p = output.write_svg(outdir / f"{prefix}-{label}-errors.svg", out.time, series,
                             title=f"{scenario.name} {label}: spacing errors")
        report.artifacts.append(p)


def _run_suite(scenario: Scenario, outdir: Path, report: output.RunReport) -> dict:
    cfg = scenario.config
    gamma_lossy = gamma_of(cfg.channel)
    mu_lossy = gamma_of(cfg.second_params())
    verdicts: dict = {"panels": []}
    for panel in scenario.suite:
        pcfg = replace(cfg, policy=replace(cfg.policy, h_w=panel.headway))
        gamma = 1.0 if panel.mode == "ideal" else gamma_lossy
        mu = 1.0 if panel.mode == "ideal" else mu_lossy
        out = simulate_deterministic(pcfg, scenario.maneuver, gamma, mu)
        stable, peaks = empirical_string_stability(out)
        entry = {"label": panel.label, "mode": panel.mode, "headway": panel.headway,
                 "gamma": gamma, "stable": stable,
                 "peaks": [float(p) for p in peaks]}
        if panel.mode == "lossy" and scenario.analysis.stochastic_seeds > 0:
            wins = 0
            n_seeds = scenario.analysis.stochastic_seeds
            for s in range(n_seeds):
                so = simulate(replace(pcfg, deterministic_gamma=None,
                                      master_seed=pcfg.master_seed + s),
                              scenario.maneuver)
                pk = so.peak_errors()
                wins += bool(pk[-1] > pk[0])
            entry["stochastic_last_exceeds_first"] = wins / n_seeds
        verdicts["panels"].append(entry)
        _write_run_outputs(scenario, out, outdir, panel.label, report)
    verdicts["pattern"] = ["stable" if p["stable"] else "unstable" for p in verdicts["panels"]]
    return verdicts


def cmd_simulate(scenario: Scenario, outdir: Path, jobs: int) -> output.RunReport:
    report = output.RunReport("simulate", scenario.config_hash, {})
    if scenario.suite:
        report.verdicts = _run_suite(scenario, outdir, report)
        print("suite verdicts:", ", ".join(
            f"{p['label']}={'stable' if p['stable'] else 'unstable'}"
            for p in report.verdicts["panels"]))
    else:
        out = simulate(scenario.config, scenario.maneuver)
        stable, peaks = empirical_string_stability(out)
        report.verdicts = {"stable": stable, "peaks": [float(p) for p in peaks],
                           "seed": out.seed}
        _write_run_outputs(scenario, out, outdir, "run", report)
        print(f"string stable: {stable}; per-follower peaks: "
              + ", ".join(f"{p:.3f}" for p in peaks))
    report.write(outdir / f"{scenario.output.prefix}-report.json")
    return report


def cmd_montecarlo(scenario: Scenario, outdir: Path, jobs: int) -> output.RunReport:
    stats = monte_carlo(scenario.config, scenario.maneuver,
                        scenario.analysis.n_realizations, jobs=jobs)
    last = -1
    peak_mean = float(stats.mean_trajectory_peaks[last])
    peak_det = float(stats.deterministic_peaks[last])
    rel_gap = abs(peak_mean - peak_det) / peak_det if peak_det else float("inf")
    report = output.RunReport("montecarlo", scenario.config_hash, {
        "n_realizations": stats.n_realizations,
        "last_vehicle_peak_of_mean": peak_mean,
        "last_vehicle_gamma_system_peak": peak_det,
        "relative_peak_gap": rel_gap,
        "mean_trajectory_peaks": [float(p) for p in stats.mean_trajectory_peaks],
        "deterministic_peaks": [float(p) for p in stats.deterministic_peaks],
    })
    prefix = scenario.output.prefix
    if scenario.output.csv:
        det = stats.deterministic_output
        with open(outdir / f"{prefix}-ensemble.csv", "w", encoding="utf-8") as fh:
            n_f = stats.mean_errors.shape[0]
            fh.write("t," + ",".join(f"mean_e{i + 1}" for i in range(n_f))
                     + "," + ",".join(f"det_e{i + 1}" for i in range(n_f)) + "\n")
            for k in range(det.time.shape[0]):
                row = [repr(float(det.time[k]))]
                row += [repr(float(stats.mean_errors[i, k])) for i in range(n_f)]
                row += [repr(float(det.errors[i, k])) for i in range(n_f)]
                fh.write(",".join(row) + "\n")
        report.artifacts.append(str(outdir / f"{prefix}-ensemble.csv"))
    if scenario.output.svg:
        det = stats.deterministic_output
        p = output.write_svg(outdir / f"{prefix}-ensemble.svg", det.time,
                             {"ensemble mean (last)": stats.mean_errors[last],
                              "gamma system (last)": det.errors[last]},
                             title=f"{scenario.name}: ensemble mean vs gamma system")
        report.artifacts.append(p)
    report.write(outdir / f"{prefix}-montecarlo-report.json")
    print(f"n={stats.n_realizations}: last-vehicle peak of mean {peak_mean:.3f} m, "
          f"gamma-system peak {peak_det:.3f} m, relative gap {rel_gap * 100:.2f}%")
    return report


def cmd_stability(scenario: Scenario, outdir: Path, jobs: int) -> output.RunReport:
    cfg = scenario.config
    gamma = scenario.gamma_for_analysis()
    verdicts = _headway_table(scenario)
    tau, hw = cfg.tau, cfg.policy.h_w
    if cfg.scheme is Scheme.CACC_PLUS:
        tf1, tf2 = stability.build_cacc_plus_tfs(cfg.gains, tau, hw, gamma)
        n1, n2 = stability.hinf_norm(tf1), stability.hinf_norm(tf2)
        ok, margin = stability.string_stable_sum([tf1, tf2])
        verdicts.update({"hinf_h_p1": n1, "hinf_h_p2": n2,
                         "hinf_sum": n1 + n2, "sum_margin": margin,
                         "frequency_condition": ok})
        scheme_key = "cacc_plus"
    else:
        tf = stability.build_cacc_tf(cfg.gains, tau, hw, 0.0 if cfg.scheme is Scheme.ACC else gamma)
        n1 = stability.hinf_norm(tf)
        verdicts.update({"hinf_h": n1, "hinf_margin": 1.0 - n1,
                         "frequency_condition": n1 <= 1.0 + 1e-9})
        scheme_key = "cacc"
    ss = stability.build_error_system(cfg.gains, tau, hw, gamma,
                                      scheme="cacc" if scheme_key == "cacc" else "cacc_plus")
    bound = stability.peak_output_bound(ss, scenario.analysis.alpha_star,
                                        scenario.analysis.w0_l2)
    verdicts.update({
        "j_value": bound.j_value, "m1": bound.m1, "m2": bound.m2,
        "peak_error_bound": bound.evaluate(scenario.analysis.w0_l2),
        "safe_standstill_distance": stability.safe_standstill_distance(
            bound, scenario.analysis.w0_l2),
    })
    report = output.RunReport("stability", scenario.config_hash, verdicts)
    report.write(outdir / f"{scenario.output.prefix}-stability-report.json")
    cond = "holds" if verdicts["frequency_condition"] else "violated"
    print(f"frequency-domain condition {cond}; peak error bound "
          f"{verdicts['peak_error_bound']:.3f} m")
    return report


def cmd_oracle(scenario: Scenario, outdir: Path, jobs: int) -> output.RunReport:
    spec = expectation.from_platoon(scenario.config)
    rows = []
    for k in range(1, 7):
        holds, gap = expectation.check_multilinearity(spec, k)
        rows.append({"k": k, "holds": holds, "frobenius_gap": gap})
    verdicts = {"n_variables": spec.n_vars, "checks": rows,
                "identity_holds_all": all(r["holds"] for r in rows)}
    report = output.RunReport("oracle", scenario.config_hash, verdicts)
    prefix = scenario.output.prefix
    with open(outdir / f"{prefix}-oracle.csv", "w", encoding="utf-8") as fh:
        fh.write("k,holds,frobenius_gap\n")
        for r in rows:
            fh.write(f"{r['k']},{int(r['holds'])},{repr(r['frobenius_gap'])}\n")
    report.artifacts.append(str(outdir / f"{prefix}-oracle.csv"))
    report.write(outdir / f"{prefix}-oracle-report.json")
    for r in rows:
        print(f"k={r['k']}: E[A^k] == (E[A])^k -> {r['holds']} (gap {r['frobenius_gap']:.3e})")
    return report


_COMMANDS = {
    "headway": cmd_headway,
    "simulate": cmd_simulate,
    "montecarlo": cmd_montecarlo,
    "stability": cmd_stability,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platoon-lab",
                                     description="Lossy-V2V platoon analysis toolkit")
    sub = parser.add_subparsers(dest="mode", required=True)
    run = sub.add_parser("run", help="run one analysis command on a scenario")
    run.add_argument("command", choices=sorted(_COMMANDS))
    run.add_argument("--scenario", required=True,
                     help="scenario file path or bundled preset name")
    run.add_argument("--seed", type=int, default=DEFAULT_SEED,
                     help=f"master seed (default {DEFAULT_SEED})")
    run.add_argument("--jobs", type=int, default=1,
                     help="parallel workers for ensemble runs")
    run.add_argument("--out", default=None, help="output directory "
                     "(default $PLATOON_LAB_OUT or ./platoon-lab-out)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario, master_seed=args.seed)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = _out_dir(args.out)
    try:
        _COMMANDS[args.command](scenario, outdir, max(1, args.jobs))
    except SimulationDivergedError as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except stability.UnstableTransferFunctionError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
