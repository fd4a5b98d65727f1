"""
Scenario runner for the recovery-induced erasure toolkit.

    python main.py [--config FILE] [--seed N] [--out DIR] [--workers N] <command> ...

Every command writes plot-ready CSV/JSON through LocalStorage and returns
0 on success, 2 on configuration errors (before any computation) and 1 on
any other failure.
"""

import argparse
import logging
import math
import os
import sys
from typing import List, Optional

import config
from config import ScenarioConfig, load_scenario
from errors import ConfigurationError, RieError
from local_storage import LocalStorage
from process.adversary import (AttackMode, bound_click_probabilities,
                               branch_click_probabilities, effective_r)
from process.analysis import (closed_form_summary, mutual_info_curve, no_attack_summary,
                              r_threshold, stealth_crossing, stealth_scan)
from process.detector import DeadTimeCurve, busy_fraction
from process.protocol import BRANCH_CSV_HEADER, branch_table, run_simulation
from process.timetag import (DeadTimeMode, apply_dead_time, estimate_dead_time,
                             generate_poisson_stream, interarrival_histogram,
                             read_timestamp_file, sweep_dead_time, write_timestamp_file)

logger = logging.getLogger("main")


# ===== DEAD-TIME EXTRACTION =====
def cmd_deadtime_extract(scenario: ScenarioConfig, args, storage: LocalStorage) -> dict:
    section = scenario.extract
    path = args.timestamp_file or section.timestamp_file
    if not path:
        raise ConfigurationError("❌ No timestamp file given (argument or extract.timestamp_file)")
    bin_width = args.bin_width if args.bin_width is not None else section.bin_width
    min_count = args.min_count if args.min_count is not None else section.min_count

    stream = read_timestamp_file(path, section.resolution)
    hist = interarrival_histogram(stream, bin_width, section.max_gap)
    estimate = estimate_dead_time(hist, min_count)

    storage.write_csv("extract", "histogram.csv", ["bin_start_s", "count"], hist.rows(),
                      meta={"bin_width_s": hist.bin_width})
    result = {
        "source": os.path.basename(path),
        "n_timestamps": len(stream),
        "lambda_obs_cps": stream.rate,
        "t_d_estimate_s": estimate,
        "bin_width_s": hist.bin_width,
        "min_count": min_count,
    }
    storage.write_json("extract", "deadtime_estimate.json", result)
    print(f"t_d = {estimate * 1e9:.3f} ns at lambda_obs = {stream.rate / 1e6:.4f} Mcps "
          f"({len(stream)} timestamps)")
    return result


# ===== DEAD-TIME SWEEP =====
def cmd_sweep(scenario: ScenarioConfig, args, storage: LocalStorage) -> dict:
    section = scenario.sweep
    truth = scenario.curve()
    points = sweep_dead_time(
        section.rates, truth, section.duration,
        bin_width=section.bin_width,
        seed=scenario.seed,
        min_count=section.min_count,
        max_gap=section.max_gap,
        events_per_point=section.events_per_point,
        workers=scenario.workers,
    )
    storage.write_csv("sweep", "t_d_vs_rate.csv", ["lambda_obs_cps", "t_d_est_s"],
                      [(p.lambda_observed, p.t_d_estimate) for p in points])

    recovered = DeadTimeCurve.from_measurements((p.lambda_observed, p.t_d_estimate) for p in points)
    storage.write_csv("sweep", "busy_fraction.csv", ["lambda_obs_cps", "busy_fraction"],
                      [(lam, busy_fraction(lam, recovered)) for lam in recovered.lambdas])
    storage.write_csv("sweep", "sweep_points.csv",
                      ["beta_cps", "lambda_obs_cps", "t_d_est_s", "t_d_truth_s"],
                      [(p.true_rate, p.lambda_observed, p.t_d_estimate, p.t_d_truth) for p in points])
    if not recovered.is_monotone():
        logger.warning("⚠️ Recovered dead-time curve is not monotone in the observed rate")
    for p in points:
        print(f"beta={p.true_rate / 1e6:9.3f} Mcps  lambda_obs={p.lambda_observed / 1e6:9.4f} Mcps  "
              f"t_d={p.t_d_estimate * 1e9:7.3f} ns  (truth {p.t_d_truth * 1e9:7.3f} ns)")
    return {"points": len(points)}


# ===== MONTE CARLO =====
def cmd_simulate(scenario: ScenarioConfig, args, storage: LocalStorage) -> dict:
    protocol = scenario.protocol_config()
    attack = scenario.attack_config()
    report = run_simulation(protocol, attack, workers=scenario.workers)

    p_par, p_perp = branch_click_probabilities(
        attack, protocol.dead_time_curve, protocol.availability_model,
        protocol.effective_p0, protocol.receiver_loading,
    )
    storage.write_json("simulate", "report.json", report.to_dict(),
                       meta={"p_parallel_model": p_par, "p_perp_model": p_perp})
    storage.write_csv("simulate", "branches.csv", BRANCH_CSV_HEADER,
                      [[row[k] for k in BRANCH_CSV_HEADER] for row in report.branch_rows()])

    # ตาราง branch เฉพาะกรณี fix สถานะของ Alice
    if protocol.fixed_alice is not None:
        rows = branch_table(report, protocol.fixed_alice)
        storage.write_csv(
            "simulate", "branch_table.csv",
            ["eve_basis", "eve_bit", "prepulse", "bob_basis", "signal_detector_loaded",
             "rounds", "clicks", "click_rate", "kept", "sifted", "errors", "error_rate",
             "insufficient_data"],
            [(r.eve_basis.value if r.eve_basis else None, r.eve_bit, r.prepulse, r.bob_basis.value,
              r.signal_detector_loaded, r.rounds, r.clicks, r.click_rate, r.kept, r.sifted,
              r.errors, r.error_rate, r.insufficient_data) for r in rows],
            meta={"fixed_alice": protocol.fixed_alice.label},
        )

    qber = "n/a" if report.qber_observed is None else f"{report.qber_observed:.5f}"
    print(f"attack={attack.mode.value} rounds={report.n_rounds} sifted={report.n_sifted} "
          f"QBER={qber} abort={str(report.abort).lower()}")
    return report.to_dict()


# ===== CLOSED FORMS =====
def cmd_analytic(scenario: ScenarioConfig, args, storage: LocalStorage) -> dict:
    protocol = scenario.protocol_config()
    attack = scenario.attack_config()
    curve, model = protocol.dead_time_curve, protocol.availability_model

    if attack.mode is AttackMode.NONE:
        summary = no_attack_summary(protocol.effective_p0, protocol.abort_threshold)
        summary["effective_r"] = None
    else:
        p_par, p_perp = bound_click_probabilities(attack, curve, model, protocol.effective_p0)
        summary = closed_form_summary(p_par, p_perp, protocol.abort_threshold)
        summary["effective_r"] = effective_r(attack, curve, model, protocol.effective_p0)
        mc_par, mc_perp = branch_click_probabilities(attack, curve, model, protocol.effective_p0,
                                                     protocol.receiver_loading)
        summary["p_parallel_engine"] = mc_par
        summary["p_perp_engine"] = mc_perp
    summary["attack_mode"] = attack.mode.value
    storage.write_json("analytic", "summary.json", summary)
    r_text = "n/a" if summary["r"] is None else f"{summary['r']:.5f}"
    stealthy = "n/a" if summary["stealthy"] is None else str(summary["stealthy"]).lower()
    print(f"r={r_text} e_obs={summary['e_obs']:.5f} r_th={summary['r_threshold']:.5f} "
          f"stealthy={stealthy}")
    return summary


# ===== STEALTH SCAN =====
def cmd_stealth_scan(scenario: ScenarioConfig, args, storage: LocalStorage) -> dict:
    section = scenario.scan
    curve = scenario.curve()
    grid = section.perp_grid()
    rows = stealth_scan(section.lambda_par, grid, curve, section.e_abort)
    threshold = r_threshold(section.e_abort)
    crossings = {}
    for lam_par in section.lambda_par:
        crossing = stealth_crossing(lam_par, grid, curve, section.e_abort)
        crossings[repr(float(lam_par))] = crossing
        if crossing is None:
            print(f"lambda_par={lam_par / 1e6:g} Mcps: no stealth crossing on the grid")
        else:
            print(f"lambda_par={lam_par / 1e6:g} Mcps: r_bound < {threshold:.4f} "
                  f"above lambda_perp = {crossing / 1e6:.3f} Mcps")

    invalid = sum(1 for r in rows if not r.valid)
    storage.write_csv(
        "scan", "stealth_scan.csv", ["lambda_par_cps", "lambda_perp_cps", "r_bound", "stealthy"],
        [(r.lambda_parallel, r.lambda_perp, r.r_bound if r.valid else math.nan, r.stealthy)
         for r in rows],
        meta={"r_threshold": threshold, "e_abort": section.e_abort,
              "invalid_rows": invalid, "crossings": crossings},
    )
    return {"rows": len(rows), "invalid_rows": invalid, "crossings": crossings}


# ===== MUTUAL INFORMATION =====
def cmd_mutualinfo(scenario: ScenarioConfig, args, storage: LocalStorage) -> dict:
    section = scenario.mutualinfo
    rows = mutual_info_curve(section.grid())
    threshold = r_threshold(section.e_abort)
    storage.write_csv("mutualinfo", "mutual_info.csv", ["r", "i_ab", "i_ae"], rows,
                      meta={"r_threshold": threshold, "e_abort": section.e_abort})
    print(f"{len(rows)} points, r_threshold = {threshold:.6f}")
    return {"rows": len(rows), "r_threshold": threshold}


# ===== SYNTHETIC TIMESTAMPS =====
def cmd_generate_timestamps(scenario: ScenarioConfig, args, storage: LocalStorage) -> dict:
    section = scenario.generate
    stream = generate_poisson_stream(section.beta, section.duration, scenario.seed)
    if section.constant_t_d is not None:
        filtered = apply_dead_time(stream, mode=DeadTimeMode.CONSTANT, constant_t_d=section.constant_t_d)
    else:
        filtered = apply_dead_time(stream, scenario.curve(), DeadTimeMode.RATE_DEPENDENT)
    # เขียนไฟล์ก่อน แล้วค่อยลงทะเบียนใน metadata
    write_timestamp_file(filtered, storage.path_for("timestamps", section.name))
    path = storage.index_file("timestamps", section.name,
                              meta={"beta_cps": section.beta, "lambda_obs_cps": filtered.rate,
                                    "n_timestamps": len(filtered)})
    print(f"{len(filtered)} timestamps at {filtered.rate / 1e6:.4f} Mcps -> {path}")
    return {"path": path, "n_timestamps": len(filtered)}


HANDLERS = {
    "deadtime-extract": cmd_deadtime_extract,
    "sweep-deadtime": cmd_sweep,
    "simulate": cmd_simulate,
    "analytic": cmd_analytic,
    "stealth-scan": cmd_stealth_scan,
    "mutualinfo": cmd_mutualinfo,
    "generate-timestamps": cmd_generate_timestamps,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Recovery-induced erasure attack: simulator and analytic toolkit",
    )
    parser.add_argument("--config", type=str, default=None, help="Scenario JSON file")
    parser.add_argument("--seed", type=int, default=None, help="Override scenario seed")
    parser.add_argument("--out", type=str, default=None, help="Output directory")
    parser.add_argument("--workers", type=int, default=None, help="Worker processes")
    sub = parser.add_subparsers(dest="command", required=True)

    extract = sub.add_parser("deadtime-extract", help="Estimate t_d from a timestamp file")
    extract.add_argument("timestamp_file", nargs="?", default=None)
    extract.add_argument("--bin-width", type=float, default=None, help="Histogram bin width [s]")
    extract.add_argument("--min-count", type=int, default=None)

    sub.add_parser("sweep-deadtime", help="Synthetic t_d(lambda) recovery sweep")

    simulate = sub.add_parser("simulate", help="Monte Carlo protocol run")
    simulate.add_argument("--rounds", type=int, default=None)
    simulate.add_argument("--fixed-alice", type=str, default=None, help="Z0, Z1, X0 or X1")

    sub.add_parser("analytic", help="Closed-form r, QBER and information for the scenario")
    sub.add_parser("stealth-scan", help="Conservative r bound over (lambda_par, lambda_perp)")
    sub.add_parser("mutualinfo", help="I(A;B) and I(A;E) versus r")
    sub.add_parser("generate-timestamps", help="Write a synthetic dead-time-filtered timestamp file")
    return parser


def _overrides(args) -> dict:
    overrides = {"seed": args.seed, "out_dir": args.out, "workers": args.workers}
    if args.command == "simulate":
        overrides["protocol"] = {"n_rounds": args.rounds, "fixed_alice": args.fixed_alice}
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, config.LOG_LEVEL, logging.INFO),
        format="%(asctime)s [%(levelname)s] [%(name)s] %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        # โหลด scenario + override จาก CLI
        scenario = load_scenario(args.config, _overrides(args))
        storage = LocalStorage(scenario.out_dir)
        logger.info("🚀 %s (seed=%d, out=%s)", args.command, scenario.seed, scenario.out_dir)
        HANDLERS[args.command](scenario, args, storage)
    # config ผิด → exit 2 ก่อนเริ่มคำนวณ
    except ConfigurationError as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (RieError, OSError) as e:
        logger.error("%s", e)
        print(f"error: {e}", file=sys.stderr)
        return 1
    logger.info("✅ %s done", args.command)
    return 0


if __name__ == "__main__":
    sys.exit(main())
