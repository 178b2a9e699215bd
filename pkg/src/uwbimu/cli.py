"""Command-line interface.

Subcommands:
  simulate        synthesize a dataset + ground truth from a scenario
  analyze         observability rank report for a scenario
  identifiability temporal-offset identifiability report
  lemmas          numeric verification of the determinant lemmas
  ekf             run the error-state filter on a (possibly fresh) dataset

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance-style check failed (a report produced a negative verdict the
caller asked to enforce via --strict).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import estimator, geom, identifiability, lemmas, models, observability, scenario, trajectories
from .errors import ConfigError, NumericalFailure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICS = 3
EXIT_CHECK_FAILED = 4

log = logging.getLogger("uwbimu")


def _emit(payload: dict, out: str | None):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_scenario(args) -> scenario.Scenario:
    spec = scenario.Scenario.from_json(args.scenario)
    if args.seed is not None:
        spec.seed = args.seed
    return spec


def _excitation(spec: scenario.Scenario) -> trajectories.ExcitationReport:
    traj = spec.make_trajectory()
    return trajectories.excitation_report(traj, window=(0.0, spec.duration))


def _reference_state(spec: scenario.Scenario) -> models.State:
    """Truth state in the middle of the scenario, where excitation is generic."""
    traj = spec.make_trajectory()
    return traj.state_at(0.5 * spec.duration, b_a=spec.b_a0, b_w=spec.b_w0,
                         p_IU=spec.p_IU, t_d=spec.t_d)


def cmd_simulate(args) -> int:
    spec = _load_scenario(args)
    records, truth = scenario.simulate(spec)
    os.makedirs(args.out, exist_ok=True)
    dataset_path = os.path.join(args.out, "dataset.jsonl")
    truth_path = os.path.join(args.out, "truth.jsonl")
    scenario_path = os.path.join(args.out, "scenario.json")
    scenario.write_dataset(dataset_path, spec, records)
    scenario.write_truth(truth_path, truth)
    with open(scenario_path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    n_imu = sum(isinstance(r, models.ImuSample) for r in records)
    _emit({"dataset": dataset_path, "truth": truth_path,
           "imu_records": n_imu, "range_records": len(records) - n_imu,
           "scenario_digest": spec.digest()}, None)
    return EXIT_OK


def cmd_analyze(args) -> int:
    spec = _load_scenario(args)
    if len(spec.anchors) != 3:
        raise ConfigError("analyze: the rank analysis uses exactly three anchors")
    exc = _excitation(spec)
    x = _reference_state(spec)
    report = observability.build_O(x.reduced_vector(), spec.anchor_set(), excitation=exc)
    payload = report.to_dict()
    payload["excitation"] = exc.as_dict()
    _emit(payload, args.out)
    if args.strict and report.rank < observability.FULL_STATE_DIM:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_identifiability(args) -> int:
    spec = _load_scenario(args)
    exc = _excitation(spec)
    x = _reference_state(spec)
    traj = spec.make_trajectory()
    t_mid = 0.5 * spec.duration
    u = models.synth_imu(traj, t_mid, spec.b_a0, spec.b_w0, models.NoiseConfig())
    report = identifiability.classify(x, u, spec.anchor_set(), exc)
    _emit(report.to_dict(), args.out)
    if args.strict and report.verdict != "identifiable":
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_lemmas(args) -> int:
    summaries = {}
    rows_by_lemma = {}
    for lemma_id in (1, 2, 3, 4):
        rows: list = []
        rep = lemmas.check_lemma(lemma_id, n_samples=args.samples, seed=args.seed or 0,
                                 rows_out=rows)
        summaries[f"lemma{lemma_id}"] = rep.to_dict()
        rows_by_lemma[lemma_id] = rows
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for lemma_id, rows in rows_by_lemma.items():
            path = os.path.join(args.out, f"lemma{lemma_id}_determinants.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["rows", "det", "product", "residual"])
                for row in rows:
                    writer.writerow(["-".join(map(str, row["rows"])),
                                     row["det"], row["product"], row["residual"]])
        _emit(summaries, os.path.join(args.out, "summary.json"))
    else:
        _emit(summaries, None)
    if args.strict and not all(s["passed"] for s in summaries.values()):
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_ekf(args) -> int:
    spec = _load_scenario(args)
    if args.dataset:
        _, records = scenario.read_dataset(args.dataset)
        truth = scenario.read_truth(args.truth) if args.truth else None
    else:
        records, truth = scenario.simulate(spec)
    anchors = spec.anchor_set()
    rng = np.random.default_rng(spec.seed + 1)
    traj = spec.make_trajectory()
    x_true0 = traj.state_at(-spec.t_d, b_a=spec.b_a0, b_w=spec.b_w0,
                            p_IU=spec.p_IU, t_d=spec.t_d)
    sig = np.concatenate([
        np.full(3, 0.5), np.full(3, 0.05), np.full(3, 0.02),
        np.full(3, 0.02), np.full(3, 0.002), np.full(3, args.piu_prior), [args.td_prior],
    ])
    x0 = models.State(
        p_WI=x_true0.p_WI + 0.2 * sig[0] * rng.standard_normal(3),
        v_WI=x_true0.v_WI + sig[3] * rng.standard_normal(3),
        q_WI=geom.quat_multiply(x_true0.q_WI, geom.quat_from_rotvec(sig[6] * rng.standard_normal(3))),
        b_a=x_true0.b_a + sig[9] * rng.standard_normal(3),
        b_w=x_true0.b_w + sig[12] * rng.standard_normal(3),
        p_IU=np.asarray(spec.p_IU, dtype=float) + np.array([args.piu_offset, 0.0, 0.0]),
        t_d=spec.t_d + args.td_offset,
    )
    config = estimator.FilterConfig(x0=x0, P0=np.diag(sig ** 2), noise=spec.noise_config(),
                                    delay_mode=args.delay_mode)
    result = estimator.run(config, records, anchors, truth=truth)
    summary = result.summary()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        metrics_path = os.path.join(args.out, "metrics.csv")
        with open(metrics_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            head = ["t", "px", "py", "pz", "t_d_est", "p_IUx", "p_IUy", "p_IUz"]
            head += [f"var{i}" for i in range(estimator.ERROR_DIM)]
            if result.nees is not None:
                head.append("nees")
            writer.writerow(head)
            for i, t in enumerate(result.times):
                s = result.estimates[i]
                row = [t, *s.p_WI, s.t_d, *s.p_IU, *result.P_diag[i]]
                if result.nees is not None:
                    row.append(result.nees[i])
                writer.writerow(row)
        summary["metrics"] = metrics_path
        _emit(summary, os.path.join(args.out, "summary.json"))
    else:
        _emit(summary, None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uwbimu",
                                     description="UWB-IMU observability and delay-estimation toolkit")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario_required=True):
        p.add_argument("--scenario", required=scenario_required,
                       help="scenario JSON file")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", default=None, help="output file or directory")

    p = sub.add_parser("simulate", help="synthesize a measurement dataset")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p_req = p

    p = sub.add_parser("analyze", help="observability rank report")
    common(p)
    p.add_argument("--strict", action="store_true",
                   help="exit 4 unless the rank is full")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("identifiability", help="temporal-offset identifiability report")
    common(p)
    p.add_argument("--strict", action="store_true",
                   help="exit 4 unless the verdict is identifiable")
    p.set_defaults(func=cmd_identifiability)

    p = sub.add_parser("lemmas", help="verify the determinant lemmas numerically")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory for CSV tables")
    p.add_argument("--strict", action="store_true",
                   help="exit 4 unless every lemma check passes")
    p.set_defaults(func=cmd_lemmas)

    p = sub.add_parser("ekf", help="run the error-state Kalman filter")
    common(p)
    p.add_argument("--dataset", default=None, help="JSONL dataset (defaults to a fresh simulation)")
    p.add_argument("--truth", default=None, help="JSONL ground truth for error metrics")
    p.add_argument("--delay-mode", choices=("propagate-by-td", "ignore-td"),
                   default="propagate-by-td")
    p.add_argument("--td-offset", type=float, default=0.02,
                   help="initial temporal-offset error (s)")
    p.add_argument("--td-prior", type=float, default=0.02, help="prior sigma for t_d (s)")
    p.add_argument("--piu-offset", type=float, default=0.1,
                   help="initial lever-arm error (m)")
    p.add_argument("--piu-prior", type=float, default=0.0577,
                   help="per-axis prior sigma for p_IU (m)")
    p.set_defaults(func=cmd_ekf)

    # `simulate` needs a place to write; require --out there
    for action in p_req._actions:
        if action.dest == "out":
            action.required = True
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        log.error("numerical failure: %s", exc)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    sys.exit(main())
