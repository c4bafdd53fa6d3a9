"""Command-line entry points.

Subcommands::

    carkit simulate  --scenario s.json [--reps R] [--workers N] [--out DIR]
    carkit enumerate --scenario s.json [--n K] [--alloc kind:rho[:slope]]
    carkit rates     --in SUMMARY_DIR [--gamma G]
    carkit serve     --port P --data DIR [--host H] [--token T]
    carkit replay    --data DIR --trial ID

``simulate`` writes the experiment summary as JSON and CSV (or prints JSON
without ``--out``); ``enumerate`` prints the exact path law of a
fixed-covariate scenario; ``rates`` fits the log-log growth rate of the
mean squared imbalance across saved summaries; ``replay`` re-runs a
persisted service trial through the engine and reports whether the logged
arm sequence reproduces bit for bit.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .allocation import parse_allocation_arg
from .engine import Trial, TrialConfig
from .harness import (exact_enumeration, export_summary, load_summary,
                      rate_fit, run_experiment)
from .scenario import ScenarioConfig, scenario_hash

__all__ = ["main"]


def _load_scenario(path: str) -> ScenarioConfig:
    with open(path) as fh:
        return ScenarioConfig.from_json(fh.read())


def cmd_simulate(args) -> int:
    scenario = _load_scenario(args.scenario)
    if args.reps:
        scenario = dataclasses.replace(scenario, replications=args.reps)
    summary = run_experiment(scenario, workers=args.workers)
    text = export_summary(summary, "json")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"summary-{summary.scenario_hash}"
        (out / f"{stem}.json").write_text(text)
        (out / f"{stem}.csv").write_text(export_summary(summary, "csv"))
        print(f"wrote {out / (stem + '.json')} and .csv "
              f"({summary.replications} replications, "
              f"{summary.wall_time:.1f}s)")
    else:
        print(text)
    return 0


def cmd_enumerate(args) -> int:
    scenario = _load_scenario(args.scenario)
    if args.alloc:
        alloc = parse_allocation_arg(args.alloc)
        design = TrialConfig(
            rho=alloc.rho, gamma=scenario.design.gamma, allocation=alloc,
            feature_map=scenario.design.feature_map,
            normalize=scenario.design.normalize,
            c1=scenario.design.c1, c2=scenario.design.c2)
        scenario = dataclasses.replace(scenario, design=design)
    law = exact_enumeration(scenario, n=args.n)
    out = {
        "scenario_hash": scenario_hash(scenario),
        "n": law.n,
        "e_imb": law.e_imb,
        "e_lambda": law.e_lambda.tolist(),
        "n1_distribution": law.n1_distribution.tolist(),
        "prob_total": float(law.probabilities.sum()),
    }
    if args.paths:
        out["paths"] = law.paths.tolist()
        out["probabilities"] = law.probabilities.tolist()
    print(json.dumps(out, indent=2))
    return 0


def cmd_rates(args) -> int:
    points = []
    files = sorted(Path(args.in_dir).glob("*.json"))
    if not files:
        print(f"no summary JSON files in {args.in_dir}", file=sys.stderr)
        return 1
    for path in files:
        summary = load_summary(path)
        for row in summary.rows:
            points.append((row.n, row.imb[0]))
    slope = rate_fit(points)
    out = {"slope": slope, "points": sorted(points)}
    if args.gamma is not None:
        out["gamma"] = args.gamma
        out["expected_slope"] = args.gamma
    print(json.dumps(out, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import TrialStore, create_app

    store = TrialStore(args.data)
    app = create_app(store, token=args.token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_replay(args) -> int:
    trial_dir = Path(args.data) / "trials" / args.trial
    meta = json.loads((trial_dir / "meta.json").read_text())
    config = TrialConfig.from_spec(meta["config"])
    log_path = trial_dir / "log.jsonl"
    text = log_path.read_text() if log_path.exists() else ""
    try:
        trial = Trial.replay_jsonl(config, text, strict=True)
        matches = True
    except ValueError as exc:
        print(json.dumps({"trial_id": args.trial, "matches_log": False,
                          "error": str(exc)}))
        return 1
    print(json.dumps({
        "trial_id": args.trial,
        "n": trial.n,
        "n1": trial.n1,
        "arms": [r.arm for r in trial.log],
        "imb": trial.imbalance(),
        "matches_log": matches,
    }))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    p.add_argument("--scenario", required=True)
    p.add_argument("--reps", type=int, default=None,
                   help="override scenario replication count")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="directory for JSON+CSV output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("enumerate",
                       help="exact path law for fixed covariates (n <= 12)")
    p.add_argument("--scenario", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--alloc", default=None, metavar="kind:rho[:slope]",
                   help="override the allocation function")
    p.add_argument("--paths", action="store_true",
                   help="include every path and its probability")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("rates", help="log-log imbalance growth across summaries")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("serve", help="run the allocation service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data", required=True)
    p.add_argument("--token", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay",
                       help="replay a persisted service trial through the engine")
    p.add_argument("--data", required=True)
    p.add_argument("--trial", required=True)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
