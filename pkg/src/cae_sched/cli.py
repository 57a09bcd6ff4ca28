"""Command-line runner for solving, learning, simulating, and sweeping.

Subcommands: validate, solve, search, learn, simulate, sweep.  The sweep
subcommand evaluates a grid of (p_success, f_max, delay) x method cells
and writes plot-ready CSV plus a manifest that records every input needed
to reproduce the numbers bit-identically (solvers are deterministic and
the simulator is seeded).

results.csv columns: p_success, f_max, delay, method, status, gamma, C, F,
f_src_1..f_src_M (per-source transmission frequencies), iterations,
wall_time_s, error.  Failed cells keep their row with status=failed and
the error message; the numeric columns are left blank.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, chain_analysis, lagrange_search, qlearn, rvi
from .chain_analysis import SAPolicyParams, sa_policy
from .errors import CaeSchedError, MultichainError, ScenarioValidationError
from .mdp_core import kernel_for
from .scenario import (
    Scenario,
    load_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from .sim import DppPolicy, SimConfig, run, run_mixture_expected

METHODS = ("rvi", "bisect", "insect", "qlearn", "dpp", "sa")

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_PARTIAL_FAILURE = 2


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _per_source_freq(kernel, policy) -> list[float]:
    occ = chain_analysis.occupancy(kernel, policy)
    return [float(x) for x in occ.sum(axis=0)[1:]]


def _search_fn(method: str):
    return (
        lagrange_search.bisection_search
        if method == "bisect"
        else lagrange_search.intersection_search
    )


def run_cell(scenario_doc: dict, cell: dict, params: dict) -> dict:
    """Evaluate one grid cell; returns a result-row dict plus artifacts.

    Module-level (not a closure) so a process pool can dispatch it.
    """
    method = cell["method"]
    scenario = scenario_from_dict(scenario_doc).with_params(
        p_success=cell["p_success"], delay=cell["delay"], f_max=cell["f_max"]
    )
    t0 = time.perf_counter()
    row = {
        "p_success": cell["p_success"],
        "f_max": cell["f_max"],
        "delay": cell["delay"],
        "method": method,
        "status": "ok",
        "gamma": "",
        "C": "",
        "F": "",
        "iterations": "",
        "error": "",
    }
    artifacts: dict = {}
    try:
        if method in ("bisect", "insect"):
            trace = _search_fn(method)(
                scenario,
                epsilon=params["epsilon"],
                **(
                    {"lambda_max": params["lambda_max"], "xi": params["xi"]}
                    if method == "bisect"
                    else {"epsilon_l": params["epsilon_l"], "zeta": params["xi"]}
                ),
            )
            kernel = kernel_for(scenario)
            ev = trace.final_evaluation
            row.update(
                gamma=trace.gamma,
                C=ev.avg_cae,
                F=ev.avg_freq,
                iterations=trace.n_solves,
            )
            row["f_src"] = _per_source_freq(kernel, trace.final_policy)
            artifacts["policy"] = chain_analysis.policy_to_dict(trace.final_policy)
            artifacts["trace"] = [
                [it.n, it.lam, it.avg_freq, it.avg_cae, it.avg_lagrangian, it.lo, it.hi]
                for it in trace.iterations
            ]
        elif method == "rvi":
            res = rvi.solve_lmdp(scenario, params["lam"], epsilon=params["epsilon"])
            kernel = kernel_for(scenario)
            row.update(
                gamma=params["lam"],
                C=res.avg_cae,
                F=res.avg_freq,
                iterations=res.iterations,
            )
            row["f_src"] = _per_source_freq(kernel, res.policy)
            artifacts["policy"] = chain_analysis.policy_to_dict(res.policy)
        elif method == "qlearn":
            config = qlearn.LearnConfig(
                lam=params["lam"],
                sweeps=params["sweeps"],
                alpha=params["alpha"],
                rng_seed=params["seed"],
            )
            res = qlearn.learn_lmdp(scenario, config)
            kernel = kernel_for(scenario)
            row.update(gamma=params["lam"], iterations=params["sweeps"])
            try:
                ev = chain_analysis.evaluate_policy(kernel, res.policy, params["lam"])
                row.update(C=ev.avg_cae, F=ev.avg_freq)
                row["f_src"] = _per_source_freq(kernel, res.policy)
            except MultichainError:
                # learned policy with genuinely class-dependent averages:
                # report the rollout estimate from the training trajectory
                row.update(C=res.avg_cae, F=res.avg_freq)
            artifacts["policy"] = chain_analysis.policy_to_dict(res.policy)
        elif method == "dpp":
            metrics = run(
                SimConfig(
                    scenario=scenario,
                    policy=DppPolicy(v=params["v"]),
                    horizon=params["horizon"],
                    seed=params["seed"],
                )
            )
            row.update(C=metrics.avg_cae, F=metrics.avg_freq, iterations=params["horizon"])
            row["f_src"] = [float(x) for x in metrics.per_source_freq]
        elif method == "sa":
            kernel = kernel_for(scenario)
            m_count = scenario.n_sources
            probs = params.get("sa_probs") or [scenario.f_max / m_count] * m_count
            policy = sa_policy(kernel, SAPolicyParams(probs=tuple(probs)))
            ev = chain_analysis.evaluate_policy(kernel, policy)
            row.update(C=ev.avg_cae, F=ev.avg_freq)
            row["f_src"] = _per_source_freq(kernel, policy)
            artifacts["policy"] = chain_analysis.policy_to_dict(policy)
        else:
            raise ValueError(f"unknown method {method!r}")
    except CaeSchedError as exc:
        row["status"] = "failed"
        row["error"] = str(exc)
    row["wall_time_s"] = round(time.perf_counter() - t0, 6)
    return {"row": row, "artifacts": artifacts}


def _write_results_csv(path: Path, rows: list[dict], m_count: int) -> None:
    freq_cols = [f"f_src_{m + 1}" for m in range(m_count)]
    header = [
        "p_success",
        "f_max",
        "delay",
        "method",
        "status",
        "gamma",
        "C",
        "F",
        *freq_cols,
        "iterations",
        "wall_time_s",
        "error",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            freqs = row.get("f_src") or [""] * m_count
            writer.writerow(
                [
                    row["p_success"],
                    row["f_max"],
                    row["delay"],
                    row["method"],
                    row["status"],
                    row["gamma"],
                    row["C"],
                    row["F"],
                    *freqs,
                    row["iterations"],
                    row["wall_time_s"],
                    row["error"],
                ]
            )


def _write_trace_csv(path: Path, trace_rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "lambda", "F", "C", "L", "lo", "hi"])
        writer.writerows(trace_rows)


def _cell_tag(cell: dict) -> str:
    return (
        f"{cell['method']}_p{cell['p_success']:g}_f{cell['f_max']:g}_d{cell['delay']}"
    )


def cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioValidationError as exc:
        for v in exc.violations:
            print(f"{v.code} at {v.location}: {v.message}")
        return EXIT_CONFIG_ERROR
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"cannot read scenario: {exc}")
        return EXIT_CONFIG_ERROR
    print(
        f"ok: {scenario.n_sources} sources, p_success={scenario.channel.p_success}, "
        f"delay={scenario.channel.delay}, f_max={scenario.f_max}"
    )
    return EXIT_OK


def _load_scenario_or_exit(args) -> Scenario:
    try:
        scenario = load_scenario(args.scenario)
    except (CaeSchedError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG_ERROR)
    return scenario.with_params(
        p_success=getattr(args, "p_success", None),
        delay=getattr(args, "delay", None),
        f_max=getattr(args, "f_max", None),
    )


def _maybe_save_policy(args, policy) -> None:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        chain_analysis.save_policy(policy, out / "policy.json")


def cmd_solve(args) -> int:
    scenario = _load_scenario_or_exit(args)
    res = rvi.solve_lmdp(scenario, args.lam, epsilon=args.epsilon)
    print(
        f"lam={args.lam} L={res.avg_lagrangian:.6f} C={res.avg_cae:.6f} "
        f"F={res.avg_freq:.6f} iterations={res.iterations}"
    )
    _maybe_save_policy(args, res.policy)
    return EXIT_OK


def cmd_search(args) -> int:
    scenario = _load_scenario_or_exit(args)
    if args.method == "bisect":
        trace = lagrange_search.bisection_search(
            scenario, lambda_max=args.lambda_max, xi=args.xi, epsilon=args.epsilon
        )
    else:
        trace = lagrange_search.intersection_search(
            scenario, epsilon_l=args.epsilon_l, zeta=args.xi, epsilon=args.epsilon
        )
    ev = trace.final_evaluation
    print(
        f"method={trace.method} gamma={trace.gamma:.6f} C={ev.avg_cae:.6f} "
        f"F={ev.avg_freq:.6f} solves={trace.n_solves}"
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        chain_analysis.save_policy(trace.final_policy, out / "policy.json")
        lagrange_search.trace_to_csv(trace, out / "trace.csv")
    return EXIT_OK


def cmd_learn(args) -> int:
    scenario = _load_scenario_or_exit(args)
    config = qlearn.LearnConfig(
        lam=args.lam,
        sweeps=args.sweeps,
        alpha=args.alpha,
        rng_seed=args.seed,
        eval_horizon=args.eval_horizon,
        mode=args.mode,
    )
    res = qlearn.learn_lmdp(scenario, config)
    print(
        f"lam={args.lam} L_hat={res.avg_lagrangian:.6f} C_hat={res.avg_cae:.6f} "
        f"F_hat={res.avg_freq:.6f} (+- {res.se_lagrangian:.4f} SE on L)"
    )
    _maybe_save_policy(args, res.policy)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = _load_scenario_or_exit(args)
    if args.policy == "dpp":
        policy = DppPolicy(v=args.v)
    elif args.policy == "sa":
        kernel = kernel_for(scenario)
        m_count = scenario.n_sources
        probs = args.sa_probs or [scenario.f_max / m_count] * m_count
        policy = sa_policy(kernel, SAPolicyParams(probs=tuple(probs)))
    else:
        policy = chain_analysis.load_policy(args.policy)
    runner = run_mixture_expected if args.mixture_expected else run
    metrics = runner(
        SimConfig(scenario=scenario, policy=policy, horizon=args.horizon, seed=args.seed)
    )
    freqs = " ".join(f"f_src_{m + 1}={v:.6f}" for m, v in enumerate(metrics.per_source_freq))
    print(
        f"C={metrics.avg_cae:.6f} (+-{metrics.se_cae:.4f}) "
        f"F={metrics.avg_freq:.6f} (+-{metrics.se_freq:.4f}) {freqs}"
    )
    if metrics.queue_mean is not None:
        print(f"queue_mean={metrics.queue_mean:.3f} queue_final={metrics.queue_final:.3f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.manifest:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
        scenario_doc = manifest["scenario"]
        cells = manifest["cells"]
        params = manifest["params"]
        try:
            scenario = scenario_from_dict(scenario_doc)
        except CaeSchedError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
    else:
        try:
            scenario = load_scenario(args.scenario)
        except (CaeSchedError, OSError, json.JSONDecodeError, KeyError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        scenario_doc = scenario_to_dict(scenario)
        methods = [tok.strip() for tok in args.methods.split(",") if tok.strip()]
        bad = [m for m in methods if m not in METHODS]
        if bad or not methods:
            print(f"config error: unknown or empty methods {bad}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        p_grid = args.p_success or [scenario.channel.p_success]
        f_grid = args.f_max or [scenario.f_max]
        d_grid = args.delay if args.delay is not None else [scenario.channel.delay]
        if not p_grid or not f_grid or not d_grid:
            print("config error: empty sweep axis", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        cells = [
            {"p_success": p, "f_max": f, "delay": d, "method": m}
            for p in p_grid
            for f in f_grid
            for d in d_grid
            for m in methods
        ]
        params = {
            "epsilon": args.epsilon,
            "xi": args.xi,
            "epsilon_l": args.epsilon_l,
            "lambda_max": args.lambda_max,
            "lam": args.lam,
            "sweeps": args.sweeps,
            "alpha": args.alpha,
            "v": args.v,
            "horizon": args.horizon,
            "seed": args.seed,
            "sa_probs": args.sa_probs,
        }

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(run_cell, scenario_doc, cell, params) for cell in cells]
            results = [f.result() for f in futures]  # grid order, not completion order
    else:
        results = [run_cell(scenario_doc, cell, params) for cell in cells]

    rows = []
    for cell, res in zip(cells, results):
        rows.append(res["row"])
        tag = _cell_tag(cell)
        if "policy" in res["artifacts"]:
            with open(out / f"policy_{tag}.json", "w") as fh:
                json.dump(res["artifacts"]["policy"], fh, indent=2)
        if "trace" in res["artifacts"]:
            _write_trace_csv(out / f"trace_{tag}.csv", res["artifacts"]["trace"])

    _write_results_csv(out / "results.csv", rows, scenario.n_sources)
    manifest = {
        "tool": "cae-sched",
        "version": __version__,
        "scenario": scenario_doc,
        "cells": cells,
        "params": params,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)

    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"{len(rows) - failed}/{len(rows)} cells ok; results in {out / 'results.csv'}")
    return EXIT_PARTIAL_FAILURE if failed else EXIT_OK


def _add_common(parser, budget=True):
    parser.add_argument("--scenario", required=True, help="scenario JSON path")
    parser.add_argument("--p-success", type=float, default=None, dest="p_success")
    parser.add_argument("--delay", type=int, default=None, choices=(0, 1))
    if budget:
        parser.add_argument("--f-max", type=float, default=None, dest="f_max")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cae-sched",
        description="Transmission-scheduling solvers for actuation-error costs",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("solve", help="exact solve at a fixed multiplier")
    _add_common(p)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=rvi.DEFAULT_EPSILON)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("search", help="constrained solve via multiplier search")
    _add_common(p)
    p.add_argument("--method", choices=("bisect", "insect"), default="insect")
    p.add_argument("--epsilon", type=float, default=rvi.DEFAULT_EPSILON)
    p.add_argument("--xi", type=float, default=lagrange_search.DEFAULT_XI)
    p.add_argument("--lambda-max", type=float, default=lagrange_search.DEFAULT_LAMBDA_MAX)
    p.add_argument("--epsilon-l", type=float, default=lagrange_search.DEFAULT_EPSILON_L)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("learn", help="model-free solve at a fixed multiplier")
    _add_common(p)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=qlearn.DEFAULT_ALPHA)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-horizon", type=int, default=200_000)
    p.add_argument("--mode", choices=("sweep", "trajectory"), default="sweep")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_learn)

    p = sub.add_parser("simulate", help="seeded simulation of a policy")
    _add_common(p)
    p.add_argument(
        "--policy",
        required=True,
        help="policy JSON path, or 'dpp' / 'sa' for the built-in controllers",
    )
    p.add_argument("--horizon", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--v", type=float, default=100.0)
    p.add_argument("--sa-probs", type=_float_list, default=None)
    p.add_argument(
        "--mixture-expected",
        action="store_true",
        help="blend both mixture components instead of realizing one per run",
    )
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="grid experiment producing results.csv")
    p.add_argument("--scenario", help="scenario JSON path")
    p.add_argument("--manifest", default=None, help="re-run a recorded manifest")
    p.add_argument("--methods", default="insect", help="comma list from " + ",".join(METHODS))
    p.add_argument("--p-success", type=_float_list, default=None, dest="p_success")
    p.add_argument("--f-max", type=_float_list, default=None, dest="f_max")
    p.add_argument("--delay", type=_int_list, default=None)
    p.add_argument("--epsilon", type=float, default=rvi.DEFAULT_EPSILON)
    p.add_argument("--xi", type=float, default=lagrange_search.DEFAULT_XI)
    p.add_argument("--epsilon-l", type=float, default=lagrange_search.DEFAULT_EPSILON_L)
    p.add_argument("--lambda-max", type=float, default=lagrange_search.DEFAULT_LAMBDA_MAX)
    p.add_argument("--lam", type=float, default=0.0, help="multiplier for rvi/qlearn cells")
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=qlearn.DEFAULT_ALPHA)
    p.add_argument("--v", type=float, default=100.0)
    p.add_argument("--horizon", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sa-probs", type=_float_list, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "sweep" and not args.scenario and not args.manifest:
        print("config error: sweep needs --scenario or --manifest", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    try:
        return args.fn(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ScenarioValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
