"""Batch experiment driver.

Subcommands reproduce the desk-scale experiments: suite runs with per-run
ledgers and an aggregate CSV, tightness and N_ub sweeps, ledger validation,
the toy golden replay, and the adversarial-seed scan.  CSV aggregates use
normal-approximation 95% confidence intervals (stated in the CSV metadata).
No interactive UI: everything is batch.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import statistics
import sys
import time

from . import fixedpoint as fp
from .baselines import beam_k, dist_level, greedy_by_bound
from .bounds import MtauConfig, kappa
from .generators import (
    TOY_SCRIPTED,
    adversarial_graph,
    find_adversarial,
    pipeline_mock,
    suite_a,
    suite_b,
    toy_graph,
    toy_mtau,
)
from .prefix_dag import SharedDag, compile_dag
from .race import RngStream
from .reconstruct import (
    exact_leaf_values,
    exact_race,
    oracle_optimum,
    realized_suffix_max,
    stream_lookup,
)
from .search import Mode, RunConfig, run
from .validator import validate

BASELINES = ("greedy", "beam3", "dist-level")
CI_NOTE = "# ci95: normal approximation, 1.96*sd/sqrt(n)"


def _mean_ci(values: list[float]) -> tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    mean = statistics.fmean(values)
    if len(values) < 2:
        return mean, 0.0
    sd = statistics.stdev(values)
    return mean, 1.96 * sd / math.sqrt(len(values))


def _graph_for(suite: str, seed: int, depth: int, branching: int):
    if suite == "A":
        return suite_a(depth, branching, seed)
    if suite == "B":
        return suite_b(seed=seed)
    if suite == "adversarial":
        return adversarial_graph()
    if suite == "toy":
        return toy_graph()
    if suite == "pipeline":
        return pipeline_mock()
    raise ValueError(f"unknown suite {suite!r}")


def _shared_for(args, seed: int):
    if getattr(args, "graph", None):
        return SharedDag.load(args.graph)
    return _graph_for(args.suite, seed, args.depth, args.branching)


def _modes_for(args) -> list[str]:
    if getattr(args, "mode", None):
        return [args.mode]
    return args.modes.split(",")


def _run_config(args, seed: int, graph) -> RunConfig:
    if args.suite == "toy":
        mtau_cfg = toy_mtau()
        scripted = dict(TOY_SCRIPTED)
    else:
        mtau_cfg = MtauConfig()
        scripted = {}
    budget = None
    if getattr(args, "catalog", None):
        from .budget import BudgetRuntime, BudgetState, load_catalog

        budget = BudgetRuntime(
            load_catalog(args.catalog),
            BudgetState(eps_max=10.0, delta=1e-6, price_max=10_000,
                        slo_ms=60_000))
    return RunConfig(
        mtau=mtau_cfg,
        seed=seed,
        n_ub_factor=args.nub_factor,
        salt=bytes.fromhex(args.salt),
        tau=args.tau,
        scripted_uniforms=scripted,
        budget=budget,
        deterministic_ids=True,
    )


def cmd_suite(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    ledger_dir = os.path.join(args.out, "ledgers")
    os.makedirs(ledger_dir, exist_ok=True)
    rows = []
    modes = _modes_for(args)
    for seed in range(args.seed, args.seed + args.seeds):
        shared = _shared_for(args, seed)
        graph, cert = compile_dag(shared)
        if not cert.ok:
            print(f"compile certificate failed for seed {seed}",
                  file=sys.stderr)
            return 2
        cfg = _run_config(args, seed, graph)
        lookup = stream_lookup(RngStream(seed), cfg.scripted_uniforms, graph)
        winner, _ = oracle_optimum(graph, lookup)
        for mode in modes:
            started = time.perf_counter()
            if mode in ("Exact", "Surrogate", "Fallback"):
                path = os.path.join(
                    ledger_dir, f"{args.suite}-{seed}-{mode}.ndjson")
                result = run(graph, Mode(mode), cfg, ledger_path=path)
                # Only Exact shares the oracle's realized race; the other
                # modes are certified (or not) for their own randomness.
                pruned = (result.incumbent_leaf != winner.hex()
                          if mode == "Exact" else "")
                expansions, slack = result.expansions, -result.stop_slack
            elif mode == "greedy":
                base = greedy_by_bound(graph, cfg.mtau, lookup)
                expansions, slack, pruned = base.expansions, "", base.pruned_winner
            elif mode == "beam3":
                base = beam_k(graph, 3, cfg.mtau, lookup)
                expansions, slack, pruned = base.expansions, "", base.pruned_winner
            elif mode == "dist-level":
                base = dist_level(graph, cfg.mtau, lookup)
                expansions, slack, pruned = base.expansions, "", base.pruned_winner
            else:
                print(f"unknown mode {mode!r}", file=sys.stderr)
                return 2
            wall_ms = 1000.0 * (time.perf_counter() - started)
            rows.append({"suite": args.suite, "seed": seed, "mode": mode,
                         "expansions": expansions,
                         "wall_ms": f"{wall_ms:.3f}",
                         "stop_slack": slack, "pruned_winner": pruned})
    out_csv = os.path.join(args.out, "suite.csv")
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        fh.write(CI_NOTE + "\n")
        fh.write("# beam scoring: deterministic bound M_tau\n")
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(sorted(rows, key=lambda r: (r["seed"], r["mode"])))
        for mode in modes:
            vals = [float(r["expansions"]) for r in rows if r["mode"] == mode]
            mean, ci = _mean_ci(vals)
            fh.write(f"# aggregate expansions {mode}: "
                     f"mean={mean:.4f} ci95={ci:.4f} n={len(vals)}\n")
    print(f"wrote {out_csv} ({len(rows)} rows)")
    return 0


def cmd_tightness(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for seed in range(args.seed, args.seed + args.seeds):
        shared = _shared_for(args, seed)
        graph, _ = compile_dag(shared)
        cfg = _run_config(args, seed, graph)
        for mode in _modes_for(args):
            result = run(graph, Mode(mode), cfg)
            lookup = stream_lookup(RngStream(seed), cfg.scripted_uniforms,
                                   graph)
            rsm = realized_suffix_max(
                graph, exact_leaf_values(graph, exact_race(graph, lookup)))
            b_star = result.incumbent
            for digest_hex, key_q in result.frontier_at_stop:
                key = fp.decode_q64_64(key_q)
                node_rsm = rsm[bytes.fromhex(digest_hex)]
                rows.append({
                    "suite": args.suite, "seed": seed, "mode": mode,
                    "ctx_digest": digest_hex[:16],
                    "key": f"{key:.9f}", "rsm": f"{node_rsm:.9f}",
                    "key_minus_rsm": f"{key - node_rsm:.9f}",
                    "stop_slack": f"{key - b_star:.9f}",
                })
    out_csv = os.path.join(args.out, "tightness.csv")
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        fh.write("# stop_slack = key - incumbent; certified stops imply <= 0\n")
        fh.write("# key_minus_rsm >= 0 by admissibility (tightness gap)\n")
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out_csv} ({len(rows)} rows)")
    return 0


def cmd_nub_sweep(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    factors = [float(f) for f in args.factors.split(",")]
    rows = []
    for factor in factors:
        expansions, kappas = [], []
        for seed in range(args.seed, args.seed + args.seeds):
            shared = _shared_for(args, seed)
            graph, _ = compile_dag(shared)
            cfg = _run_config(args, seed, graph)
            cfg.n_ub_factor = factor
            result = run(graph, Mode.SURROGATE, cfg)
            expansions.append(result.expansions)
            for rec in result.ledger.records:
                if rec.get("event") in ("push", "pop") and "Nub" in rec:
                    digest = bytes.fromhex(rec["ctx_digest"])
                    kappas.append(
                        kappa(graph.suffix_count(digest), rec["Nub"]))
        mean_exp, ci_exp = _mean_ci([float(e) for e in expansions])
        frac_strict = (sum(1 for k in kappas if k < 0) / len(kappas)
                       if kappas else 0.0)
        rows.append({
            "n_ub_factor": factor,
            "expansions_mean": f"{mean_exp:.4f}",
            "expansions_ci95": f"{ci_exp:.4f}",
            "frac_strict_kappa": f"{frac_strict:.4f}",
            "mean_kappa": f"{statistics.fmean(kappas):.6f}" if kappas else "",
        })
    out_csv = os.path.join(args.out, "nub_sweep.csv")
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        fh.write(CI_NOTE + "\n")
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out_csv}")
    return 0


def cmd_validate(args) -> int:
    if args.graph:
        shared = SharedDag.load(args.graph)
        graph, _ = compile_dag(shared)
    else:
        graph, _ = compile_dag(toy_graph())
    counts = None
    if args.counts:
        import json
        with open(args.counts, encoding="utf-8") as fh:
            counts = {k: int(v) for k, v in json.load(fh).items()}
    else:
        counts = {d.hex(): graph.suffix_count(d) for d in graph.nodes}
    all_ok = True
    for path in args.ledgers:
        started = time.perf_counter()
        verdict = validate(path, graph, public_counts=counts,
                           report_path=path + ".verdict.json")
        elapsed = 1000.0 * (time.perf_counter() - started)
        print(f"{path}: replay_ok={verdict.replay_ok} "
              f"stop_rule_ok={verdict.stop_rule_ok} "
              f"budget_ok={verdict.budget_ok} "
              f"tightened={len(verdict.tightened)} "
              f"validate_ms={elapsed:.2f}")
        for index, reason in verdict.failures[:10]:
            print(f"  record {index}: {reason}")
        if args.recompute_metrics and verdict.ok:
            from .ledger import Ledger
            led = Ledger.parse(path)
            pops = sum(1 for r in led.records if r.get("event") == "pop")
            print(f"  recomputed expansions={pops}")
        all_ok = all_ok and verdict.ok
    return 0 if all_ok else 1


def cmd_toy_replay(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    graph, cert = compile_dag(toy_graph())
    assert cert.ok
    cfg = RunConfig(mtau=toy_mtau(), scripted_uniforms=dict(TOY_SCRIPTED),
                    seed=args.seed, deterministic_ids=True)
    path = os.path.join(args.out, "toy-exact.ndjson")
    result = run(graph, Mode.EXACT, cfg, ledger_path=path)
    print(f"Exact: incumbent={result.incumbent:.6f} "
          f"expansions={result.expansions} claim={result.claim_type.value}")
    cfg_s = RunConfig(mtau=toy_mtau(), scripted_uniforms=dict(TOY_SCRIPTED),
                      seed=args.seed, n_ub_factor=1.5, deterministic_ids=True)
    path_s = os.path.join(args.out, "toy-surrogate.ndjson")
    result_s = run(graph, Mode.SURROGATE, cfg_s, ledger_path=path_s)
    root_key = fp.decode_q64_64(result_s.ledger.records[0]["key_raw"])
    print(f"Surrogate: root key={root_key:.6f} "
          f"expansions={result_s.expansions}")
    verdict = validate(path, graph)
    print(f"validator: replay_ok={verdict.replay_ok} "
          f"stop_rule_ok={verdict.stop_rule_ok}")
    return 0 if verdict.ok else 1


def cmd_find_adversarial(args) -> int:
    seed = find_adversarial(max_seeds=args.max_seeds)
    if seed is None:
        print("no adversarial seed found in range")
        return 1
    print(f"adversarial seed: {seed}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="racecert",
        description="Run-wise-certified router experiments and validation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--suite", default="A",
                       choices=["A", "B", "adversarial", "toy", "pipeline"])
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--seeds", type=int, default=5)
        p.add_argument("--depth", type=int, default=3)
        p.add_argument("--branching", type=int, default=3)
        p.add_argument("--nub-factor", dest="nub_factor", type=float,
                       default=1.5)
        p.add_argument("--out", default="out")
        p.add_argument("--salt", default="00" * 8)
        p.add_argument("--tau", type=float, default=1.0)
        p.add_argument("--mode", default=None,
                       choices=["Exact", "Surrogate", "Fallback"],
                       help="single search mode; overrides --modes")
        p.add_argument("--graph", default=None,
                       help="run on a serialized graph instead of the suite")
        p.add_argument("--catalog", default=None,
                       help="model catalog JSON; enables the budget controller")

    p_suite = sub.add_parser("suite", help="run a suite, emit ledgers + CSV")
    add_common(p_suite)
    p_suite.add_argument("--modes", default="Exact,Surrogate")
    p_suite.set_defaults(func=cmd_suite)

    p_tight = sub.add_parser("tightness", help="per-frontier slack CSV")
    add_common(p_tight)
    p_tight.add_argument("--modes", default="Exact")
    p_tight.set_defaults(func=cmd_tightness)

    p_sweep = sub.add_parser("nub-sweep", help="surrogate N_ub factor sweep")
    add_common(p_sweep)
    p_sweep.add_argument("--factors", default="1,1.5,2,4")
    p_sweep.set_defaults(func=cmd_nub_sweep)

    p_val = sub.add_parser("validate", help="validate ledgers")
    p_val.add_argument("ledgers", nargs="+")
    p_val.add_argument("--graph", default=None)
    p_val.add_argument("--counts", default=None)
    p_val.add_argument("--recompute-metrics", action="store_true")
    p_val.set_defaults(func=cmd_validate)

    p_toy = sub.add_parser("toy-replay", help="golden toy fixture replay")
    p_toy.add_argument("--out", default="out")
    p_toy.add_argument("--seed", type=int, default=7)
    p_toy.set_defaults(func=cmd_toy_replay)

    p_adv = sub.add_parser("find-adversarial",
                           help="scan race seeds for the adversarial split")
    p_adv.add_argument("--max-seeds", type=int, default=2000)
    p_adv.set_defaults(func=cmd_find_adversarial)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
