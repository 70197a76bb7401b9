"""Independent replay validator.

Consumes only public artifacts — the ledger file, the graph spec, and an
optional public-counts map — and re-derives everything else: keys from logged
uniforms, the stop inequality, kappa tightening, budget inequalities, and
downgrade licensing.  Semantic problems become verdict failures with record
indices; only I/O errors raise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import fixedpoint as fp
from .bounds import MtauConfig, MtauRecipe, PhiConfig, kappa
from .ledger import Ledger, MalformedLineError
from .prefix_dag import PrefixDag, SharedDag, compile_dag
from .race import exp_from_uniform, open_uniform
from .search import Mode, RunConfig, run

RDP_VARIANT = "classic"


def rdp_to_eps_delta(atoms: list[tuple[float, float]],
                     delta: float) -> float | None:
    """Classic RDP->(eps, delta): min over the logged alpha grid of the
    composed eps plus log(1/delta)/(alpha-1).  No atoms -> unset (None)."""
    if not atoms:
        return None
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    grid = sorted({alpha for alpha, _ in atoms})
    return min(
        sum(e for a, e in atoms if a == alpha)
        + math.log(1.0 / delta) / (alpha - 1.0)
        for alpha in grid
    )

_SKIP_FIELDS = {"node_id", "parent_id", "_display"}


@dataclass
class Verdict:
    replay_ok: bool = True
    stop_rule_ok: bool = True
    budget_ok: bool = True
    rdp_recomputed: float = 0.0
    rdp_variant: str = RDP_VARIANT
    tightened: list[tuple[int, int, int]] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.replay_ok and self.stop_rule_ok and self.budget_ok

    def fail(self, index: int, reason: str) -> None:
        self.failures.append((index, reason))

    def to_json_obj(self) -> dict:
        return {
            "replay_ok": self.replay_ok,
            "stop_rule_ok": self.stop_rule_ok,
            "budget_ok": self.budget_ok,
            "ok": self.ok,
            "rdp_recomputed": self.rdp_recomputed,
            "rdp_variant": self.rdp_variant,
            "tightened": [
                {"index": i, "kappa": str(k), "key_tight": str(kt)}
                for i, k, kt in self.tightened
            ],
            "failures": [{"index": i, "reason": r} for i, r in self.failures],
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=2, sort_keys=True)
            fh.write("\n")


class _ReplayProvider:
    """Feeds the replay engine the uniforms the original run logged.

    Requests arrive in the same order the original engine drew (and logged)
    them, so a monotone forward scan suffices.
    """

    def __init__(self, records, verdict: Verdict):
        self.records = records
        self.verdict = verdict
        self.pos = 0

    def __call__(self, digest: bytes, purpose: str) -> int:
        want = "W" if purpose == "winner" else "U"
        hexd = digest.hex()
        i = self.pos
        while i < len(self.records):
            rec = self.records[i]
            if rec.get("ctx_digest") == hexd and want in rec:
                self.pos = i + 1
                return rec[want]
            i += 1
        self.verdict.replay_ok = False
        self.verdict.fail(self.pos, f"no logged {want} for node {hexd[:16]}…")
        return 0


class _ReplayBudget:
    """Echoes the original run's budget records so record replay stays in
    lockstep; the semantic inequalities are audited separately."""

    def __init__(self, budget_records):
        self.queue = list(budget_records)

    def on_expansion(self, node, slack):
        from .budget import BudgetOutcome

        if not self.queue:
            return BudgetOutcome(None, False, {"budget_event": "Selected"})
        fields = dict(self.queue.pop(0).fields)
        for drop in ("event", "ctx_digest", "mode", "claim_type", "node_id"):
            fields.pop(drop, None)
        exhausted = fields.get("budget_event") == "Exhausted"
        return BudgetOutcome(None, exhausted, fields)


def _config_from_header(header: dict, n_ub_map: dict[bytes, int]) -> tuple[Mode, RunConfig]:
    mt = header["mtau"]
    mtau_cfg = MtauConfig(
        recipe=MtauRecipe(mt["recipe"]),
        c_s_max=mt["c_s_max"],
        max_depth=mt["max_depth"],
        fixed_table=dict(mt.get("fixed_table") or {}),
    )
    phi_cfg = None
    if header.get("phi"):
        p = header["phi"]
        phi_cfg = PhiConfig(step_cap=p["step_cap"], alpha=p["alpha"],
                            eta=p["eta"], eps_fp=p["eps_fp"],
                            c_s_min=p["c_s_min"])
    cfg = RunConfig(
        mtau=mtau_cfg,
        phi=phi_cfg,
        seed=header.get("seed", 0),
        n_ub_factor=header.get("n_ub_factor", 1.0),
        n_ub_map=n_ub_map or None,
        salt=bytes.fromhex(header["salt"]),
        prf_domain=header["prf_domain"],
        tau=header.get("tau", 1.0),
        surrogate_leaf_prf=header.get("surrogate_leaf_prf", True),
        expansion_cap=header.get("expansion_cap"),
        deterministic_ids=True,
    )
    return Mode(header["mode"]), cfg


def _check_replay(graph: PrefixDag, ledger: Ledger, verdict: Verdict) -> None:
    records = ledger.records
    n_ub_map: dict[bytes, int] = {}
    for rec in records:
        if "Nub" in rec and "ctx_digest" in rec:
            n_ub_map[bytes.fromhex(rec["ctx_digest"])] = rec["Nub"]
    mode, cfg = _config_from_header(ledger.header, n_ub_map)
    budget_records = [r for r in records if r.get("event") == "budget"]
    if budget_records:
        cfg.budget = _ReplayBudget(budget_records)
    provider = _ReplayProvider(records, verdict)
    try:
        result = run(graph, mode, cfg, uniform_provider=provider)
    except Exception as exc:  # semantic: the ledger does not describe a run
        verdict.replay_ok = False
        verdict.fail(0, f"replay aborted: {exc}")
        return
    replayed = result.ledger.records
    if len(replayed) != len(records):
        verdict.replay_ok = False
        verdict.fail(min(len(replayed), len(records)),
                     f"record count {len(records)} != replayed {len(replayed)}")
    id_map: dict[str, str] = {}
    for i, (orig, new) in enumerate(zip(records, replayed)):
        a = {k: v for k, v in orig.fields.items() if k not in _SKIP_FIELDS}
        b = {k: v for k, v in new.fields.items() if k not in _SKIP_FIELDS}
        if a != b:
            verdict.replay_ok = False
            bad = sorted(set(a) ^ set(b)) or [
                k for k in a if a[k] != b.get(k)]
            verdict.fail(i, f"replay mismatch in fields {bad}")
        # Structural id consistency: one UUID per digest, parent ids agree.
        digest = orig.get("ctx_digest")
        nid = orig.get("node_id")
        if digest is not None and nid is not None:
            if id_map.setdefault(digest, nid) != nid:
                verdict.replay_ok = False
                verdict.fail(i, "node_id differs for repeated ctx_digest")


def _check_stop_rule(ledger: Ledger, verdict: Verdict) -> None:
    frontier: dict[str, int] = {}
    incumbent = fp.NEG_INF_Q64_64
    saw_stop = False
    for i, rec in enumerate(ledger.records):
        event = rec.get("event")
        if event == "push":
            frontier[rec["ctx_digest"]] = rec["key_raw"]
        elif event == "pop":
            frontier.pop(rec["ctx_digest"], None)
        elif event == "leaf_eval" and "incumbent" in rec:
            incumbent = rec["incumbent"]
        elif event == "stop":
            saw_stop = True
            if rec.get("incumbent") != incumbent:
                verdict.stop_rule_ok = False
                verdict.fail(i, "stop incumbent does not match last leaf_eval")
            top = max(frontier.values(), default=None)
            if rec.get("key_raw") != top:
                verdict.stop_rule_ok = False
                verdict.fail(i, "stop frontier max does not match pushes/pops")
            if rec.get("claim_type") != "NoCert":
                if top is not None and top > incumbent:
                    verdict.stop_rule_ok = False
                    verdict.fail(i, "certified stop with frontier key above B*")
    if not saw_stop:
        verdict.stop_rule_ok = False
        verdict.fail(len(ledger.records), "no stop record")


def _check_tightening(ledger: Ledger, public_counts: dict[str, int] | None,
                      verdict: Verdict) -> None:
    if not public_counts:
        return
    for i, rec in enumerate(ledger.records):
        if rec.get("mode") != "Surrogate" or "Nub" not in rec:
            continue
        if "U" not in rec or "key_raw" not in rec:
            continue
        n = public_counts.get(rec["ctx_digest"])
        if n is None:
            continue
        n_ub = rec["Nub"]
        if n > n_ub:
            verdict.fail(i, f"public count {n} exceeds logged Nub {n_ub}")
            continue
        # Quantile coupling: the same U evaluated at both rates.  kappa is
        # *defined* as the realized arrival-term difference, so
        # key_raw + kappa equals the exact-rate key bit-exactly; it agrees
        # with log(n / n_ub) up to float rounding.
        u = fp.q0_64_value(rec["U"])
        k = (-math.log(exp_from_uniform(u, n))
             - -math.log(exp_from_uniform(u, n_ub)))
        if k > 0.0:
            verdict.fail(i, "kappa positive: tightening would loosen the key")
            continue
        if not math.isclose(k, kappa(n, n_ub), rel_tol=1e-9, abs_tol=1e-9):
            verdict.fail(i, "kappa deviates from log(n/n_ub)")
        k_q = fp.encode_q32_32(k)
        key_tight = fp.encode_q64_64(fp.decode_q64_64(rec["key_raw"]) + k)
        if key_tight > rec["key_raw"]:
            verdict.fail(i, "tightened key exceeds key_raw")
        verdict.tightened.append((i, k_q, key_tight))


def _check_budget(ledger: Ledger, verdict: Verdict) -> None:
    price_prev = 0
    for i, rec in enumerate(ledger.records):
        event = rec.get("event")
        if event == "budget":
            if rec.get("budget_event") == "Selected" and "model_id" in rec:
                for need in ("model_id", "adapter_id", "dp_cert_id",
                             "eps_train", "delta_train"):
                    if need not in rec:
                        verdict.budget_ok = False
                        verdict.fail(i, f"missing adapter metadata {need}")
                spent, cap = rec.get("price_spent"), rec.get("price_cap")
                if spent is not None and cap is not None and spent > cap:
                    verdict.budget_ok = False
                    verdict.fail(i, "price_spent exceeds price_cap")
                if spent is not None:
                    if spent < price_prev:
                        verdict.budget_ok = False
                        verdict.fail(i, "price_spent decreased")
                    price_prev = spent
                if "router_rdp_eps" in rec:
                    verdict.rdp_recomputed = fp.decode_q32_32(
                        rec["router_rdp_eps"])
        elif event == "guard":
            before, after = rec.get("claim_type_before"), rec.get("claim_type_after")
            if before is not None and after is not None and before != after:
                if not rec.get("guards"):
                    verdict.budget_ok = False
                    verdict.fail(i, "claim downgrade without licensing guard")


def validate(ledger_path: str, graph_spec: str | SharedDag | PrefixDag,
             public_counts: dict[str, int] | None = None,
             report_path: str | None = None) -> Verdict:
    verdict = Verdict()
    try:
        ledger = Ledger.parse(ledger_path)
    except MalformedLineError as exc:
        verdict.replay_ok = False
        verdict.stop_rule_ok = False
        verdict.fail(getattr(exc, "lineno", 0), str(exc))
        if report_path:
            verdict.save(report_path)
        return verdict
    if isinstance(graph_spec, PrefixDag):
        graph = graph_spec
    else:
        shared = graph_spec if isinstance(graph_spec, SharedDag) else SharedDag.load(graph_spec)
        graph, cert = compile_dag(shared)
        if not cert.ok:
            verdict.replay_ok = False
            verdict.fail(0, "graph compile certificate failed")
    if verdict.replay_ok:
        _check_replay(graph, ledger, verdict)
        _check_stop_rule(ledger, verdict)
        _check_tightening(ledger, public_counts, verdict)
        _check_budget(ledger, verdict)
    if report_path:
        verdict.save(report_path)
    return verdict
