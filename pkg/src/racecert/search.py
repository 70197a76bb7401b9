"""Best-first engine: Exact / Surrogate / Fallback modes.

The priority key couples an admissible deterministic bound with the realized
exponential race: ``key(v) = mtau(v) - log t(v)``.  Exact mode propagates the
race lazily (winner reuse plus independent residuals); Surrogate mode knows
only upper-bound counts, disables winner reuse and anchors child keys at the
parent's surrogate arrival; Fallback ranks by a PRF-derived perturbed value
and makes no run-wise claim.  Every uniform, count, key, guard and budget
event is appended to the ledger in execution order.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from . import fixedpoint as fp
from .bounds import (
    ExpansionCheck,
    MtauConfig,
    MtauRecipe,
    PhiConfig,
    check_expansion,
    mtau,
    phi,
)
from .ledger import Ledger, LedgerRecord, Uuid7Source
from .prefix_dag import CountFailError, PrefixDag, PrefixNode
from .race import (
    Arrival,
    ArrivalSource,
    RngStream,
    exact_leaf_coupling,
    exp_from_uniform,
    gumbel_from_uniform,
    open_uniform,
    prf_raw,
    quantile_cat,
)


class Mode(str, Enum):
    EXACT = "Exact"
    SURROGATE = "Surrogate"
    FALLBACK = "Fallback"


class ClaimType(str, Enum):
    RUN_WISE_EXACT = "RunWiseExact"
    TRUNCATION_ONLY = "TruncationOnly"
    NO_CERT = "NoCert"


class StopDecision(Enum):
    CONTINUE = "Continue"
    STOP_CERTIFIED = "StopCertified"
    STOP_HEURISTIC = "StopHeuristic"


@dataclass
class FrontierEntry:
    digest: bytes
    key: float
    key_q: int
    provisional: bool
    arrival: Arrival | None
    tie_token: int | None = None
    claim_type: ClaimType = ClaimType.RUN_WISE_EXACT


@dataclass
class RunConfig:
    mtau: MtauConfig
    phi: PhiConfig | None = None
    seed: int = 0
    n_ub_factor: float = 1.0
    n_ub_map: dict[bytes, int] | None = None
    salt: bytes = b"\x00" * 8
    prf_domain: str = "leaf"
    tau: float = 1.0
    surrogate_leaf_prf: bool = True
    scripted_uniforms: dict[tuple[str, str], int] = field(default_factory=dict)
    budget: object | None = None  # budget.BudgetRuntime, optional
    expansion_cap: int | None = None
    wall_cap_s: float | None = None
    count_limit: int = (1 << 63) - 1
    deterministic_ids: bool | None = None

    def header_obj(self, graph: PrefixDag, mode: Mode) -> dict:
        mt = self.mtau
        return {
            "mode": mode.value,
            "seed": self.seed,
            "salt": self.salt.hex(),
            "prf_domain": self.prf_domain,
            "tau": self.tau,
            "n_ub_factor": self.n_ub_factor,
            "surrogate_leaf_prf": self.surrogate_leaf_prf,
            "privacy_scope": "post_processing_only",
            "root": graph.root.hex(),
            "expansion_cap": self.expansion_cap,
            "mtau": {
                "recipe": mt.recipe.value,
                "c_s_max": mt.c_s_max,
                "max_depth": mt.max_depth,
                "fixed_table": mt.fixed_table,
            },
            "phi": None
            if self.phi is None
            else {
                "step_cap": self.phi.step_cap,
                "alpha": self.phi.alpha,
                "eta": self.phi.eta,
                "eps_fp": self.phi.eps_fp,
                "c_s_min": self.phi.c_s_min,
            },
        }


@dataclass
class RunResult:
    incumbent: float
    incumbent_leaf: str | None
    expansions: int
    stop_slack: float
    claim_type: ClaimType
    mode_final: Mode
    ledger: Ledger
    ledger_path: str | None = None
    internal_expansions: int = 0
    popped_leaves: list[str] = field(default_factory=list)
    evaluated_leaves: list[str] = field(default_factory=list)
    pushed_keys: dict[str, int] = field(default_factory=dict)
    arrivals: dict[str, float] = field(default_factory=dict)
    frontier_at_stop: list[tuple[str, int]] = field(default_factory=list)
    guards_seen: list[str] = field(default_factory=list)


def resolve_tie(a: FrontierEntry, b: FrontierEntry) -> tuple[FrontierEntry, FrontierEntry, int]:
    """Order two equal-key entries lexicographically on public digests."""
    assert a.digest != b.digest, "PQ holds one entry per node"
    if a.digest < b.digest:
        return a, b, 0
    return b, a, 1


class _UniformSource:
    """Stream draws with optional scripted overrides by (state, purpose)."""

    def __init__(self, stream: RngStream, scripted: dict[tuple[str, str], int],
                 provider: Callable[[bytes, str], int] | None = None):
        self.stream = stream
        self.scripted = scripted
        self.provider = provider

    def raw(self, node: PrefixNode, purpose: str) -> int:
        if self.provider is not None:
            return self.provider(node.ctx_digest, purpose)
        key = (node.state_label, purpose)
        if key in self.scripted:
            return self.scripted[key]
        return self.stream.raw(node.ctx_digest, purpose)


def _encode_key(value: float) -> tuple[int, bool]:
    """Q64.64 key encode; overflow clamps and reports (NumClamp guard)."""
    try:
        return fp.encode_q64_64(value), False
    except fp.NumClampError:
        return (fp.Q64_64_MAX if value > 0 else fp.Q64_64_MIN), True


class _Engine:
    def __init__(self, graph: PrefixDag, mode: Mode, cfg: RunConfig,
                 uniform_provider=None):
        self.graph = graph
        self.mode = mode
        self.cfg = cfg
        self.stream = RngStream(cfg.seed)
        self.uniforms = _UniformSource(self.stream, cfg.scripted_uniforms,
                                       provider=uniform_provider)
        self.ledger = Ledger(cfg.header_obj(graph, mode))
        self.uuid = Uuid7Source(self.stream, cfg.deterministic_ids)
        self.node_ids: dict[bytes, str] = {}
        self.claim = ClaimType.NO_CERT if mode is Mode.FALLBACK else ClaimType.RUN_WISE_EXACT
        self.heap: list[tuple[int, bytes, FrontierEntry]] = []
        self.incumbent_q = fp.NEG_INF_Q64_64
        self.incumbent = float("-inf")
        self.incumbent_leaf: str | None = None
        self.result = RunResult(
            incumbent=float("-inf"), incumbent_leaf=None, expansions=0,
            stop_slack=0.0, claim_type=self.claim, mode_final=mode,
            ledger=self.ledger,
        )
        self.n_ub: dict[bytes, int] = {}
        self.budget = cfg.budget

    # -- bookkeeping ------------------------------------------------------

    def node_id(self, digest: bytes) -> str:
        nid = self.node_ids.get(digest)
        if nid is None:
            nid = self.uuid.next(digest)
            self.node_ids[digest] = nid
        return nid

    def record(self, **fields) -> None:
        clean = {k: v for k, v in fields.items() if v is not None}
        self.ledger.append(LedgerRecord(fields=clean))

    def guard(self, name: str, node: PrefixNode | None = None, reason: str | None = None,
              downgrade_to: ClaimType | None = ClaimType.NO_CERT, **extra) -> None:
        before = self.claim
        if downgrade_to is not None and downgrade_to != self.claim:
            self.claim = downgrade_to
        self.result.guards_seen.append(name)
        fields = {
            "event": "guard",
            "guards": [name],
            "mode": self.mode.value,
            "claim_type_before": before.value,
            "claim_type_after": self.claim.value,
        }
        if node is not None:
            fields["ctx_digest"] = node.ctx_digest.hex()
            fields["node_id"] = self.node_id(node.ctx_digest)
        if reason:
            fields["reason"] = reason
        fields.update(extra)
        self.record(**fields)

    def push(self, entry: FrontierEntry, node: PrefixNode, rate: int,
             uniform_raw: int | None) -> None:
        heapq.heappush(self.heap, (-entry.key_q, entry.digest, entry))
        self.result.pushed_keys[entry.digest.hex()] = entry.key_q
        if entry.arrival is not None:
            self.result.arrivals[entry.digest.hex()] = entry.arrival.t
        parent = node.parent
        self.record(
            event="push",
            ctx_digest=node.ctx_digest.hex(),
            node_id=self.node_id(node.ctx_digest),
            parent_id=self.node_id(parent) if parent is not None else None,
            mode=self.mode.value,
            claim_type=self.claim.value,
            key_raw=entry.key_q,
            Nub=rate,
            U=uniform_raw,
        )

    def pop(self) -> FrontierEntry:
        _, _, entry = heapq.heappop(self.heap)
        tie_token = None
        if self.heap and self.heap[0][2].key_q == entry.key_q:
            _, _, token = resolve_tie(entry, self.heap[0][2])
            tie_token = token
        entry.tie_token = tie_token
        return entry

    def max_key_q(self) -> int | None:
        return self.heap[0][2].key_q if self.heap else None

    def stop_check(self) -> StopDecision:
        top = self.max_key_q()
        if top is None or top <= self.incumbent_q:
            if self.claim is ClaimType.NO_CERT:
                return StopDecision.STOP_HEURISTIC
            return StopDecision.STOP_CERTIFIED
        return StopDecision.CONTINUE

    # -- mode mechanics ---------------------------------------------------

    def key_for(self, node: PrefixNode, neg_log_t: float) -> tuple[float, int]:
        value = mtau(node, self.cfg.mtau) + neg_log_t
        key_q, clamped = _encode_key(value)
        if clamped:
            self.guard("NumClamp", node, reason="key overflowed Q64.64")
        return value, key_q

    def ensure_counts(self) -> bool:
        try:
            self.graph.annotate_counts(limit=self.cfg.count_limit)
            return True
        except CountFailError as exc:
            self.guard("CountFail", reason=str(exc), downgrade_to=None)
            return False

    def build_n_ub(self) -> bool:
        if self.cfg.n_ub_map is not None:
            self.n_ub = dict(self.cfg.n_ub_map)
            return True
        try:
            for digest in self.graph.nodes:
                n = self.graph.suffix_count(digest, limit=self.cfg.count_limit)
                self.n_ub[digest] = math.ceil(self.cfg.n_ub_factor * n)
            return True
        except CountFailError:
            return False

    def phi_fields(self, parent: PrefixNode, children: list[PrefixNode]) -> dict:
        cfg = self.cfg.phi
        if cfg is None or not children:
            return {}
        before = phi(parent, cfg)
        worst = max(phi(c, cfg) for c in children)
        fields = {
            "phi_before": fp.parse_scaled_q32_32(f"{before:.4f}"),
            "phi_after": fp.parse_scaled_q32_32(f"{worst:.4f}"),
            "delta_phi": fp.parse_scaled_q32_32(f"{worst - before:.4f}"),
            "eta": fp.parse_scaled_q32_32(f"{cfg.eta:.4f}"),
        }
        if check_expansion(before, worst, cfg) is ExpansionCheck.ACYCLICITY_FAIL:
            self.guard("AcyclicityFail", parent, **fields)
        return fields

    def update_incumbent(self, node: PrefixNode, value: float, u_raw: int) -> None:
        value_q, clamped = _encode_key(value)
        if clamped:
            self.guard("NumClamp", node, reason="leaf value overflowed Q64.64")
        if value_q > self.incumbent_q:
            self.incumbent_q = value_q
            self.incumbent = value
            self.incumbent_leaf = node.ctx_digest.hex()
        self.result.popped_leaves.append(node.ctx_digest.hex())
        self.record(
            event="leaf_eval",
            ctx_digest=node.ctx_digest.hex(),
            node_id=self.node_id(node.ctx_digest),
            mode=self.mode.value,
            claim_type=self.claim.value,
            U=u_raw,
            value=value_q,
            incumbent=self.incumbent_q,
        )

    def budget_step(self, node: PrefixNode, slack: float) -> None:
        if self.budget is None:
            return
        outcome = self.budget.on_expansion(node, slack)
        self.record(event="budget", ctx_digest=node.ctx_digest.hex(),
                    mode=self.mode.value, claim_type=self.claim.value,
                    **outcome.record_fields)
        if outcome.exhausted:
            self.guard("BudgetFail", node, reason="all catalog entries infeasible")
            self.mode = Mode.FALLBACK
            self.result.mode_final = Mode.FALLBACK

    def finish(self, decision: StopDecision) -> RunResult:
        top = self.max_key_q()
        slack = 0.0
        if top is not None:
            slack = max(0.0, fp.decode_q64_64(top) - fp.decode_q64_64(self.incumbent_q))
        self.result.incumbent = self.incumbent
        self.result.incumbent_leaf = self.incumbent_leaf
        self.result.stop_slack = slack
        self.result.claim_type = self.claim
        self.result.frontier_at_stop = [
            (e.digest.hex(), e.key_q) for _, _, e in sorted(self.heap)
        ]
        self.record(
            event="stop",
            mode=self.mode.value,
            claim_type=self.claim.value,
            privacy_scope="post_processing_only",
            incumbent=self.incumbent_q,
            key_raw=top,
            reason=decision.value,
        )
        return self.result

    # -- main loops -------------------------------------------------------

    def run_exact_surrogate(self) -> RunResult:
        graph, cfg = self.graph, self.cfg
        if self.mode is Mode.EXACT and not self.ensure_counts():
            # Counts failed: mandatory downgrade to Surrogate (still certified
            # if upper bounds exist), else NoCert fallback.
            if self.build_n_ub():
                self.mode = Mode.SURROGATE
                self.result.mode_final = Mode.SURROGATE
            else:
                self.mode = Mode.FALLBACK
                self.result.mode_final = Mode.FALLBACK
                self.claim = ClaimType.NO_CERT
                return _FallbackEngine(self).run()
        if self.mode is Mode.SURROGATE and not self.build_n_ub():
            self.mode = Mode.FALLBACK
            self.result.mode_final = Mode.FALLBACK
            self.claim = ClaimType.NO_CERT
            return _FallbackEngine(self).run()

        root = graph.node(graph.root)
        if self.mode is Mode.EXACT:
            rate = graph.suffix_count(graph.root)
        else:
            rate = self.n_ub[graph.root]
        raw = self.uniforms.raw(root, "race")
        u = open_uniform(raw)
        t_root = exp_from_uniform(u, rate)
        source = ArrivalSource.EXACT_RACE if self.mode is Mode.EXACT else ArrivalSource.SURROGATE_RACE
        arrival = Arrival(t_root, source, raw)
        key, key_q = self.key_for(root, -math.log(t_root))
        self.push(FrontierEntry(root.ctx_digest, key, key_q, False, arrival),
                  root, rate, raw)

        started = time.monotonic()
        while True:
            decision = self.stop_check()
            if decision is not StopDecision.CONTINUE:
                return self.finish(decision)
            if self.cfg.expansion_cap is not None and self.result.expansions >= self.cfg.expansion_cap:
                self.guard("Timeout", reason="expansion cap reached")
                return self.finish(StopDecision.STOP_HEURISTIC)
            if self.cfg.wall_cap_s is not None and time.monotonic() - started > self.cfg.wall_cap_s:
                self.guard("Timeout", reason="wall clock cap reached")
                return self.finish(StopDecision.STOP_HEURISTIC)

            entry = self.pop()
            node = graph.node(entry.digest)
            self.result.expansions += 1
            slack = entry.key - fp.decode_q64_64(self.incumbent_q)

            if node.is_leaf:
                self.record(event="pop", ctx_digest=node.ctx_digest.hex(),
                            node_id=self.node_id(node.ctx_digest),
                            mode=self.mode.value, claim_type=self.claim.value,
                            key_raw=entry.key_q, tie_token=entry.tie_token)
                if self.mode is Mode.EXACT:
                    u_p, e_p, _ = exact_leaf_coupling(entry.arrival.t)
                    u_p_raw = _quantize_uniform(u_p)
                else:
                    if cfg.surrogate_leaf_prf:
                        u_p_raw = prf_raw(cfg.salt, cfg.prf_domain, node.ctx_digest)
                    else:
                        u_p_raw = self.uniforms.raw(node, "leaf")
                    u_p = open_uniform(u_p_raw)
                    e_p = -math.log1p(-u_p)
                value = node.prefix_score - math.log(e_p)
                self.update_incumbent(node, value, u_p_raw)
                continue

            self.result.internal_expansions += 1
            self.budget_step(node, slack)
            if self.mode is Mode.FALLBACK:
                # Budget exhausted mid-run: restart under the PRF heuristic.
                return _FallbackEngine(self).run()
            children = [graph.node(c) for c in node.children]
            if not children:
                # Internal node with no descendants: empty subtree, prune.
                self.record(event="pop", ctx_digest=node.ctx_digest.hex(),
                            node_id=self.node_id(node.ctx_digest),
                            mode=self.mode.value, claim_type=self.claim.value,
                            key_raw=entry.key_q, tie_token=entry.tie_token)
                continue
            phi_extra = self.phi_fields(node, children)

            if self.mode is Mode.EXACT:
                counts = [graph.suffix_count(c.ctx_digest) for c in children]
                if len(children) > 1:
                    w_raw = self.uniforms.raw(node, "winner")
                    w = open_uniform(w_raw)
                    winner = quantile_cat(w, counts)
                else:
                    w_raw, winner = None, 0
                self.record(event="pop", ctx_digest=node.ctx_digest.hex(),
                            node_id=self.node_id(node.ctx_digest),
                            mode=self.mode.value, claim_type=self.claim.value,
                            key_raw=entry.key_q, W=w_raw,
                            tie_token=entry.tie_token, **phi_extra)
                for i, child in enumerate(children):
                    if i == winner:
                        arrival = Arrival(entry.arrival.t, ArrivalSource.EXACT_RACE, None)
                        raw_i = None
                    else:
                        raw_i = self.uniforms.raw(child, "residual")
                        u_i = open_uniform(raw_i)
                        t_i = entry.arrival.t + exp_from_uniform(u_i, counts[i])
                        arrival = Arrival(t_i, ArrivalSource.RESIDUAL, raw_i)
                    ckey, ckey_q = self.key_for(child, -math.log(arrival.t))
                    self.push(
                        FrontierEntry(child.ctx_digest, ckey, ckey_q, False,
                                      arrival, claim_type=self.claim),
                        child, counts[i], raw_i,
                    )
            else:  # Surrogate: parent-anchored provisional children.
                rate_v = self.n_ub[node.ctx_digest]
                v_raw = self.uniforms.raw(node, "race")
                u_v = open_uniform(v_raw)
                t_hat = exp_from_uniform(u_v, rate_v)
                self.record(event="pop", ctx_digest=node.ctx_digest.hex(),
                            node_id=self.node_id(node.ctx_digest),
                            mode=self.mode.value, claim_type=self.claim.value,
                            key_raw=entry.key_q, U=v_raw, Nub=rate_v,
                            tie_token=entry.tie_token, **phi_extra)
                anchor = Arrival(t_hat, ArrivalSource.SURROGATE_RACE, v_raw)
                neg_log = -math.log(t_hat)
                for child in children:
                    if self.n_ub.get(child.ctx_digest, 0) == 0:
                        continue  # empty subtree: pruned immediately
                    ckey, ckey_q = self.key_for(child, neg_log)
                    self.push(
                        FrontierEntry(child.ctx_digest, ckey, ckey_q, True,
                                      anchor, claim_type=self.claim),
                        child, self.n_ub[child.ctx_digest], None,
                    )


def _quantize_uniform(u: float) -> int:
    """Nearest Q0.64 raw for a derived (not drawn) uniform."""
    raw = int(round(u * 2.0**64 - 0.5))
    return min(max(raw, 0), fp.Q0_64_MAX)


class _FallbackEngine:
    """PRF-per-leaf heuristic mode (NoCert): node PQ by an exact leaf-wise
    LSE bound over perturbed values, plus a materialized-leaf PQ."""

    def __init__(self, engine: _Engine):
        self.e = engine
        self.e.mode = Mode.FALLBACK
        self.e.claim = ClaimType.NO_CERT
        self.e.result.mode_final = Mode.FALLBACK
        self._vpam: dict[bytes, float] = {}
        self._bound: dict[bytes, float] = {}

    def vpam(self, digest: bytes) -> float:
        cached = self._vpam.get(digest)
        if cached is None:
            cfg = self.e.cfg
            node = self.e.graph.node(digest)
            u = open_uniform(prf_raw(cfg.salt, cfg.prf_domain, digest))
            g = gumbel_from_uniform(u)
            e_p = -math.log1p(-u)
            cached = g / cfg.tau + node.prefix_score - math.log(e_p)
            self._vpam[digest] = cached
        return cached

    def bound(self, digest: bytes) -> float:
        cached = self._bound.get(digest)
        if cached is None:
            values = [self.vpam(leaf) for leaf in self.e.graph.iter_leaves(digest)]
            m = max(values)
            cached = m + math.log(math.fsum(math.exp(v - m) for v in values))
            self._bound[digest] = cached
        return cached

    def run(self) -> RunResult:
        e = self.e
        graph = e.graph
        nodes: list[tuple[int, bytes]] = []
        leaves: list[tuple[int, bytes]] = []

        def push_internal(digest: bytes):
            node = graph.node(digest)
            b = self.bound(digest)
            b_q, clamped = _encode_key(b)
            if clamped:
                e.guard("NumClamp", node, reason="bound overflowed Q64.64")
            heapq.heappush(nodes, (-b_q, digest))
            e.result.pushed_keys[digest.hex()] = b_q
            e.record(event="push", ctx_digest=digest.hex(),
                     node_id=e.node_id(digest),
                     parent_id=e.node_id(node.parent) if node.parent else None,
                     mode=Mode.FALLBACK.value, claim_type=ClaimType.NO_CERT.value,
                     key_raw=b_q)

        def materialize(digest: bytes):
            node = graph.node(digest)
            raw = prf_raw(e.cfg.salt, e.cfg.prf_domain, digest)
            v = self.vpam(digest)
            v_q, clamped = _encode_key(v)
            if clamped:
                e.guard("NumClamp", node, reason="leaf value overflowed Q64.64")
            heapq.heappush(leaves, (-v_q, digest))
            e.result.evaluated_leaves.append(digest.hex())
            e.record(event="leaf_eval", ctx_digest=digest.hex(),
                     node_id=e.node_id(digest),
                     mode=Mode.FALLBACK.value, claim_type=ClaimType.NO_CERT.value,
                     U=raw, value=v_q, incumbent=e.incumbent_q)

        root = graph.node(graph.root)
        if root.is_leaf:
            materialize(graph.root)
        else:
            push_internal(graph.root)

        while nodes or leaves:
            top_node = -nodes[0][0] if nodes else None
            top_leaf = -leaves[0][0] if leaves else None
            best = max(x for x in (top_node, top_leaf) if x is not None)
            if best <= e.incumbent_q:
                break  # heuristic stop: no tracked bound beats the incumbent
            if top_leaf is not None and (top_node is None or top_leaf >= top_node):
                v_q, digest = heapq.heappop(leaves)
                node = graph.node(digest)
                e.result.expansions += 1
                e.record(event="pop", ctx_digest=digest.hex(),
                         node_id=e.node_id(digest),
                         mode=Mode.FALLBACK.value,
                         claim_type=ClaimType.NO_CERT.value, key_raw=-v_q)
                if -v_q > e.incumbent_q:
                    e.incumbent_q = -v_q
                    e.incumbent = self.vpam(digest)
                    e.incumbent_leaf = digest.hex()
                e.result.popped_leaves.append(digest.hex())
            else:
                b_q, digest = heapq.heappop(nodes)
                node = graph.node(digest)
                e.result.expansions += 1
                e.result.internal_expansions += 1
                e.record(event="pop", ctx_digest=digest.hex(),
                         node_id=e.node_id(digest),
                         mode=Mode.FALLBACK.value,
                         claim_type=ClaimType.NO_CERT.value, key_raw=-b_q)
                for child in node.children:
                    if graph.node(child).is_leaf:
                        materialize(child)
                    else:
                        push_internal(child)

        top = None
        if nodes or leaves:
            candidates = [x for x in
                          ((-nodes[0][0] if nodes else None),
                           (-leaves[0][0] if leaves else None)) if x is not None]
            top = max(candidates)
        e.result.incumbent = e.incumbent
        e.result.incumbent_leaf = e.incumbent_leaf
        e.result.stop_slack = 0.0 if top is None else max(
            0.0, fp.decode_q64_64(top) - fp.decode_q64_64(e.incumbent_q))
        e.result.claim_type = ClaimType.NO_CERT
        e.record(event="stop", mode=Mode.FALLBACK.value,
                 claim_type=ClaimType.NO_CERT.value,
                 privacy_scope="post_processing_only",
                 incumbent=e.incumbent_q, key_raw=top,
                 reason=StopDecision.STOP_HEURISTIC.value)
        return e.result


def stop_check(max_frontier_key_q: int | None, incumbent_q: int, mode: Mode) -> StopDecision:
    """Mode-aware stop decision on fixed-point keys."""
    if max_frontier_key_q is None or max_frontier_key_q <= incumbent_q:
        return (StopDecision.STOP_HEURISTIC if mode is Mode.FALLBACK
                else StopDecision.STOP_CERTIFIED)
    return StopDecision.CONTINUE


def run(graph: PrefixDag, mode: Mode, cfg: RunConfig,
        ledger_path: str | None = None, uniform_provider=None) -> RunResult:
    """Execute one search run and (optionally) persist its ledger."""
    engine = _Engine(graph, mode, cfg, uniform_provider=uniform_provider)
    if mode is Mode.FALLBACK:
        result = _FallbackEngine(engine).run()
    else:
        result = engine.run_exact_surrogate()
    if ledger_path is not None:
        result.ledger.save(ledger_path)
        result.ledger_path = ledger_path
    return result


def fallback_run(graph: PrefixDag, cfg: RunConfig,
                 ledger_path: str | None = None) -> RunResult:
    return run(graph, Mode.FALLBACK, cfg, ledger_path=ledger_path)
