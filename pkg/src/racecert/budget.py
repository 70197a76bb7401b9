"""Per-request budget controller and RDP tally (strictly post-processing).

Model selection follows the ratio rule: among catalog entries that satisfy
the privacy, price, and latency cap inequalities, pick the one maximizing
estimated key-slack reduction per weighted cost.  Exhaustion (no feasible
entry) triggers a BudgetFail guard and a downgrade in the engine; it never
touches race arithmetic or bound admissibility.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

from . import fixedpoint as fp
from .prefix_dag import PrefixNode

SAFETY_FACTOR = 1.2

DkeyEstimator = Callable[[PrefixNode, float], float]


def dkey_zero(node: PrefixNode, slack: float) -> float:
    """Default stub: no estimated key-slack reduction."""
    return 0.0


def dkey_slack_fraction(node: PrefixNode, slack: float) -> float:
    """Synthetic estimator for tests: claims half the current slack."""
    return max(0.0, 0.5 * slack)


def conformal_wrap(estimator: DkeyEstimator) -> DkeyEstimator:
    """Named no-op calibration hook."""
    return estimator

_ESTIMATORS: dict[str, DkeyEstimator] = {
    "zero": dkey_zero,
    "slack_fraction": dkey_slack_fraction,
}


def register_estimator(name: str, fn: DkeyEstimator) -> None:
    _ESTIMATORS[name] = fn


@dataclass(frozen=True)
class ModelCatalogEntry:
    model_id: str
    adapter_id: str
    dp_cert_id: str
    eps_train: float
    delta_train: float
    price_m: int  # cents
    latency_m: int  # P95 ms
    eps_m: float = 0.0
    dkey_estimator: str = "zero"

    def __post_init__(self):
        if self.price_m < 0 or self.latency_m < 0:
            raise ValueError("price/latency must be non-negative")
        if self.eps_m < 0:
            raise ValueError("eps_m must be >= 0")
        if self.dkey_estimator not in _ESTIMATORS:
            raise ValueError(f"unknown dkey estimator {self.dkey_estimator!r}")

    def dkey(self, node: PrefixNode, slack: float) -> float:
        return conformal_wrap(_ESTIMATORS[self.dkey_estimator])(node, slack)


def load_catalog(path: str) -> list[ModelCatalogEntry]:
    with open(path, encoding="utf-8") as fh:
        return [ModelCatalogEntry(**entry) for entry in json.load(fh)]


def default_catalog() -> list[ModelCatalogEntry]:
    """Three-adapter fixture catalog; zero inference epsilon throughout."""
    return [
        ModelCatalogEntry("m-small", "adp-a", "dpc-a", 2.0, 1e-6, 1, 10),
        ModelCatalogEntry("m-mid", "adp-b", "dpc-b", 3.5, 1e-6, 5, 20),
        ModelCatalogEntry("m-large", "adp-c", "dpc-c", 6.0, 1e-6, 20, 45),
    ]


@dataclass
class RdpAtom:
    alpha: float
    eps_alpha: float


@dataclass
class BudgetState:
    eps_max: float
    delta: float
    price_max: int
    slo_ms: int
    alpha_grid: tuple[float, ...] = (2.0, 4.0, 8.0, 16.0, 32.0)
    weight_alpha: float = 0.1  # per cent
    weight_beta: float = 0.01  # per ms
    weight_gamma: float = 0.0  # per eps
    atoms: list[RdpAtom] = field(default_factory=list)
    price_spent: int = 0
    latency_acc: float = 0.0

    def __post_init__(self):
        if self.weight_alpha <= 0 or self.weight_beta <= 0 or self.weight_gamma < 0:
            raise ValueError("weights must satisfy alpha, beta > 0 and gamma >= 0")

    def rdp_eps(self) -> float:
        """Current epsilon at delta via the classic RDP->DP conversion."""
        return self.rdp_eps_alpha()[0]

    def rdp_eps_alpha(self) -> tuple[float, float | None]:
        if not self.atoms:
            return 0.0, None
        best, best_alpha = math.inf, None
        for alpha in self.alpha_grid:
            total = sum(a.eps_alpha for a in self.atoms if a.alpha == alpha)
            eps = total + math.log(1.0 / self.delta) / (alpha - 1.0)
            if eps < best:
                best, best_alpha = eps, alpha
        return best, best_alpha

    def eps_after(self, entry: ModelCatalogEntry) -> float:
        if entry.eps_m == 0.0:
            return self.rdp_eps() if self.atoms else 0.0
        trial = BudgetState(self.eps_max, self.delta, self.price_max,
                            self.slo_ms, self.alpha_grid)
        trial.atoms = list(self.atoms) + [
            RdpAtom(alpha, entry.eps_m) for alpha in self.alpha_grid]
        return trial.rdp_eps()

    def feasible(self, entry: ModelCatalogEntry) -> bool:
        if self.price_spent + entry.price_m > self.price_max:
            return False
        if apply_latency_guard(self, entry.latency_m) == "BudgetFail":
            return False
        return self.eps_after(entry) <= self.eps_max

    def charge(self, entry: ModelCatalogEntry) -> None:
        self.price_spent += entry.price_m
        self.latency_acc += SAFETY_FACTOR * entry.latency_m
        if entry.eps_m > 0.0:
            self.atoms.extend(RdpAtom(alpha, entry.eps_m)
                              for alpha in self.alpha_grid)


def apply_latency_guard(state: BudgetState, latency_m: int) -> str:
    """'BudgetFail' iff the P95-with-safety-factor projection busts the SLO."""
    if state.latency_acc + SAFETY_FACTOR * latency_m > state.slo_ms:
        return "BudgetFail"
    return "Ok"


class Exhausted(Exception):
    pass


def select_model(node: PrefixNode, catalog: list[ModelCatalogEntry],
                 state: BudgetState, slack: float = 0.0) -> ModelCatalogEntry:
    """Eq.-style ratio selection among cap-feasible entries."""
    if not catalog:
        raise ValueError("catalog must be non-empty")
    feasible = [e for e in catalog if state.feasible(e)]
    if not feasible:
        raise Exhausted()

    def ratio(entry: ModelCatalogEntry) -> float:
        denom = (state.weight_alpha * entry.price_m
                 + state.weight_beta * entry.latency_m
                 + state.weight_gamma * entry.eps_m)
        if denom == 0.0:
            return math.inf
        return entry.dkey(node, slack) / denom

    feasible.sort(key=lambda e: e.model_id)
    return max(feasible, key=ratio)


@dataclass
class BudgetOutcome:
    entry: ModelCatalogEntry | None
    exhausted: bool
    record_fields: dict


class BudgetRuntime:
    """Engine-facing adapter: one selection per internal expansion."""

    def __init__(self, catalog: list[ModelCatalogEntry], state: BudgetState):
        self.catalog = catalog
        self.state = state
        self.exhausted = False

    def on_expansion(self, node: PrefixNode, slack: float) -> BudgetOutcome:
        base = {
            "price_cap": self.state.price_max,
            "sla_ms": self.state.slo_ms,
        }
        if self.exhausted:
            return BudgetOutcome(None, True, {
                **base, "budget_event": "Exhausted",
                "price_spent": self.state.price_spent,
            })
        try:
            entry = select_model(node, self.catalog, self.state, slack)
        except Exhausted:
            self.exhausted = True
            return BudgetOutcome(None, True, {
                **base, "budget_event": "Exhausted",
                "price_spent": self.state.price_spent,
            })
        pred = entry.dkey(node, slack)
        self.state.charge(entry)
        eps, alpha_sel = self.state.rdp_eps_alpha()
        fields = {
            **base,
            "budget_event": "Selected",
            "model_id": entry.model_id,
            "adapter_id": entry.adapter_id,
            "dp_cert_id": entry.dp_cert_id,
            "eps_train": fp.encode_q32_32(entry.eps_train),
            "delta_train": repr(entry.delta_train),
            "price_spent": self.state.price_spent,
            "router_rdp_eps": fp.encode_q32_32(eps),
            "alpha_selected": (fp.encode_q32_32(alpha_sel)
                               if alpha_sel is not None else None),
            "dkey_pred": fp.encode_q32_32(pred),
            "dkey_real": fp.encode_q32_32(0.0),
        }
        if self.state.atoms:
            fields["eps_delta.eps"] = repr(eps)
            fields["eps_delta.delta"] = repr(self.state.delta)
        return BudgetOutcome(entry, False, fields)
