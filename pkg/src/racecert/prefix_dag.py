"""Shared-node DAGs and their compilation into context-indexed prefix-DAGs.

Compilation duplicates shared subgraphs per prefix context, so every node of
the output has a unique root path.  Children of any internal node then
partition its reachable leaf set by construction; the emitted certificate
witnesses exactly that, plus finiteness and digest uniqueness.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field

CTX_DOMAIN_TAG = b"racecert/ctx/v1"

COUNT_LIMIT = (1 << 63) - 1


class CycleDetectedError(ValueError):
    """A directed cycle is reachable from the root."""


class DepthCapExceededError(ValueError):
    """A root path exceeds the public max_depth cap."""


class DigestCollisionError(ValueError):
    """Two distinct contexts hashed to the same digest."""


class CountFailError(OverflowError):
    """Suffix count exceeded the 63-bit counter limit."""


@dataclass(frozen=True)
class PublicCaps:
    max_depth: int
    c_s_max: float
    c_s_min: float

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.c_s_max < 0:
            raise ValueError("c_s_max must be >= 0")
        if self.c_s_min <= 0:
            raise ValueError("c_s_min must be > 0")


@dataclass(frozen=True)
class DagNode:
    node_id: str
    state_label: str
    is_leaf: bool
    det_score_delta: float = 0.0


@dataclass
class SharedDag:
    """Input graph: possibly shared nodes, ordered edges, public caps."""

    nodes: dict[str, DagNode]
    edges: list[tuple[str, str, int]]
    root_id: str
    caps: PublicCaps

    def __post_init__(self):
        self.validate()
        self._children: dict[str, list[tuple[int, str]]] = {}
        for parent, child, order in self.edges:
            self._children.setdefault(parent, []).append((order, child))
        for parent, kids in self._children.items():
            kids.sort()

    def validate(self) -> None:
        if self.root_id not in self.nodes:
            raise ValueError(f"root {self.root_id!r} not a node")
        seen: dict[tuple[str, int], None] = {}
        for parent, child, order in self.edges:
            if parent not in self.nodes or child not in self.nodes:
                raise ValueError(f"edge ({parent},{child}) endpoint missing")
            if (parent, order) in seen:
                raise ValueError(f"duplicate edge_order {order} at {parent}")
            seen[(parent, order)] = None

    def children_of(self, node_id: str) -> list[tuple[int, str]]:
        return self._children.get(node_id, [])

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SharedDag":
        caps = PublicCaps(
            max_depth=int(obj["caps"]["max_depth"]),
            c_s_max=float(obj["caps"]["c_s_max"]),
            c_s_min=float(obj["caps"]["c_s_min"]),
        )
        nodes = {
            n["id"]: DagNode(
                node_id=n["id"],
                state_label=n["state"],
                is_leaf=bool(n.get("leaf", False)),
                det_score_delta=float(n.get("delta_cost", 0.0)),
            )
            for n in obj["nodes"]
        }
        edges = [(e["from"], e["to"], int(e["order"])) for e in obj["edges"]]
        return cls(nodes=nodes, edges=edges, root_id=obj["root"], caps=caps)

    @classmethod
    def load(cls, path: str) -> "SharedDag":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))

    def to_json_obj(self) -> dict:
        return {
            "root": self.root_id,
            "caps": {
                "max_depth": self.caps.max_depth,
                "c_s_max": self.caps.c_s_max,
                "c_s_min": self.caps.c_s_min,
            },
            "nodes": [
                {
                    "id": n.node_id,
                    "state": n.state_label,
                    "leaf": n.is_leaf,
                    "delta_cost": n.det_score_delta,
                }
                for n in self.nodes.values()
            ],
            "edges": [
                {"from": p, "to": c, "order": o} for p, c, o in self.edges
            ],
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def ctx_digest(path: list[tuple[str, int]], caps: PublicCaps) -> bytes:
    """SHA-256 of the canonical, length-prefixed context serialization.

    Big-endian fields throughout; the domain tag separates this hash use
    from the PRF.  Deterministic across platforms.
    """
    if not path:
        raise ValueError("path must be non-empty")
    h = hashlib.sha256()
    h.update(CTX_DOMAIN_TAG)
    h.update(struct.pack(">I", caps.max_depth))
    h.update(struct.pack(">d", caps.c_s_max))
    h.update(struct.pack(">d", caps.c_s_min))
    h.update(struct.pack(">I", len(path)))
    for state_label, edge_order in path:
        raw = state_label.encode("utf-8")
        h.update(struct.pack(">I", len(raw)))
        h.update(raw)
        h.update(struct.pack(">I", edge_order))
    return h.digest()


def _ctx_repr(path: list[tuple[str, int]], limit: int = 96) -> str:
    text = "/".join(f"{s}#{o}" for s, o in path)
    return text if len(text) <= limit else text[: limit - 3] + "..."


@dataclass
class PrefixNode:
    ctx_digest: bytes
    ctx_repr: str
    state_label: str
    depth: int
    prefix_score: float
    parent: bytes | None
    edge_order: int
    is_leaf: bool
    children: list[bytes] = field(default_factory=list)
    n_exact: int | None = None


@dataclass
class CompileCertificate:
    partition_ok: dict[bytes, bool]
    finiteness_ok: dict[bytes, bool]
    digest_collisions: list[tuple[str, str]]
    total_leaves: int

    @property
    def ok(self) -> bool:
        return (
            all(self.partition_ok.values())
            and all(self.finiteness_ok.values())
            and not self.digest_collisions
        )


class PrefixDag:
    """Compiled, immutable prefix-DAG: digest-addressed nodes plus counts."""

    def __init__(self, nodes: dict[bytes, PrefixNode], root: bytes, caps: PublicCaps):
        self.nodes = nodes
        self.root = root
        self.caps = caps
        self._counts: dict[bytes, int] = {}
        self._leaf_sets: dict[bytes, frozenset[bytes]] = {}

    def node(self, digest: bytes) -> PrefixNode:
        return self.nodes[digest]

    def suffix_count(self, digest: bytes, limit: int = COUNT_LIMIT) -> int:
        """Exact number of canonical leaves below a node (memoized)."""
        cached = self._counts.get(digest)
        if cached is not None:
            return cached
        # Iterative post-order: compiled graphs can be deep.
        stack = [(digest, False)]
        while stack:
            d, done = stack.pop()
            if d in self._counts:
                continue
            node = self.nodes[d]
            if node.is_leaf or not node.children:
                self._counts[d] = 1 if node.is_leaf else 0
                continue
            if done:
                total = sum(self._counts[c] for c in node.children)
                if total > limit:
                    raise CountFailError(
                        f"count overflow below {node.ctx_repr}"
                    )
                self._counts[d] = total
            else:
                stack.append((d, True))
                stack.extend((c, False) for c in node.children)
        return self._counts[digest]

    def leaf_ids(self, digest: bytes) -> frozenset[bytes]:
        """Canonical leaf digests below a node (materialized on demand)."""
        cached = self._leaf_sets.get(digest)
        if cached is not None:
            return cached
        node = self.nodes[digest]
        if node.is_leaf:
            result = frozenset([digest])
        else:
            acc: set[bytes] = set()
            for child in node.children:
                acc |= self.leaf_ids(child)
            result = frozenset(acc)
        self._leaf_sets[digest] = result
        return result

    def iter_leaves(self, digest: bytes | None = None):
        start = digest if digest is not None else self.root
        stack = [start]
        while stack:
            d = stack.pop()
            node = self.nodes[d]
            if node.is_leaf:
                yield d
            else:
                stack.extend(reversed(node.children))

    def annotate_counts(self, limit: int = COUNT_LIMIT) -> None:
        for digest, node in self.nodes.items():
            node.n_exact = self.suffix_count(digest, limit=limit)

    def public_counts(self) -> dict[str, int]:
        """ctx_digest hex -> exact leaf count, for validator tightening."""
        self.annotate_counts()
        return {d.hex(): n.n_exact for d, n in self.nodes.items()}


def compile_dag(dag: SharedDag) -> tuple[PrefixDag, CompileCertificate]:
    """Unfold a shared-node DAG into a context-indexed prefix-DAG.

    Paths beyond the depth cap are an error, never a silent truncation.
    Cycles are detected on the walk; a detected digest collision is a
    certification failure.
    """
    nodes: dict[bytes, PrefixNode] = {}
    digest_owner: dict[bytes, str] = {}
    collisions: list[tuple[str, str]] = []

    def walk(node_id: str, path: list[tuple[str, int]], on_path: set[str],
             score: float, parent: bytes | None) -> bytes:
        dag_node = dag.nodes[node_id]
        if node_id in on_path:
            raise CycleDetectedError(f"cycle through {node_id!r}")
        depth = len(path)  # path includes this node after append
        if depth > dag.caps.max_depth:
            raise DepthCapExceededError(
                f"path depth {depth} exceeds cap {dag.caps.max_depth}"
            )
        digest = ctx_digest(path, dag.caps)
        repr_key = _ctx_repr(path, limit=10_000)
        if digest in digest_owner and digest_owner[digest] != repr_key:
            collisions.append((digest_owner[digest], repr_key))
            raise DigestCollisionError(f"digest collision at {repr_key}")
        digest_owner[digest] = repr_key
        node = PrefixNode(
            ctx_digest=digest,
            ctx_repr=_ctx_repr(path),
            state_label=dag_node.state_label,
            depth=depth - 1,
            prefix_score=score,
            parent=parent,
            edge_order=path[-1][1],
            is_leaf=dag_node.is_leaf,
        )
        nodes[digest] = node
        on_path.add(node_id)
        for order, child_id in dag.children_of(node_id):
            child_state = dag.nodes[child_id].state_label
            child_score = score - dag.nodes[child_id].det_score_delta
            child_digest = walk(
                child_id, path + [(child_state, order)], on_path,
                child_score, digest,
            )
            node.children.append(child_digest)
        on_path.discard(node_id)
        return digest

    root_node = dag.nodes[dag.root_id]
    root_path = [(root_node.state_label, 0)]
    root_digest = walk(
        dag.root_id, root_path, set(),
        -root_node.det_score_delta, None,
    )
    graph = PrefixDag(nodes, root_digest, dag.caps)
    graph.annotate_counts()

    partition_ok: dict[bytes, bool] = {}
    finiteness_ok: dict[bytes, bool] = {}
    for digest, node in nodes.items():
        finiteness_ok[digest] = math.isfinite(float(graph.suffix_count(digest)))
        if node.is_leaf or not node.children:
            continue
        union: set[bytes] = set()
        disjoint = True
        for child in node.children:
            child_set = graph.leaf_ids(child)
            if union & child_set:
                disjoint = False
            union |= child_set
        partition_ok[digest] = disjoint and union == set(graph.leaf_ids(digest))
    cert = CompileCertificate(
        partition_ok=partition_ok,
        finiteness_ok=finiteness_ok,
        digest_collisions=collisions,
        total_leaves=graph.suffix_count(root_digest),
    )
    return graph, cert
