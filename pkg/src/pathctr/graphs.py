"""Item-item similarity graph and knowledge-graph index.

Similarity is standard cosine over binary interaction columns, computed by
an inverted-index join so only item pairs sharing at least one user are
ever scored. The knowledge graph keeps forward and backward adjacency so
paths can traverse triples against their stored direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import math

FORWARD = "fwd"
BACKWARD = "bwd"


class UnknownItemError(KeyError):
    pass


class GraphFileError(ValueError):
    pass


class InteractionMatrix:
    """Sparse binary user-item matrix stored as per-item sorted user-id lists."""

    def __init__(self, user_ids_by_item: dict[str, list[int]], n_users: int):
        self.columns = {item: sorted(set(users)) for item, users in user_ids_by_item.items()}
        self.n_users = n_users

    @classmethod
    def from_interactions(cls, interactions, positive_only: bool = True) -> "InteractionMatrix":
        users = sorted({it.user for it in interactions})
        user_index = {u: i for i, u in enumerate(users)}
        cols: dict[str, set[int]] = {}
        for it in interactions:
            if positive_only and it.label != 1:
                continue
            cols.setdefault(it.item, set()).add(user_index[it.user])
        return cls({item: sorted(us) for item, us in cols.items()}, len(users))

    @property
    def n_items(self) -> int:
        return len(self.columns)

    def column(self, item: str) -> list[int]:
        if item not in self.columns:
            raise UnknownItemError(item)
        return self.columns[item]


def cosine_similarity(matrix: InteractionMatrix, i: str, j: str) -> float:
    """dot(Y[:,i], Y[:,j]) / (||Y[:,i]|| * ||Y[:,j]||); 0 when either column is empty."""
    ci, cj = matrix.column(i), matrix.column(j)
    if not ci or not cj:
        return 0.0
    co = len(set(ci) & set(cj))
    return co / math.sqrt(len(ci) * len(cj))


@dataclass
class SimGraph:
    """Per-item neighbor lists sorted by similarity descending, id ascending."""

    adjacency: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    top_k: int = 0

    def neighbors(self, item: str) -> list[tuple[str, float]]:
        return self.adjacency.get(item, [])

    def items(self) -> list[str]:
        return sorted(self.adjacency)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for item in sorted(self.adjacency):
                for neighbor, score in self.adjacency[item]:
                    fh.write(f"{item}\t{neighbor}\t{score:.6f}\n")

    @classmethod
    def load(cls, path) -> "SimGraph":
        adjacency: dict[str, list[tuple[str, float]]] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise GraphFileError(f"{path}: line {line_no}: expected 3 fields, got {len(parts)}")
                item, neighbor, score_raw = parts
                try:
                    score = float(score_raw)
                except ValueError:
                    raise GraphFileError(f"{path}: line {line_no}: bad score {score_raw!r}") from None
                adjacency.setdefault(item, []).append((neighbor, score))
        for item in adjacency:
            adjacency[item].sort(key=lambda ns: (-ns[1], ns[0]))
        return cls(adjacency, top_k=0)


def build_sim_graph(matrix: InteractionMatrix, top_k: int) -> SimGraph:
    """Top-k cosine neighbors per item via an inverted-index co-count join."""
    by_user: dict[int, list[str]] = {}
    for item, users in matrix.columns.items():
        for u in users:
            by_user.setdefault(u, []).append(item)

    co: dict[str, dict[str, int]] = {}
    for items in by_user.values():
        items = sorted(items)
        for a_idx, a in enumerate(items):
            row = co.setdefault(a, {})
            for b in items[a_idx + 1:]:
                row[b] = row.get(b, 0) + 1

    adjacency: dict[str, list[tuple[str, float]]] = {item: [] for item in matrix.columns if matrix.columns[item]}
    # rank by the exact rational co^2/(na*nb) so equal similarities tie-break
    # by id regardless of floating-point evaluation order
    scored: dict[str, list[tuple[Fraction, str, float]]] = {item: [] for item in adjacency}
    for a, row in co.items():
        na = len(matrix.columns[a])
        for b, count in row.items():
            nb = len(matrix.columns[b])
            exact = Fraction(count * count, na * nb)
            score = count / math.sqrt(na * nb)
            scored[a].append((exact, b, score))
            scored[b].append((exact, a, score))
    for item, triples in scored.items():
        triples.sort(key=lambda rec: (-rec[0], rec[1]))
        adjacency[item] = [(neighbor, score) for _, neighbor, score in triples[:top_k]]
    return SimGraph(adjacency, top_k=top_k)


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str


class KnowledgeGraph:
    """Deduplicated triples with mutually transposed direction indexes."""

    def __init__(self, triples, item_nodes=()):
        self.triples: list[Triple] = sorted(set(triples), key=lambda t: (t.head, t.relation, t.tail))
        self.out_index: dict[str, list[tuple[str, str]]] = {}
        self.in_index: dict[str, list[tuple[str, str]]] = {}
        for t in self.triples:
            self.out_index.setdefault(t.head, []).append((t.relation, t.tail))
            self.in_index.setdefault(t.tail, []).append((t.relation, t.head))
        for index in (self.out_index, self.in_index):
            for node in index:
                index[node].sort()
        nodes = self.nodes()
        self.item_nodes: set[str] = {n for n in item_nodes if n in nodes}

    def nodes(self) -> set[str]:
        return set(self.out_index) | set(self.in_index)

    def relations(self) -> set[str]:
        return {t.relation for t in self.triples}

    def neighbors(self, node: str) -> list[tuple[str, str, str]]:
        """All (relation, neighbor, direction) edges at a node, both directions,
        sorted by (neighbor, relation, direction) for deterministic expansion."""
        edges = [(r, t, FORWARD) for r, t in self.out_index.get(node, [])]
        edges += [(r, h, BACKWARD) for r, h in self.in_index.get(node, [])]
        edges.sort(key=lambda e: (e[1], e[0], e[2]))
        return edges

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, KnowledgeGraph)
            and self.triples == other.triples
            and self.item_nodes == other.item_nodes
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.triples:
                fh.write(f"{t.head}\t{t.relation}\t{t.tail}\n")


def load_triples(path, item_nodes=()) -> KnowledgeGraph:
    triples: list[Triple] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise GraphFileError(f"{path}: line {line_no}: expected 3 fields, got {len(parts)}")
            head, relation, tail = parts
            if not head or not relation or not tail:
                raise GraphFileError(f"{path}: line {line_no}: empty id in triple {parts!r}")
            triples.append(Triple(head, relation, tail))
    return KnowledgeGraph(triples, item_nodes=item_nodes)
