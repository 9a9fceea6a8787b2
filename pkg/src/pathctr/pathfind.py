"""Top-k relational path extraction from behavior items to a target item.

Both extractors enumerate simple paths breadth-first, level by level, and
rank completed paths under a total order: fewer hops first, then (similarity
graph only) higher product of edge scores, then the lexicographically
smaller id sequence. Enumeration stops as soon as a finished level already
holds k paths, since deeper paths can never outrank shallower ones.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .graphs import KnowledgeGraph, SimGraph

ITEM = "item"
ENTITY = "entity"
RELATION = "relation"
SCORE = "score"

_JSON_TAG = {ITEM: "i", ENTITY: "e", RELATION: "r", SCORE: "s"}
_TAG_KIND = {v: k for k, v in _JSON_TAG.items()}


class PathFileError(ValueError):
    pass


@dataclass(frozen=True)
class PathToken:
    kind: str
    id: str | None = None
    value: float | None = None

    def to_json(self):
        if self.kind == SCORE:
            return {"s": self.value}
        return {_JSON_TAG[self.kind]: self.id}

    @staticmethod
    def from_json(obj) -> "PathToken":
        (tag, payload), = obj.items()
        if tag == "s":
            return PathToken(SCORE, value=float(payload))
        if tag not in _TAG_KIND:
            raise PathFileError(f"unknown path token tag {tag!r}")
        return PathToken(_TAG_KIND[tag], id=payload)


@dataclass
class Path:
    tokens: list[PathToken]
    source_graph: str  # "cf" | "kg"
    hop_count: int


@dataclass
class PathSet:
    cf_paths: list[Path] = field(default_factory=list)
    kg_paths: list[Path] = field(default_factory=list)

    def to_json(self, instance_idx: int) -> dict:
        return {
            "instance_idx": instance_idx,
            "cf": [[t.to_json() for t in p.tokens] for p in self.cf_paths],
            "kg": [[t.to_json() for t in p.tokens] for p in self.kg_paths],
        }

    @staticmethod
    def from_json(obj: dict) -> "PathSet":
        cf = [
            Path([PathToken.from_json(t) for t in tokens], "cf", (len(tokens) - 1) // 2)
            for tokens in obj.get("cf", [])
        ]
        kg = [
            Path([PathToken.from_json(t) for t in tokens], "kg", (len(tokens) - 1) // 2)
            for tokens in obj.get("kg", [])
        ]
        return PathSet(cf, kg)


@dataclass
class PathConfig:
    max_hops_cf: int = 3
    max_hops_kg: int = 3
    k_cf: int = 8
    k_kg: int = 8
    max_path_len: int = 7  # inclusive cap on tokens per path


def _depth_limit(max_hops: int, max_path_len: int | None) -> int:
    # a path of h hops carries 2h+1 tokens
    if max_path_len is None:
        return max_hops
    return min(max_hops, (max_path_len - 1) // 2)


def extract_cf_paths(
    behaviors,
    target: str,
    graph: SimGraph,
    max_hops: int,
    k: int,
    max_path_len: int | None = None,
) -> list[Path]:
    """Best k simple paths over the similarity graph, per the total order."""
    if max_hops < 1 or k < 1:
        raise ValueError(f"max_hops and k must be >= 1, got {max_hops}, {k}")
    depth = _depth_limit(max_hops, max_path_len)
    starts = sorted({b for b in behaviors if b != target})
    # frontier entries: (items, scores, visited); completed: sortable records
    frontier = [((b,), (), frozenset((b,))) for b in starts]
    completed: list[tuple[int, float, tuple[str, ...], tuple[float, ...]]] = []
    for hop in range(1, depth + 1):
        next_frontier = []
        for items, scores, visited in frontier:
            for neighbor, score in graph.neighbors(items[-1]):
                if neighbor in visited:
                    continue
                if neighbor == target:
                    product = 1.0
                    for s in scores + (score,):
                        product *= s
                    completed.append((hop, -product, items + (neighbor,), scores + (score,)))
                elif hop < depth:
                    next_frontier.append((items + (neighbor,), scores + (score,), visited | {neighbor}))
        if len(completed) >= k:
            break
        frontier = next_frontier
    completed.sort()
    out = []
    for hop, _neg, items, scores in completed[:k]:
        tokens = [PathToken(ITEM, id=items[0])]
        for item, score in zip(items[1:], scores):
            tokens.append(PathToken(SCORE, value=score))
            tokens.append(PathToken(ITEM, id=item))
        out.append(Path(tokens, "cf", hop))
    return out


def extract_kg_paths(
    behaviors,
    target: str,
    graph: KnowledgeGraph,
    max_hops: int,
    k: int,
    max_path_len: int | None = None,
) -> list[Path]:
    """Best k simple direction-agnostic paths over the knowledge graph."""
    if max_hops < 1 or k < 1:
        raise ValueError(f"max_hops and k must be >= 1, got {max_hops}, {k}")
    depth = _depth_limit(max_hops, max_path_len)
    nodes = graph.nodes()
    # direction-agnostic unique (neighbor, relation) edges per node
    edges: dict[str, list[tuple[str, str]]] = {}

    def edges_at(node: str) -> list[tuple[str, str]]:
        cached = edges.get(node)
        if cached is None:
            cached = sorted({(nb, rel) for rel, nb, _dir in graph.neighbors(node)})
            edges[node] = cached
        return cached

    starts = sorted({b for b in behaviors if b != target and b in nodes})
    frontier = [((b,), frozenset((b,))) for b in starts]
    completed: list[tuple[int, tuple[str, ...]]] = []
    for hop in range(1, depth + 1):
        next_frontier = []
        for seq, visited in frontier:
            for neighbor, relation in edges_at(seq[-1]):
                if neighbor in visited:
                    continue
                if neighbor == target:
                    completed.append((hop, seq + (relation, neighbor)))
                elif hop < depth:
                    next_frontier.append((seq + (relation, neighbor), visited | {neighbor}))
        if len(completed) >= k:
            break
        frontier = next_frontier
    completed.sort()
    out = []
    for hop, seq in completed[:k]:
        tokens = [_node_token(seq[0], graph)]
        for pos in range(1, len(seq), 2):
            tokens.append(PathToken(RELATION, id=seq[pos]))
            tokens.append(_node_token(seq[pos + 1], graph))
        out.append(Path(tokens, "kg", hop))
    return out


def _node_token(node: str, graph: KnowledgeGraph) -> PathToken:
    return PathToken(ITEM if node in graph.item_nodes else ENTITY, id=node)


def extract_for_instance(instance, sim: SimGraph, kg: KnowledgeGraph, config: PathConfig) -> PathSet:
    return PathSet(
        cf_paths=extract_cf_paths(
            instance.behaviors, instance.target, sim, config.max_hops_cf, config.k_cf, config.max_path_len
        ),
        kg_paths=extract_kg_paths(
            instance.behaviors, instance.target, kg, config.max_hops_kg, config.k_kg, config.max_path_len
        ),
    )


def extract_all(instances, sim: SimGraph, kg: KnowledgeGraph, config: PathConfig, threads: int = 1):
    """One PathSet per instance, in instance order."""
    if threads <= 1:
        out = []
        for idx, inst in enumerate(instances):
            try:
                out.append(extract_for_instance(inst, sim, kg, config))
            except Exception as exc:
                raise RuntimeError(f"path extraction failed at instance {idx}: {exc}") from exc
        return out
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda inst: extract_for_instance(inst, sim, kg, config), instances))


def write_paths(path, path_sets) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for idx, ps in enumerate(path_sets):
            fh.write(json.dumps(ps.to_json(idx), separators=(",", ":")) + "\n")


def read_paths(path) -> list[PathSet]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("instance_idx") != line_no:
                raise PathFileError(
                    f"{path}: line {line_no + 1}: instance_idx {obj.get('instance_idx')} out of order"
                )
            out.append(PathSet.from_json(obj))
    return out
